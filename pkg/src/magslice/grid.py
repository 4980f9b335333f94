"""Truncated uniform grids and complex wavefunction samples on them.

Nodes are cell-centered, ``x_i = -L + (i + 1/2) h`` with ``h = 2L/N`` per
axis, so no node sits on the boundary and the inner product is the plain
cell-volume-weighted sum.  Domain truncation plays the role of the large-box
cutoff: all experiments use confining potentials that keep the mass interior.

States carry a trailing spin axis even when the spin dimension is one, so the
scalar and matrix-valued kernels share one memory layout: values have shape
``(n_nodes, spin_dim)`` with nodes flattened in row-major axis order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

__all__ = [
    "Grid",
    "GridState",
    "grid_nodes",
    "gaussian_state",
    "interior_mask",
    "l2_distance",
    "save_snapshot",
    "load_snapshot",
]

SNAPSHOT_MAGIC = b"FSLC"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class Grid:
    dim: int
    N: tuple[int, ...]
    L: tuple[float, ...]

    def __post_init__(self):
        N = tuple(int(n) for n in (self.N if hasattr(self.N, "__len__") else [self.N] * self.dim))
        L = tuple(float(l) for l in (self.L if hasattr(self.L, "__len__") else [self.L] * self.dim))
        if len(N) != self.dim or len(L) != self.dim:
            raise ValueError("need one N and one L per axis")
        for n in N:
            if n < 8 or n % 2:
                raise ValueError(f"points per axis must be even and >= 8, got {n}")
        if any(l <= 0 for l in L):
            raise ValueError("half-widths must be positive")
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "L", L)

    @classmethod
    def square(cls, dim: int, N: int, L: float) -> "Grid":
        return cls(dim, (N,) * dim, (L,) * dim)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(2.0 * l / n for l, n in zip(self.L, self.N))

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.N))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    def axis_coords(self, j: int) -> np.ndarray:
        h = self.h[j]
        return -self.L[j] + (np.arange(self.N[j]) + 0.5) * h


@lru_cache(maxsize=16)
def grid_nodes(grid: Grid) -> np.ndarray:
    """All node coordinates, shape (n_nodes, dim), row-major axis order."""
    axes = [grid.axis_coords(j) for j in range(grid.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=-1)
    pts.setflags(write=False)
    return pts


@dataclass(frozen=True)
class GridState:
    grid: Grid
    values: np.ndarray  # (n_nodes, spin_dim) complex128
    time: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.n_nodes:
            raise ValueError(f"{v.shape[0]} values for {self.grid.n_nodes} nodes")
        v = np.ascontiguousarray(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def spin_dim(self) -> int:
        return self.values.shape[1]

    def norm(self) -> float:
        return float(np.sqrt(self.grid.cell_volume * np.sum(np.abs(self.values) ** 2)))

    def with_values(self, values: np.ndarray, time: float | None = None) -> "GridState":
        return replace(self, values=values, time=self.time if time is None else time)

    def on_axes(self) -> np.ndarray:
        """Values reshaped to (*N, spin_dim)."""
        return self.values.reshape(*self.grid.N, self.spin_dim)


def gaussian_state(grid: Grid, center=0.0, width=1.0, momentum=0.0,
                   spin=None, time: float = 0.0) -> GridState:
    """Product Gaussian wave packet, unit continuum norm.

    ``center``, ``width`` and ``momentum`` broadcast over axes; ``spin`` is an
    optional complex vector that is normalized and tensored onto every node.
    """
    c = np.broadcast_to(np.asarray(center, dtype=float), (grid.dim,))
    w = np.broadcast_to(np.asarray(width, dtype=float), (grid.dim,))
    p = np.broadcast_to(np.asarray(momentum, dtype=float), (grid.dim,))
    pts = grid_nodes(grid)
    psi = np.ones(grid.n_nodes, dtype=np.complex128)
    for j in range(grid.dim):
        xj = pts[:, j]
        psi = psi * (np.pi * w[j] ** 2) ** -0.25 \
            * np.exp(-((xj - c[j]) ** 2) / (2.0 * w[j] ** 2) + 1j * p[j] * xj)
    if spin is None:
        values = psi[:, None]
    else:
        s = np.asarray(spin, dtype=np.complex128)
        s = s / np.linalg.norm(s)
        values = psi[:, None] * s[None, :]
    return GridState(grid, values, time=time)


def interior_mask(grid: Grid, fraction: float = 0.8) -> np.ndarray:
    """Boolean node mask selecting |x_j| <= fraction * L_j on every axis."""
    pts = grid_nodes(grid)
    ok = np.ones(grid.n_nodes, dtype=bool)
    for j in range(grid.dim):
        ok &= np.abs(pts[:, j]) <= fraction * grid.L[j]
    return ok


def l2_distance(a: GridState, b: GridState, mask: np.ndarray | None = None) -> float:
    if a.grid != b.grid or a.spin_dim != b.spin_dim:
        raise ValueError("states live on different grids")
    d = a.values - b.values
    if mask is not None:
        d = d[mask]
    return float(np.sqrt(a.grid.cell_volume * np.sum(np.abs(d) ** 2)))


# ---------------------------------------------------------------------------
# binary snapshots

def save_snapshot(path, state: GridState) -> None:
    """Write the exact bit pattern of a state.

    Layout (little endian): magic ``FSLC``, u32 version, u32 dim, u32
    spin_dim, u32 N per axis, f64 L per axis, then f64 (re, im) pairs in
    row-major node order with spin innermost.
    """
    g = state.grid
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<III", SNAPSHOT_VERSION, g.dim, state.spin_dim))
        fh.write(struct.pack(f"<{g.dim}I", *g.N))
        fh.write(struct.pack(f"<{g.dim}d", *g.L))
        inter = np.empty((state.values.size, 2), dtype="<f8")
        flat = state.values.reshape(-1)
        inter[:, 0] = flat.real
        inter[:, 1] = flat.imag
        fh.write(inter.tobytes())


def load_snapshot(path, time: float = 0.0) -> GridState:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"not a state snapshot (magic {magic!r})")
        version, dim, spin_dim = struct.unpack("<III", fh.read(12))
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        N = struct.unpack(f"<{dim}I", fh.read(4 * dim))
        L = struct.unpack(f"<{dim}d", fh.read(8 * dim))
        grid = Grid(dim, N, L)
        raw = np.frombuffer(fh.read(), dtype="<f8")
    if raw.size != 2 * grid.n_nodes * spin_dim:
        raise ValueError("snapshot payload size mismatch")
    values = (raw[0::2] + 1j * raw[1::2]).reshape(grid.n_nodes, spin_dim)
    return GridState(grid, values, time=time)


def snapshot_sidecar(state: GridState, extra: dict | None = None) -> str:
    """JSON sidecar with grid metadata (time stamp, norm, axis map extras)."""
    doc = {
        "dim": state.grid.dim,
        "N": list(state.grid.N),
        "L": list(state.grid.L),
        "spin_dim": state.spin_dim,
        "time": state.time,
        "norm": state.norm(),
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc, sort_keys=True)
