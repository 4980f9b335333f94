"""Two identical particles on a line: tensor states, exchange, pair kernel.

States live on a square grid whose two axes are discretized identically; the
spin space is the tensor product of the per-particle spin spaces.  The pair
kernel assembles the two-particle action from shared one-particle tables
(same fields for both particles) plus a pair potential summed over both
orientations of the difference, so the total action is exchange symmetric at
the bit level.

Each output value is reduced over unordered pairs of combined
(source-node, spin) indices: the two members of a pair are added first, then
the pairs are summed in a fixed canonical order.  Exchanging particles
permutes the terms within each unordered pair only, so exchange commutes with
the kernel *exactly* -- the boson/fermion preservation defect of a composed
propagation is zero in floating point, not merely small.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .action import action_endpoints, effective_quad_order, gauss01
from .fields import FieldSet
from .grid import Grid, GridState
from .kernel import (KernelOptions, SpinHamiltonian, _gate, _transport_batch,
                     window_weights)
from .poly import PolySpaceTime

__all__ = [
    "TwoParticleSystem",
    "ManyBodyState",
    "two_particle_grid",
    "product_state",
    "exchange",
    "symmetrize",
    "antisymmetrize",
    "apply_two_particle",
    "two_particle_action",
    "symmetry_preservation_check",
]


@dataclass(frozen=True)
class TwoParticleSystem:
    """Identical-particle pair: shared one-particle fields, optional W and spin."""

    fs: FieldSet                      # one-particle fields, dim 1
    W: PolySpaceTime | None = None    # pair potential in the difference variable
    H1: SpinHamiltonian | None = None  # one-particle spin Hamiltonian

    def __post_init__(self):
        if self.fs.dim != 1:
            raise ValueError("the pair system is built from one-dimensional particles")
        if self.W is not None:
            if self.W.dim != 1:
                raise ValueError("pair potential lives in the scalar difference variable")
            if self.W.x_degree > 2:
                raise ValueError("pair potential must have degree <= 2 "
                                 "(bounded second differences)")

    @property
    def m(self) -> float:
        return self.fs.m

    @property
    def ell(self) -> int:
        return 1 if self.H1 is None else self.H1.ell


@dataclass(frozen=True)
class ManyBodyState:
    """Grid state with the particle factorization recorded.

    Nodes are indexed (j1, j2) row-major over the two identical axes; the spin
    index is (t1, t2) with particle one major.
    """

    state: GridState
    spin_per_particle: int = 1

    def __post_init__(self):
        g = self.state.grid
        if g.dim != 2 or g.N[0] != g.N[1] or g.L[0] != g.L[1]:
            raise ValueError("two-particle states need identical square axes")
        if self.state.spin_dim != self.spin_per_particle ** 2:
            raise ValueError("spin dimension must be the square of the per-particle spin")

    @property
    def grid(self) -> Grid:
        return self.state.grid

    def norm(self) -> float:
        return self.state.norm()


def two_particle_grid(N: int, L: float) -> Grid:
    return Grid(2, (N, N), (L, L))


def product_state(f1: GridState, f2: GridState) -> ManyBodyState:
    """(f1 x f2)(x1, x2) = f1(x1) f2(x2), spins tensored the same way."""
    if f1.grid != f2.grid or f1.grid.dim != 1:
        raise ValueError("factors must share one one-dimensional grid")
    if f1.spin_dim != f2.spin_dim:
        raise ValueError("factors must share the spin dimension")
    N = f1.grid.N[0]
    ell = f1.spin_dim
    vals = np.einsum("js,kt->jkst", f1.values, f2.values).reshape(N * N, ell * ell)
    g2 = two_particle_grid(N, f1.grid.L[0])
    return ManyBodyState(GridState(g2, vals, time=f1.time), spin_per_particle=ell)


def exchange(st: ManyBodyState, i: int = 0, j: int = 1) -> ManyBodyState:
    """Swap the particles: a pure permutation of grid axes and spin factors."""
    if {i, j} != {0, 1}:
        raise ValueError("two particles: indices must be 0 and 1")
    N = st.grid.N[0]
    ell = st.spin_per_particle
    v = st.state.values.reshape(N, N, ell, ell).transpose(1, 0, 3, 2)
    return replace(st, state=st.state.with_values(v.reshape(N * N, ell * ell)))


def symmetrize(st: ManyBodyState) -> ManyBodyState:
    ex = exchange(st)
    return replace(st, state=st.state.with_values((st.state.values + ex.state.values) / 2.0))


def antisymmetrize(st: ManyBodyState) -> ManyBodyState:
    ex = exchange(st)
    return replace(st, state=st.state.with_values((st.state.values - ex.state.values) / 2.0))


# ---------------------------------------------------------------------------
# the pair kernel

def _pair_interaction_table(sys: TwoParticleSystem, s: float, t: float,
                            diffs: np.ndarray, quad_order: int) -> np.ndarray:
    """-rho * int W(diff path) + W(-diff path) over (target diff, source diff).

    Entry [a, b] belongs to target difference diffs[a] and source difference
    diffs[b]; negating both indices reproduces the same bits because the two
    orientations are summed.
    """
    rho = t - s
    nodes, weights = gauss01(quad_order)
    di = diffs[:, None]
    dj = diffs[None, :]
    acc = np.zeros((diffs.size, diffs.size))
    for th, w in zip(nodes, weights):
        u = di - th * (di - dj)
        tq = t - th * rho
        acc = acc + w * (sys.W(tq, u[..., None]) + sys.W(tq, -u[..., None]))
    return -rho * acc


def _one_particle_tables(sys: TwoParticleSystem, s: float, t: float, grid1: Grid,
                         opts: KernelOptions):
    """Phase table E1[i, j] (prefactor folded) and spin transport F1[i, j]."""
    x = grid1.axis_coords(0)
    rho = t - s
    S1 = action_endpoints(sys.fs, s, t, x[:, None, None], x[None, :, None],
                          opts.quad_order)
    pref = np.sqrt(sys.m / (2.0 * np.pi * rho)) * np.exp(-1j * np.pi / 4.0) * grid1.h[0]
    E1 = pref * np.exp(1j * S1)
    F1 = None
    if sys.H1 is not None:
        F1 = _transport_batch(sys.H1, s, t, x[:, None, None], x[None, :, None],
                              opts.spin_substeps)
    return x, E1, F1


def _pair_reduce(T: np.ndarray, iu: np.ndarray, ju: np.ndarray) -> complex:
    """Sum all entries of T via unordered index pairs (exchange invariant)."""
    C = T + T.T
    return complex(np.sum(C[iu, ju]) + np.sum(np.diagonal(T)))


def apply_two_particle(sys: TwoParticleSystem, s: float, t: float,
                       st: ManyBodyState, opts: KernelOptions | None = None) -> ManyBodyState:
    """One short-time slice of the two-particle propagator."""
    if st.spin_per_particle != sys.ell:
        raise ValueError("state spin does not match the system")
    if s == t:
        return st
    opts = opts or KernelOptions()
    grid2 = st.grid
    diag = _gate(sys.fs, s, t, grid2, opts)
    N = grid2.N[0]
    ell = sys.ell
    grid1 = Grid(1, (N,), (grid2.L[0],))
    quad = effective_quad_order(sys.fs, opts.quad_order,
                                extra_degree=0 if sys.W is None else sys.W.total_degree)
    x, E1, F1 = _one_particle_tables(sys, s, t, grid1, replace(opts, quad_order=quad))

    R2 = (x[:, None] - x[None, :]) ** 2
    idx = np.arange(N)
    if sys.W is not None:
        diffs = (np.arange(-(N - 1), N)) * grid1.h[0]
        EW = np.exp(1j * _pair_interaction_table(sys, s, t, diffs, quad))
        src_diff = (idx[:, None] - idx[None, :]) + (N - 1)  # (j1, j2) column index
    U = N * ell
    iu, ju = np.triu_indices(U, k=1)
    flat = st.state.values.reshape(N, N, ell, ell)
    stv = np.ascontiguousarray(flat.transpose(0, 2, 1, 3).reshape(U, U))

    out = np.empty((N, N, ell, ell), dtype=np.complex128)
    for i1 in range(N):
        for i2 in range(N):
            P = E1[i1][:, None] * E1[i2][None, :]
            if sys.W is not None:
                P = P * EW[i1 - i2 + (N - 1)][src_diff]
            if opts.window:
                r = np.sqrt(R2[i1][:, None] + R2[i2][None, :])
                P = P * window_weights(r, diag.used_window_radius)
            if ell == 1:
                T = P * stv
                out[i1, i2, 0, 0] = _pair_reduce(T, iu, ju)
            else:
                Pex = np.repeat(np.repeat(P, ell, axis=0), ell, axis=1)
                for s1 in range(ell):
                    for s2 in range(ell):
                        FF = F1[i1, :, s1, :].reshape(U)[:, None] \
                            * F1[i2, :, s2, :].reshape(U)[None, :]
                        T = (Pex * FF) * stv
                        out[i1, i2, s1, s2] = _pair_reduce(T, iu, ju)
    values = out.reshape(N * N, ell * ell)
    if not np.all(np.isfinite(values.view(float))):
        raise RuntimeError("non-finite pair-kernel output")
    return replace(st, state=GridState(grid2, values, time=t))


def two_particle_action(sys: TwoParticleSystem, s: float, t: float,
                        x: np.ndarray, y: np.ndarray, quad_order: int = 8) -> float:
    """Configuration-space action; symmetric under swapping both particles."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    quad = effective_quad_order(sys.fs, quad_order,
                                extra_degree=0 if sys.W is None else sys.W.total_degree)
    s1 = action_endpoints(sys.fs, s, t, x[:1], y[:1], quad)
    s2 = action_endpoints(sys.fs, s, t, x[1:], y[1:], quad)
    total = float(s1) + float(s2)
    if sys.W is not None:
        rho = t - s
        nodes, weights = gauss01(quad)
        acc = 0.0
        dx = x[0] - x[1]
        dy = y[0] - y[1]
        for th, w in zip(nodes, weights):
            u = dx - th * (dx - dy)
            tq = t - th * rho
            acc += w * (sys.W(tq, np.array([u])) + sys.W(tq, np.array([-u])))
        total += -rho * acc
    return total


def symmetry_preservation_check(sys: TwoParticleSystem, part, st: ManyBodyState,
                                parity: int, opts: KernelOptions | None = None) -> float:
    """Defect of the symmetry class after composing over the partition.

    ``parity`` is +1 for the symmetric class and -1 for the antisymmetric
    one.  The input must already lie in the claimed class.
    """
    if parity not in (+1, -1):
        raise ValueError("parity is +1 or -1")
    ex0 = exchange(st)
    pre = float(np.sqrt(np.sum(np.abs(ex0.state.values - parity * st.state.values) ** 2)))
    if pre > 1e-12 * max(st.norm(), 1e-300) / np.sqrt(st.grid.cell_volume):
        raise ValueError(f"input is not in the parity={parity} class (defect {pre:.2e})")
    cur = st
    for s, t in zip(part.times, part.times[1:]):
        cur = apply_two_particle(sys, s, t, cur, opts)
    ex = exchange(cur)
    num = np.sqrt(st.grid.cell_volume
                  * np.sum(np.abs(ex.state.values - parity * cur.state.values) ** 2))
    return float(num / st.norm())
