"""Short-time propagator applied by dense oscillatory quadrature.

For s < t the operator sends node values f(y_j) to

    u(x_i) = (m / (2 pi rho))^(dim/2) e^{-i pi dim/4} h^dim
             sum_j w(|x_i - y_j|) exp(i S(t,s; y_j -> x_i)) f(y_j)

with S the straight-segment action and w a raised-cosine window.  The branch
of the square root is fixed so that the free kernel is the forward-time Green
function (identity in the small-rho limit).  At s = t the operator is the
identity.

Sampling rules: the grid spacing must resolve the central Fresnel zone
(h <= sqrt(2 pi rho / m) / 4) and stationary-phase contributions up to the
declared momentum bound (h <= pi / (4 p_max)).  The window radius
W = 4 p_max rho / m + 6 sqrt(rho / m) then keeps every retained chirp sample
below the aliasing threshold; windowing is what makes many short slices
composable on a fixed grid.

Every output node is reduced with numpy's pairwise summation over a
contiguous row, so results are bit-identical however the rows are chunked or
distributed over workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .action import action_endpoints
from .fields import FieldSet
from .grid import Grid, GridState, grid_nodes

__all__ = [
    "KernelOptions",
    "SamplingCheck",
    "SamplingError",
    "AccuracyError",
    "NumericalError",
    "check_sampling",
    "apply_short_time",
    "apply_short_time_spin",
    "build_dense_kernel",
    "apply_dense_kernel",
    "SpinEnvelope",
    "SpinHamiltonian",
    "spin_transport",
]


class SamplingError(RuntimeError):
    """Grid spacing cannot resolve the kernel oscillation for this slice."""


class AccuracyError(RuntimeError):
    """Requested accuracy not reachable within the configured effort cap."""


class NumericalError(RuntimeError):
    """Non-finite values produced during kernel application."""


@dataclass(frozen=True)
class KernelOptions:
    p_max: float = 6.0          # momentum bound used by sampling rules and window
    quad_order: int = 8         # Gauss-Legendre order (raised automatically)
    window: bool = True
    force: bool = False         # apply even when the sampling check fails
    workers: int = 1
    spin_substeps: int = 8
    row_chunk_elements: int = 8_000_000


@dataclass(frozen=True)
class SamplingCheck:
    ok: bool
    fresnel_width: float
    h_max_fresnel: float
    h_max_momentum: float
    grid_h: float
    window_radius: float
    alias_radius: float

    @property
    def required_h(self) -> float:
        return min(self.h_max_fresnel, self.h_max_momentum)

    @property
    def used_window_radius(self) -> float:
        """Radius the kernel actually tapers at.

        The chirp exp(i m r^2 / 2 rho) stays below the grid Nyquist frequency
        only for r < pi rho / (m h); beyond that, retained samples alias onto
        in-band momenta and composition amplifies the junk.  The sampling
        rules guarantee 0.9 * alias_radius covers four times the momentum
        reach and two Fresnel widths, so tapering there keeps every retained
        sample resolvable while opening the window as wide as the grid allows
        (on oversampled grids this is far wider than ``window_radius``, and
        the taper then spans many chirp cycles, which is what makes long slice
        compositions quiet).
        """
        return 0.9 * self.alias_radius


def check_sampling(grid: Grid, rho: float, m: float, p_max: float) -> SamplingCheck:
    """Advisory resolution check for a slice of duration ``rho``."""
    if rho <= 0:
        raise ValueError("slice duration must be positive")
    fresnel = float(np.sqrt(2.0 * np.pi * rho / m))
    h = max(grid.h)
    h_f = fresnel / 4.0
    h_p = float(np.pi / (4.0 * p_max))
    radius = 4.0 * p_max * rho / m + 6.0 * np.sqrt(rho / m)
    alias = float(np.pi * rho / (m * h))
    return SamplingCheck(ok=(h <= h_f and h <= h_p), fresnel_width=fresnel,
                         h_max_fresnel=h_f, h_max_momentum=h_p,
                         grid_h=h, window_radius=float(radius), alias_radius=alias)


def window_weights(r: np.ndarray, radius: float) -> np.ndarray:
    """Raised-cosine taper: 1 inside 0.8*radius, 0 beyond radius."""
    flat = 0.8 * radius
    ramp = 0.5 * (1.0 + np.cos(np.pi * (r - flat) / (0.2 * radius)))
    return np.where(r <= flat, 1.0, np.where(r <= radius, ramp, 0.0))


def _gate(fs: FieldSet, s: float, t: float, grid: Grid, opts: KernelOptions) -> SamplingCheck:
    if s > t:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    diag = check_sampling(grid, t - s, fs.m, opts.p_max)
    if not diag.ok and not opts.force:
        raise SamplingError(
            f"grid h={diag.grid_h:.4g} exceeds required h={diag.required_h:.4g} "
            f"for rho={t - s:.4g}; pass force=True to override")
    return diag


def _row_range(n_rows: int, chunk: int):
    for i0 in range(0, n_rows, chunk):
        yield i0, min(i0 + chunk, n_rows)


def _build_rows(fs: FieldSet, s: float, t: float, grid: Grid, i0: int, i1: int,
                opts: KernelOptions, diag: SamplingCheck) -> np.ndarray:
    """Kernel matrix rows i0..i1 (targets x_i, sources y_j)."""
    pts = grid_nodes(grid)
    x = pts[i0:i1, None, :]
    y = pts[None, :, :]
    S = action_endpoints(fs, s, t, x, y, opts.quad_order)
    K = np.exp(1j * S)
    if opts.window:
        r = np.sqrt(np.sum((x - y) ** 2, axis=-1))
        K *= window_weights(r, diag.used_window_radius)
    rho = t - s
    pref = (fs.m / (2.0 * np.pi * rho)) ** (grid.dim / 2.0) \
        * np.exp(-1j * np.pi * grid.dim / 4.0) * grid.cell_volume
    K *= pref
    return K


def _chunked_rows(n_nodes: int, opts: KernelOptions) -> int:
    return max(1, min(n_nodes, opts.row_chunk_elements // n_nodes))


def _scalar_apply(fs: FieldSet, s: float, t: float, state: GridState,
                  opts: KernelOptions, diag: SamplingCheck) -> np.ndarray:
    grid = state.grid
    M = grid.n_nodes
    f = state.values[:, 0]
    out = np.empty(M, dtype=np.complex128)
    chunk = _chunked_rows(M, opts)

    def work(rng):
        i0, i1 = rng
        K = _build_rows(fs, s, t, grid, i0, i1, opts, diag)
        out[i0:i1] = np.sum(K * f[None, :], axis=1)

    ranges = list(_row_range(M, chunk))
    if opts.workers > 1:
        with ThreadPoolExecutor(max_workers=opts.workers) as ex:
            list(ex.map(work, ranges))
    else:
        for rng in ranges:
            work(rng)
    return out[:, None]


def apply_short_time(fs: FieldSet, s: float, t: float, f: GridState,
                     opts: KernelOptions | None = None) -> GridState:
    """One application of the short-time propagator to a scalar state."""
    if f.spin_dim != 1:
        raise ValueError("scalar kernel needs spin_dim == 1")
    if s == t:
        return f
    opts = opts or KernelOptions()
    diag = _gate(fs, s, t, f.grid, opts)
    values = _scalar_apply(fs, s, t, f, opts, diag)
    if not np.all(np.isfinite(values.view(float))):
        bad = int(np.flatnonzero(~np.isfinite(values[:, 0]))[0])
        raise NumericalError(f"non-finite kernel output at node {bad}")
    return GridState(f.grid, values, time=t)


def build_dense_kernel(fs: FieldSet, s: float, t: float, grid: Grid,
                       opts: KernelOptions | None = None) -> np.ndarray:
    """Materialize the full kernel matrix (row chunking changes no bits)."""
    opts = opts or KernelOptions()
    diag = _gate(fs, s, t, grid, opts)
    M = grid.n_nodes
    K = np.empty((M, M), dtype=np.complex128)
    for i0, i1 in _row_range(M, _chunked_rows(M, opts)):
        K[i0:i1] = _build_rows(fs, s, t, grid, i0, i1, opts, diag)
    return K


def apply_dense_kernel(K: np.ndarray, f: GridState, t: float,
                       opts: KernelOptions | None = None) -> GridState:
    opts = opts or KernelOptions()
    M = K.shape[0]
    v = f.values[:, 0]
    out = np.empty(M, dtype=np.complex128)
    chunk = _chunked_rows(M, opts)

    def work(rng):
        i0, i1 = rng
        out[i0:i1] = np.sum(K[i0:i1] * v[None, :], axis=1)

    ranges = list(_row_range(M, chunk))
    if opts.workers > 1:
        with ThreadPoolExecutor(max_workers=opts.workers) as ex:
            list(ex.map(work, ranges))
    else:
        for rng in ranges:
            work(rng)
    return GridState(f.grid, out[:, None], time=t)


# ---------------------------------------------------------------------------
# spin transport

@dataclass(frozen=True)
class SpinEnvelope:
    """Bounded scalar envelope g(t, x) from a fixed expression set.

    kinds: ``const``; ``sin``/``cos`` of the affine form
    a0 + a_t t + a . x; ``gauss`` for amp * exp(-|x - c|^2 / (2 sigma^2)).
    All members and their derivatives are bounded.
    """

    kind: str
    amp: float = 1.0
    a0: float = 0.0
    a_t: float = 0.0
    a_x: tuple[float, ...] = ()
    center: tuple[float, ...] = ()
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("const", "sin", "cos", "gauss"):
            raise ValueError(f"unknown envelope kind {self.kind!r}")
        if self.kind == "gauss" and self.sigma <= 0:
            raise ValueError("gauss envelope needs sigma > 0")

    @property
    def time_independent(self) -> bool:
        return self.kind in ("const", "gauss") or self.a_t == 0.0

    def __call__(self, t, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "const":
            return np.full(x.shape[:-1], self.amp)
        if self.kind in ("sin", "cos"):
            phase = self.a0 + self.a_t * np.asarray(t)
            for j, aj in enumerate(self.a_x):
                if aj:
                    phase = phase + aj * x[..., j]
            return self.amp * (np.sin(phase) if self.kind == "sin" else np.cos(phase))
        c = np.zeros(x.shape[-1]) if not self.center else np.asarray(self.center, dtype=float)
        r2 = np.sum((x - c) ** 2, axis=-1)
        return self.amp * np.exp(-r2 / (2.0 * self.sigma ** 2))


@dataclass(frozen=True)
class SpinHamiltonian:
    """Hermitian matrix term H1(t, x) = sum_k M_k g_k(t, x)."""

    ell: int
    terms: tuple[tuple[np.ndarray, SpinEnvelope], ...]

    def __post_init__(self):
        if self.ell < 1:
            raise ValueError("matrix degree must be >= 1")
        fixed = []
        for mat, env in self.terms:
            mat = np.asarray(mat, dtype=np.complex128)
            if mat.shape != (self.ell, self.ell):
                raise ValueError(f"matrix shape {mat.shape} != ({self.ell}, {self.ell})")
            if np.abs(mat - mat.conj().T).max(initial=0.0) > 1e-12 * (1.0 + np.abs(mat).max()):
                raise ValueError("spin matrices must be Hermitian")
            mat = np.ascontiguousarray(mat)
            mat.setflags(write=False)
            fixed.append((mat, env))
        object.__setattr__(self, "terms", tuple(fixed))

    @property
    def time_independent(self) -> bool:
        return all(env.time_independent for _m, env in self.terms)

    def eval_matrix(self, t, x: np.ndarray) -> np.ndarray:
        """H1 at points x (..., dim); returns (..., ell, ell)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (self.ell, self.ell), dtype=np.complex128)
        for mat, env in self.terms:
            out += env(t, x)[..., None, None] * mat
        return out


def _mm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched small matrix product with a fixed contraction order."""
    return np.einsum("...st,...tu->...su", a, b)


def _unitarity_defect(F: np.ndarray) -> float:
    ell = F.shape[-1]
    d = _mm(np.conj(np.swapaxes(F, -1, -2)), F) - np.eye(ell)
    return float(np.sqrt(np.max(np.sum(np.abs(d) ** 2, axis=(-2, -1)))))


def _transport_batch(H1: SpinHamiltonian, s: float, t: float,
                     X: np.ndarray, Y: np.ndarray, substeps: int,
                     tol: float = 1e-10, max_doublings: int = 8) -> np.ndarray:
    """Solve dF/dtheta = -i H1(theta, q(theta)) F along straight segments.

    X, Y are (..., dim) endpoint batches (position at t and s).  Classic RK4
    with substep doubling until the unitarity defect falls below ``tol``.
    """
    rho = t - s
    ell = H1.ell
    base = np.broadcast_shapes(X.shape[:-1], Y.shape[:-1])
    Xb = np.broadcast_to(X, base + (X.shape[-1],))
    Yb = np.broadcast_to(Y, base + (X.shape[-1],))
    n = max(1, int(substeps))
    for _ in range(max_doublings + 1):
        F = np.broadcast_to(np.eye(ell, dtype=np.complex128), base + (ell, ell)).copy()
        dth = rho / n
        for k in range(n):
            th = s + k * dth

            def rhs(theta, mat):
                q = Yb + ((theta - s) / rho) * (Xb - Yb)
                return -1j * _mm(H1.eval_matrix(theta, q), mat)

            k1 = rhs(th, F)
            k2 = rhs(th + 0.5 * dth, F + 0.5 * dth * k1)
            k3 = rhs(th + 0.5 * dth, F + 0.5 * dth * k2)
            k4 = rhs(th + dth, F + dth * k3)
            F = F + (dth / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if _unitarity_defect(F) <= tol:
            return F
        n *= 2
    raise AccuracyError(
        f"spin transport unitarity defect above {tol} even at {n} substeps")


def spin_transport(H1: SpinHamiltonian, seg, substeps: int = 8) -> np.ndarray:
    """Transport matrix F(t, s) along one straight segment."""
    return _transport_batch(H1, seg.s, seg.t, seg.x, seg.y, substeps)


def apply_short_time_spin(fs: FieldSet, H1: SpinHamiltonian, s: float, t: float,
                          f: GridState, opts: KernelOptions | None = None) -> GridState:
    """Matrix-valued kernel: scalar weight times the spin transport matrix."""
    if f.spin_dim != H1.ell:
        raise ValueError(f"state spin dimension {f.spin_dim} != {H1.ell}")
    if s == t:
        return f
    opts = opts or KernelOptions()
    diag = _gate(fs, s, t, f.grid, opts)
    grid = f.grid
    M = grid.n_nodes
    pts = grid_nodes(grid)
    fv = f.values
    out = np.empty((M, H1.ell), dtype=np.complex128)
    # spin chunks are smaller: F needs chunk * M * ell^2 complex entries
    chunk = max(1, min(M, opts.row_chunk_elements // (M * H1.ell * H1.ell)))
    for i0, i1 in _row_range(M, chunk):
        K = _build_rows(fs, s, t, grid, i0, i1, opts, diag)
        F = _transport_batch(H1, s, t, pts[i0:i1, None, :], pts[None, :, :],
                             opts.spin_substeps)
        g = np.einsum("rmst,mt->rms", F, fv)
        out[i0:i1] = np.sum(K[:, :, None] * g, axis=1)
    if not np.all(np.isfinite(out.view(float))):
        raise NumericalError("non-finite kernel output")
    return GridState(grid, out, time=t)
