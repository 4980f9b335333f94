"""Electromagnetic field sets built from exact space-time polynomials.

A :class:`FieldSet` bundles a scalar potential V, a vector potential A and the
derived electric field E and magnetic tensor B, together with the mass and the
declared growth exponent ``M_star`` (V grows like ``<x>^(2(M_star+1))``, A like
``<x>^(M_star+1-delta)``).  Units fix the reduced Planck constant and the
charge to one; the mass stays a parameter.

The growth audit is numerical: it fits the constants appearing in the
two-sided potential bounds and derivative bounds by sampling, verifies the
fitted lower bounds on probe points beyond the sample box, and reports which
branch of the magnetic-field conditions holds.  All derivatives entering the
audit are exact polynomial derivatives.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .poly import PolySpaceTime, from_terms, zero

__all__ = [
    "FieldSet",
    "GaugeFunction",
    "HessianFamily",
    "PairPotential",
    "AuditCheck",
    "AuditReport",
    "StructuralInconsistency",
    "field_set",
    "derive_em",
    "gauge_transform",
    "eval_potential",
    "b_component",
    "faraday_residual",
    "hessian_min_eig",
    "jacobi_eigvals",
    "audit_assumptions",
    "field_set_to_json",
    "field_set_from_json",
    "field_set_hash",
]


class StructuralInconsistency(ValueError):
    """Declared growth exponent contradicts the stored polynomial degrees."""


@dataclass(frozen=True)
class HessianFamily:
    """Tags V as one of the convex power families with a known Hessian floor.

    kind:
      * ``"power"``          V = |x|^(2(M+1))            floor 2(M+1)|x|^(2M)
      * ``"matrix_power"``   V = |Ax|^(2(M+1))           floor 2(M+1) beta^(M+1) |x|^(2M)
      * ``"shifted_power"``  V = (1 + |Ax|^2)^(M+1)      floor 2(M+1) beta^(M+1) |x|^(2M)

    with beta the smallest eigenvalue of A^T A.
    """

    kind: str
    M: int
    matrix: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if self.kind not in ("power", "matrix_power", "shifted_power"):
            raise ValueError(f"unknown Hessian family {self.kind!r}")
        if self.kind != "power" and self.matrix is None:
            raise ValueError(f"family {self.kind!r} needs a matrix")


@dataclass(frozen=True)
class PairPotential:
    """Interaction between one particle pair, as a polynomial in the difference."""

    pair: tuple[int, int]
    poly: PolySpaceTime

    def __post_init__(self):
        i, j = self.pair
        if i == j or i < 0 or j < 0:
            raise ValueError(f"invalid particle pair {self.pair}")


@dataclass(frozen=True)
class FieldSet:
    m: float
    dim: int
    M_star: int
    V: PolySpaceTime
    A: tuple[PolySpaceTime, ...]
    E: tuple[PolySpaceTime, ...] = ()
    B: dict[tuple[int, int], PolySpaceTime] = field(default_factory=dict)
    pair_potentials: tuple[PairPotential, ...] = ()
    hessian_family: HessianFamily | None = None

    def __post_init__(self):
        if self.m <= 0:
            raise ValueError("mass must be positive")
        if self.V.dim != self.dim or any(a.dim != self.dim for a in self.A):
            raise ValueError("potential dimension mismatch")
        if len(self.A) != self.dim:
            raise ValueError(f"need {self.dim} vector-potential components")

    @property
    def static(self) -> bool:
        """True when V and A carry no explicit time dependence."""
        return self.V.t_degree <= 0 and all(a.t_degree <= 0 for a in self.A)


@dataclass(frozen=True)
class GaugeFunction:
    """Real polynomial gauge generator psi(t, x)."""

    psi: PolySpaceTime


def field_set(m, dim, M_star, V, A=None, pair_potentials=(), hessian_family=None) -> FieldSet:
    """Build a FieldSet and derive E and B eagerly."""
    if A is None:
        A = tuple(zero(dim) for _ in range(dim))
    fs = FieldSet(m=float(m), dim=int(dim), M_star=int(M_star), V=V, A=tuple(A),
                  pair_potentials=tuple(pair_potentials), hessian_family=hessian_family)
    return derive_em(fs)


def derive_em(fs: FieldSet) -> FieldSet:
    """Recompute E_j = -dA_j/dt - dV/dx_j and B_jk = dA_k/dx_j - dA_j/dx_k."""
    E = tuple(-(fs.A[j].dt()) - fs.V.dx(j) for j in range(fs.dim))
    B = {}
    for j in range(fs.dim):
        for k in range(j + 1, fs.dim):
            B[(j, k)] = fs.A[k].dx(j) - fs.A[j].dx(k)
    return replace(fs, E=E, B=B)


def gauge_transform(fs: FieldSet, g: GaugeFunction) -> FieldSet:
    """V' = V - dpsi/dt, A'_j = A_j + dpsi/dx_j; E and B are unchanged."""
    psi = g.psi
    if psi.dim != fs.dim:
        raise ValueError("gauge function dimension mismatch")
    V = fs.V - psi.dt()
    A = tuple(fs.A[j] + psi.dx(j) for j in range(fs.dim))
    return derive_em(replace(fs, V=V, A=A))


def eval_potential(fs: FieldSet, t: float, x) -> tuple[float, np.ndarray]:
    x = np.asarray(x, dtype=float)
    if x.shape != (fs.dim,):
        raise ValueError(f"point shape {x.shape} does not match dim {fs.dim}")
    v = fs.V(t, x)
    a = np.array([fs.A[j](t, x) for j in range(fs.dim)])
    return float(v), a


def b_component(fs: FieldSet, j: int, k: int) -> PolySpaceTime:
    """B_jk for any ordering (antisymmetric; zero on the diagonal)."""
    if j == k:
        return zero(fs.dim)
    if j < k:
        return fs.B[(j, k)]
    return -fs.B[(k, j)]


def faraday_residual(fs: FieldSet, i: int, j: int) -> PolySpaceTime:
    """dE_i/dx_j - dE_j/dx_i + dB_ji/dt; identically zero for derived fields."""
    return fs.E[i].dx(j) - fs.E[j].dx(i) + b_component(fs, j, i).dt()


# ---------------------------------------------------------------------------
# small symmetric eigensolver

def jacobi_eigvals(a, tol: float = 1e-12, max_sweeps: int = 64) -> np.ndarray:
    """Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius norm falls below ``tol`` times the
    matrix norm (or absolutely, for near-zero matrices).
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("square matrix required")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * (1.0 + np.abs(a).max(initial=0.0))):
        raise ValueError("symmetric matrix required")
    a = 0.5 * (a + a.T)
    scale = max(np.linalg.norm(a), 1.0)
    for _ in range(max_sweeps):
        off = np.sqrt(max(0.0, np.sum(a * a) - np.sum(np.diag(a) ** 2)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                a[p, q] = a[q, p] = 0.0
    return np.sort(np.diag(a))


def hessian_min_eig(fs: FieldSet, t: float, x) -> tuple[float, float | None]:
    """Smallest eigenvalue of the spatial Hessian of V, with the family floor.

    Returns ``(min_eig, bound)`` where ``bound`` is the applicable convexity
    floor for the tagged family (None when no family is declared).  Callers
    assert ``min_eig >= bound - tol``.
    """
    x = np.asarray(x, dtype=float)
    d = fs.dim
    hess = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            hess[i, j] = hess[j, i] = fs.V.dx(i).dx(j)(t, x)
    min_eig = float(jacobi_eigvals(hess)[0])

    fam = fs.hessian_family
    if fam is None:
        return min_eig, None
    r2 = float(np.dot(x, x))
    if fam.kind == "power":
        bound = 2.0 * (fam.M + 1) * r2 ** fam.M
    else:
        mat = np.array(fam.matrix, dtype=float)
        beta = float(jacobi_eigvals(mat.T @ mat)[0])
        bound = 2.0 * (fam.M + 1) * beta ** (fam.M + 1) * r2 ** fam.M
    return min_eig, float(bound)


# ---------------------------------------------------------------------------
# growth audit

@dataclass(frozen=True)
class AuditCheck:
    check_id: str
    passed: bool
    constants: dict[str, float]
    witness: tuple[float, tuple[float, ...]] | None = None
    note: str = ""


@dataclass(frozen=True)
class AuditReport:
    passed: bool
    checks: dict[str, AuditCheck]
    constants: dict[str, float]
    b_branch: str
    sample_count: int

    def failing(self) -> list[str]:
        return [cid for cid, c in self.checks.items() if not c.passed]

    @property
    def worst_violation(self):
        for c in self.checks.values():
            if not c.passed and c.witness is not None:
                return c.witness
        return None


def _bracket(x: np.ndarray) -> np.ndarray:
    """<x> = sqrt(1 + |x|^2), vectorized over the last axis."""
    return np.sqrt(1.0 + np.sum(np.asarray(x, dtype=float) ** 2, axis=-1))


def _sphere_dirs(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    v = rng.standard_normal((n, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v


def _sym_grad_E(fs: FieldSet):
    """Polynomials of -(1/2m)(dE/dx + (dE/dx)^T), upper triangle."""
    d = fs.dim
    out = {}
    for i in range(d):
        for j in range(i, d):
            p = fs.E[i].dx(j) + fs.E[j].dx(i)
            out[(i, j)] = p.scaled(-0.5 / fs.m)
    return out


def audit_assumptions(fs: FieldSet, box=(1.0, 10.0), n_samples: int = 2000,
                      seed: int = 0) -> AuditReport:
    """Numerically audit the growth hypotheses of a field set.

    ``box = (t_max, radius)`` fixes the sample region [0, t_max] x [-R, R]^d.
    Degree bookkeeping that contradicts the declared exponent raises
    :class:`StructuralInconsistency` before any sampling; inequalities that a
    polynomial of admissible degree can still violate are checked on samples,
    on shells at radius R, and on probe shells at 2R and 4R, and failures
    carry a witness point.
    """
    if n_samples < 100:
        raise ValueError("need at least 100 samples")
    t_max, radius = float(box[0]), float(box[1])
    d, ms = fs.dim, fs.M_star
    p_v = 2 * (ms + 1)

    # Structural gates: degrees the declared exponent cannot support.
    if fs.V.x_degree > p_v:
        raise StructuralInconsistency(
            f"V has spatial degree {fs.V.x_degree} > {p_v} allowed by M_star={ms}")
    for j, a in enumerate(fs.A):
        if a.x_degree > ms:
            raise StructuralInconsistency(
                f"A[{j}] has spatial degree {a.x_degree} > M_star={ms}")

    rng = np.random.default_rng(seed)
    ts = rng.uniform(0.0, t_max, n_samples)
    xs = rng.uniform(-radius, radius, (n_samples, d))
    n_shell = max(64, n_samples // 8)
    shell_t = rng.uniform(0.0, t_max, n_shell)
    shell_x = radius * _sphere_dirs(rng, n_shell, d)
    probe_t = rng.uniform(0.0, t_max, 2 * n_shell)
    probe_x = np.concatenate([2.0 * radius * _sphere_dirs(rng, n_shell, d),
                              4.0 * radius * _sphere_dirs(rng, n_shell, d)])

    all_t = np.concatenate([ts, shell_t])
    all_x = np.concatenate([xs, shell_x])
    checks: dict[str, AuditCheck] = {}
    consts: dict[str, float] = {}

    def witness_at(tv, xv):
        return (float(tv), tuple(float(c) for c in xv))

    # -- two-sided bound on V -------------------------------------------
    wv = _bracket(all_x) ** p_v
    v_all = fs.V(all_t, all_x)
    c2 = float(np.max(v_all / wv))
    consts["C2"] = max(c2, 0.0)
    checks["V_upper"] = AuditCheck("V_upper", True, {"C2": consts["C2"]})

    shell_ratio = fs.V(shell_t, shell_x) / _bracket(shell_x) ** p_v
    i_min = int(np.argmin(shell_ratio))
    if shell_ratio[i_min] <= 0.0:
        checks["V_lower"] = AuditCheck(
            "V_lower", False, {"shell_min_ratio": float(shell_ratio[i_min])},
            witness=witness_at(shell_t[i_min], shell_x[i_min]),
            note="V is not positive on the outer shell")
        c0 = 0.0
        c1 = 0.0
    else:
        c0 = 0.5 * float(shell_ratio[i_min])
        c1 = max(0.0, float(np.max(c0 * wv - v_all)))
        bound_probe = c0 * _bracket(probe_x) ** p_v - c1
        v_probe = fs.V(probe_t, probe_x)
        bad = bound_probe > v_probe
        if np.any(bad):
            i = int(np.argmax(bound_probe - v_probe))
            checks["V_lower"] = AuditCheck(
                "V_lower", False, {"C0": c0, "C1": c1},
                witness=witness_at(probe_t[i], probe_x[i]),
                note="fitted lower bound breaks beyond the sample box")
        else:
            checks["V_lower"] = AuditCheck("V_lower", True, {"C0": c0, "C1": c1})
    consts["C0"], consts["C1"] = c0, c1

    # -- derivative growth of V (orders 1..3, plus d/dt) ----------------
    cmax = 0.0
    for alpha in _multi_indices(d, 3):
        dv = fs.V.dx_multi(alpha)
        if dv.is_zero():
            continue
        cmax = max(cmax, float(np.max(np.abs(dv(all_t, all_x)) / wv)))
    checks["V_deriv_growth"] = AuditCheck("V_deriv_growth", True, {"C_alpha": cmax})
    cmax_t = 0.0
    for alpha in _multi_indices(d, 3, include_zero=True):
        dv = fs.V.dx_multi(alpha).dt()
        if dv.is_zero():
            continue
        cmax_t = max(cmax_t, float(np.max(np.abs(dv(all_t, all_x)) / wv)))
    checks["V_time_deriv_growth"] = AuditCheck("V_time_deriv_growth", True,
                                               {"C_alpha": cmax_t})

    # -- growth of A and dA/dt ------------------------------------------
    deg_a = max((a.x_degree for a in fs.A), default=-1)
    delta = float(ms + 1 - max(deg_a, 0))
    wa = _bracket(all_x) ** (ms + 1 - delta)
    ca = 0.0
    for a in fs.A:
        if not a.is_zero():
            ca = max(ca, float(np.max(np.abs(a(all_t, all_x)) / wa)))
    checks["A_growth"] = AuditCheck("A_growth", True, {"C": ca, "delta": delta})
    consts["delta"] = delta
    wat = _bracket(all_x) ** (ms + 1)
    cat = 0.0
    for a in fs.A:
        for alpha in _multi_indices(d, 3, include_zero=True):
            da = a.dx_multi(alpha).dt()
            if not da.is_zero():
                cat = max(cat, float(np.max(np.abs(da(all_t, all_x)) / wat)))
    checks["A_time_deriv_growth"] = AuditCheck("A_time_deriv_growth", True, {"C_alpha": cat})

    # -- derivative growth of E ------------------------------------------
    we = _bracket(all_x) ** (2 * ms)
    ce = 0.0
    e_deg_ok = True
    for e in fs.E:
        for j in range(d):
            if e.dx(j).x_degree > 2 * ms:
                e_deg_ok = False
        for alpha in _multi_indices(d, 3):
            de = e.dx_multi(alpha)
            if not de.is_zero():
                ce = max(ce, float(np.max(np.abs(de(all_t, all_x)) / we)))
    checks["E_deriv_growth"] = AuditCheck(
        "E_deriv_growth", e_deg_ok, {"C_alpha": ce},
        note="" if e_deg_ok else "dE/dx grows faster than <x>^(2 M_star)")

    # -- symmetrized electric-gradient floor ------------------------------
    sym = _sym_grad_E(fs)
    def q_min_eig(tv, xv):
        mat = np.empty((d, d))
        for (i, j), p in sym.items():
            mat[i, j] = mat[j, i] = p(tv, xv)
        return float(jacobi_eigvals(mat)[0])

    eig_all = np.array([q_min_eig(tv, xv) for tv, xv in zip(all_t, all_x)])
    if ms == 0:
        cstar = 1.0
        c1e = max(0.0, float(np.max(cstar - eig_all)))
        checks["E_grad_floor"] = AuditCheck("E_grad_floor", True,
                                            {"C_star": cstar, "C1": c1e})
    else:
        shell_eig = np.array([q_min_eig(tv, xv) for tv, xv in zip(shell_t, shell_x)])
        ratio = shell_eig / radius ** (2 * ms)
        i_min = int(np.argmin(ratio))
        if ratio[i_min] <= 0.0:
            cstar, c1e = 0.0, 0.0
            checks["E_grad_floor"] = AuditCheck(
                "E_grad_floor", False, {"shell_min_ratio": float(ratio[i_min])},
                witness=witness_at(shell_t[i_min], shell_x[i_min]),
                note="symmetrized electric gradient not coercive on the shell")
        else:
            cstar = 0.5 * float(ratio[i_min])
            r2 = np.sum(all_x ** 2, axis=-1)
            c1e = max(0.0, float(np.max(cstar * r2 ** ms - eig_all)))
            probe_eig = np.array([q_min_eig(tv, xv) for tv, xv in zip(probe_t, probe_x)])
            pr2 = np.sum(probe_x ** 2, axis=-1)
            gap = cstar * pr2 ** ms - c1e - probe_eig
            if np.any(gap > 0.0):
                i = int(np.argmax(gap))
                checks["E_grad_floor"] = AuditCheck(
                    "E_grad_floor", False, {"C_star": cstar, "C1": c1e},
                    witness=witness_at(probe_t[i], probe_x[i]),
                    note="fitted coercivity bound breaks beyond the sample box")
            else:
                checks["E_grad_floor"] = AuditCheck("E_grad_floor", True,
                                                    {"C_star": cstar, "C1": c1e})
    consts["C_star"] = cstar
    consts["C1_E"] = c1e

    # -- magnetic-field branches -----------------------------------------
    b_polys = list(fs.B.values())
    branch_decay = all(all(b.dx(j).is_zero() for j in range(d)) for b in b_polys)
    if ms < 1:
        branch_tderiv = all(all(b.dt().dx(j).is_zero() for j in range(d)) for b in b_polys)
    else:
        branch_tderiv = all(b.dt().x_degree <= ms for b in b_polys)
    cb = 0.0
    wb = _bracket(all_x) ** ms
    for b in b_polys:
        if not b.dt().is_zero():
            cb = max(cb, float(np.max(np.abs(b.dt()(all_t, all_x)) / wb)))
    if branch_decay:
        b_branch = "decay"
    elif branch_tderiv:
        b_branch = "time-derivative"
    else:
        b_branch = "none"
    checks["B_conditions"] = AuditCheck(
        "B_conditions", b_branch != "none",
        {"C_dtB": cb, "branch_decay": float(branch_decay),
         "branch_time_derivative": float(branch_tderiv)},
        note=f"branch: {b_branch}")

    passed = all(c.passed for c in checks.values())
    return AuditReport(passed=passed, checks=checks, constants=consts,
                       b_branch=b_branch, sample_count=int(len(all_t) + len(probe_t)))


def _multi_indices(d: int, max_order: int, include_zero: bool = False):
    """All multi-indices with 1 <= |alpha| <= max_order (optionally |alpha|=0)."""
    out = [(0,) * d] if include_zero else []
    frontier = [(0,) * d]
    for _ in range(max_order):
        nxt = []
        for alpha in frontier:
            for j in range(d):
                na = alpha[:j] + (alpha[j] + 1,) + alpha[j + 1:]
                nxt.append(na)
        frontier = sorted(set(nxt))
        out.extend(frontier)
    return sorted(set(out))


# ---------------------------------------------------------------------------
# JSON round trip

def field_set_to_json(fs: FieldSet) -> dict:
    doc = {
        "m": fs.m,
        "dim": fs.dim,
        "M_star": fs.M_star,
        "V": fs.V.to_term_list(),
        "A": [a.to_term_list() for a in fs.A],
    }
    if fs.pair_potentials:
        doc["pair_potentials"] = [
            {"pair": list(p.pair), "terms": p.poly.to_term_list()}
            for p in fs.pair_potentials
        ]
    if fs.hessian_family is not None:
        fam = {"kind": fs.hessian_family.kind, "M": fs.hessian_family.M}
        if fs.hessian_family.matrix is not None:
            fam["matrix"] = [list(r) for r in fs.hessian_family.matrix]
        doc["hessian_family"] = fam
    return doc


def field_set_from_json(doc: dict) -> FieldSet:
    dim = int(doc["dim"])
    V = PolySpaceTime.from_term_list(dim, doc["V"])
    A = tuple(PolySpaceTime.from_term_list(dim, rows) for rows in doc["A"])
    pair_potentials = []
    if "pair_potentials" in doc:
        n_p = 1 + max(max(p["pair"]) for p in doc["pair_potentials"])
        if dim % n_p:
            raise ValueError("configuration dimension not divisible by particle count")
        d_p = dim // n_p
        for p in doc["pair_potentials"]:
            pair_potentials.append(PairPotential(
                pair=tuple(int(i) for i in p["pair"]),
                poly=PolySpaceTime.from_term_list(d_p, p["terms"])))
    fam = None
    if "hessian_family" in doc:
        f = doc["hessian_family"]
        mat = tuple(tuple(float(v) for v in r) for r in f["matrix"]) if "matrix" in f else None
        fam = HessianFamily(kind=f["kind"], M=int(f["M"]), matrix=mat)
    return field_set(doc["m"], dim, doc["M_star"], V, A,
                     pair_potentials=tuple(pair_potentials), hessian_family=fam)


def field_set_hash(fs: FieldSet) -> str:
    blob = json.dumps(field_set_to_json(fs), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# Convenience builders used across tests and demos -------------------------

def quartic_well_1d(m: float = 1.0, quadratic: float = 0.0) -> FieldSet:
    """V = x^4 (+ c x^2), A = 0, one dimension."""
    rows = [((4,), 0, 1.0)]
    if quadratic:
        rows.append(((2,), 0, float(quadratic)))
    V = from_terms(1, *rows)
    return field_set(m, 1, 1, V, hessian_family=HessianFamily("power", 1))


def harmonic_1d(m: float = 1.0, k: float = 1.0) -> FieldSet:
    """V = (k/2) x^2, A = 0."""
    V = from_terms(1, ((2,), 0, 0.5 * k))
    return field_set(m, 1, 0, V, hessian_family=HessianFamily("power", 0) if k == 2.0 else None)


def free_1d(m: float = 1.0) -> FieldSet:
    return field_set(m, 1, 0, zero(1))
