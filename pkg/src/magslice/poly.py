"""Multi-index polynomials in space-time.

A :class:`PolySpaceTime` is a finite sum of monomials ``c * x^alpha * t^k``
where ``alpha`` is a multi-index over the spatial variables and ``k`` a
nonnegative time degree.  Scalar potentials, vector-potential components,
derived field strengths and gauge functions are all stored in this form, so
every derivative taken anywhere in the package is exact (the degree drops by
one, no truncation error).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["PolySpaceTime", "zero", "monomial", "from_terms"]

# Term key: (alpha, k) with alpha a tuple of ints of length dim.
TermKey = tuple[tuple[int, ...], int]


def _canonical(dim: int, terms: dict[TermKey, float]) -> dict[TermKey, float]:
    out: dict[TermKey, float] = {}
    for (alpha, k), c in terms.items():
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != dim:
            raise ValueError(f"multi-index {alpha} has length {len(alpha)}, expected {dim}")
        if any(a < 0 for a in alpha) or k < 0:
            raise ValueError("negative exponent")
        c = float(c)
        if c != 0.0:
            key = (alpha, int(k))
            if key in out:
                raise ValueError(f"duplicate term key {key}")
            out[key] = c
    return out


@dataclass(frozen=True)
class PolySpaceTime:
    """Polynomial in (t, x) with real coefficients.

    ``terms`` maps ``(alpha, k) -> c`` for the monomial ``c * x^alpha * t^k``.
    Zero coefficients are never stored; two polynomials are equal iff their
    term dictionaries are.
    """

    dim: int
    terms: dict[TermKey, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "terms", _canonical(self.dim, self.terms))

    # ---- queries -------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    @property
    def x_degree(self) -> int:
        """Largest |alpha| over stored terms (-1 for the zero polynomial)."""
        return max((sum(a) for (a, _k) in self.terms), default=-1)

    @property
    def t_degree(self) -> int:
        return max((k for (_a, k) in self.terms), default=-1)

    @property
    def total_degree(self) -> int:
        return max((sum(a) + k for (a, k) in self.terms), default=-1)

    def homogeneous_x_part(self, degree: int) -> "PolySpaceTime":
        """Sub-polynomial collecting the terms with |alpha| == degree."""
        kept = {key: c for key, c in self.terms.items() if sum(key[0]) == degree}
        return PolySpaceTime(self.dim, kept)

    # ---- evaluation ----------------------------------------------------

    def __call__(self, t, x):
        """Evaluate at time(s) ``t`` and point(s) ``x``.

        ``x`` holds the spatial coordinates along its last axis when it is an
        array, so ``x.shape[-1] == dim``; ``t`` must broadcast against
        ``x.shape[:-1]``.  Scalars are accepted for both.
        """
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            if self.dim != 1:
                raise ValueError("scalar point for dim != 1")
            x = x.reshape(1)
        if x.shape[-1] != self.dim:
            raise ValueError(f"point has dimension {x.shape[-1]}, expected {self.dim}")
        t = np.asarray(t, dtype=float)
        base = np.broadcast_shapes(t.shape, x.shape[:-1])
        out = np.zeros(base, dtype=float)
        if not self.terms:
            return out if out.shape else float(out)

        # Per-variable power tables keep the evaluation exact and vectorized.
        xp = [self._powers(x[..., j], self._max_exp(j)) for j in range(self.dim)]
        tp = self._powers(t, self.t_degree)
        for (alpha, k), c in sorted(self.terms.items()):
            mono = np.full(base, c)
            if k:
                mono = mono * tp[k]
            for j, a in enumerate(alpha):
                if a:
                    mono = mono * xp[j][a]
            out = out + mono
        return out if out.shape else float(out)

    def _max_exp(self, j: int) -> int:
        return max((a[j] for (a, _k) in self.terms), default=0)

    @staticmethod
    def _powers(v: np.ndarray, nmax: int) -> list[np.ndarray]:
        pows = [np.ones_like(v)]
        for _ in range(nmax):
            pows.append(pows[-1] * v)
        return pows

    # ---- calculus ------------------------------------------------------

    def dx(self, j: int) -> "PolySpaceTime":
        """Exact partial derivative in x_j."""
        if not 0 <= j < self.dim:
            raise ValueError(f"axis {j} out of range for dim {self.dim}")
        out: dict[TermKey, float] = {}
        for (alpha, k), c in self.terms.items():
            a = alpha[j]
            if a:
                na = alpha[:j] + (a - 1,) + alpha[j + 1:]
                out[(na, k)] = out.get((na, k), 0.0) + c * a
        return PolySpaceTime(self.dim, out)

    def dt(self) -> "PolySpaceTime":
        """Exact partial derivative in t."""
        out: dict[TermKey, float] = {}
        for (alpha, k), c in self.terms.items():
            if k:
                out[(alpha, k - 1)] = out.get((alpha, k - 1), 0.0) + c * k
        return PolySpaceTime(self.dim, out)

    def dx_multi(self, alpha: tuple[int, ...]) -> "PolySpaceTime":
        p = self
        for j, a in enumerate(alpha):
            for _ in range(a):
                p = p.dx(j)
        return p

    # ---- algebra -------------------------------------------------------

    def __add__(self, other: "PolySpaceTime") -> "PolySpaceTime":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        out = dict(self.terms)
        for key, c in other.terms.items():
            out[key] = out.get(key, 0.0) + c
        return PolySpaceTime(self.dim, {k: v for k, v in out.items() if v != 0.0})

    def __sub__(self, other: "PolySpaceTime") -> "PolySpaceTime":
        return self + (-other)

    def __neg__(self) -> "PolySpaceTime":
        return PolySpaceTime(self.dim, {k: -c for k, c in self.terms.items()})

    def scaled(self, s: float) -> "PolySpaceTime":
        if s == 0.0:
            return PolySpaceTime(self.dim, {})
        return PolySpaceTime(self.dim, {k: s * c for k, c in self.terms.items()})

    def allclose(self, other: "PolySpaceTime", tol: float = 0.0) -> bool:
        """Term-by-term comparison; ``tol`` is relative to the larger coefficient."""
        if self.dim != other.dim:
            return False
        keys = set(self.terms) | set(other.terms)
        for key in keys:
            a = self.terms.get(key, 0.0)
            b = other.terms.get(key, 0.0)
            if a == b:
                continue
            if abs(a - b) > tol * max(abs(a), abs(b)):
                return False
        return True

    # ---- serialization -------------------------------------------------

    def to_term_list(self) -> list[list[float]]:
        """Rows ``[alpha_1, ..., alpha_dim, k, c]`` in sorted key order."""
        return [[*alpha, k, c] for (alpha, k), c in sorted(self.terms.items())]

    @classmethod
    def from_term_list(cls, dim: int, rows) -> "PolySpaceTime":
        terms: dict[TermKey, float] = {}
        for row in rows:
            if len(row) != dim + 2:
                raise ValueError(f"term row {row!r} should have {dim + 2} entries")
            alpha = tuple(int(a) for a in row[:dim])
            key = (alpha, int(row[dim]))
            terms[key] = terms.get(key, 0.0) + float(row[dim + 1])
        return cls(dim, {k: v for k, v in terms.items() if v != 0.0})

    def __repr__(self):
        if not self.terms:
            return f"PolySpaceTime(dim={self.dim}, 0)"
        bits = []
        for (alpha, k), c in sorted(self.terms.items()):
            s = f"{c:g}"
            for j, a in enumerate(alpha):
                if a:
                    s += f"*x{j + 1}" + (f"^{a}" if a > 1 else "")
            if k:
                s += "*t" + (f"^{k}" if k > 1 else "")
            bits.append(s)
        return f"PolySpaceTime(dim={self.dim}, " + " + ".join(bits) + ")"


def zero(dim: int) -> PolySpaceTime:
    return PolySpaceTime(dim, {})


def monomial(dim: int, alpha, k: int = 0, c: float = 1.0) -> PolySpaceTime:
    return PolySpaceTime(dim, {(tuple(alpha), k): c})


def from_terms(dim: int, *rows) -> PolySpaceTime:
    """Convenience constructor from ``(alpha, k, c)`` triples."""
    terms: dict[TermKey, float] = {}
    for alpha, k, c in rows:
        key = (tuple(alpha), int(k))
        terms[key] = terms.get(key, 0.0) + float(c)
    return PolySpaceTime(dim, {k: v for k, v in terms.items() if v != 0.0})
