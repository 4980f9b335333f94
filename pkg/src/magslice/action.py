"""Classical action along straight segments and piecewise-linear paths.

On the straight segment from y at time s to x at time t the action has the
closed form

    m|x-y|^2 / (2 rho)
      + (x-y) . int_0^1 A(t - th*rho, x - th*(x-y)) dth
      - rho *  int_0^1 V(t - th*rho, x - th*(x-y)) dth,      rho = t - s.

Both line integrals are polynomials in the quadrature variable, so fixed-order
Gauss-Legendre evaluates them exactly once the order covers the degree; the
order is raised automatically when the field degrees demand it.  The same
routine powers the dense kernel assembly, so it accepts whole endpoint arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .fields import FieldSet

__all__ = [
    "StraightSegment",
    "PiecewisePath",
    "gauss01",
    "effective_quad_order",
    "action_segment",
    "action_piecewise",
    "action_endpoints",
]


@dataclass(frozen=True)
class StraightSegment:
    """Path q(theta) = y + (theta - s)/(t - s) * (x - y) on [s, t]."""

    s: float
    t: float
    y: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        if not self.s < self.t:
            raise ValueError(f"need s < t, got s={self.s}, t={self.t}")
        object.__setattr__(self, "y", np.atleast_1d(np.asarray(self.y, dtype=float)))
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        if self.x.shape != self.y.shape:
            raise ValueError("endpoint dimensions differ")

    @property
    def rho(self) -> float:
        return self.t - self.s

    def point(self, theta: float) -> np.ndarray:
        return self.y + (theta - self.s) / (self.t - self.s) * (self.x - self.y)


@dataclass(frozen=True)
class PiecewisePath:
    """Vertices x(0), ..., x(nu) joined by straight segments at given times."""

    times: tuple[float, ...]
    vertices: tuple

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        verts = tuple(np.atleast_1d(np.asarray(v, dtype=float)) for v in self.vertices)
        if len(verts) != len(times):
            raise ValueError("vertex count must match time count")
        if len(times) < 2:
            raise ValueError("need at least one segment")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "vertices", verts)

    def segments(self):
        for k in range(len(self.times) - 1):
            yield StraightSegment(self.times[k], self.times[k + 1],
                                  self.vertices[k], self.vertices[k + 1])


@lru_cache(maxsize=32)
def gauss01(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    xi, w = np.polynomial.legendre.leggauss(int(order))
    return (xi + 1.0) / 2.0, w / 2.0


def effective_quad_order(fs: FieldSet, requested: int = 8, extra_degree: int = 0) -> int:
    """Order needed for exact segment integrals of the stored polynomials."""
    deg = max(fs.V.total_degree,
              max((a.total_degree for a in fs.A), default=-1),
              max((p.poly.total_degree for p in fs.pair_potentials), default=-1),
              0) + extra_degree
    needed = (deg + 2) // 2  # 2n-1 >= deg
    return max(int(requested), needed, 1)


def action_endpoints(fs: FieldSet, s: float, t: float, x: np.ndarray, y: np.ndarray,
                     quad_order: int = 8) -> np.ndarray:
    """Segment action for arrays of endpoints.

    ``x`` and ``y`` carry coordinates on the last axis and broadcast against
    each other; the result has the broadcast shape.  Pair potentials stored on
    the field set contribute with both orientations of each difference.
    """
    rho = t - s
    if rho <= 0:
        raise ValueError("need s < t")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    diff = x - y
    kinetic = fs.m * np.sum(diff * diff, axis=-1) / (2.0 * rho)

    order = effective_quad_order(fs, quad_order)
    nodes, weights = gauss01(order)
    line = np.zeros(np.broadcast_shapes(x.shape[:-1], y.shape[:-1]))
    pot = np.zeros_like(line)
    has_a = any(not a.is_zero() for a in fs.A)
    for th, w in zip(nodes, weights):
        tq = t - th * rho
        pts = x - th * diff
        if has_a:
            acc = None
            for j in range(fs.dim):
                if fs.A[j].is_zero():
                    continue
                contrib = diff[..., j] * fs.A[j](tq, pts)
                acc = contrib if acc is None else acc + contrib
            if acc is not None:
                line = line + w * acc
        if not fs.V.is_zero():
            pot = pot + w * fs.V(tq, pts)
        for p in fs.pair_potentials:
            i, j = p.pair
            dp = p.poly.dim
            u = pts[..., i * dp:(i + 1) * dp] - pts[..., j * dp:(j + 1) * dp]
            pot = pot + w * (p.poly(tq, u) + p.poly(tq, -u))
    return kinetic + line - rho * pot


def action_segment(fs: FieldSet, seg: StraightSegment, quad_order: int = 8) -> float:
    """Classical action along one straight segment."""
    if seg.x.shape[-1] != fs.dim:
        raise ValueError("segment dimension does not match field set")
    return float(action_endpoints(fs, seg.s, seg.t, seg.x, seg.y, quad_order))


def action_piecewise(fs: FieldSet, path: PiecewisePath, quad_order: int = 8) -> float:
    """Sum of segment actions over consecutive vertices."""
    total = 0.0
    for seg in path.segments():
        total += action_segment(fs, seg, quad_order)
    return total
