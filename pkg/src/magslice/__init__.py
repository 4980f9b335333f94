"""Time-sliced propagator laboratory for magnetic Schrodinger equations.

The package propagates wavefunctions with the composed short-time oscillatory
kernel built from the classical action along piecewise straight paths, checks
it against a norm-preserving implicit reference solver, and verifies the
stability, convergence, gauge, spin-transport, exchange-symmetry and
change-of-variables properties that make the construction work for
polynomially growing electromagnetic potentials.
"""

from .poly import PolySpaceTime, from_terms, monomial, zero
from .fields import (
    AuditReport,
    FieldSet,
    GaugeFunction,
    HessianFamily,
    PairPotential,
    StructuralInconsistency,
    audit_assumptions,
    derive_em,
    eval_potential,
    field_set,
    field_set_from_json,
    field_set_hash,
    field_set_to_json,
    gauge_transform,
    hessian_min_eig,
)
from .action import PiecewisePath, StraightSegment, action_piecewise, action_segment
from .grid import Grid, GridState, gaussian_state, interior_mask, l2_distance, \
    load_snapshot, save_snapshot
from .kernel import (
    AccuracyError,
    KernelOptions,
    SamplingError,
    SpinEnvelope,
    SpinHamiltonian,
    apply_short_time,
    apply_short_time_spin,
    check_sampling,
    spin_transport,
)

__version__ = "0.1.0"
