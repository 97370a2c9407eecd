"""Nonlinear L^p projections, monotone (p, q)-systems and Marcinkiewicz
interpolation audits on finite weighted measure spaces."""
from .measure import (
    DataPair,
    DomainError,
    ExponentPair,
    Field,
    MeasureSpace,
    ScalarField,
    SpaceMismatch,
    bracket,
    conjugate_exponent,
    distribution,
    inner,
    layer_cake,
    norm_s,
    s_power,
    weak_quasinorm,
)
from .monotone import ConvergenceError, MonotoneMap, PPowerMap, apply, audit_axioms, invert
from .rng import SplitMix64
from .solver import (
    SolveReport,
    basic_estimate_ratio,
    lp_projection,
    riesz_apply,
    solve_dual,
    solve_system,
)
from .subspace import (
    SubspacePair,
    build_subspace,
    commutator_defect,
    grid_hodge,
    project_minus,
    project_plus,
    random_subspace,
)
from .interpolation import (
    EnergyReport,
    SplitPair,
    TypeConstants,
    energy,
    energy_estimate_audit,
    levelset_integral_audit,
    marcinkiewicz_split,
    pointwise_audit,
    strong_type_sweep,
    truncated_solutions,
    weak_type_constant,
)

__version__ = "0.1.0"
