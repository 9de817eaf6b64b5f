"""Discrete multi-marginal optimal transport and reflecting-refracting metalens synthesis."""

from .domains import DiscreteMeasure, Grid, build_grid, build_measure, check_mass_balance
from .cost import (
    CostSpec,
    InjectivityBound,
    SurfaceProfile,
    build_metalens_cost,
    distance_sum_cost,
    separable_sum_cost,
    tabulated_cost,
)
from .ctransform import (
    PotentialVector,
    c_transform_j,
    conjugacy_defect,
    conjugate_sweep,
    is_admissible,
    normalize_potentials,
)
from .dual_solver import (
    duality_gap,
    kantorovich_I,
    lp_primal,
    maximize_dual,
    monge_bruteforce,
)
from .monge import (
    MapField,
    c_superdifferential,
    extract_maps,
    pushforward_check,
    representation_residual,
    transport_cost,
)
from .metalens import (
    PhaseField,
    gsl_residual,
    synthesize_phase,
    t1_t2_compatibility,
    trace_reflection,
    trace_refraction,
)

__version__ = "0.1.0"
