"""srot: optimal transport with sub-Riemannian / optimal-control costs.

The package computes optimal-control costs by Hamiltonian geodesic shooting,
solves discrete Kantorovich problems with exact dual potentials, and
synthesizes Monge maps and displacement interpolations as time slices of the
Hamiltonian flow seeded by the potential's differential.  The Grushin plane,
the Heisenberg group and Euclidean spaces ship as built-in systems, with
closed-form Grushin formulas serving as oracles for everything numerical.
"""

__version__ = "0.1.0"

from .systems import (
    ControlSystemSpec,
    euclidean,
    frame_system,
    goh_residual,
    grushin,
    heisenberg,
    is_two_generating,
    LagrangianReport,
    lie_bracket,
    make_system,
    validate_lagrangian,
)
from .flow import (
    FlowBlowupError,
    PhasePoint,
    PmpReport,
    Trajectory,
    bolza_to_mayer,
    energy_drift,
    ham_flow,
    pmp_check,
    uniform_control_grid,
)
from .shooting import (
    BruteForceResult,
    ConnectError,
    ConnectOptions,
    GeodesicSolution,
    brute_force_cost,
    connect,
    grushin_distance_origin,
    grushin_geodesic,
    grushin_origin_covector,
)
from .kantorovich import (
    DiscreteMeasure,
    DualPotentials,
    TransportPlan,
    c1_transform,
    c2_transform,
    cost_matrix,
    is_c_concave,
    solve_kantorovich,
    support_slackness,
)
from .monge import (
    InterpolationFrames,
    PotentialField,
    delta_potential,
    displacement_interpolation,
    grushin_interpolation_to_delta,
    monge_map,
    potential_from_duals,
    potential_gradient,
    pushforward_check,
)

__all__ = [
    "__version__",
    "ControlSystemSpec",
    "make_system",
    "grushin",
    "heisenberg",
    "euclidean",
    "frame_system",
    "lie_bracket",
    "is_two_generating",
    "goh_residual",
    "validate_lagrangian",
    "LagrangianReport",
    "PhasePoint",
    "Trajectory",
    "FlowBlowupError",
    "ham_flow",
    "energy_drift",
    "pmp_check",
    "PmpReport",
    "uniform_control_grid",
    "bolza_to_mayer",
    "GeodesicSolution",
    "ConnectOptions",
    "ConnectError",
    "connect",
    "grushin_geodesic",
    "grushin_distance_origin",
    "grushin_origin_covector",
    "brute_force_cost",
    "BruteForceResult",
    "DiscreteMeasure",
    "TransportPlan",
    "DualPotentials",
    "cost_matrix",
    "solve_kantorovich",
    "c1_transform",
    "c2_transform",
    "is_c_concave",
    "support_slackness",
    "PotentialField",
    "InterpolationFrames",
    "potential_gradient",
    "potential_from_duals",
    "delta_potential",
    "monge_map",
    "displacement_interpolation",
    "grushin_interpolation_to_delta",
    "pushforward_check",
]
