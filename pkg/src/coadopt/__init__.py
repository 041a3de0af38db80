"""Coupled adoption-opinion dynamics for two competing technologies.

The package simulates a discrete-time compartmental model (susceptible,
adopter, dissatisfied, per technology) on a physical contact network,
coupled to anchored opinion dynamics on a social network, and computes its
adoption-free and adoption-diffused equilibria with numerical certification
of the model's structural properties.
"""

__version__ = "0.1.0"

from .dynamics import InjectionEvent, Trajectory, simulate, step, trajectory_metrics
from .equilibrium import (
    Equilibrium,
    adoption_free_equilibrium,
    adoption_free_opinions,
    fixed_point_map,
    multistart_uniqueness,
    opinion_response,
    solve_adoption_diffused,
    solver_floor,
)
from .model import (
    CROSSOVER_RANGES,
    DEFAULT_RANGES,
    ModelConfig,
    ParameterRanges,
    SystemState,
    TechParams,
    config_digest,
    early_stage_state,
    load_config,
    random_instance,
    save_config,
    validate_config,
    validate_state,
)
from .netgraph import (
    WeightedDigraph,
    anchored_reachability,
    check_row_stochastic,
    is_irreducible,
    load_edge_csv,
    row_normalized,
    save_edge_csv,
    spectral_radius,
)
from .verify import (
    CrossValidation,
    PropertyReport,
    check_coexistence,
    check_instability,
    check_invariance,
    check_monotone_susceptibles,
    check_no_partial_adoption,
    check_opinion_floor,
    cross_validate,
    run_property_suite,
)

__all__ = [
    "__version__",
    "CROSSOVER_RANGES",
    "CrossValidation",
    "DEFAULT_RANGES",
    "Equilibrium",
    "InjectionEvent",
    "ModelConfig",
    "ParameterRanges",
    "PropertyReport",
    "SystemState",
    "TechParams",
    "Trajectory",
    "WeightedDigraph",
    "adoption_free_equilibrium",
    "adoption_free_opinions",
    "anchored_reachability",
    "check_coexistence",
    "check_instability",
    "check_invariance",
    "check_monotone_susceptibles",
    "check_no_partial_adoption",
    "check_opinion_floor",
    "check_row_stochastic",
    "config_digest",
    "cross_validate",
    "early_stage_state",
    "fixed_point_map",
    "is_irreducible",
    "load_config",
    "load_edge_csv",
    "multistart_uniqueness",
    "opinion_response",
    "random_instance",
    "row_normalized",
    "run_property_suite",
    "save_config",
    "save_edge_csv",
    "simulate",
    "solve_adoption_diffused",
    "solver_floor",
    "spectral_radius",
    "step",
    "trajectory_metrics",
    "validate_config",
    "validate_state",
]
