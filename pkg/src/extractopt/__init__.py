"""Closed-form extraction policies under regime-switching jump-diffusion prices.

Solves the coupled quadratic system behind quadratic-in-price value
functions, extracts the linear feedback rate, and verifies both by
quadrature, residual, and Monte-Carlo checks.
"""

__version__ = "0.1.0"

from .model import (
    CostParams,
    InitialState,
    LevyMeasureSpec,
    MarketModel,
    ReferenceTable,
    RegimeParams,
    SwitchGenerator,
    ValidationReport,
    dump_config,
    example_model,
    load_config,
    validate,
    write_fixture_configs,
)
from .levy import (
    JumpIntegral,
    integral_closed_form,
    integral_quadrature,
    compensator_mean,
    sample_jump_size,
    small_jump_variance,
    tail_mass,
)
from .solver import (
    NoAdmissibleRootError,
    QuadraticSystem,
    RootVector,
    Solution,
    build_system,
    select_admissible,
    solve_all_roots,
)
from .sim import (
    PayoffEstimate,
    Policy,
    SimConfig,
    SimOverflowError,
    estimate_payoff,
    truncation_bound,
    zero_policy_value,
)
from .verify import (
    DiscrepancyReport,
    McComparison,
    ResidualReport,
    coefficient_crosscheck,
    hjb_residual,
    mc_vs_value,
    reference_report,
)

__all__ = [
    "CostParams", "InitialState", "LevyMeasureSpec", "MarketModel",
    "ReferenceTable", "RegimeParams", "SwitchGenerator", "ValidationReport",
    "dump_config", "example_model", "load_config", "validate",
    "write_fixture_configs",
    "JumpIntegral", "integral_closed_form", "integral_quadrature",
    "compensator_mean", "sample_jump_size", "small_jump_variance", "tail_mass",
    "NoAdmissibleRootError", "QuadraticSystem", "RootVector", "Solution",
    "build_system", "select_admissible", "solve_all_roots",
    "PayoffEstimate", "Policy", "SimConfig", "SimOverflowError",
    "estimate_payoff", "truncation_bound", "zero_policy_value",
    "DiscrepancyReport", "McComparison", "ResidualReport",
    "coefficient_crosscheck", "hjb_residual", "mc_vs_value", "reference_report",
]
