"""Kyle-Back insider trading equilibrium laboratory.

Simulates insider/noise-trader markets under a pricing rule, checks the
equilibrium conditions numerically, and calibrates the feedback equilibrium
with an unknown release time.
"""
from . import errors
from .errors import *  # noqa: F401,F403
from .functions import TimeFunction, constant, parse as parse_function
from .model import (ConditionResult, EquilibriumReport, FundamentalModel, MarketModel, NoiseModel,
                    PathBundle, PricingRule, ReleaseTime, Strategy, TimeGrid, survival)
from .pricing import lambda_profile, make_linear_rule, make_lognormal_rule, pde_residual
from .strategies import (bridge_strategy, correlated_bridge_strategy, cs_feedback_strategy,
                         cs_two_phase_strategy, default_bridge_strategy, zero_strategy)
from .simulate import iter_simulate, simulate
from .filtering import equilibrium_gain, riccati_closed_form, run_filter
from .calibration import calibrate_cs_lambda0, solve_cs_switch_time
from .equilibrium import (Thresholds, check_equilibrium_known_tau, check_equilibrium_unknown_tau,
                          check_rationality, compute_wealth, estimate_expected_wealth,
                          perturbation_derivative)
from .admissibility import validate_admissibility
from .scenarios import run_scenario

__all__ = ["TimeFunction", "constant", "parse_function", "ConditionResult", "EquilibriumReport", "FundamentalModel", "MarketModel", "NoiseModel", "PathBundle", "PricingRule", "ReleaseTime", "Strategy", "TimeGrid", "survival", "lambda_profile", "make_linear_rule", "make_lognormal_rule", "pde_residual", "bridge_strategy", "correlated_bridge_strategy", "cs_feedback_strategy", "cs_two_phase_strategy", "default_bridge_strategy", "zero_strategy", "iter_simulate", "simulate", "equilibrium_gain", "riccati_closed_form", "run_filter", "calibrate_cs_lambda0", "solve_cs_switch_time", "Thresholds", "check_equilibrium_known_tau", "check_equilibrium_unknown_tau", "check_rationality", "compute_wealth", "estimate_expected_wealth", "perturbation_derivative", "validate_admissibility", "run_scenario"]
__all__ += errors.__all__

__version__ = "0.1.0"
