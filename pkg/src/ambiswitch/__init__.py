"""Optimal switching under drift ambiguity: PDE, closed-form and Monte Carlo solvers."""
from __future__ import annotations

__version__ = "0.1.0"

from .closed_form import (  # noqa: E402
    BuyLowParams, FundParams, SmoothFitSolution, StrategyType, classify_fund_strategy, fund_K,
    fund_thresholds, fund_thresholds_closed_form, phi_integral, solve_smoothfit, sweep_smoothfit,
    value_buy_sell,
)
from .grid import Grid1D, default_grid  # noqa: E402
from .model import (  # noqa: E402
    GBM, OU, AffineDynamics, AffineFn, AmbiguitySpec, BuyLowTerminal, ConstantCosts, ConstantTerminal,
    Finite, GridTerminal, Infinite, PowerFn, RewardSpec, SlippageCosts, SwitchingProblem, ZeroFn,
    ZeroTerminal, sigma_support,
)
from .monotone import apply_monotone_shift, validate_monotone  # noqa: E402
from .pde import (  # noqa: E402
    NonConvergence, SolverConfig, ValueSurface, extract_switching_regions, solve, solve_finite_horizon,
    solve_infinite_horizon, thresholds,
)
from .sde import (  # noqa: E402
    PriorPolicy, SimulationReport, ThresholdStrategy, Trigger, cost_bound_diagnostic, estimate_objective,
    simulate_path,
)
from .validation import (  # noqa: E402
    ValidationReport, validate_non_free_loop, validate_problem, validate_strong_triangular,
    validate_terminal,
)
