"""The two worked examples as ready-made problems."""
from __future__ import annotations

import math

from .closed_form import BuyLowParams, FundParams
from .grid import Grid1D
from .model import (
    GBM, OU, AmbiguitySpec, BuyLowTerminal, ConstantCosts, ConstantTerminal, Finite, Infinite,
    PowerFn, RewardSpec, SlippageCosts, SwitchingProblem, ZeroFn,
)


def fund_selection_problem(params: FundParams = FundParams(), horizon=None,
                           terminal=None) -> SwitchingProblem:
    """Two GBM funds, reward x^p in both, constant switching costs.

    The default temporary terminal is g = (c21, 0): non-positive and
    consistent with the costs, so it suits both finite truncations and the
    infinite-horizon construction.
    """
    p = params
    return SwitchingProblem(
        regime_count=2,
        dynamics=(GBM(p.b1, p.sigma1), GBM(p.b2, p.sigma2)),
        reward=RewardSpec((PowerFn(p.p), PowerFn(p.p)), (ZeroFn(), ZeroFn())),
        ambiguity=AmbiguitySpec((p.kappa1, p.kappa2)),
        costs=ConstantCosts(((0.0, p.c12), (p.c21, 0.0))),
        discount=p.rho,
        horizon=horizon or Infinite(),
        terminal=terminal or ConstantTerminal((min(p.c21, 0.0), 0.0)),
        name="fund_selection",
    )


def fund_grid(nx: int = 801, log_min: float = -2.0, log_max: float = 26.0) -> Grid1D:
    """Log-price grid wide enough for the thresholds over kappa2 in [0, 0.06]."""
    return Grid1D(log_min, log_max, nx, "log")


def buy_low_problem(params: BuyLowParams = BuyLowParams(), horizon=None,
                    terminal_C: float = 10.0) -> SwitchingProblem:
    """Mean-reverting log price, regime 0 flat, regime 1 long one share."""
    p = params
    return SwitchingProblem(
        regime_count=2,
        dynamics=(OU(p.a, p.b, p.sigma), OU(p.a, p.b, p.sigma)),
        reward=RewardSpec((ZeroFn(), ZeroFn()), (ZeroFn(), ZeroFn())),
        ambiguity=AmbiguitySpec((p.kappa, p.kappa)),
        costs=SlippageCosts(p.K),
        discount=p.rho,
        horizon=horizon or Infinite(),
        terminal=BuyLowTerminal(p.K, terminal_C),
        name="buy_low_sell_high",
    )


def buy_low_grid(params: BuyLowParams = BuyLowParams(), nx: int = 801) -> Grid1D:
    """Long-run mean +/- 6 stationary standard deviations."""
    half = 6.0 * params.sigma / math.sqrt(2.0 * params.a)
    return Grid1D(params.b - half, params.b + half, nx, "x")


__all__ = ["fund_selection_problem", "fund_grid", "buy_low_problem", "buy_low_grid", "Finite"]
