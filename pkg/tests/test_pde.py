from __future__ import annotations

import numpy as np
import pytest

from ambiswitch import (
    AffineFn, AmbiguitySpec, BuyLowParams, ConstantCosts, Finite, FundParams, GBM, Grid1D, Infinite, NonConvergence,
    OU, RewardSpec, SolverConfig, SwitchingProblem, ZeroFn, extract_switching_regions, solve, solve_finite_horizon,
    solve_infinite_horizon, solve_smoothfit, thresholds,
)
from ambiswitch.cases import buy_low_grid, buy_low_problem, fund_grid, fund_selection_problem
from ambiswitch.grid import default_grid
from ambiswitch.pde import complementarity_report, horizon_cross_check


def _annuity(rho=0.5, kappa=0.2, horizon=None):
    return SwitchingProblem(1, (OU(1.0, 0.0, 0.3),), RewardSpec((AffineFn(1.0),), (ZeroFn(),)),
                            AmbiguitySpec((kappa,)), ConstantCosts(((0.0,),)), rho, horizon or Infinite())


def test_annuity_infinite():
    s = solve_infinite_horizon(_annuity())
    assert np.max(np.abs(s.values - 2.0)) <= 1e-8


def test_time_to_go_finite():
    p = _annuity(rho=0.0, kappa=0.7, horizon=Finite(2.0))
    g = Grid1D(-2.0, 2.0, 81, "x", 40, 2.0)
    s = solve_finite_horizon(p, g)
    assert np.max(np.abs(s.values[:, 0, :] - (2.0 - s.times)[:, None])) <= 1e-8


def test_zero_reward_positive_costs_is_zero():
    p = SwitchingProblem(3, (OU(1, 0, 1),) * 3, RewardSpec((ZeroFn(),) * 3, (ZeroFn(),) * 3),
                         AmbiguitySpec((0.1, 0.2, 0.0)),
                         ConstantCosts(((0, 1, 2), (1, 0, 1), (2, 1, 0))), 0.2, Infinite())
    s = solve(p)
    assert np.max(np.abs(s.values)) <= 1e-10
    assert not s.switch_mask.any()


def test_psor_agrees_with_howard():
    p = buy_low_problem(BuyLowParams(kappa=0.1))
    g = buy_low_grid(BuyLowParams(), 101)
    a = solve_infinite_horizon(p, g, SolverConfig(method="howard"))
    b = solve_infinite_horizon(p, g, SolverConfig(method="psor", tol_psor=1e-13))
    assert np.max(np.abs(a.values - b.values)) <= 1e-7
    assert thresholds(a) == pytest.approx(thresholds(b))


def test_picard_iterates_increase():
    p = fund_selection_problem(FundParams(kappa2=0.03))
    s = solve_infinite_horizon(p, fund_grid(301), SolverConfig(keep_iterates=True))
    for a, b in zip(s.iterates[:-1], s.iterates[1:]):
        assert np.all(b >= a - 1e-10 * np.abs(b).max())


def test_nonconvergence_raised():
    with pytest.raises(NonConvergence) as exc:
        solve_infinite_horizon(buy_low_problem(), buy_low_grid(nx=101), SolverConfig(max_picard=1))
    assert exc.value.iterations == 1


def test_complementarity_and_dominance():
    s = solve_infinite_horizon(buy_low_problem(BuyLowParams(kappa=0.2)), buy_low_grid(nx=201))
    rep = complementarity_report(s)
    scale = max(1.0, float(np.abs(s.values).max()))
    # the final obstacle is rebuilt from the last iterate, so dominance holds to the Picard tolerance
    assert rep["ok"] and rep["dominance_margin"] >= -1e-8 * scale


def test_refinement_keeps_thresholds_within_a_cell():
    p = BuyLowParams(kappa=0.1)
    sol = solve_smoothfit(p)
    for nx in (401, 801, 1601):
        g = buy_low_grid(p, nx)
        th = thresholds(solve_infinite_horizon(buy_low_problem(p), g))
        assert abs(th[0] - sol.x1) <= g.dx and abs(th[1] - sol.x2) <= g.dx


def test_finite_horizon_terminal_row_and_T_monotone():
    p = buy_low_problem(BuyLowParams(kappa=0.1))
    g = buy_low_grid(nx=101)
    res = horizon_cross_check(p, [0.25, 1.0, 3.0], g, SolverConfig(nt=30))
    assert res["monotone"]
    gaps = res["sup_gap_to_stationary"]
    assert gaps[0] > gaps[1] > gaps[2]
    fin = Grid1D(g.x_min, g.x_max, g.nx, g.coord, 30, 1.0)
    s = solve_finite_horizon(p.with_horizon(Finite(1.0)), fin)
    for i in range(2):
        assert np.array_equal(s.values[-1, i], p.terminal.value(fin.states, i) * np.ones(fin.nx))
    assert not s.switch_mask[-1].any()


def test_switching_regions_buy_low():
    p = BuyLowParams()
    s = solve_infinite_horizon(buy_low_problem(p), buy_low_grid(p, 201))
    regions = extract_switching_regions(s)
    (flat,), (long,) = regions[0], regions[1]
    assert flat.open_lower and not flat.open_upper and flat.target == 1
    assert long.open_upper and not long.open_lower and long.target == 0


def test_horizon_mismatch_rejected():
    with pytest.raises(ValueError):
        solve_finite_horizon(_annuity())
    with pytest.raises(ValueError):
        solve_infinite_horizon(_annuity(horizon=Finite(1.0)))


def test_default_grids():
    g = default_grid(fund_selection_problem())
    assert g.coord == "log"
    g = default_grid(buy_low_problem())
    assert g.coord == "x" and g.x_min == pytest.approx(2.0 - 6 * 0.5 / np.sqrt(1.6))
    gbm = SwitchingProblem(1, (GBM(0.05, 0.2),), RewardSpec((ZeroFn(),), (ZeroFn(),)), AmbiguitySpec((0.0,)),
                           ConstantCosts(((0.0,),)), 0.1, Finite(1.0))
    g = default_grid(gbm, x0=2.0)
    assert g.states[g.nx // 2] == pytest.approx(2.0)


def test_value_surface_interpolation():
    s = solve_infinite_horizon(_annuity())
    assert s.value(0.1234, 0) == pytest.approx(2.0)
    assert abs(s.gradient(0.0, 0)) < 1e-8
