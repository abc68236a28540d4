from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ambiswitch import (
    AmbiguitySpec, ConstantCosts, ConstantTerminal, Finite, FundParams, Infinite, OU, RewardSpec, SwitchingProblem,
    ZeroFn, validate_non_free_loop, validate_problem, validate_strong_triangular, validate_terminal,
)
from ambiswitch.cases import buy_low_problem, fund_selection_problem
from ambiswitch.validation import CheckResult, ValidationReport, simple_cycles
from oracles import brute_force_min_loop


def _const_problem(c, horizon=None, terminal=None, kappa=None):
    n = len(c)
    kw = {} if terminal is None else {"terminal": terminal}
    return SwitchingProblem(n, tuple(OU(1.0, 0.0, 0.3) for _ in range(n)),
                            RewardSpec((ZeroFn(),) * n, (ZeroFn(),) * n),
                            AmbiguitySpec(tuple(kappa or [0.0] * n)),
                            ConstantCosts(tuple(tuple(float(v) for v in r) for r in c)), 0.1,
                            horizon or Infinite(), **kw)


@st.composite
def cost_matrices(draw, max_n=5):
    n = draw(st.integers(2, max_n))
    vals = draw(st.lists(st.integers(-20, 40), min_size=n * n, max_size=n * n))
    return [[0 if i == j else vals[i * n + j] / 4 for j in range(n)] for i in range(n)]


@given(cost_matrices())
def test_non_free_loop_matches_brute_force(c):
    res = validate_non_free_loop(_const_problem(c), np.array([0.0, 1.0]))
    best = brute_force_min_loop(c, len(c))
    assert res.margin == pytest.approx(best, abs=1e-12)
    assert res.passed == (best > 0)
    if not res.passed:
        cyc = res.worst_witness["cycle"]
        assert cyc[0] == cyc[-1]
        total = sum(c[a - 1][b - 1] for a, b in zip(cyc[:-1], cyc[1:]))
        assert total == pytest.approx(best)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_simple_cycle_count(n):
    from math import comb, factorial

    expected = sum(comb(n, k) * factorial(k - 1) for k in range(2, n + 1))
    cycles = list(simple_cycles(n))
    assert len(cycles) == expected == len(set(cycles))


@given(cost_matrices(max_n=4), st.floats(0.0, 2.0))
def test_strong_triangular_matches_direct_formula(c, q):
    p = _const_problem(c)
    x = np.array([-1.0, 0.0, 2.0])
    res = validate_strong_triangular(p, x, q=q)
    n = len(c)
    growth = 1 + np.abs(x) ** q
    negative = [i for i in range(n) if any(c[i][j] < 0 for j in range(n) if j != i)]
    worst = np.inf
    for i in negative:
        Ci = -min(min(c[i][j] / g for g in growth) for j in range(n) if j != i)
        for k in range(n):
            for j in range(n):
                if k != i and j != i:
                    worst = min(worst, min(c[k][i] - Ci * (1 + g) - c[k][j] for g in growth))
    assert res.advisory
    if not negative:
        assert res.passed and res.margin is None
    else:
        assert res.margin == pytest.approx(worst, rel=1e-12, abs=1e-12)
        assert res.passed == (worst >= 0)


def test_terminal_checks():
    c = [[0, 1.0], [1.0, 0]]
    ok = validate_terminal(_const_problem(c, terminal=ConstantTerminal((0.0, -0.5))), np.array([0.0]))
    assert ok.passed
    bad = validate_terminal(_const_problem(c, terminal=ConstantTerminal((0.0, -2.0))), np.array([0.0]))
    assert not bad.passed and bad.worst_witness["clause"] == "consistency"
    pos = validate_terminal(_const_problem(c, terminal=ConstantTerminal((0.5, 0.5))), np.array([0.0]))
    assert not pos.passed and "non_positive" in pos.detail
    fin = validate_terminal(_const_problem(c, horizon=Finite(1.0), terminal=ConstantTerminal((0.5, 0.5))),
                            np.array([0.0]))
    assert fin.passed


def test_case_study_reports():
    fund = validate_problem(fund_selection_problem(FundParams()))
    assert fund.ok
    assert fund["non_free_loop"].passed and fund["terminal"].passed and fund["monotone"].passed
    assert not fund["strong_triangular"].passed and fund["strong_triangular"].advisory
    bl = validate_problem(buy_low_problem())
    assert bl.ok and not bl["monotone"].passed and bl["monotone"].advisory


def test_free_loop_is_hard_failure():
    rep = validate_problem(_const_problem([[0, 2.0], [-2.0, 0]]))
    # zero terminal with a negative cost also breaks terminal consistency
    assert not rep.ok and [c.name for c in rep.hard_failures] == ["non_free_loop", "terminal"]
    assert rep["non_free_loop"].worst_witness["cycle"] == [1, 2, 1]


def test_triangular_cost_bound_advisory():
    p = fund_selection_problem(FundParams())
    res = validate_strong_triangular(p, np.exp(np.linspace(2, 8, 41)), advisory_paths=200)
    assert not res.passed
    assert "cost_bound" in res.worst_witness and "cost-bound advisory" in res.detail


def test_report_plumbing():
    rep = ValidationReport()
    rep.add(CheckResult("a", "pass"))
    with pytest.raises(ValueError):
        rep.add(CheckResult("a", "fail"))
    rep.add(CheckResult("b", "fail", "bad", {"x": np.float64(1.0)}, -1.0, advisory=True))
    assert rep.ok
    d = rep.to_dict()
    assert d["ok"] and d["checks"][1]["worst_witness"] == {"x": 1.0}
    assert "FAIL (advisory)" in rep.table()
    with pytest.raises(KeyError):
        rep["c"]
