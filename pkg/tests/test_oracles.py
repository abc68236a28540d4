"""Re-derive a subset of the frozen reference values on every run."""
from __future__ import annotations

import math

import pytest

import oracles
from ambiswitch import FundParams, fund_thresholds_closed_form
from frozen import BUY_LOW, FUND, GAUSSIAN_MOMENT


def test_oracle_reproduces_frozen_moment():
    assert float(oracles.gaussian_moment(0.625, 3.0)) == pytest.approx(GAUSSIAN_MOMENT[(0.625, 3.0)], rel=1e-13)


def test_oracle_reproduces_frozen_smoothfit():
    got = oracles.buy_low_smoothfit(kappa=0.0, start=(1.3, 1.65))
    assert got == pytest.approx(BUY_LOW[0.0], rel=1e-12)


def test_oracle_reproduces_frozen_fund_thresholds():
    cf = fund_thresholds_closed_form(FundParams())
    # start well away from the package solution in log coordinates
    start = (math.log(cf.A_worse) + 0.3, math.log(cf.A_better) - 0.3, math.log(cf.upper) + 0.2,
             math.log(cf.lower) - 0.2)
    assert oracles.fund_smoothfit(start=start) == pytest.approx(FUND[0.0], rel=1e-12)


def test_brute_force_loop_oracle():
    assert oracles.brute_force_min_loop([[0, 1], [-1, 0]], 2) == 0
    assert oracles.brute_force_min_loop([[0, 1, 5], [5, 0, 1], [-1.5, 5, 0]], 3) == pytest.approx(0.5)
