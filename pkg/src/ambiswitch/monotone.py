"""Monotone conditions and the equivalent drift-shifted problem.

When the value is nondecreasing in x, the worst prior in regime i always
pushes the drift down by kappa_i |sigma|, so the ambiguity problem coincides
with an ordinary one whose drift is b - kappa |sigma|.
"""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .model import (
    GBM, OU, AffineDynamics, AffineFn, AmbiguitySpec, SwitchingProblem, ZeroFn, cost_tensor,
)
from .validation import FAIL, PASS, CheckResult, _as_states

CLAUSES = {
    1: "box priors [-kappa_i, kappa_i]",
    2: "pathwise comparison of the state in x",
    3: "discount independent of x",
    4: "psi(., i) nondecreasing",
    5: "phi identically zero",
    6: "g(., i) nondecreasing",
    7: "c_ij(.) nonincreasing",
}


class MonotoneConditionError(ValueError):
    def __init__(self, clauses):
        self.clauses = list(clauses)
        names = "; ".join(f"clause {c} ({CLAUSES[c]})" for c in self.clauses)
        super().__init__(f"monotone conditions fail: {names}")


def _nondecreasing(values: np.ndarray, tol: float) -> bool:
    d = np.diff(values)
    scale = max(1.0, float(np.max(np.abs(values))))
    return bool(np.all(d >= -tol * scale))


def monotone_clauses(problem: SwitchingProblem, grid=None, tol: float = 1e-12) -> dict:
    """Clause number -> bool. Grid-dependent clauses are sampled on ``grid``."""
    x = np.sort(_as_states(problem, grid))
    I = problem.regime_count
    out = {
        # only box priors are representable, and every supported 1-D SDE
        # with Lipschitz coefficients and common noise is order preserving
        1: True,
        2: True,
        3: True,
    }
    out[4] = all(problem.reward.psi[i].is_nondecreasing() and _nondecreasing(problem.psi(x, i), tol)
                 for i in range(I))
    out[5] = all(isinstance(f, ZeroFn) or (isinstance(f, AffineFn) and f.c0 == 0 and f.c1 == 0)
                 for f in problem.reward.phi)
    out[6] = all(_nondecreasing(np.asarray(problem.terminal.value(x, i), float) * np.ones_like(x), tol)
                 for i in range(I))
    c = cost_tensor(problem.costs, x)
    out[7] = all(_nondecreasing(-c[i, j], tol) for i in range(I) for j in range(I) if i != j)
    return out


def validate_monotone(problem: SwitchingProblem, grid=None) -> CheckResult:
    clauses = monotone_clauses(problem, grid)
    failed = [k for k, ok in clauses.items() if not ok]
    detail = "all clauses hold" if not failed else "failed clauses: " + ", ".join(
        f"{k} ({CLAUSES[k]})" for k in failed)
    return CheckResult("monotone", FAIL if failed else PASS, detail,
                       {"clauses": {str(k): v for k, v in clauses.items()}}, None)


def shifted_dynamics(dyn, kappa: float):
    """Dynamics with drift b(x) - kappa |sigma(x)|."""
    if kappa == 0.0:
        return dyn
    if isinstance(dyn, GBM):
        # state stays positive, so |sigma x| = sigma x
        return GBM(dyn.b - kappa * dyn.sigma, dyn.sigma)
    if isinstance(dyn, OU):
        return OU(dyn.a, dyn.mean - kappa * dyn.sigma / dyn.a, dyn.sigma)
    if isinstance(dyn, AffineDynamics):
        if dyn.s1 == 0.0:
            return AffineDynamics(dyn.b0 - kappa * abs(dyn.s0), dyn.b1, dyn.s0, 0.0)
        if dyn.positive_state:
            return AffineDynamics(0.0, dyn.b1 - kappa * abs(dyn.s1), 0.0, dyn.s1)
        raise ValueError("drift shift of an affine volatility with a sign change is not affine")
    raise TypeError(f"unsupported dynamics {type(dyn).__name__}")


def apply_monotone_shift(problem: SwitchingProblem, grid=None) -> SwitchingProblem:
    """Equivalent no-ambiguity problem with drift b - kappa |sigma|.

    Raises MonotoneConditionError naming the failed clauses.
    """
    if not np.any(problem.kappa > 0):
        return problem
    clauses = monotone_clauses(problem, grid)
    failed = [k for k, ok in clauses.items() if not ok]
    if failed:
        raise MonotoneConditionError(failed)
    dyn = tuple(shifted_dynamics(d, float(k)) for d, k in zip(problem.dynamics, problem.kappa))
    return replace(problem, dynamics=dyn, ambiguity=AmbiguitySpec.none(problem.regime_count))
