"""Grid-based checks of the standing assumptions on a switching problem."""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

import numpy as np

from .grid import Grid1D, default_grid
from .model import SwitchingProblem, cost_tensor, sigma_support

PASS, FAIL, SKIPPED = "pass", "fail", "skipped"


@dataclass
class CheckResult:
    name: str
    status: str
    detail: str = ""
    worst_witness: Any = None
    margin: Optional[float] = None
    advisory: bool = False

    @property
    def passed(self) -> bool:
        return self.status != FAIL

    def to_dict(self) -> dict:
        d = asdict(self)
        w = d["worst_witness"]
        d["worst_witness"] = _plain(w)
        return d


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    def add(self, check: CheckResult) -> "ValidationReport":
        if any(c.name == check.name for c in self.checks):
            raise ValueError(f"check {check.name!r} already recorded")
        self.checks.append(check)
        return self

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def hard_failures(self) -> list:
        return [c for c in self.checks if c.status == FAIL and not c.advisory]

    @property
    def ok(self) -> bool:
        return not self.hard_failures

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checks": [c.to_dict() for c in self.checks]}

    def table(self) -> str:
        width = max((len(c.name) for c in self.checks), default=4)
        lines = []
        for c in self.checks:
            tag = c.status.upper() + (" (advisory)" if c.advisory else "")
            lines.append(f"{c.name:<{width}}  {tag:<18} {c.detail}")
        return "\n".join(lines)


def validation_grid(problem: SwitchingProblem, n: int = 401) -> np.ndarray:
    """State values uniform in the default solver coordinate."""
    g = default_grid(problem, nx=n)
    return g.states


def _as_states(problem, grid):
    if grid is None:
        return validation_grid(problem)
    if isinstance(grid, Grid1D):
        return grid.states
    x = np.atleast_1d(np.asarray(grid, dtype=float))
    if x.size == 0:
        raise ValueError("validation grid is empty")
    return x


# ---------------------------------------------------------------------------
# Non-free loops
# ---------------------------------------------------------------------------

def simple_cycles(n: int, max_len: Optional[int] = None):
    """Simple directed cycles on the complete graph with ``n`` nodes.

    Each cycle is yielded once, rotated so that its smallest node comes
    first, as a tuple ``(i0, i1, ..., i_{m-1})`` meaning i0 -> i1 -> ... -> i0.
    """
    top = n if max_len is None else min(n, max_len)
    for length in range(2, top + 1):
        for combo in itertools.combinations(range(n), length):
            first, rest = combo[0], combo[1:]
            for perm in itertools.permutations(rest):
                yield (first,) + perm


def validate_non_free_loop(problem: SwitchingProblem, grid=None) -> CheckResult:
    """Every simple switching cycle must have a strictly positive total cost.

    Exhaustive for up to 6 regimes; beyond that only 2- and 3-cycles are
    enumerated.
    """
    x = _as_states(problem, grid)
    I = problem.regime_count
    if I == 1:
        return CheckResult("non_free_loop", PASS, "single regime, no loops", None, None)
    c = cost_tensor(problem.costs, x)
    max_len = None if I <= 6 else 3
    best = np.inf
    witness = None
    for cyc in simple_cycles(I, max_len):
        legs = zip(cyc, cyc[1:] + cyc[:1])
        total = sum(c[i, j] for i, j in legs)
        k = int(np.argmin(total))
        if total[k] < best:
            best = float(total[k])
            witness = {"cycle": [r + 1 for r in cyc] + [cyc[0] + 1], "x": float(x[k])}
    status = PASS if best > 0 else FAIL
    scope = "all simple cycles" if max_len is None else "2- and 3-cycles only"
    return CheckResult("non_free_loop", status, f"min loop sum {best:.6g} ({scope})", witness, best)


# ---------------------------------------------------------------------------
# Strong triangular condition
# ---------------------------------------------------------------------------

def validate_strong_triangular(problem: SwitchingProblem, grid=None, q: float = 1.0,
                               C_qX: float = 1.0, C_q: Optional[float] = None,
                               T: Optional[float] = None, t: float = 0.0,
                               advisory_paths: int = 0, seed: int = 0) -> CheckResult:
    """c_kj <= c_ki - C_i (1 + C_qX (1 + |x|^q) e^{C_q (T - t)}) for i in N.

    N holds the regimes with some negative outgoing cost on the grid and
    C_i = -min_{j, x} c_ij(x) / (1 + |x|^q). Pairs run over j != i, k != i.
    On an infinite horizon the exponential factor is dropped. The check is
    evaluated at time ``t`` (default 0, the most demanding instant).

    With ``advisory_paths > 0`` a failure is followed by the Monte Carlo
    total-cost bound on a few band strategies (two regimes only).
    """
    x = _as_states(problem, grid)
    I = problem.regime_count
    c = cost_tensor(problem.costs, x)
    growth = 1.0 + np.abs(x) ** q
    negative = [i for i in range(I) if any(np.any(c[i, j] < 0) for j in range(I) if j != i)]
    if not negative:
        return CheckResult("strong_triangular", PASS, "no negative costs (N is empty)", None, None, True)
    C_q = problem.discount if C_q is None else C_q
    if problem.is_infinite:
        factor = 1.0
    else:
        horizon = problem.horizon.T if T is None else T
        factor = np.exp(C_q * (horizon - t))
    worst = np.inf
    witness = None
    for i in negative:
        Ci = -min(float(np.min(c[i, j] / growth)) for j in range(I) if j != i)
        bound = Ci * (1.0 + C_qX * growth * factor)
        for k in range(I):
            if k == i:
                continue
            for j in range(I):
                if j == i:
                    continue
                margin = c[k, i] - bound - c[k, j]
                m = int(np.argmin(margin))
                if margin[m] < worst:
                    worst = float(margin[m])
                    witness = {"k": k + 1, "i": i + 1, "j": j + 1, "x": float(x[m])}
    status = PASS if worst >= 0 else FAIL
    detail = f"N={[i + 1 for i in negative]}, worst margin {worst:.6g}"
    result = CheckResult("strong_triangular", status, detail, witness, worst, True)
    if status == FAIL and advisory_paths > 0 and I == 2:
        adv = remark_cost_bound(problem, x, q=q, n_paths=advisory_paths, seed=seed)
        result.detail += f"; cost-bound advisory {'pass' if adv['ok'] else 'fail'} (max ratio {adv['max_ratio']:.3g})"
        result.worst_witness = {"triangular": witness, "cost_bound": adv}
    return result


def remark_cost_bound(problem: SwitchingProblem, x: np.ndarray, q: float = 1.0, n_paths: int = 2000,
                      dt: float = 1e-2, T_max: Optional[float] = None, seed: int = 0,
                      quantiles=((0.3, 0.7), (0.4, 0.6), (0.45, 0.55))) -> dict:
    """Empirical total-cost bound on band threshold strategies.

    Each (lo, hi) quantile pair of the grid gives two band strategies: move
    0 -> 1 above hi and back below lo, or 0 -> 1 below lo and back above hi.
    The expected discounted benefit E[-sum e^{-rho tau} c] is compared with
    C_f (1 + |x0|^q), C_f the largest |c| / (1 + |x|^q) on the grid. The
    advisory passes when every estimate is finite and within that bound.
    """
    from .sde import ThresholdStrategy, PriorPolicy, cost_bound_diagnostic

    c = cost_tensor(problem.costs, x)
    growth = 1.0 + np.abs(x) ** q
    C_f = float(np.max(np.abs(c) / growth[None, None, :]))
    if T_max is None:
        T_max = problem.horizon.T if not problem.is_infinite else min(50.0, 10.0 / problem.discount)
    ratios = []
    x0 = float(np.median(x))
    for lo_q, hi_q in quantiles:
        lo, hi = np.quantile(x, [lo_q, hi_q])
        for up_above in (True, False):
            if up_above:
                strat = ThresholdStrategy.band(lower=float(lo), upper=float(hi), initial_regime=0, up_when_high=True)
            else:
                strat = ThresholdStrategy.band(lower=float(lo), upper=float(hi), initial_regime=0, up_when_high=False)
            est = cost_bound_diagnostic(problem, strat, PriorPolicy.constant([0.0] * problem.regime_count),
                                        x0=x0, n_paths=n_paths, dt=dt, T_max=T_max, seed=seed, q=q, C_f=C_f)
            ratios.append(est["ratio"])
    ratios = np.asarray(ratios)
    ok = bool(np.all(np.isfinite(ratios)) and np.all(ratios <= 1.0))
    return {"ok": ok, "max_ratio": float(np.max(ratios)), "C_f": C_f, "x0": x0}


# ---------------------------------------------------------------------------
# Terminal payoff and rewards
# ---------------------------------------------------------------------------

def validate_terminal(problem: SwitchingProblem, grid=None, tol: float = 1e-12) -> CheckResult:
    """g(x,i) >= max_{j != i}(g(x,j) - c_ij(x)); infinite horizon adds g <= 0
    and L g - rho g - g' sigma theta >= 0 for theta = +/- kappa_i."""
    x = _as_states(problem, grid)
    I = problem.regime_count
    c = cost_tensor(problem.costs, x)
    g = np.stack([np.asarray(problem.terminal.value(x, i), float) * np.ones_like(x) for i in range(I)])
    scale = max(1.0, float(np.max(np.abs(g))))
    worst = np.inf
    witness = None
    for i in range(I):
        for j in range(I):
            if j == i:
                continue
            margin = g[i] - (g[j] - c[i, j])
            m = int(np.argmin(margin))
            if margin[m] < worst:
                worst = float(margin[m])
                witness = {"clause": "consistency", "x": float(x[m]), "i": i + 1, "j": j + 1}
    failures = []
    if worst < -tol * scale:
        failures.append("consistency")
    detail = f"consistency margin {worst:.6g}"
    if problem.is_infinite:
        gmax = float(np.max(g))
        if gmax > tol * scale:
            failures.append("non_positive")
            k = np.unravel_index(int(np.argmax(g)), g.shape)
            witness = {"clause": "non_positive", "x": float(x[k[1]]), "i": int(k[0]) + 1, "g": gmax}
        dmin = np.inf
        dwit = None
        for i in range(I):
            gp = np.asarray(problem.terminal.grad(x, i), float) * np.ones_like(x)
            gpp = np.asarray(problem.terminal.hess(x, i), float) * np.ones_like(x)
            b = problem.drift(x, i)
            s = problem.vol(x, i)
            kap = float(problem.kappa[i])
            for theta in (-kap, kap):
                val = b * gp + 0.5 * s * s * gpp - problem.discount * g[i] - gp * s * theta
                m = int(np.argmin(val))
                if val[m] < dmin:
                    dmin = float(val[m])
                    dwit = {"clause": "differential", "x": float(x[m]), "i": i + 1, "theta": theta}
        if dmin < -tol * scale:
            failures.append("differential")
            witness = dwit
        detail += f", max g {gmax:.6g}, differential margin {dmin:.6g}"
        worst = min(worst, dmin, -gmax)
    status = FAIL if failures else PASS
    if failures:
        detail = f"failed: {', '.join(failures)}; " + detail
    return CheckResult("terminal", status, detail, witness, worst)


def validate_nonnegative_reward(problem: SwitchingProblem, grid=None) -> CheckResult:
    """psi(x,i) - sigma_support(x,i,0) >= 0 (infinite horizon)."""
    x = _as_states(problem, grid)
    if not problem.is_infinite:
        return CheckResult("nonnegative_reward", SKIPPED, "finite horizon", None, None)
    worst = np.inf
    witness = None
    for i in range(problem.regime_count):
        val = problem.psi(x, i) - np.atleast_1d(sigma_support(problem, i, x, np.zeros_like(x))[0])
        m = int(np.argmin(val))
        if val[m] < worst:
            worst = float(val[m])
            witness = {"x": float(x[m]), "i": i + 1}
    return CheckResult("nonnegative_reward", PASS if worst >= 0 else FAIL,
                       f"min psi - kappa|phi| = {worst:.6g}", witness, worst)


def validate_problem(problem: SwitchingProblem, grid=None, q: float = 1.0, C_qX: float = 1.0,
                     C_q: Optional[float] = None, advisory_paths: int = 0, seed: int = 0) -> ValidationReport:
    """Run every check; monotone conditions are reported but never fail the report."""
    from .monotone import validate_monotone

    x = _as_states(problem, grid)
    report = ValidationReport()
    report.add(validate_non_free_loop(problem, x))
    report.add(validate_terminal(problem, x))
    report.add(validate_nonnegative_reward(problem, x))
    report.add(validate_strong_triangular(problem, x, q=q, C_qX=C_qX, C_q=C_q,
                                          advisory_paths=advisory_paths, seed=seed))
    mono = validate_monotone(problem, x)
    mono.advisory = True
    report.add(mono)
    return report
