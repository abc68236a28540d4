"""Monte Carlo evaluation of threshold switching strategies.

Paths are simulated directly under the prior-shifted drift b - sigma theta,
so no density weights are needed. Paths run in fixed-size blocks; block k
draws from its own stream seeded by (seed, k), which makes results identical
for any thread count.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import GBM, OU, AffineDynamics, SwitchingProblem, sigma_support

BLOCK = 8192


# ---------------------------------------------------------------------------
# Strategies and priors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trigger:
    """Switch to ``target`` when X <= level (``below``) or X >= level."""

    kind: str
    level: float
    target: int

    def __post_init__(self):
        if self.kind not in ("below", "above"):
            raise ValueError("trigger kind must be 'below' or 'above'")

    def fires(self, x):
        return x <= self.level if self.kind == "below" else x >= self.level


@dataclass(frozen=True)
class ThresholdStrategy:
    """Per-regime threshold triggers.

    ``rules[i]`` is a tuple of triggers for regime i: at most one ``below``
    and one ``above``, with the below level strictly under the above level,
    so the trigger sets are disjoint.
    """

    rules: tuple
    initial_regime: int = 0

    def __post_init__(self):
        n = len(self.rules)
        if not 0 <= self.initial_regime < n:
            raise ValueError("initial regime out of range")
        for i, rules in enumerate(self.rules):
            kinds = [r.kind for r in rules]
            if len(set(kinds)) != len(kinds):
                raise ValueError(f"regime {i}: overlapping triggers of the same kind")
            for r in rules:
                if not 0 <= r.target < n or r.target == i:
                    raise ValueError(f"regime {i}: invalid target {r.target}")
            if len(rules) == 2:
                lo = next(r for r in rules if r.kind == "below").level
                hi = next(r for r in rules if r.kind == "above").level
                if not lo < hi:
                    raise ValueError(f"regime {i}: below level must lie under the above level")
        cyc = self.zero_time_cycle()
        if cyc is not None:
            raise ValueError(f"strategy loops instantly through regimes {cyc[0]} at x={cyc[1]:.6g}")

    @property
    def regime_count(self) -> int:
        return len(self.rules)

    def zero_time_cycle(self):
        """A regime cycle that fires at one state value, or None."""
        levels = sorted({r.level for rules in self.rules for r in rules})
        probes = list(levels)
        if levels:
            probes += [levels[0] - 1.0, levels[-1] + 1.0]
            probes += [0.5 * (a + b) for a, b in zip(levels[:-1], levels[1:])]
        else:
            probes = [0.0]
        for x in probes:
            nxt = {}
            for i, rules in enumerate(self.rules):
                for r in rules:
                    if r.fires(x):
                        nxt[i] = r.target
            for start in nxt:
                seen = [start]
                cur = start
                while cur in nxt:
                    cur = nxt[cur]
                    if cur in seen:
                        return ([s + 1 for s in seen[seen.index(cur):]] + [cur + 1], x)
                    seen.append(cur)
        return None

    @classmethod
    def band(cls, lower: float, upper: float, initial_regime: int = 0,
             up_when_high: bool = True) -> "ThresholdStrategy":
        """Two-regime band: 0 -> 1 above ``upper`` and 1 -> 0 below ``lower``,
        or the mirror image (0 -> 1 below ``lower``, 1 -> 0 above ``upper``)."""
        if up_when_high:
            rules = ((Trigger("above", upper, 1),), (Trigger("below", lower, 0),))
        else:
            rules = ((Trigger("below", lower, 1),), (Trigger("above", upper, 0),))
        return cls(rules, initial_regime)

    @classmethod
    def never(cls, regimes: int, initial_regime: int = 0) -> "ThresholdStrategy":
        return cls(tuple(() for _ in range(regimes)), initial_regime)

    @classmethod
    def from_surface(cls, surface, initial_regime: int = 0, t_index: int = 0) -> "ThresholdStrategy":
        """Triggers read off the switching regions of a solved surface.

        Only regions touching a domain edge translate into a threshold; an
        interior region raises ValueError.
        """
        from .pde import extract_switching_regions

        regions = extract_switching_regions(surface, t_index=t_index)
        rules = []
        for i in range(surface.regime_count):
            rr = []
            for reg in regions[i]:
                if reg.open_lower and reg.open_upper:
                    raise ValueError(f"regime {i} switches everywhere on the grid")
                if reg.open_lower:
                    rr.append(Trigger("below", reg.upper, reg.target))
                elif reg.open_upper:
                    rr.append(Trigger("above", reg.lower, reg.target))
                else:
                    raise ValueError(f"regime {i} has an interior switching band")
            rules.append(tuple(rr))
        return cls(tuple(rules), initial_regime)

    def to_dict(self) -> dict:
        return {
            "initial_regime": self.initial_regime + 1,
            "rules": [[{"trigger": r.kind, "level": r.level, "target": r.target + 1} for r in rules]
                      for rules in self.rules],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdStrategy":
        rules = tuple(tuple(Trigger(r["trigger"], float(r["level"]), int(r["target"]) - 1) for r in rr)
                      for rr in d["rules"])
        return cls(rules, int(d.get("initial_regime", 1)) - 1)

    def resolve(self, problem: SwitchingProblem, x: np.ndarray, reg: np.ndarray):
        """Apply triggers until none fires; returns (regimes, cost, count)."""
        reg = reg.copy()
        cost = np.zeros(x.shape)
        count = np.zeros(x.shape, dtype=np.int64)
        for _ in range(2 * self.regime_count + 1):
            moved = False
            new = reg.copy()
            for i, rules in enumerate(self.rules):
                if not rules:
                    continue
                here = reg == i
                for r in rules:
                    m = here & r.fires(x)
                    if m.any():
                        moved = True
                        new[m] = r.target
                        cost[m] += problem.cost(i, r.target, x[m])
                        count[m] += 1
            reg = new
            if not moved:
                return reg, cost, count
        raise RuntimeError("switch resolution did not settle")


@dataclass(frozen=True)
class PriorPolicy:
    """Drift distortion theta: constant per regime, or the worst case
    kappa_i sign(phi + sigma dv/dx) read from a solved value surface.

    The gradient is the slope of the piecewise-linear interpolant of the
    surface, tabulated once per grid cell.
    """

    kind: str
    theta: tuple = ()
    surface: object = None
    slopes: Optional[np.ndarray] = None

    @classmethod
    def constant(cls, theta) -> "PriorPolicy":
        return cls("constant", tuple(float(t) for t in theta))

    @classmethod
    def zero(cls, regimes: int) -> "PriorPolicy":
        return cls.constant([0.0] * regimes)

    @classmethod
    def sign_of_gradient(cls, surface) -> "PriorPolicy":
        x = surface.grid.states
        slopes = np.diff(surface.values, axis=-1) / np.diff(x)
        return cls("gradient", (), surface, slopes)

    def check(self, problem: SwitchingProblem):
        if self.kind == "constant":
            if len(self.theta) != problem.regime_count:
                raise ValueError("constant prior needs one theta per regime")
            for i, t in enumerate(self.theta):
                if abs(t) > problem.kappa[i] + 1e-15:
                    raise ValueError(f"|theta| exceeds kappa in regime {i}")
        elif self.surface.regime_count != problem.regime_count:
            raise ValueError("value surface and problem disagree on the regime count")

    def values(self, problem: SwitchingProblem, x: np.ndarray, reg: np.ndarray, t: float):
        if self.kind == "constant":
            return np.asarray(self.theta)[reg]
        s = self.surface
        k = 0 if s.stationary else s.time_index(t)
        g = s.grid
        cell = np.clip(((g.to_coord(x) - g.x_min) / g.dx).astype(np.int64), 0, g.nx - 2)
        out = np.zeros(x.shape)
        for i in range(problem.regime_count):
            if problem.kappa[i] == 0:
                continue
            m = reg == i
            if not m.any():
                continue
            xm = x[m]
            z = problem.vol(xm, i) * self.slopes[k, i, cell[m]]
            out[m] = sigma_support(problem, i, xm, z)[1]
        return out


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class PathRecord:
    times: np.ndarray
    states: np.ndarray
    regimes: np.ndarray
    switch_times: list = field(default_factory=list)
    switch_costs: list = field(default_factory=list)

    def rows(self):
        for t, x, r in zip(self.times, self.states, self.regimes):
            yield float(t), float(x), int(r) + 1


@dataclass
class SimulationReport:
    mean: float
    std_error: float
    n_paths: int
    dt: float
    mean_switch_count: float
    discounted_cost_total: float
    x0: float = 0.0
    T_max: float = 0.0
    seed: int = 0
    tail_bound: float = 0.0
    continuation: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def _affine_coefficients(problem: SwitchingProblem):
    """(b0, b1, s0, s1) per regime with b(x) = b0 + b1 x, sigma(x) = s0 + s1 x."""
    rows = []
    for d in problem.dynamics:
        if isinstance(d, GBM):
            rows.append((0.0, d.b, 0.0, d.sigma))
        elif isinstance(d, OU):
            rows.append((d.a * d.mean, -d.a, d.sigma, 0.0))
        elif isinstance(d, AffineDynamics):
            rows.append((d.b0, d.b1, d.s0, d.s1))
        else:
            raise TypeError(f"unsupported dynamics {type(d).__name__}")
    return np.asarray(rows).T


def _by_regime(fn, problem, x, reg):
    out = np.zeros(x.shape)
    for i in range(problem.regime_count):
        m = reg == i
        if m.any():
            out[m] = fn(x[m], i)
    return out


def thread_count() -> int:
    raw = os.environ.get("AMBISWITCH_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def tail_bound(problem: SwitchingProblem, x0: float, T_max: float, q: float = 1.0,
               C_q: float = 0.0, grid=None) -> float:
    """Annuity bound on the reward collected after T_max.

    C_psi (1 + |x0|^q) e^{-(rho - C_q) T} / (rho - C_q), with C_psi the
    largest |psi| / (1 + |x|^q) on the grid and C_q the moment growth rate.
    """
    if not problem.is_infinite:
        return 0.0
    rate = problem.discount - C_q
    if rate <= 0:
        return math.inf
    if grid is None:
        from .validation import validation_grid
        grid = validation_grid(problem)
    x = np.asarray(grid, dtype=float)
    C_psi = max(float(np.max(np.abs(problem.psi(x, i)) / (1 + np.abs(x) ** q)))
                for i in range(problem.regime_count))
    return C_psi * (1 + abs(x0) ** q) * math.exp(-rate * T_max) / rate


def _check_inputs(problem, strategy, prior, dt, T_max):
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not T_max > 0:
        raise ValueError("T_max must be positive")
    if strategy.regime_count != problem.regime_count:
        raise ValueError("strategy and problem disagree on the regime count")
    prior.check(problem)


def _horizon(problem, T_max):
    return problem.horizon.T if not problem.is_infinite else T_max


def _run_block(problem, strategy, prior, x0, n, dt, T, rng, continuation, coef, record=False):
    b0, b1, s0, s1 = coef
    rho = problem.discount
    n_steps = int(round(T / dt))
    x = np.full(n, float(x0))
    reg = np.full(n, strategy.initial_regime, dtype=np.int64)
    reg, cost, count = strategy.resolve(problem, x, reg)
    paid = cost.copy()
    payoff = np.zeros(n)
    sqdt = math.sqrt(dt)
    # reward is held fixed over a step; its discount weight is integrated exactly
    weight = -math.expm1(-rho * dt) / rho if rho > 0 else dt
    path = None
    if record:
        path = PathRecord(np.empty(n_steps + 1), np.empty(n_steps + 1), np.empty(n_steps + 1, dtype=int))
        path.times[0], path.states[0], path.regimes[0] = 0.0, x[0], reg[0]
        if count[0]:
            path.switch_times.append(0.0)
            path.switch_costs.append(float(cost[0]))
    any_phi = any(not _is_zero(f) for f in problem.reward.phi)
    for k in range(n_steps):
        t = k * dt
        disc = math.exp(-rho * t)
        theta = prior.values(problem, x, reg, t)
        flow = _by_regime(problem.psi, problem, x, reg)
        if any_phi:
            flow -= theta * _by_regime(problem.phi, problem, x, reg)
        payoff += disc * flow * weight
        sig = s0[reg] + s1[reg] * x
        drift = b0[reg] + b1[reg] * x - sig * theta
        x = x + drift * dt + sig * sqdt * rng.standard_normal(n)
        reg, cost, c = strategy.resolve(problem, x, reg)
        t1 = (k + 1) * dt
        paid += math.exp(-rho * t1) * cost
        count += c
        if record:
            path.times[k + 1], path.states[k + 1], path.regimes[k + 1] = t1, x[0], reg[0]
            if c[0]:
                path.switch_times.append(t1)
                path.switch_costs.append(float(cost[0]))
    final = math.exp(-rho * T)
    if not problem.is_infinite:
        terminal = final * _by_regime(problem.terminal.value, problem, x, reg)
    elif continuation is not None:
        terminal = final * _by_regime(continuation, problem, x, reg)
    else:
        terminal = np.zeros(n)
    total = payoff + terminal - paid
    return total, -paid, count, path


def _is_zero(f) -> bool:
    from .model import AffineFn, ZeroFn

    return isinstance(f, ZeroFn) or (isinstance(f, AffineFn) and f.c0 == 0 and f.c1 == 0)


def simulate_path(problem: SwitchingProblem, strategy: ThresholdStrategy, prior: PriorPolicy,
                  x0: float, T_max: float, dt: float, seed: int = 0) -> PathRecord:
    """One Euler path of the controlled state (first path of block 0)."""
    _check_inputs(problem, strategy, prior, dt, T_max)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    T = _horizon(problem, T_max)
    return _run_block(problem, strategy, prior, x0, 1, dt, T, rng, None,
                      _affine_coefficients(problem), record=True)[3]


def _simulate(problem, strategy, prior, x0, n_paths, dt, T_max, seed, continuation):
    _check_inputs(problem, strategy, prior, dt, T_max)
    if n_paths < 2:
        raise ValueError("need at least two paths")
    T = _horizon(problem, T_max)
    coef = _affine_coefficients(problem)
    sizes = [min(BLOCK, n_paths - s) for s in range(0, n_paths, BLOCK)]

    def work(k):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
        return _run_block(problem, strategy, prior, x0, sizes[k], dt, T, rng, continuation, coef)

    threads = min(thread_count(), len(sizes))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    else:
        parts = [work(k) for k in range(len(sizes))]
    total = np.concatenate([p[0] for p in parts])
    benefit = np.concatenate([p[1] for p in parts])
    count = np.concatenate([p[2] for p in parts])
    return total, benefit, count, T


def estimate_objective(problem: SwitchingProblem, strategy: ThresholdStrategy, prior: PriorPolicy,
                       n_paths: int, dt: float, T_max: float, seed: int = 0, *, x0: float,
                       continuation: Optional[Callable] = None, tail_tol: Optional[float] = None,
                       ) -> SimulationReport:
    """Mean and standard error of the discounted objective under ``prior``.

    On an infinite horizon the path is cut at ``T_max``. Without
    ``continuation`` the remainder is dropped and ``tail_bound`` reports the
    annuity bound on it; with ``continuation(x, regime)`` (for instance a
    solved value surface) the discounted continuation value is added
    instead, which turns the estimate into a check of the dynamic
    programming identity over [0, T_max].
    """
    total, benefit, count, T = _simulate(problem, strategy, prior, x0, n_paths, dt, T_max, seed, continuation)
    bound = 0.0
    if problem.is_infinite and continuation is None:
        bound = tail_bound(problem, x0, T)
        if tail_tol is not None and bound > tail_tol:
            warnings.warn(f"truncation tail bound {bound:.3g} exceeds tolerance {tail_tol:.3g}",
                          RuntimeWarning, stacklevel=2)
    return SimulationReport(
        mean=float(np.mean(total)),
        std_error=float(np.std(total, ddof=1) / math.sqrt(total.size)),
        n_paths=int(total.size), dt=float(dt),
        mean_switch_count=float(np.mean(count)),
        discounted_cost_total=float(np.mean(benefit)),
        x0=float(x0), T_max=float(T), seed=int(seed), tail_bound=float(bound),
        continuation=continuation is not None,
    )


def cost_bound_diagnostic(problem: SwitchingProblem, strategy: ThresholdStrategy, prior: PriorPolicy,
                          *, x0: float, n_paths: int = 2000, dt: float = 1e-2, T_max: float = 20.0,
                          seed: int = 0, q: float = 1.0, C_f: Optional[float] = None) -> dict:
    """E[-sum e^{-rho tau_k} c] for a strategy, against C_f (1 + |x0|^q).

    C_f defaults to the largest |c| / (1 + |x|^q) on the validation grid.
    """
    _, benefit, count, T = _simulate(problem, strategy, prior, x0, n_paths, dt, T_max, seed, None)
    if C_f is None:
        from .model import cost_tensor
        from .validation import validation_grid

        xg = validation_grid(problem)
        C_f = float(np.max(np.abs(cost_tensor(problem.costs, xg)) / (1 + np.abs(xg) ** q)))
    bound = C_f * (1 + abs(x0) ** q)
    est = float(np.mean(benefit))
    ratio = est / bound if bound > 0 else (0.0 if est <= 0 else math.inf)
    return {
        "estimate": est,
        "std_error": float(np.std(benefit, ddof=1) / math.sqrt(benefit.size)),
        "bound": bound, "ratio": ratio, "T_max": T,
        "mean_switch_count": float(np.mean(count)),
    }
