"""Closed-form machinery for the two worked examples.

* Buy-low/sell-high on a mean-reverting log price: the value functions are
  built from the Gaussian-moment integrals phi_1, phi_2 (and their starred
  versions, one extra power of t) and glued by smooth fit at a buy
  threshold x1 and a sell threshold x2.
* Selection between two GBM funds with power utility: the strategy type is
  decided by comparing K_i = 1 / (rho - b_i p + sigma_i^2 p (1 - p) / 2),
  with the drift of an ambiguous fund lowered by kappa_i sigma_i.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .quadrature import gaussian_moment, gaussian_moment_batch


class NoRoot(RuntimeError):
    """Smooth-fit system has no root in the search box."""


class ConditionViolated(RuntimeError):
    """Raised by callers that insist on a fully admissible smooth-fit root."""


# ---------------------------------------------------------------------------
# Buy low, sell high
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BuyLowParams:
    a: float = 0.8
    b: float = 2.0
    sigma: float = 0.5
    rho: float = 0.5
    K: float = 0.01
    kappa: float = 0.0

    def __post_init__(self):
        if not (self.a > 0 and self.sigma > 0 and self.rho > 0):
            raise ValueError("need a > 0, sigma > 0, rho > 0")
        if not 0.0 < self.K < 1.0:
            raise ValueError("K must lie in (0, 1)")
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")

    @property
    def m(self) -> float:
        return math.sqrt(2.0 * self.a) / self.sigma

    @property
    def lam(self) -> float:
        return self.rho / self.a

    @property
    def mean_shift(self) -> float:
        return self.kappa * self.sigma / self.a


_VARIANTS = ("phi1", "phi2", "phi1_star", "phi2_star")


def phi_integral(x, params: BuyLowParams, variant: str = "phi1", method: str = "fixed"):
    """phi_1, phi_2 and starred variants; ``x`` may be scalar or array.

    ``method="fixed"`` uses the vectorised Gauss rules, ``"adaptive"`` the
    adaptive Simpson reference.
    """
    if variant not in _VARIANTS:
        raise ValueError(f"variant must be one of {_VARIANTS}")
    p = params
    xs = np.asarray(x, dtype=float)
    if variant.startswith("phi1"):
        beta = p.m * (p.b + p.mean_shift - xs)
    else:
        beta = -p.m * (p.b - p.mean_shift - xs)
    nu = p.lam + (1.0 if variant.endswith("star") else 0.0)
    if method == "fixed":
        out = gaussian_moment_batch(nu, beta)
    elif method == "adaptive":
        out = np.array([gaussian_moment(nu, float(bb)) for bb in np.atleast_1d(beta)])
    else:
        raise ValueError("method must be 'fixed' or 'adaptive'")
    return float(out[0]) if xs.ndim == 0 else out.reshape(xs.shape)


def _phis(x: float, params: BuyLowParams):
    return tuple(phi_integral(x, params, v) for v in _VARIANTS)


def _coefficients(x: float, scale: float, params: BuyLowParams):
    """Solve the 2x2 smooth-fit system at one threshold.

    [[-phi1, phi2], [phi1*, phi2*]] (C1, C2) = scale e^x (1, 1/m)
    """
    p1, p2, p1s, p2s = _phis(x, params)
    det = -p1 * p2s - p2 * p1s
    norm = max(abs(p1), abs(p2)) * max(abs(p1s), abs(p2s))
    if abs(det) <= 1e-12 * norm:
        raise ZeroDivisionError("ill-conditioned smooth-fit system")
    rhs1 = scale * math.exp(x)
    rhs2 = rhs1 / params.m
    c1 = (p2s * rhs1 - p2 * rhs2) / det
    c2 = (-p1s * rhs1 - p1 * rhs2) / det
    return c1, c2


def _ratio(x: float, params: BuyLowParams) -> float:
    """C1/C2 at a threshold; does not depend on the cost factor."""
    p1, p2, p1s, p2s = _phis(x, params)
    return (p2 / params.m - p2s) / (p1s + p1 / params.m)


@dataclass
class SmoothFitSolution:
    C1: float
    C2: float
    x1: float
    x2: float
    conditions: dict
    residual: float
    params: BuyLowParams
    roots: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c["ok"] for c in self.conditions.values())

    @property
    def gap(self) -> float:
        return self.x2 - self.x1

    def to_dict(self) -> dict:
        return {
            "C1": self.C1, "C2": self.C2, "x1": self.x1, "x2": self.x2,
            "gap": self.gap, "residual": self.residual,
            "conditions": {k: dict(v) for k, v in self.conditions.items()},
            "conditions_ok": self.ok, "roots_found": len(self.roots),
            "params": {k: getattr(self.params, k) for k in ("a", "b", "sigma", "rho", "K", "kappa")},
        }


def _fit_residual(x1: float, x2: float, params: BuyLowParams) -> np.ndarray:
    c_lo = _coefficients(x1, 1.0 + params.K, params)
    c_hi = _coefficients(x2, 1.0 - params.K, params)
    scale = np.abs(c_lo) + np.abs(c_hi)
    scale[scale == 0] = 1.0
    return (np.asarray(c_lo) - np.asarray(c_hi)) / scale


def _newton(x1: float, x2: float, params: BuyLowParams, lo: float, hi: float,
            tol: float = 1e-13, max_iter: int = 60, h: float = 1e-6):
    z = np.array([x1, x2], dtype=float)
    F = _fit_residual(*z, params)
    for _ in range(max_iter):
        if np.max(np.abs(F)) < tol:
            break
        J = np.empty((2, 2))
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            J[:, k] = (_fit_residual(*(z + e), params) - _fit_residual(*(z - e), params)) / (2 * h)
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            return None
        t = 1.0
        while t > 1e-4:
            cand = z + t * step
            if lo <= cand[0] < cand[1] <= hi:
                Fc = _fit_residual(*cand, params)
                if np.max(np.abs(Fc)) < np.max(np.abs(F)):
                    z, F = cand, Fc
                    break
            t *= 0.5
        else:
            return None
    if np.max(np.abs(F)) > 1e-9:
        return None
    return z, float(np.max(np.abs(F)))


def _prescan(params: BuyLowParams, lo: float, hi: float, n: int = 81):
    """Coarse root bracketing on the ratio/partner reparameterisation.

    x1 and x2 share the same C1/C2 ratio and sit on either side of its
    peak. For each x1 left of the peak the partner x2 is found on the right
    branch, then log C2 is compared across the two thresholds.
    """
    xs = np.linspace(lo, hi, n)
    r = np.array([_ratio(x, params) for x in xs])
    pos = r > 0
    if not pos.any():
        return [], None
    k_peak = int(np.argmax(np.where(pos, r, -np.inf)))
    x_peak = brentq(lambda x: _ratio(x + 1e-6, params) - _ratio(x - 1e-6, params),
                    xs[max(k_peak - 1, 0)], xs[min(k_peak + 1, n - 1)]) \
        if 0 < k_peak < n - 1 else xs[k_peak]
    r_peak = _ratio(x_peak, params)

    def partner(x1):
        target = _ratio(x1, params)
        f = lambda x: _ratio(x, params) - target  # noqa: E731
        right = x_peak + 1e-3
        step = 0.05
        while f(right) > 0 and right < hi + 5.0:
            right += step
            step *= 1.5
        return brentq(f, x_peak, right, xtol=1e-14)

    def h(x1):
        x2 = partner(x1)
        c_lo = _coefficients(x1, 1.0 + params.K, params)[1]
        c_hi = _coefficients(x2, 1.0 - params.K, params)[1]
        return math.log(c_lo) - math.log(c_hi), x2

    left = [x for x, rr in zip(xs, r) if x < x_peak and 0 < rr < r_peak]
    vals = []
    for x in left:
        try:
            vals.append((x, h(x)[0]))
        except (ValueError, ZeroDivisionError):
            continue
    brackets = []
    for (xa, fa), (xb, fb) in zip(vals[:-1], vals[1:]):
        if np.sign(fa) != np.sign(fb):
            brackets.append((xa, xb))
    return brackets, (h, x_peak)


def solve_smoothfit(params: BuyLowParams, box_halfwidth: Optional[float] = None,
                    guess: Optional[tuple] = None, scan: bool = False) -> SmoothFitSolution:
    """Buy and sell thresholds and the coefficients (C1, C2).

    Damped Newton from ``guess`` (default (b - 1/m, b + 1/m)) inside the box
    b +/- 5/m. If Newton stalls, or ``scan`` is set, the roots are bracketed
    on the one-dimensional reparameterisation of ``_prescan`` and polished by
    Brent; every bracketed root is reported in ``roots`` so callers can spot
    multiplicity.
    """
    try:
        return _solve_smoothfit(params, box_halfwidth, guess, scan)
    except ZeroDivisionError as exc:
        raise NoRoot(f"smooth-fit system degenerate: {exc}") from exc


def _solve_smoothfit(params, box_halfwidth, guess, scan):
    p = params
    half = 5.0 / p.m if box_halfwidth is None else box_halfwidth
    lo, hi = p.b - half, p.b + half
    start = guess if guess is not None else (p.b - 1.0 / p.m, p.b + 1.0 / p.m)
    result = _newton(start[0], start[1], p, lo, hi)
    roots = []
    if result is None or scan:
        brackets, helper = _prescan(p, lo, hi)
        if helper is not None:
            h, _ = helper
            for xa, xb in brackets:
                x1 = brentq(lambda x: h(x)[0], xa, xb, xtol=1e-14)
                roots.append((x1, h(x1)[1]))
    if result is None:
        for r in roots:
            result = _newton(r[0], r[1], p, lo, hi)
            if result is not None:
                break
    if result is None:
        if not roots:
            raise NoRoot(f"no smooth-fit root in [{lo:.4f}, {hi:.4f}]")
        x1, x2 = roots[0]
        res = float(np.max(np.abs(_fit_residual(x1, x2, p))))
    else:
        (x1, x2), res = result
    c1, c2 = _coefficients(x1, 1.0 + p.K, p)
    sol = SmoothFitSolution(C1=c1, C2=c2, x1=float(x1), x2=float(x2), conditions={},
                            residual=res, params=p, roots=[(float(a), float(b)) for a, b in roots])
    sol.conditions = smoothfit_conditions(sol)
    return sol


def sweep_smoothfit(base: BuyLowParams, kappas) -> list:
    """Smooth-fit solutions along a kappa path, warm-started from the last root."""
    out = []
    guess = None
    for k in kappas:
        sol = solve_smoothfit(replace(base, kappa=float(k)), guess=guess)
        guess = (sol.x1, sol.x2)
        out.append(sol)
    return out


def _V1(x, sol):
    return sol.C1 * phi_integral(x, sol.params, "phi1")


def _V2(x, sol):
    return sol.C2 * phi_integral(x, sol.params, "phi2")


def smoothfit_conditions(sol: SmoothFitSolution, samples: int = 201) -> dict:
    """Margins of the admissibility conditions at a smooth-fit root.

    ``coefficients``: C1, C2 >= 0. ``dominance``: both value inequalities on
    (x1, x2), sampled. ``buy_region``/``sell_region``: the closed-form bounds
    on x1 and x2. ``gap``: x2 - x1 > log(1+K) - log(1-K).
    """
    p = sol.params
    out = {}
    out["coefficients"] = {"ok": sol.C1 >= 0 and sol.C2 >= 0, "margin": min(sol.C1, sol.C2)}
    xs = np.linspace(sol.x1, sol.x2, samples)[1:-1]
    v1, v2 = _V1(xs, sol), _V2(xs, sol)
    m1 = float(np.min(v1 - (v2 - np.exp(xs) * (1 + p.K)))) if xs.size else math.inf
    m2 = float(np.min(v2 - (v1 + np.exp(xs) * (1 - p.K)))) if xs.size else math.inf
    scale = max(abs(_V1(sol.x1, sol)), abs(_V2(sol.x2, sol)), 1.0)
    m = min(m1, m2)
    out["dominance"] = {"ok": m >= -1e-9 * scale, "margin": m}
    buy_bound = (p.sigma ** 2 / 2 + p.a * p.b + p.kappa * p.sigma - p.rho) / p.a
    sell_bound = (p.sigma ** 2 / 2 + p.a * p.b - p.kappa * p.sigma - p.rho) / p.a
    out["buy_region"] = {"ok": sol.x1 <= buy_bound, "margin": buy_bound - sol.x1}
    out["sell_region"] = {"ok": sol.x2 >= sell_bound, "margin": sol.x2 - sell_bound}
    need = math.log(1 + p.K) - math.log(1 - p.K)
    out["gap"] = {"ok": sol.x2 - sol.x1 > need, "margin": sol.x2 - sol.x1 - need}
    return out


def value_buy_sell(x, regime: int, sol: SmoothFitSolution):
    """Assembled value function; ``regime`` 0 is flat, 1 is long."""
    p = sol.params
    xs = np.asarray(x, dtype=float)
    if regime == 0:
        out = np.where(xs > sol.x1, _V1(xs, sol), _V2(xs, sol) - np.exp(xs) * (1 + p.K))
    elif regime == 1:
        out = np.where(xs < sol.x2, _V2(xs, sol), _V1(xs, sol) + np.exp(xs) * (1 - p.K))
    else:
        raise IndexError("regime must be 0 or 1")
    return float(out) if xs.ndim == 0 else out


# ---------------------------------------------------------------------------
# Fund selection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FundParams:
    b1: float = 0.03
    b2: float = 0.07
    sigma1: float = 0.1
    sigma2: float = 0.3
    p: float = 0.5
    rho: float = 0.03
    c12: float = 30000.0
    c21: float = -1000.0
    kappa1: float = 0.0
    kappa2: float = 0.0

    def __post_init__(self):
        if not (self.sigma1 > 0 and self.sigma2 > 0):
            raise ValueError("volatilities must be positive")
        if not 0 < self.p < 1:
            raise ValueError("p must lie in (0, 1)")
        if not self.c12 + self.c21 > 0:
            raise ValueError("need c12 + c21 > 0")
        if self.kappa1 < 0 or self.kappa2 < 0:
            raise ValueError("kappa must be non-negative")
        bound = self.p * max(self.b1 - (1 - self.p) * self.sigma1 ** 2 / 2,
                             self.b2 - (1 - self.p) * self.sigma2 ** 2 / 2)
        if not self.rho > bound:
            raise ValueError(f"rho must exceed {bound:.6g} for integrability")

    def regime(self, i: int):
        if i == 0:
            return self.b1, self.sigma1, self.kappa1
        if i == 1:
            return self.b2, self.sigma2, self.kappa2
        raise IndexError("fund regimes are 0 and 1")


def fund_K(params: FundParams, regime: int, use_kappa: bool = True) -> float:
    """K_i, with the drift lowered to b_i - kappa_i sigma_i when ``use_kappa``."""
    b, s, k = params.regime(regime)
    if use_kappa:
        b = b - k * s
    p = params.p
    den = params.rho - b * p + 0.5 * s * s * p * (1 - p)
    if not den > 0:
        raise ValueError("non-positive denominator in K")
    return 1.0 / den


class StrategyType(enum.Enum):
    NEVER_SWITCH = "NeverSwitch"
    ALWAYS_TO_J = "AlwaysToJ"
    ONE_WAY_THRESHOLD = "OneWayThreshold"
    TWO_WAY_THRESHOLDS = "TwoWayThresholds"
    SWITCH_IF_FREE = "SwitchIfFree"


@dataclass(frozen=True)
class FundClassification:
    kind: StrategyType
    better: Optional[int]  # regime with the larger K (None on a tie)
    K: tuple

    def to_dict(self):
        return {"type": self.kind.value, "better_regime": None if self.better is None else self.better + 1,
                "K1": self.K[0], "K2": self.K[1]}


def classify_fund_strategy(params: FundParams) -> FundClassification:
    """Strategy type from the ambiguity-adjusted K values and cost signs.

    With j the fund of larger K and i the other: c_ij <= 0 means always move
    to j; c_ij > 0 with c_ji >= 0 gives a single threshold i -> j; c_ij > 0
    with c_ji < 0 gives two thresholds. On a tie, switching is optimal only
    where it is free.
    """
    K = (fund_K(params, 0), fund_K(params, 1))
    cost = {(0, 1): params.c12, (1, 0): params.c21}
    if K[0] == K[1]:
        free = any(c <= 0 for c in cost.values())
        kind = StrategyType.SWITCH_IF_FREE if free else StrategyType.NEVER_SWITCH
        return FundClassification(kind, None, K)
    j = 1 if K[1] > K[0] else 0
    i = 1 - j
    if cost[(i, j)] <= 0:
        kind = StrategyType.ALWAYS_TO_J
    elif cost[(j, i)] >= 0:
        kind = StrategyType.ONE_WAY_THRESHOLD
    else:
        kind = StrategyType.TWO_WAY_THRESHOLDS
    return FundClassification(kind, j, K)


def kappa2_boundary(params: FundParams) -> float:
    """kappa_2 at which K_2 (adjusted) equals K_1, with kappa_1 held fixed."""
    p = params
    gap = (1 - p.p) * (p.sigma1 ** 2 - p.sigma2 ** 2) - 2 * (p.b1 - p.b2)
    return (gap + 2 * p.kappa1 * p.sigma1) / (2 * p.sigma2)


def _char_roots(b: float, s: float, rho: float):
    """Roots of s^2 n (n - 1) / 2 + b n - rho = 0, returned (positive, negative)."""
    A = 0.5 * s * s
    disc = (b - A) ** 2 + 4.0 * A * rho
    r1 = (-(b - A) + math.sqrt(disc)) / (2 * A)
    r2 = (-(b - A) - math.sqrt(disc)) / (2 * A)
    return r1, r2


@dataclass(frozen=True)
class FundThresholds:
    """Switch from the worse fund i to j at ``upper``; back at ``lower``."""

    kind: StrategyType
    better: int
    upper: float
    lower: Optional[float]
    A_worse: float
    A_better: float

    def by_regime(self) -> dict:
        """Threshold keyed by the regime that leaves at it."""
        out = {1 - self.better: self.upper}
        if self.lower is not None:
            out[self.better] = self.lower
        return out


def fund_thresholds_closed_form(params: FundParams) -> FundThresholds:
    """Smooth-fit thresholds of the fund problem in the shifted-drift model.

    With i the worse and j the better fund, v_i = K_i x^p + A_i x^a below
    the switching point and v_j = K_j x^p + A_j x^d above the return point
    (a > 0 > d the characteristic roots). The difference
    D(x) = (K_j - K_i) x^p + A_j x^d - A_i x^a has a single local minimum and
    a single local maximum in log x; smooth fit asks that they equal -c_ji
    and c_ij. For fixed A_i the local minimum increases with A_j, and the
    local maximum then decreases with A_i, so two nested bracketed solves
    suffice. The one-way case sets A_j = 0.
    """
    cls = classify_fund_strategy(params)
    if cls.kind not in (StrategyType.ONE_WAY_THRESHOLD, StrategyType.TWO_WAY_THRESHOLDS):
        raise ValueError(f"no threshold pair for strategy type {cls.kind.value}")
    j = cls.better
    i = 1 - j
    bi, si, ki = params.regime(i)
    bj, sj, kj = params.regime(j)
    a = _char_roots(bi - ki * si, si, params.rho)[0]
    d = _char_roots(bj - kj * sj, sj, params.rho)[1]
    p = params.p
    dK = cls.K[j] - cls.K[i]
    c_ij = params.c12 if i == 0 else params.c21
    c_ji = params.c21 if i == 0 else params.c12
    two_way = cls.kind is StrategyType.TWO_WAY_THRESHOLDS

    def extrema(lAi, lAj):
        # x D'(x) in t = log x; its derivative times e^{-pt} is strictly decreasing
        def gp(t):
            out = p * p * dK - a * a * math.exp(lAi + (a - p) * t)
            if lAj is not None:
                out += d * d * math.exp(lAj + (d - p) * t)
            return out

        def g(t):
            out = p * dK * math.exp(p * t) - a * math.exp(lAi + a * t)
            if lAj is not None:
                out += d * math.exp(lAj + d * t)
            return out

        def D(t):
            out = dK * math.exp(p * t) - math.exp(lAi + a * t)
            if lAj is not None:
                out += math.exp(lAj + d * t)
            return out

        hi = 10.0
        while g(hi) >= 0:
            hi += 10.0
        if lAj is None:
            lo = -10.0
            while g(lo) <= 0:
                lo -= 10.0
            tmax = brentq(g, lo, hi, xtol=1e-14)
            return None, tmax, None, D(tmax)
        lo = -10.0
        while gp(lo) <= 0:
            lo -= 10.0
        hi_p = 10.0
        while gp(hi_p) >= 0:
            hi_p += 10.0
        ts = brentq(gp, lo, hi_p, xtol=1e-14)
        if g(ts) <= 0:
            return None
        lo = ts - 1.0
        while g(lo) > 0:
            lo -= 2.0
        hi = ts + 1.0
        while g(hi) > 0:
            hi += 2.0
        tmin = brentq(g, lo, ts, xtol=1e-14)
        tmax = brentq(g, ts, hi, xtol=1e-14)
        return tmin, tmax, D(tmin), D(tmax)

    def inner(lAi):
        if not two_way:
            return None

        def f(lAj):
            e = extrema(lAi, lAj)
            return 1e300 if e is None else e[2] + c_ji

        return brentq(f, -50.0, 100.0, xtol=1e-13)

    def outer(lAi):
        e = extrema(lAi, inner(lAi))
        return e[3] - c_ij

    grid = np.linspace(-60.0, 20.0, 81)
    vals = []
    for lv in grid:
        try:
            vals.append(outer(lv))
        except (ValueError, OverflowError):
            vals.append(np.nan)
    vals = np.asarray(vals)
    idx = np.where(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    if idx.size == 0:
        raise NoRoot("fund smooth-fit system has no bracketed root")
    lAi = brentq(outer, grid[idx[0]], grid[idx[0] + 1], xtol=1e-14)
    lAj = inner(lAi)
    tmin, tmax, _, _ = extrema(lAi, lAj)
    return FundThresholds(
        kind=cls.kind, better=j, upper=math.exp(tmax),
        lower=None if tmin is None else math.exp(tmin),
        A_worse=math.exp(lAi), A_better=0.0 if lAj is None else math.exp(lAj),
    )


def fund_thresholds(params: FundParams, nx: int = 801, grid=None, config=None) -> dict:
    """Thresholds of the fund problem from the PDE solver on the shifted drift.

    Returns the classification plus ``threshold_1`` / ``threshold_2``, the
    level at which fund 1 (resp. 2) is left, or None where it never is.
    """
    from .cases import fund_grid, fund_selection_problem
    from .monotone import apply_monotone_shift
    from .pde import solve_infinite_horizon, thresholds

    cls = classify_fund_strategy(params)
    problem = apply_monotone_shift(fund_selection_problem(params))
    grid = grid or fund_grid(nx)
    surface = solve_infinite_horizon(problem, grid, config)
    th = thresholds(surface)
    return {"classification": cls, "threshold_1": th[0], "threshold_2": th[1], "surface": surface}
