"""Command-line front end: validate, solve, sweep, simulate, plot.

Exit codes: 0 success, 1 validation failure or incompatible request,
2 solver non-convergence (including a missing smooth-fit root), 3 I/O or
schema error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .cases import buy_low_grid, fund_grid
from .closed_form import (
    BuyLowParams, FundParams, NoRoot, StrategyType, classify_fund_strategy, fund_thresholds_closed_form,
    solve_smoothfit,
)
from .grid import Grid1D, default_grid
from .io import (
    SchemaError, load_problem, provenance, read_csv, write_csv, write_json, write_surface_csv,
    surface_to_dict,
)
from .model import GBM, OU, ConstantCosts, PowerFn, SlippageCosts, SwitchingProblem, ZeroFn
from .monotone import MonotoneConditionError
from .pde import NonConvergence, SolverConfig, solve, thresholds
from .sde import PriorPolicy, ThresholdStrategy, estimate_objective, simulate_path
from .svgplot import line_plot
from .validation import validate_problem

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3


class Incompatible(ValueError):
    """The requested method does not apply to this problem."""


class InputError(ValueError):
    """A data file is readable but lacks what the command needs."""


# ---------------------------------------------------------------------------
# Problem shapes
# ---------------------------------------------------------------------------

def _is_zero(f) -> bool:
    from .model import AffineFn

    return isinstance(f, ZeroFn) or (isinstance(f, AffineFn) and f.c0 == 0 and f.c1 == 0)


def fund_params_from(problem: SwitchingProblem) -> FundParams:
    """FundParams for a two-GBM, common power reward, constant-cost problem."""
    if problem.regime_count != 2 or not all(isinstance(d, GBM) for d in problem.dynamics):
        raise Incompatible("funds method needs two regimes with GBM dynamics")
    psi = problem.reward.psi
    if not all(isinstance(f, PowerFn) for f in psi) or psi[0].p != psi[1].p:
        raise Incompatible("funds method needs the same power reward x^p in both regimes")
    if not all(_is_zero(f) for f in problem.reward.phi):
        raise Incompatible("funds method needs phi = 0")
    if not isinstance(problem.costs, ConstantCosts) or not problem.is_infinite:
        raise Incompatible("funds method needs constant costs and an infinite horizon")
    d1, d2 = problem.dynamics
    m = problem.costs.matrix
    try:
        return FundParams(d1.b, d2.b, d1.sigma, d2.sigma, psi[0].p, problem.discount,
                          m[0][1], m[1][0], float(problem.kappa[0]), float(problem.kappa[1]))
    except ValueError as exc:
        raise Incompatible(f"funds method: {exc}") from exc


def buylow_params_from(problem: SwitchingProblem) -> BuyLowParams:
    """BuyLowParams for a flat/long problem on a common OU log price."""
    if problem.regime_count != 2 or not all(isinstance(d, OU) for d in problem.dynamics):
        raise Incompatible("smoothfit method needs two regimes with OU dynamics")
    d1, d2 = problem.dynamics
    if d1 != d2:
        raise Incompatible("smoothfit method needs the same OU dynamics in both regimes")
    if not all(_is_zero(f) for f in problem.reward.psi + problem.reward.phi):
        raise Incompatible("smoothfit method needs zero running reward")
    if not isinstance(problem.costs, SlippageCosts) or not problem.is_infinite:
        raise Incompatible("smoothfit method needs slippage costs and an infinite horizon")
    k = problem.kappa
    if k[0] != k[1]:
        raise Incompatible("smoothfit method needs equal kappa in both regimes")
    try:
        return BuyLowParams(d1.a, d1.mean, d1.sigma, problem.discount, problem.costs.K, float(k[0]))
    except ValueError as exc:
        raise Incompatible(f"smoothfit method: {exc}") from exc


def _solver_grid(problem: SwitchingProblem, grid: Optional[Grid1D], nx: Optional[int],
                 nt: Optional[int]) -> Grid1D:
    T = None if problem.is_infinite else problem.horizon.T
    if grid is None:
        try:
            grid = buy_low_grid(buylow_params_from(problem), nx or 801)
        except Incompatible:
            try:
                fund_params_from(problem)
                grid = fund_grid(nx or 801)
            except Incompatible:
                grid = default_grid(problem, nx or 801)
    nt_final = nt or grid.nt or (200 if T is not None else None)
    return Grid1D(grid.x_min, grid.x_max, nx or grid.nx, grid.coord, nt_final, T)


def _config(args) -> SolverConfig:
    kw = {"method": args.solver, "tol_picard": args.tol}
    if getattr(args, "nt", None):
        kw["nt"] = args.nt
    return SolverConfig(**kw)


def _fmt(v: float) -> str:
    return f"{v:.5f}".rstrip("0").rstrip(".")


def _set_param(problem: SwitchingProblem, name: str, value: float) -> SwitchingProblem:
    k = list(problem.kappa)
    if name == "kappa":
        k = [value] * problem.regime_count
    else:
        idx = int(name[len("kappa"):]) - 1
        if not 0 <= idx < problem.regime_count:
            raise Incompatible(f"--param {name}: no regime {idx + 1}")
        k[idx] = value
    return problem.with_kappa(k)


def _emit(text: str) -> None:
    print(text, flush=True)


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    problem, grid, doc = load_problem(args.config)
    x = grid.states if grid is not None else None
    report = validate_problem(problem, x, advisory_paths=args.advisory_paths, seed=args.seed)
    _emit(report.table())
    for c in report.checks:
        if c.status == "fail" and c.worst_witness is not None:
            tag = "advisory" if c.advisory else "witness"
            _emit(f"  {c.name} {tag}: {json.dumps(_jsonable(c.worst_witness), sort_keys=True)}")
    if args.out:
        payload = report.to_dict()
        payload["provenance"] = provenance(doc, args.seed, command="validate")
        write_json(args.out, payload)
    _emit("result: " + ("ok" if report.ok else "FAILED"))
    return EXIT_OK if report.ok else EXIT_INVALID


def _jsonable(obj):
    return json.loads(json.dumps(obj, default=lambda o: o.item() if hasattr(o, "item") else str(o)))


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def _ref_point(grid: Grid1D, x0: Optional[float]) -> float:
    if x0 is not None:
        return float(x0)
    return float(grid.to_state(0.5 * (grid.x_min + grid.x_max)))


def _solve_pde(args, problem, grid, doc):
    g = _solver_grid(problem, grid, args.nx, getattr(args, "nt", None))
    surface = solve(problem, g, _config(args))
    return surface


def cmd_solve(args) -> int:
    problem, grid, doc = load_problem(args.config)
    prov = provenance(doc, None, command="solve", method=args.method)
    out = Path(args.out) if args.out else None
    if args.method == "pde":
        surface = _solve_pde(args, problem, grid, doc)
        th = thresholds(surface)
        for i in range(problem.regime_count):
            level = th[i]
            _emit(f"regime {i + 1}: threshold {'none' if level is None else f'{level:.8g}'}")
        x0 = _ref_point(surface.grid, args.x0)
        vals = ", ".join(f"v{i + 1}={float(surface.value(x0, i)):.8g}" for i in range(problem.regime_count))
        _emit(f"value at x={x0:.8g}: {vals}")
        _emit(f"picard iterations {surface.picard_iterations}, last change {surface.residual:.3e}")
        if out:
            if args.format == "csv":
                write_surface_csv(out, surface, prov)
            else:
                payload = surface_to_dict(surface, prov)
                payload["thresholds"] = {str(i + 1): th[i] for i in th}
                write_json(out, payload)
        return EXIT_OK
    if args.method == "smoothfit":
        params = buylow_params_from(problem)
        sol = solve_smoothfit(params, scan=True)
        _emit(f"x1={sol.x1:.10g} x2={sol.x2:.10g} C1={sol.C1:.10g} C2={sol.C2:.10g} "
              f"residual={sol.residual:.3e}")
        _emit("conditions: " + ", ".join(f"{k}={'ok' if v['ok'] else 'FAIL'}" for k, v in sol.conditions.items()))
        if len(sol.roots) > 1:
            _emit(f"warning: {len(sol.roots)} roots found in the search box")
        if out:
            row = _smoothfit_row(params.kappa, sol)
            if args.format == "csv":
                write_csv(out, SMOOTHFIT_COLUMNS, [row], prov)
            else:
                payload = sol.to_dict()
                payload["provenance"] = prov
                write_json(out, payload)
        return EXIT_OK if sol.ok else EXIT_INVALID
    params = fund_params_from(problem)
    row, info = _fund_point(params, args.nx, args.solver, args.tol)
    cls = info["classification"]
    _emit(f"K1={_fmt(cls.K[0])}, K2={_fmt(cls.K[1])}, type={cls.kind.value}")
    for key in ("threshold_1", "threshold_2", "closed_form_upper", "closed_form_lower"):
        if row[key] is not None:
            _emit(f"{key}={row[key]:.8g}")
    if out:
        if args.format == "csv":
            write_csv(out, FUND_COLUMNS, [[row[c] for c in FUND_COLUMNS]], prov)
        else:
            payload = dict(row)
            payload["classification"] = cls.to_dict()
            payload["provenance"] = prov
            write_json(out, payload)
    return EXIT_OK


SMOOTHFIT_COLUMNS = ["kappa", "x1", "x2", "C1", "C2", "gap", "residual", "conditions_ok", "status"]
FUND_COLUMNS = ["kappa1", "kappa2", "type", "type_changed", "K1", "K2", "threshold_1", "threshold_2",
                "closed_form_upper", "closed_form_lower", "status"]


def _smoothfit_row(kappa, sol, status="ok"):
    if sol is None:
        return [kappa, None, None, None, None, None, None, None, status]
    return [kappa, sol.x1, sol.x2, sol.C1, sol.C2, sol.gap, sol.residual, sol.ok, status]


def _fund_point(params: FundParams, nx, solver="howard", tol=1e-8):
    """One row of fund results: classification, PDE and closed-form thresholds."""
    from .closed_form import fund_thresholds

    cls = classify_fund_strategy(params)
    row = {"kappa1": params.kappa1, "kappa2": params.kappa2, "type": cls.kind.value, "type_changed": False,
           "K1": cls.K[0], "K2": cls.K[1], "threshold_1": None, "threshold_2": None,
           "closed_form_upper": None, "closed_form_lower": None, "status": "ok"}
    res = fund_thresholds(params, nx or 801, config=SolverConfig(method=solver, tol_picard=tol))
    row["threshold_1"], row["threshold_2"] = res["threshold_1"], res["threshold_2"]
    if cls.kind in (StrategyType.ONE_WAY_THRESHOLD, StrategyType.TWO_WAY_THRESHOLDS):
        cf = fund_thresholds_closed_form(params)
        row["closed_form_upper"], row["closed_form_lower"] = cf.upper, cf.lower
    return row, res


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def cmd_sweep(args) -> int:
    if args.steps < 2:
        raise Incompatible("--steps must be at least 2")
    if not args.param.startswith("kappa") or (args.param != "kappa" and not args.param[5:].isdigit()):
        raise Incompatible(f"unsupported sweep parameter {args.param!r}")
    if args.start < 0 or args.stop < 0:
        raise Incompatible("kappa values must be non-negative")
    problem, grid, doc = load_problem(args.config)
    values = np.linspace(args.start, args.stop, args.steps)
    prov = provenance(doc, None, command="sweep", method=args.method, param=args.param,
                      values=[float(v) for v in values])
    rows = []
    failures = 0
    if args.method == "smoothfit":
        if args.param != "kappa":
            raise Incompatible("smoothfit sweeps run over kappa")
        base = buylow_params_from(problem)
        header = SMOOTHFIT_COLUMNS
        guess = None
        for v in values:
            try:
                sol = solve_smoothfit(replace(base, kappa=float(v)), guess=guess)
                guess = (sol.x1, sol.x2)
                rows.append(_smoothfit_row(float(v), sol, "ok" if sol.ok else "conditions_failed"))
                failures += not sol.ok
            except (NoRoot, ValueError, ArithmeticError) as exc:
                rows.append(_smoothfit_row(float(v), None, f"error: {exc}"))
                failures += 1
    elif args.method == "funds":
        base = fund_params_from(problem)
        header = FUND_COLUMNS
        first_type = None
        for v in values:
            try:
                params = _fund_param(base, args.param, float(v))
                row, _ = _fund_point(params, args.nx, args.solver, args.tol)
                first_type = first_type or row["type"]
                row["type_changed"] = row["type"] != first_type
            except (NoRoot, NonConvergence, ValueError, ArithmeticError) as exc:
                row = {c: None for c in header}
                row[args.param if args.param != "kappa" else "kappa2"] = float(v)
                row["status"] = f"error: {exc}"
                failures += 1
            rows.append([row[c] for c in header])
    else:
        header = [args.param] + [f"threshold_{i + 1}" for i in range(problem.regime_count)] + \
            [f"value_{i + 1}" for i in range(problem.regime_count)] + ["picard_iterations", "status"]
        g = _solver_grid(problem, grid, args.nx, args.nt)
        x0 = _ref_point(g, args.x0)
        for v in values:
            try:
                surf = solve(_set_param(problem, args.param, float(v)), g, _config(args))
                th = thresholds(surf)
                rows.append([float(v)] + [th[i] for i in range(problem.regime_count)] +
                            [float(surf.value(x0, i)) for i in range(problem.regime_count)] +
                            [surf.picard_iterations, "ok"])
            except (NonConvergence, ValueError, ArithmeticError) as exc:
                rows.append([float(v)] + [None] * (2 * problem.regime_count + 1) + [f"error: {exc}"])
                failures += 1
    if args.out:
        if str(args.out).endswith(".json"):
            write_json(args.out, {"param": args.param, "columns": header, "rows": rows, "provenance": prov})
        else:
            write_csv(args.out, header, rows, prov)
    for r in rows:
        _emit(", ".join(_cell_text(c) for c in r))
    _emit(f"{len(rows)} points, {failures} failed")
    return EXIT_OK


def _cell_text(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.8g}"
    return str(v)


def _fund_param(base: FundParams, name: str, value: float) -> FundParams:
    if name in ("kappa", "kappa2"):
        return replace(base, kappa2=value) if name == "kappa2" else replace(base, kappa1=value, kappa2=value)
    if name == "kappa1":
        return replace(base, kappa1=value)
    raise Incompatible(f"fund sweeps run over kappa, kappa1 or kappa2, not {name}")


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    problem, grid, doc = load_problem(args.config)
    regime = args.regime - 1
    if not 0 <= regime < problem.regime_count:
        raise Incompatible(f"--regime must lie in 1..{problem.regime_count}")
    surface = None
    if args.strategy == "from-solve" or args.theta == "worst":
        surface = solve(problem, _solver_grid(problem, grid, args.nx, None), SolverConfig(method=args.solver))
    if args.strategy == "from-solve":
        strategy = ThresholdStrategy.from_surface(surface, initial_regime=regime)
    else:
        try:
            with open(args.strategy, encoding="utf-8") as fh:
                strategy = ThresholdStrategy.from_dict(json.load(fh))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise SchemaError(f"bad strategy file: {exc}", "/") from exc
        strategy = replace(strategy, initial_regime=regime)
    prior = PriorPolicy.sign_of_gradient(surface) if args.theta == "worst" else \
        PriorPolicy.zero(problem.regime_count)
    use_cont = args.continuation == "pde" or (args.continuation == "auto" and surface is not None
                                              and problem.is_infinite)
    if use_cont and surface is None:
        raise Incompatible("--continuation pde needs a solved surface (use --theta worst or from-solve)")
    cont = (lambda x, i: surface.value(x, i)) if use_cont and problem.is_infinite else None
    report = estimate_objective(problem, strategy, prior, args.paths, args.dt, args.T_max, args.seed,
                                x0=args.x0, continuation=cont)
    _emit(f"MC estimate {report.mean:.8g} +/- {report.std_error:.3g} (1 s.e., {report.n_paths} paths, "
          f"dt={report.dt:g}, horizon {report.T_max:g})")
    if report.tail_bound:
        _emit(f"truncation tail bound {report.tail_bound:.3g}")
    payload = {"report": report.to_dict(), "strategy": strategy.to_dict(), "theta": args.theta}
    if surface is not None:
        pde = float(surface.value(args.x0, regime))
        z = (report.mean - pde) / report.std_error if report.std_error > 0 else None
        scaled = f" ({z:.2f} s.e.)" if z is not None else ""
        _emit(f"PDE value {pde:.8g}, difference {report.mean - pde:.3g}{scaled}")
        payload["pde_value"] = pde
        payload["z_score"] = z
    payload["provenance"] = provenance(doc, args.seed, command="simulate", paths=args.paths, dt=args.dt,
                                       T_max=args.T_max, x0=args.x0, regime=args.regime, theta=args.theta,
                                       strategy=strategy.to_dict())
    if args.out:
        write_json(args.out, payload)
    if args.path_out:
        rec = simulate_path(problem, strategy, prior, args.x0, args.T_max, args.dt, args.seed)
        write_csv(args.path_out, ["t", "x", "regime"], rec.rows(), payload["provenance"])
    return EXIT_OK


# ---------------------------------------------------------------------------
# plot
# ---------------------------------------------------------------------------

def _csv_provenance(path) -> Optional[str]:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    return first[len("# provenance: "):].strip() if first.startswith("# provenance: ") else None


def _number(cell: str):
    if cell in ("", "-"):
        return None
    try:
        return float(cell)
    except ValueError:
        return None


def cmd_plot(args) -> int:
    header, rows = read_csv(args.input)
    ycols = [c for spec in args.y for c in spec.split(",") if c]
    missing = [c for c in [args.x] + ycols if c not in header]
    if missing:
        raise InputError(f"missing column(s) {', '.join(missing)}; available: {', '.join(header)}")
    xi = header.index(args.x)
    xs = [_number(r[xi]) for r in rows]
    keep = [k for k, v in enumerate(xs) if v is not None]
    series = {c: [_number(rows[k][header.index(c)]) for k in keep] for c in ycols}
    blob = Path(args.input).read_bytes()
    meta = {"input_sha256": hashlib.sha256(blob).hexdigest(), "version": __version__,
            "source_provenance": _csv_provenance(args.input)}
    svg = line_plot([xs[k] for k in keep], series, logy=args.logy, title=args.title or "",
                    xlabel=args.x, ylabel=args.ylabel or "", metadata=json.dumps(meta, sort_keys=True))
    Path(args.out).write_text(svg, encoding="utf-8")
    _emit(f"wrote {args.out} ({len(keep)} points, {len(series)} series)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _solver_flags(p: argparse.ArgumentParser, time: bool = True) -> None:
    p.add_argument("--nx", type=int, default=None, help="grid nodes (default: from the config or 801)")
    if time:
        p.add_argument("--nt", type=int, default=None, help="time steps for finite horizons")
    p.add_argument("--solver", choices=("howard", "psor"), default="howard")
    p.add_argument("--tol", type=float, default=1e-8, help="relative Picard tolerance")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ambiswitch", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check the standing assumptions of a problem file")
    p.add_argument("config")
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--advisory-paths", type=int, default=0,
                   help="Monte Carlo paths for the cost-bound advisory after a triangular failure")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="solve a problem")
    p.add_argument("config")
    p.add_argument("--method", choices=("pde", "smoothfit", "funds"), default="pde")
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.add_argument("--out")
    p.add_argument("--x0", type=float, default=None, help="reference state for the printed value")
    _solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="solve along a kappa path")
    p.add_argument("config")
    p.add_argument("--param", default="kappa", help="kappa (all regimes) or kappa<N> (regime N)")
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--method", choices=("pde", "smoothfit", "funds"), default="pde")
    p.add_argument("--out", help="CSV (or .json) output path")
    p.add_argument("--x0", type=float, default=None)
    _solver_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="Monte Carlo value of a threshold strategy")
    p.add_argument("config")
    p.add_argument("--strategy", default="from-solve", help="strategy JSON file or 'from-solve'")
    p.add_argument("--paths", type=int, default=10000)
    p.add_argument("--dt", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--theta", choices=("zero", "worst"), default="zero")
    p.add_argument("--x0", type=float, required=True)
    p.add_argument("--regime", type=int, default=1, help="initial regime (1-based)")
    p.add_argument("--T-max", dest="T_max", type=float, default=40.0,
                   help="truncation time on infinite horizons")
    p.add_argument("--continuation", choices=("auto", "pde", "none"), default="auto",
                   help="value added at the truncation time (auto: PDE surface when one is solved)")
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--path-out", help="CSV with one sample path")
    _solver_flags(p, time=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plot", help="SVG line chart from a CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True, action="append", help="column name(s), comma separated or repeated")
    p.add_argument("--logy", action="store_true")
    p.add_argument("--title")
    p.add_argument("--ylabel")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NonConvergence, NoRoot) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (Incompatible, MonotoneConditionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
