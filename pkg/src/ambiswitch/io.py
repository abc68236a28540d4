"""Problem files (JSON), result export and provenance."""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from . import __version__
from .grid import Grid1D
from .model import (
    GBM, OU, AffineDynamics, AffineFn, AmbiguitySpec, BuyLowTerminal, ConstantCosts,
    ConstantTerminal, Finite, GridTerminal, Infinite, PowerFn, RewardSpec, SlippageCosts,
    SwitchingProblem, ZeroFn, ZeroTerminal,
)


class SchemaError(ValueError):
    """Problem document does not match the schema; ``path`` is a JSON pointer."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path or '/'}: {message}")
        self.path = path or "/"


_num = {"type": "number"}


def _obj(props: dict, required: list) -> dict:
    return {"type": "object", "properties": props, "required": required, "additionalProperties": False}


_FN = {
    "oneOf": [
        _obj({"type": {"const": "zero"}}, ["type"]),
        _obj({"type": {"const": "power"}, "p": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
             ["type", "p"]),
        _obj({"type": {"const": "affine"}, "c0": _num, "c1": _num}, ["type", "c0"]),
    ]
}
_PHI = {
    "oneOf": [
        _obj({"type": {"const": "zero"}}, ["type"]),
        _obj({"type": {"const": "affine"}, "c0": _num, "c1": _num}, ["type", "c0"]),
    ]
}

PROBLEM_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "switching problem",
    "type": "object",
    "additionalProperties": False,
    "required": ["regimes", "dynamics", "reward", "kappa", "costs", "discount", "horizon"],
    "properties": {
        "name": {"type": "string"},
        "regimes": {"type": "integer", "minimum": 1},
        "dynamics": {
            "type": "array", "minItems": 1,
            "items": {"oneOf": [
                _obj({"type": {"const": "gbm"}, "b": _num, "sigma": {"type": "number", "exclusiveMinimum": 0}},
                     ["type", "b", "sigma"]),
                _obj({"type": {"const": "ou"}, "a": {"type": "number", "exclusiveMinimum": 0}, "mean": _num,
                      "sigma": {"type": "number", "exclusiveMinimum": 0}}, ["type", "a", "mean", "sigma"]),
                _obj({"type": {"const": "affine"}, "b0": _num, "b1": _num, "s0": _num, "s1": _num},
                     ["type", "b0", "b1", "s0"]),
            ]},
        },
        "reward": {"oneOf": [_FN, {"type": "array", "minItems": 1, "items": _FN}]},
        "phi": {"oneOf": [_PHI, {"type": "array", "minItems": 1, "items": _PHI}]},
        "kappa": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
        "costs": {"oneOf": [
            _obj({"type": {"const": "constant"},
                  "matrix": {"type": "array", "items": {"type": "array", "items": _num}}}, ["type", "matrix"]),
            _obj({"type": {"const": "slippage"}, "K": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
                 ["type", "K"]),
        ]},
        "discount": {"type": "number", "minimum": 0},
        "horizon": {"oneOf": [
            _obj({"type": {"const": "finite"}, "T": {"type": "number", "exclusiveMinimum": 0}}, ["type", "T"]),
            _obj({"type": {"const": "infinite"}}, ["type"]),
        ]},
        "terminal": {"oneOf": [
            _obj({"type": {"const": "zero"}}, ["type"]),
            _obj({"type": {"const": "buylow"}, "K": _num, "C": _num}, ["type", "K", "C"]),
            _obj({"type": {"const": "constant"}, "values": {"type": "array", "items": _num}}, ["type", "values"]),
            _obj({"type": {"const": "custom_grid"}, "x": {"type": "array", "minItems": 2, "items": _num},
                  "values": {"type": "array", "items": {"type": "array", "items": _num}}},
                 ["type", "x", "values"]),
        ]},
        "grid": _obj({"x_min": _num, "x_max": _num, "nx": {"type": "integer", "minimum": 3},
                      "coord": {"enum": ["x", "log"]}, "nt": {"type": "integer", "minimum": 1}},
                     ["x_min", "x_max"]),
    },
}


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else "/"


def validate_document(doc) -> None:
    """Schema check plus the cross-field constraints the schema cannot express."""
    validator = jsonschema.Draft202012Validator(PROBLEM_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        # oneOf failures hide the useful message in the best-matching branch
        best = jsonschema.exceptions.best_match(errors)
        err = best or err
        raise SchemaError(err.message, _pointer(err.absolute_path))
    n = doc["regimes"]
    for key in ("dynamics", "kappa"):
        if len(doc[key]) != n:
            raise SchemaError(f"expected {n} entries, got {len(doc[key])}", f"/{key}")
    for key in ("reward", "phi"):
        if isinstance(doc.get(key), list) and len(doc[key]) != n:
            raise SchemaError(f"expected {n} entries, got {len(doc[key])}", f"/{key}")
    costs = doc["costs"]
    if costs["type"] == "constant":
        m = costs["matrix"]
        if len(m) != n:
            raise SchemaError(f"expected {n} rows", "/costs/matrix")
        for r, row in enumerate(m):
            if len(row) != n:
                raise SchemaError(f"expected {n} columns", f"/costs/matrix/{r}")
            if row[r] != 0:
                raise SchemaError("diagonal cost must be zero", f"/costs/matrix/{r}/{r}")
    elif n != 2:
        raise SchemaError("slippage costs need exactly two regimes", "/costs")
    term = doc.get("terminal", {"type": "zero"})
    if term["type"] == "constant" and len(term["values"]) != n:
        raise SchemaError(f"expected {n} values", "/terminal/values")
    if term["type"] == "custom_grid":
        if len(term["values"]) != n:
            raise SchemaError(f"expected {n} rows", "/terminal/values")
        for r, row in enumerate(term["values"]):
            if len(row) != len(term["x"]):
                raise SchemaError("row length must match x", f"/terminal/values/{r}")
    if doc["horizon"]["type"] == "infinite" and not doc["discount"] > 0:
        raise SchemaError("infinite horizon requires a positive discount", "/discount")


def _fn(d):
    if d["type"] == "zero":
        return ZeroFn()
    if d["type"] == "power":
        return PowerFn(float(d["p"]))
    return AffineFn(float(d["c0"]), float(d.get("c1", 0.0)))


def _per_regime(value, n):
    items = value if isinstance(value, list) else [value] * n
    return tuple(_fn(v) for v in items)


def problem_from_dict(doc: dict) -> SwitchingProblem:
    validate_document(doc)
    n = doc["regimes"]
    dyn = []
    for d in doc["dynamics"]:
        if d["type"] == "gbm":
            dyn.append(GBM(float(d["b"]), float(d["sigma"])))
        elif d["type"] == "ou":
            dyn.append(OU(float(d["a"]), float(d["mean"]), float(d["sigma"])))
        else:
            dyn.append(AffineDynamics(float(d["b0"]), float(d["b1"]), float(d["s0"]), float(d.get("s1", 0.0))))
    reward = RewardSpec(_per_regime(doc["reward"], n), _per_regime(doc.get("phi", {"type": "zero"}), n))
    c = doc["costs"]
    costs = (ConstantCosts(tuple(tuple(float(v) for v in row) for row in c["matrix"]))
             if c["type"] == "constant" else SlippageCosts(float(c["K"])))
    h = doc["horizon"]
    horizon = Finite(float(h["T"])) if h["type"] == "finite" else Infinite()
    t = doc.get("terminal", {"type": "zero"})
    if t["type"] == "zero":
        terminal = ZeroTerminal()
    elif t["type"] == "buylow":
        terminal = BuyLowTerminal(float(t["K"]), float(t["C"]))
    elif t["type"] == "constant":
        terminal = ConstantTerminal(tuple(float(v) for v in t["values"]))
    else:
        terminal = GridTerminal(tuple(float(v) for v in t["x"]),
                                tuple(tuple(float(v) for v in row) for row in t["values"]))
    try:
        return SwitchingProblem(n, tuple(dyn), reward, AmbiguitySpec(tuple(float(k) for k in doc["kappa"])),
                                costs, float(doc["discount"]), horizon, terminal, doc.get("name", ""))
    except ValueError as exc:
        raise SchemaError(str(exc), "/") from exc


def _fn_dict(f):
    if isinstance(f, ZeroFn):
        return {"type": "zero"}
    if isinstance(f, PowerFn):
        return {"type": "power", "p": f.p}
    return {"type": "affine", "c0": f.c0, "c1": f.c1}


def problem_to_dict(problem: SwitchingProblem, grid: Optional[Grid1D] = None) -> dict:
    dyn = []
    for d in problem.dynamics:
        if isinstance(d, GBM):
            dyn.append({"type": "gbm", "b": d.b, "sigma": d.sigma})
        elif isinstance(d, OU):
            dyn.append({"type": "ou", "a": d.a, "mean": d.mean, "sigma": d.sigma})
        else:
            dyn.append({"type": "affine", "b0": d.b0, "b1": d.b1, "s0": d.s0, "s1": d.s1})
    c = problem.costs
    costs = ({"type": "constant", "matrix": [list(r) for r in c.matrix]} if isinstance(c, ConstantCosts)
             else {"type": "slippage", "K": c.K})
    t = problem.terminal
    if isinstance(t, ZeroTerminal):
        term = {"type": "zero"}
    elif isinstance(t, BuyLowTerminal):
        term = {"type": "buylow", "K": t.K, "C": t.C}
    elif isinstance(t, ConstantTerminal):
        term = {"type": "constant", "values": list(t.values)}
    else:
        term = {"type": "custom_grid", "x": list(t.x), "values": [list(r) for r in t.values]}
    doc = {
        "regimes": problem.regime_count,
        "dynamics": dyn,
        "reward": [_fn_dict(f) for f in problem.reward.psi],
        "phi": [_fn_dict(f) for f in problem.reward.phi],
        "kappa": list(problem.ambiguity.kappa),
        "costs": costs,
        "discount": problem.discount,
        "horizon": {"type": "infinite"} if problem.is_infinite else {"type": "finite", "T": problem.horizon.T},
        "terminal": term,
    }
    if problem.name:
        doc["name"] = problem.name
    if grid is not None:
        doc["grid"] = {"x_min": grid.x_min, "x_max": grid.x_max, "nx": grid.nx, "coord": grid.coord}
        if grid.nt is not None:
            doc["grid"]["nt"] = grid.nt
    return doc


def read_document(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg} (line {exc.lineno})", "/") from exc


def load_problem(path):
    """(problem, grid or None, raw document)."""
    doc = read_document(path)
    problem = problem_from_dict(doc)
    grid = None
    if "grid" in doc:
        g = doc["grid"]
        try:
            grid = Grid1D(float(g["x_min"]), float(g["x_max"]), int(g.get("nx", 801)), g.get("coord", "x"),
                          g.get("nt"), None if problem.is_infinite else problem.horizon.T)
        except ValueError as exc:
            raise SchemaError(str(exc), "/grid") from exc
    return problem, grid, doc


def save_problem(problem: SwitchingProblem, path, grid: Optional[Grid1D] = None) -> None:
    Path(path).write_text(canonical_json(problem_to_dict(problem, grid)) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Provenance and outputs
# ---------------------------------------------------------------------------

def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False, default=_default)


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def config_hash(doc) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=_default)
    return hashlib.sha256(blob.encode()).hexdigest()


def provenance(doc, seed: Optional[int] = None, **extra) -> dict:
    out = {"config_hash": config_hash(doc), "seed": seed, "version": __version__}
    out.update(extra)
    return out


def write_json(path, payload: dict) -> None:
    text = canonical_json(_finite(payload)) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def _finite(obj):
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _finite(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def write_csv(path, header: list, rows, prov: Optional[dict] = None) -> None:
    """CSV with provenance as a leading ``#`` comment line."""
    buf = _io.StringIO()
    if prov is not None:
        buf.write("# provenance: " + json.dumps(prov, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(path):
    """(header, rows) skipping ``#`` comment lines."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    return rows[0], rows[1:]


def surface_rows(surface):
    """(t, x, regime, value, binding) for every node; regimes are 1-based."""
    x = surface.grid.states
    for k, t in enumerate(surface.times):
        for i in range(surface.regime_count):
            v = surface.values[k, i]
            b = surface.switch_mask[k, i]
            for j in range(x.size):
                yield float(t), float(x[j]), i + 1, float(v[j]), bool(b[j])


SURFACE_COLUMNS = ["t", "x", "regime", "value", "binding"]


def write_surface_csv(path, surface, prov: Optional[dict] = None) -> None:
    write_csv(path, SURFACE_COLUMNS, surface_rows(surface), prov)


def surface_to_dict(surface, prov: Optional[dict] = None) -> dict:
    g = surface.grid
    out = {
        "grid": {"x_min": g.x_min, "x_max": g.x_max, "nx": g.nx, "coord": g.coord, "nt": g.nt, "T": g.T},
        "x": surface.grid.states,
        "times": surface.times,
        "values": surface.values,
        "switch_mask": surface.switch_mask.astype(int),
        "targets": np.where(surface.targets >= 0, surface.targets + 1, 0),
        "picard_iterations": surface.picard_iterations,
        "residual": surface.residual,
        "stationary": surface.stationary,
    }
    if prov is not None:
        out["provenance"] = prov
    return out
