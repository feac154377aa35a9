"""Campaign configuration: a versioned JSON document validated field by field.

Every section is normalized with its defaults filled in, so a config that
went through ``from_obj`` serializes to a fixed point of ``to_obj``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any

SCHEMA = "lab/campaign-1"

MODULES = ("ansatz", "solve", "freq", "blowup", "lipschitz", "whitney", "heleshaw")

# module -> modules it needs earlier in the same run
REQUIRES = {
    "freq": ("ansatz", "solve"),
    "lipschitz": ("ansatz", "solve"),
    "blowup": ("solve",),
    "whitney": ("solve",),
    "solve": (),
    "ansatz": (),
    "heleshaw": (),
}


class ConfigInvalid(ValueError):
    """Raised with one message per offending field."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# ----------------------------------------------------------------- checks


class _Errors:
    def __init__(self):
        self.items: list[str] = []

    def add(self, where: str, msg: str) -> None:
        self.items.append(f"{where}: {msg}")


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _keys(obj, allowed, where: str, err: _Errors) -> dict:
    if not isinstance(obj, dict):
        err.add(where, "must be an object")
        return {}
    for k in sorted(set(obj) - set(allowed)):
        err.add(f"{where}.{k}", "unknown key")
    return obj


def _num(obj, key, where, err, default=None, lo=None, hi=None, lo_open=False, hi_open=False, required=False, nullable=False):
    path = f"{where}.{key}"
    if key not in obj:
        if required:
            err.add(path, "missing")
        return default
    v = obj[key]
    if v is None and nullable:
        return None
    if not _is_num(v):
        err.add(path, "must be a finite number")
        return default
    if lo is not None and (v <= lo if lo_open else v < lo):
        err.add(path, f"must be {'>' if lo_open else '>='} {lo}")
    if hi is not None and (v >= hi if hi_open else v > hi):
        err.add(path, f"must be {'<' if hi_open else '<='} {hi}")
    return v


def _int(obj, key, where, err, default=None, lo=None, hi=None, required=False):
    path = f"{where}.{key}"
    if key not in obj:
        if required:
            err.add(path, "missing")
        return default
    v = obj[key]
    if not _is_int(v):
        err.add(path, "must be an integer")
        return default
    if lo is not None and v < lo:
        err.add(path, f"must be >= {lo}")
    if hi is not None and v > hi:
        err.add(path, f"must be <= {hi}")
    return v


def _choice(obj, key, where, err, options, default=None, required=False):
    path = f"{where}.{key}"
    if key not in obj:
        if required:
            err.add(path, "missing")
        return default
    v = obj[key]
    if v not in options:
        err.add(path, f"must be one of {', '.join(map(str, options))}")
        return default
    return v


def _str(obj, key, where, err, default=None, required=False):
    path = f"{where}.{key}"
    if key not in obj:
        if required:
            err.add(path, "missing")
        return default
    v = obj[key]
    if not isinstance(v, str) or not v.strip():
        err.add(path, "must be a nonempty string")
        return default
    return v


def _vector(obj, key, where, err, dim=None, default=None, required=False):
    path = f"{where}.{key}"
    if key not in obj:
        if required:
            err.add(path, "missing")
        return default
    v = obj[key]
    if not isinstance(v, list) or not all(_is_num(c) for c in v):
        err.add(path, "must be a list of numbers")
        return default
    if dim is not None and len(v) != dim:
        err.add(path, f"must have {dim} entries")
    return list(v)


def _poly_text(text, dim, path, err) -> None:
    from .polycore import parse_poly

    try:
        parse_poly(text, dim)
    except Exception as exc:  # parse errors of any kind are config errors
        err.add(path, f"bad polynomial: {exc}")


# ---------------------------------------------------------------- sections


def _problem(obj, err: _Errors) -> dict | None:
    if obj is None:
        return None
    where = "problem"
    kind = _choice(obj, "kind", where, err, ("ansatz", "quadratic", "polynomial"), required=True) if isinstance(obj, dict) else None
    if kind == "ansatz":
        _keys(obj, ("kind", "dim", "order", "nu", "sign", "p", "f", "rhs"), where, err)
        dim = _int(obj, "dim", where, err, 2, lo=2, hi=3)
        order = _int(obj, "order", where, err, 2, lo=2, hi=10)
        nu = _int(obj, "nu", where, err, dim, lo=1, hi=dim)
        sign = _choice(obj, "sign", where, err, (1, -1), 1)
        p = obj.get("p", [])
        if not isinstance(p, list) or not all(isinstance(s, str) for s in p):
            err.add(f"{where}.p", "must be a list of polynomial strings")
            p = []
        elif order is not None and len(p) != max(order - 2, 0):
            err.add(f"{where}.p", f"needs {max(order - 2, 0)} entries (orders 3..{order})")
        for i, s in enumerate(p):
            _poly_text(s, dim, f"{where}.p[{i}]", err)
        f = _str(obj, "f", where, err, "1")
        _poly_text(f, dim, f"{where}.f", err)
        rhs = _choice(obj, "rhs", where, err, ("analytic", "discrete"), "discrete")
        return {"kind": kind, "dim": dim, "order": order, "nu": nu, "sign": sign, "p": list(p), "f": f, "rhs": rhs}
    if kind == "quadratic":
        _keys(obj, ("kind", "rhs"), where, err)
        rhs = _choice(obj, "rhs", where, err, ("analytic", "discrete"), "analytic")
        return {"kind": kind, "rhs": rhs}
    if kind == "polynomial":
        _keys(obj, ("kind", "dim", "u", "rhs"), where, err)
        dim = _int(obj, "dim", where, err, 2, lo=2, hi=3)
        u = _str(obj, "u", where, err, None, required=True)
        if u is not None:
            _poly_text(u, dim, f"{where}.u", err)
        rhs = _choice(obj, "rhs", where, err, ("analytic", "discrete"), "discrete")
        return {"kind": kind, "dim": dim, "u": u, "rhs": rhs}
    if not isinstance(obj, dict):
        err.add(where, "must be an object")
    return None


def _grid(obj, err: _Errors) -> dict | None:
    if obj is None:
        return None
    where = "grid"
    _keys(obj, ("box", "n_cells", "h"), where, err)
    if not isinstance(obj, dict):
        return None
    box = _num(obj, "box", where, err, 1.0, lo=0, lo_open=True)
    if "n_cells" in obj and "h" in obj:
        err.add(where, "give n_cells or h, not both")
    if "h" in obj:
        h = _num(obj, "h", where, err, None, lo=0, lo_open=True)
        if h is None or h <= 0 or box is None or box <= 0:
            return None
        n = 2 * box / h
        if abs(n - round(n)) > 1e-9 * n or round(n) < 4:
            err.add(f"{where}.h", "must divide the box into at least 4 whole cells")
            return None
        n_cells = int(round(n))
    else:
        n_cells = _int(obj, "n_cells", where, err, 64, lo=4)
    return {"box": box, "n_cells": n_cells}


def _solver(obj, err: _Errors) -> dict:
    where = "solver"
    obj = _keys(obj if obj is not None else {}, ("omega", "tol", "max_iter", "nested"), where, err)
    omega = obj.get("omega", "auto")
    if omega != "auto" and not (_is_num(omega) and 0 < omega < 2):
        err.add(f"{where}.omega", "must be 'auto' or lie in (0, 2)")
        omega = "auto"
    tol = _num(obj, "tol", where, err, 1e-10, lo=0, lo_open=True)
    max_iter = _int(obj, "max_iter", where, err, 200000, lo=1)
    nested = obj.get("nested", True)
    if not isinstance(nested, bool):
        err.add(f"{where}.nested", "must be true or false")
        nested = True
    return {"omega": omega, "tol": tol, "max_iter": max_iter, "nested": nested}


def _analysis(obj, dim: int, err: _Errors) -> dict:
    where = "analysis"
    obj = _keys(
        obj if obj is not None else {},
        ("center", "gamma", "lam", "eps", "beta", "theta", "maxk", "r_min_cells", "r_max", "kappa", "drift_tol", "lipschitz_cap", "whitney"),
        where,
        err,
    )
    center = _vector(obj, "center", where, err, dim, [0.0] * dim)
    out = {
        "center": center,
        "gamma": _num(obj, "gamma", where, err, None, lo=0, lo_open=True, nullable=True),
        "lam": _num(obj, "lam", where, err, None, lo=0, nullable=True),
        "eps": _num(obj, "eps", where, err, 0.5, lo=0, hi=1, lo_open=True),
        "beta": _num(obj, "beta", where, err, 0.05, lo=0, hi=1, lo_open=True, hi_open=True),
        "theta": _num(obj, "theta", where, err, 0.5, lo=0, hi=1, lo_open=True),
        "maxk": _int(obj, "maxk", where, err, 3, lo=2, hi=10),
        "r_min_cells": _num(obj, "r_min_cells", where, err, 8, lo=4),
        "r_max": _num(obj, "r_max", where, err, None, lo=0, lo_open=True, nullable=True),
        "kappa": _num(obj, "kappa", where, err, 10.0, lo=0),
        "drift_tol": _num(obj, "drift_tol", where, err, 1e-6, lo=0),
        "lipschitz_cap": _num(obj, "lipschitz_cap", where, err, 1e6, lo=0, lo_open=True),
    }
    w = _keys(obj.get("whitney", {}), ("k", "points", "x_min", "stride", "radii_cells"), f"{where}.whitney", err)
    ww = f"{where}.whitney"
    rc = w.get("radii_cells", [32, 64])
    if not isinstance(rc, list) or not rc or not all(_is_num(c) and c > 0 for c in rc):
        err.add(f"{ww}.radii_cells", "must be a nonempty list of positive numbers")
        rc = [32, 64]
    out["whitney"] = {
        "k": _int(w, "k", ww, err, 3, lo=1, hi=6),
        "points": _int(w, "points", ww, err, 9, lo=2),
        "x_min": _num(w, "x_min", ww, err, None, nullable=True),
        "stride": _int(w, "stride", ww, err, 1, lo=1),
        "radii_cells": list(rc),
    }
    return out


def _family(obj, err: _Errors) -> dict | None:
    if obj is None:
        return None
    where = "family"
    if not isinstance(obj, dict):
        err.add(where, "must be an object")
        return None
    kind = _choice(obj, "kind", where, err, ("pinch", "heleshaw"), required=True)
    common = ("kind", "n_cells", "times", "detect", "cleaning", "annulus", "mono_tol")
    if kind == "pinch":
        _keys(obj, common + ("depth", "width"), where, err)
        out = {
            "kind": kind,
            "n_cells": _int(obj, "n_cells", where, err, 128, lo=8),
            "depth": _num(obj, "depth", where, err, 0.7, lo=0, hi=1, hi_open=True),
            "width": _num(obj, "width", where, err, 0.5, lo=0, lo_open=True),
        }
    elif kind == "heleshaw":
        _keys(obj, common + ("box", "radius", "cap"), where, err)
        out = {
            "kind": kind,
            "n_cells": _int(obj, "n_cells", where, err, 256, lo=8),
            "box": _num(obj, "box", where, err, 2.0, lo=0, lo_open=True),
            "radius": _num(obj, "radius", where, err, 0.2, lo=0, lo_open=True),
            "cap": _num(obj, "cap", where, err, 0.0, lo=0),
        }
        if out["radius"] is not None and out["box"] is not None and out["radius"] >= out["box"]:
            err.add(f"{where}.radius", "must be smaller than the box")
    else:
        return None
    out["mono_tol"] = _num(obj, "mono_tol", where, err, 1e-9, lo=0)
    t = obj.get("times")
    tw = f"{where}.times"
    if not isinstance(t, dict):
        err.add(tw, "must be an object")
        t = {}
    mode = _choice(t, "mode", tw, err, ("list", "pinch"), required=True)
    if mode == "list":
        _keys(t, ("mode", "values"), tw, err)
        vals = _vector(t, "values", tw, err, None, [], required=True)
        if vals is not None and len(vals) < 2:
            err.add(f"{tw}.values", "needs at least two times")
        out["times"] = {"mode": mode, "values": vals}
    elif mode == "pinch":
        _keys(t, ("mode", "bracket", "tol", "first", "last", "count"), tw, err)
        br = _vector(t, "bracket", tw, err, 2, [0.0, 1.0], required=True)
        if br and len(br) == 2 and not br[0] < br[1]:
            err.add(f"{tw}.bracket", "must be increasing")
        first = _num(t, "first", tw, err, 1e-5, lo=0, lo_open=True)
        last = _num(t, "last", tw, err, 0.1, lo=0, lo_open=True)
        if first is not None and last is not None and first >= last:
            err.add(f"{tw}.last", "must exceed first")
        out["times"] = {
            "mode": mode,
            "bracket": br,
            "tol": _num(t, "tol", tw, err, 1e-7, lo=0, lo_open=True),
            "first": first,
            "last": last,
            "count": _int(t, "count", tw, err, 40, lo=3),
        }
    d = _keys(obj.get("detect", {}), ("kappa", "tau", "radii_cells", "stationary_tol"), f"{where}.detect", err)
    dw = f"{where}.detect"
    rc = d.get("radii_cells", [8, 16])
    if not isinstance(rc, list) or not rc or not all(_is_num(c) and c > 0 for c in rc):
        err.add(f"{dw}.radii_cells", "must be a nonempty list of positive numbers")
        rc = [8, 16]
    out["detect"] = {
        "kappa": _num(d, "kappa", dw, err, 0.0, lo=0),
        "tau": _num(d, "tau", dw, err, 0.25, lo=0, hi=1, lo_open=True),
        "radii_cells": list(rc),
        "stationary_tol": _num(d, "stationary_tol", dw, err, 1e-10, lo=0),
    }
    c = _keys(obj.get("cleaning", {}), ("k", "R", "center", "exponent_band"), f"{where}.cleaning", err)
    cw = f"{where}.cleaning"
    band = _vector(c, "exponent_band", cw, err, 2, [1.5, 2.5])
    out["cleaning"] = {
        "k": _int(c, "k", cw, err, 2, lo=1),
        "R": _num(c, "R", cw, err, 0.5, lo=0, lo_open=True),
        "center": _vector(c, "center", cw, err, 2, [0.0, 0.0]),
        "exponent_band": band,
    }
    ann = obj.get("annulus")
    if ann is not None:
        ann = _vector(obj, "annulus", where, err, 2, None)
        if ann and len(ann) == 2 and not 0 <= ann[0] < ann[1]:
            err.add(f"{where}.annulus", "must satisfy 0 <= inner < outer")
    out["annulus"] = ann
    return out


# ------------------------------------------------------------------ config


@dataclass(frozen=True)
class CampaignConfig:
    name: str
    modules: tuple[str, ...]
    problem: dict | None
    grid: dict | None
    solver: dict
    analysis: dict
    family: dict | None
    plots: bool = False

    @classmethod
    def from_obj(cls, obj: Any) -> "CampaignConfig":
        err = _Errors()
        if not isinstance(obj, dict):
            raise ConfigInvalid(["config: must be a JSON object"])
        _keys(obj, ("schema", "name", "modules", "problem", "grid", "solver", "analysis", "family", "plots"), "config", err)
        if obj.get("schema") != SCHEMA:
            err.add("config.schema", f"must be {SCHEMA!r}")
        name = _str(obj, "name", "config", err, "campaign")
        mods = obj.get("modules", [])
        if not isinstance(mods, list) or not all(isinstance(m, str) for m in mods):
            err.add("config.modules", "must be a list of module names")
            mods = []
        for m in mods:
            if m not in MODULES:
                err.add("config.modules", f"unknown module {m!r}")
        if len(set(mods)) != len(mods):
            err.add("config.modules", "repeated module")
        mods = tuple(m for m in MODULES if m in mods)
        for m in mods:
            for need in REQUIRES[m]:
                if need not in mods:
                    err.add("config.modules", f"{m} requires {need}")
        problem = _problem(obj.get("problem"), err)
        grid = _grid(obj.get("grid"), err)
        needs_problem = any(m in mods for m in ("ansatz", "solve"))
        if needs_problem and problem is None and "problem" not in obj:
            err.add("config.problem", "required by the selected modules")
        if "solve" in mods and grid is None and "grid" not in obj:
            err.add("config.grid", "required by the solve module")
        if "ansatz" in mods and problem is not None and problem["kind"] != "ansatz":
            err.add("config.modules", "ansatz needs an ansatz problem")
        dim = problem.get("dim", 2) if problem else 2
        solver = _solver(obj.get("solver"), err)
        analysis = _analysis(obj.get("analysis"), dim, err)
        family = _family(obj.get("family"), err)
        if "heleshaw" in mods and family is None and "family" not in obj:
            err.add("config.family", "required by the heleshaw module")
        plots = obj.get("plots", False)
        if not isinstance(plots, bool):
            err.add("config.plots", "must be true or false")
        if err.items:
            raise ConfigInvalid(err.items)
        return cls(name, mods, problem, grid, solver, analysis, family, bool(plots))

    def to_obj(self) -> dict:
        return {
            "schema": SCHEMA,
            "name": self.name,
            "modules": list(self.modules),
            "problem": self.problem,
            "grid": self.grid,
            "solver": self.solver,
            "analysis": self.analysis,
            "family": self.family,
            "plots": self.plots,
        }

    def canonical(self) -> str:
        return canonical_json(self.to_obj())

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def load_config(path) -> CampaignConfig:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid([f"config: not valid JSON ({exc})"]) from exc
    return CampaignConfig.from_obj(obj)


def frac_text(v) -> str:
    return str(Fraction(v).limit_denominator(10**9))
