"""Declarative experiment files: validation, defaults, execution, outputs.

A scenario is a YAML mapping with a ``kind`` and optional sections
``metric``, ``grid``, ``mask``, ``variation``, ``schedule``, ``accuracy``,
``tolerance``, ``output`` and ``seed``. Validation reports every problem at
once; every default that gets filled in is listed in the echo block.
"""

from __future__ import annotations

import copy
import csv
import difflib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import __version__
from .asymptotics import geometric_schedule, model_dict
from .catalog import CATALOG, build, random_bump_variations, sphere_oracle, flat_torus_oracle
from .chart import box_mask, build_grid
from .errors import ScenarioError, TopovarError

SCHEMA_VERSION = 1

KINDS = (
    "curvature-check",
    "geometric-derivative",
    "disconnected-sweep",
    "connected-sweep",
    "quadratic-sweep",
    "egb-limit",
    "blowup",
)

TOP_KEYS = ("kind", "metric", "grid", "mask", "variation", "schedule", "accuracy", "tolerance", "output", "seed")
SECTION_KEYS = {
    "metric": ("name", "n", "params", "file"),
    "grid": ("bounds", "counts", "periodic"),
    "mask": ("kind", "layers", "lower", "upper"),
    "schedule": ("eps0", "count", "ratio", "values"),
    "output": ("csv", "json", "echo"),
}
VARIATION_KEYS = {
    "curvature-check": (),
    "geometric-derivative": ("count", "candidates", "radius", "jitter", "step", "min_alignment"),
    "disconnected-sweep": ("component", "dim", "radius", "periods", "action"),
    "connected-sweep": ("point", "collars", "cutoff", "cap", "unit_counts", "cap_euler", "eps_max"),
    "quadratic-sweep": ("component", "dim", "radius", "periods", "coefficients"),
    "egb-limit": ("component", "radius", "periods", "alpha", "euler"),
    "blowup": ("gamma", "theta", "delta", "periods", "t_nodes", "x_nodes", "route_check"),
}
TOLERANCE_DEFAULTS = {
    "curvature-check": {"oracle_rel": 0.05, "route_rel": 0.05},
    "geometric-derivative": {"rel": 1e-4},
    "disconnected-sweep": {"exponent": 1e-6},
    "connected-sweep": {"rel": 1e-3},
    "quadratic-sweep": {"exponent": 1e-6},
    "egb-limit": {"cgb_rel": 1e-8},
    "blowup": {"c1_abs": 1e-6, "c_m1_rel": 1e-3},
}
COMPONENTS = ("sphere", "flat_torus", "custom")
MASK_KINDS = ("all", "interior", "box")
PERIODIC_ENTRIES = ("flat_torus", "perturbed_torus")
UNIT_COUNTS = {2: 41, 3: 21, 4: 17, 5: 11}
GRADIENT_COUNTS = {2: 48, 3: 32, 4: 22}


@dataclass
class ScenarioConfig:
    """Validated scenario with every default filled in."""

    kind: str
    data: dict
    defaults_applied: list = field(default_factory=list)
    source: str = None

    def echo(self) -> dict:
        return {"config": _plain(self.data), "defaults_applied": sorted(self.defaults_applied)}


# --------------------------------------------------------------------------
# validation


class _Checker:
    def __init__(self):
        self.errors = []
        self.defaults = []

    def err(self, msg):
        self.errors.append(msg)

    def unknown(self, where: str, given, allowed) -> None:
        for key in given:
            if key not in allowed:
                near = difflib.get_close_matches(str(key), list(allowed), n=1, cutoff=0.5)
                hint = f"; did you mean {near[0]!r}?" if near else f"; valid keys: {', '.join(allowed)}"
                self.err(f"{where}: unknown key {key!r}{hint}")

    def default(self, section: dict, key: str, value, path: str):
        if key not in section or section[key] is None:
            section[key] = copy.deepcopy(value)
            self.defaults.append(path)
        return section[key]

    def number(self, value, path, lo=None, hi=None, integer=False, lo_open=False):
        try:
            x = int(value) if integer else float(value)
        except (TypeError, ValueError):
            self.err(f"{path}: expected {'an integer' if integer else 'a number'}, got {value!r}")
            return None
        if integer and float(value) != x:
            self.err(f"{path}: expected an integer, got {value!r}")
            return None
        if not math.isfinite(x):
            self.err(f"{path}: must be finite")
            return None
        below = lo is not None and (x <= lo if lo_open else x < lo)
        if below or (hi is not None and x > hi):
            left = "(" if lo_open else "["
            self.err(f"{path}: {x} outside the documented range {left}{lo if lo is not None else '-inf'}, {hi if hi is not None else 'inf'}]")
            return None
        return x


def _section(raw: dict, key: str, chk: _Checker) -> dict:
    val = raw.get(key)
    if val is None:
        val = {}
        raw[key] = val
    if not isinstance(val, dict):
        chk.err(f"{key}: expected a mapping, got {type(val).__name__}")
        raw[key] = {}
        return raw[key]
    return val


def _suggest_catalog(name: str) -> str:
    names = list(CATALOG)
    near = difflib.get_close_matches(name, names, n=1, cutoff=0.0)
    for cand in names:
        if cand.startswith(name) or name in cand:
            return cand
    return near[0] if near else names[0]


def _check_metric(cfg: dict, kind: str, chk: _Checker, default: dict) -> int:
    sec = _section(cfg, "metric", chk)
    chk.unknown("metric", sec, SECTION_KEYS["metric"])
    if "file" in sec and sec["file"]:
        path = str(sec["file"])
        if not os.path.isfile(path):
            chk.err(f"metric.file: {path!r} does not exist")
        return None
    if not sec.get("name"):
        for key, val in default.items():
            chk.default(sec, key, val, f"metric.{key}")
    name = sec.get("name")
    if name not in CATALOG:
        chk.err(f"metric.name: unknown catalog entry {name!r}; did you mean {_suggest_catalog(str(name))!r}?")
    chk.default(sec, "params", {}, "metric.params")
    if not isinstance(sec["params"], dict):
        chk.err("metric.params: expected a mapping")
        sec["params"] = {}
    elif name in CATALOG:
        allowed = tuple(p for p in CATALOG[name].params if p not in ("n", "counts", "periods")) + (
            ("background",) if name == "random_smooth" else ())
        chk.unknown(f"metric.params ({name})", sec["params"], allowed)
    n = sec.get("n")
    if n is not None:
        n = chk.number(n, "metric.n", 2, 8, integer=True)
    return n


def _check_grid(cfg: dict, chk: _Checker, n, periodic_default: bool, counts_default: int, lo=-0.5, hi=0.5) -> int:
    sec = _section(cfg, "grid", chk)
    chk.unknown("grid", sec, SECTION_KEYS["grid"])
    if "bounds" in sec and sec["bounds"] is not None:
        try:
            n_grid = len(sec["bounds"])
        except TypeError:
            chk.err("grid.bounds: expected a list of [lo, hi] pairs")
            return n
        if n is not None and n_grid != n:
            chk.err(f"grid.bounds: {n_grid} axes but metric.n = {n}")
        n = n_grid
    if n is None:
        chk.err("grid: give grid.bounds or metric.n")
        return None
    if periodic_default:
        lo, hi = 0.0, 2 * math.pi
    chk.default(sec, "bounds", [[lo, hi]] * n, "grid.bounds")
    chk.default(sec, "counts", [counts_default] * n, "grid.counts")
    chk.default(sec, "periodic", [periodic_default] * n, "grid.periodic")
    for key in ("counts", "periodic"):
        if isinstance(sec[key], (int, bool)) and not isinstance(sec[key], list):
            sec[key] = [sec[key]] * n
        if len(sec[key]) != n:
            chk.err(f"grid.{key}: expected {n} entries, got {len(sec[key])}")
    for i, c in enumerate(sec["counts"]):
        chk.number(c, f"grid.counts[{i}]", 5, 4096, integer=True)
    for i, b in enumerate(sec["bounds"]):
        if not isinstance(b, (list, tuple)) or len(b) != 2:
            chk.err(f"grid.bounds[{i}]: expected [lo, hi]")
        elif chk.number(b[0], f"grid.bounds[{i}][0]") is not None and chk.number(b[1], f"grid.bounds[{i}][1]") is not None:
            if not float(b[1]) > float(b[0]):
                chk.err(f"grid.bounds[{i}]: hi must exceed lo")
    return n


def _check_mask(cfg: dict, chk: _Checker, n, default_kind: str):
    sec = _section(cfg, "mask", chk)
    chk.unknown("mask", sec, SECTION_KEYS["mask"])
    kind = chk.default(sec, "kind", default_kind, "mask.kind")
    if kind not in MASK_KINDS:
        chk.err(f"mask.kind: {kind!r} not one of {MASK_KINDS}")
    if kind == "interior":
        chk.default(sec, "layers", 2, "mask.layers")
        chk.number(sec["layers"], "mask.layers", 0, 64, integer=True)
    if kind == "box":
        for key in ("lower", "upper"):
            if key not in sec or n is None or len(sec[key]) != n:
                chk.err(f"mask.{key}: box masks need {n} coordinates")


def _check_schedule(cfg: dict, chk: _Checker, eps0, count, ratio=0.5):
    sec = _section(cfg, "schedule", chk)
    chk.unknown("schedule", sec, SECTION_KEYS["schedule"])
    if sec.get("values") is not None:
        vals = sec["values"]
        if not isinstance(vals, list) or len(vals) < 4:
            chk.err("schedule.values: expected a list of at least 4 numbers")
            return
        nums = [chk.number(v, f"schedule.values[{i}]", 0, None, lo_open=True) for i, v in enumerate(vals)]
        if None not in nums and not all(a > b for a, b in zip(nums, nums[1:])):
            chk.err("schedule.values: must be strictly decreasing")
        return
    if eps0 is not None:
        chk.default(sec, "eps0", eps0, "schedule.eps0")
    if "eps0" in sec:
        chk.number(sec["eps0"], "schedule.eps0", 0, None, lo_open=True)
    chk.default(sec, "count", count, "schedule.count")
    chk.number(sec["count"], "schedule.count", 4, 64, integer=True)
    chk.default(sec, "ratio", ratio, "schedule.ratio")
    r = chk.number(sec["ratio"], "schedule.ratio", 0, 1, lo_open=True)
    if r is not None and r >= 1:
        chk.err("schedule.ratio: must be < 1")


def _check_component(var: dict, chk: _Checker, dim_default, allow_custom=True):
    comp = chk.default(var, "component", "sphere", "variation.component")
    allowed = COMPONENTS if allow_custom else COMPONENTS[:2]
    if comp not in allowed:
        near = difflib.get_close_matches(str(comp), allowed, n=1, cutoff=0.0)
        chk.err(f"variation.component: {comp!r} not one of {allowed}; did you mean {near[0]!r}?")
    if dim_default is not None:
        chk.default(var, "dim", dim_default, "variation.dim")
        chk.number(var["dim"], "variation.dim", 2, 12, integer=True)
    if comp == "sphere":
        chk.default(var, "radius", 1.0, "variation.radius")
        chk.number(var["radius"], "variation.radius", 0, None, lo_open=True)
    elif comp == "flat_torus":
        d = int(var.get("dim", 4))
        chk.default(var, "periods", [2 * math.pi] * d, "variation.periods")
    elif comp == "custom":
        if "action" not in var:
            chk.err("variation.action: custom components need an action value")


def _validate(raw: dict) -> tuple:
    chk = _Checker()
    cfg = copy.deepcopy(raw)
    chk.unknown("scenario", cfg, TOP_KEYS)
    kind = cfg.get("kind")
    if kind not in KINDS:
        near = difflib.get_close_matches(str(kind), KINDS, n=1, cutoff=0.0)
        chk.err(f"kind: {kind!r} is not a known experiment kind; did you mean {near[0]!r}?")
        return cfg, chk
    chk.default(cfg, "seed", 0, "seed")
    chk.number(cfg["seed"], "seed", 0, 2 ** 64 - 1, integer=True)
    var = _section(cfg, "variation", chk)
    chk.unknown(f"variation ({kind})", var, VARIATION_KEYS[kind])
    tol = _section(cfg, "tolerance", chk)
    chk.unknown(f"tolerance ({kind})", tol, tuple(TOLERANCE_DEFAULTS[kind]))
    for key, val in TOLERANCE_DEFAULTS[kind].items():
        chk.default(tol, key, val, f"tolerance.{key}")
        chk.number(tol[key], f"tolerance.{key}", 0, None, lo_open=True)
    out = _section(cfg, "output", chk)
    chk.unknown("output", out, SECTION_KEYS["output"])
    chk.default(out, "csv", f"{kind}.csv", "output.csv")
    chk.default(out, "json", "summary.json", "output.json")
    chk.default(out, "echo", "echo.yaml", "output.echo")

    if kind in ("curvature-check", "geometric-derivative", "connected-sweep"):
        if kind == "geometric-derivative":
            mdefault = {"name": "perturbed_torus", "n": 3, "params": {"amplitude": 0.1, "radius": 2.8}}
            acc = 4
        elif kind == "connected-sweep":
            mdefault = {"name": "flat", "n": 4}
            acc = 2
        else:
            mdefault = {"name": "flat", "n": 3}
            acc = 2
        n = _check_metric(cfg, kind, chk, mdefault)
        name = cfg["metric"].get("name")
        from_file = bool(cfg["metric"].get("file"))
        if not from_file:
            periodic = name in PERIODIC_ENTRIES
            if kind == "geometric-derivative":
                counts = GRADIENT_COUNTS.get(n or 3, 16)
            elif kind == "connected-sweep":
                counts = 21
            else:
                counts = 11
            lo, hi = (-1.0, 1.0) if kind == "connected-sweep" else (-0.5, 0.5)
            n = _check_grid(cfg, chk, n, periodic, counts, lo, hi)
        elif "grid" in cfg and cfg["grid"]:
            chk.err("grid: not allowed together with metric.file (the file carries its grid)")
        chk.default(cfg, "accuracy", acc, "accuracy")
        if cfg["accuracy"] not in (2, 4):
            chk.err(f"accuracy: {cfg['accuracy']!r} not one of (2, 4)")
        _check_mask(cfg, chk, n, "all" if kind == "geometric-derivative" else "interior")
        if kind == "geometric-derivative":
            chk.default(var, "count", 5, "variation.count")
            chk.number(var["count"], "variation.count", 1, 100, integer=True)
            chk.default(var, "candidates", 4 * int(var["count"]), "variation.candidates")
            chk.default(var, "radius", 2.5, "variation.radius")
            chk.default(var, "jitter", 0.5, "variation.jitter")
            chk.default(var, "step", 1e-4, "variation.step")
            chk.default(var, "min_alignment", 0.25, "variation.min_alignment")
            chk.number(var["step"], "variation.step", 0, 1, lo_open=True)
            chk.number(var["min_alignment"], "variation.min_alignment", 0, 1)
        if kind == "connected-sweep":
            chk.default(var, "collars", [0.5, 0.8], "variation.collars")
            c = var["collars"]
            if not (isinstance(c, (list, tuple)) and len(c) == 2 and 0 < float(c[0]) < float(c[1]) < 1):
                chk.err(f"variation.collars: need 0 < e1 < e2 < 1, got {c!r}")
            chk.default(var, "cutoff", "smoothstep", "variation.cutoff")
            chk.default(var, "cap", {"name": "conformal_bump", "params": {"radius": 0.45, "amplitude": 0.3}}, "variation.cap")
            cap = var["cap"]
            if not isinstance(cap, dict) or cap.get("name") not in CATALOG:
                cname = cap.get("name") if isinstance(cap, dict) else cap
                chk.err(f"variation.cap.name: unknown catalog entry {cname!r}; did you mean {_suggest_catalog(str(cname))!r}?")
            else:
                chk.unknown("variation.cap", cap, ("name", "params"))
                chk.default(cap, "params", {}, "variation.cap.params")
            chk.default(var, "cap_euler", 0, "variation.cap_euler")
            if n is not None:
                chk.default(var, "unit_counts", UNIT_COUNTS.get(n, 11), "variation.unit_counts")
                uc = chk.number(var["unit_counts"], "variation.unit_counts", 7, 101, integer=True)
                if uc is not None and uc % 2 == 0:
                    chk.err("variation.unit_counts: must be odd")
                if "point" in var and len(var["point"]) != n:
                    chk.err(f"variation.point: expected {n} coordinates")
            _check_schedule(cfg, chk, None, 20)
    elif kind == "disconnected-sweep":
        _check_component(var, chk, 4)
        _check_schedule(cfg, chk, 0.1, 24)
    elif kind == "quadratic-sweep":
        _check_component(var, chk, 6, allow_custom=False)
        chk.default(var, "coefficients", {"Lambda": 0.0, "alpha": 1.0, "beta": 0.0, "gamma": 0.0}, "variation.coefficients")
        coeffs = var["coefficients"]
        chk.unknown("variation.coefficients", coeffs, ("Lambda", "alpha", "beta", "gamma"))
        for key in ("Lambda", "alpha", "beta", "gamma"):
            chk.default(coeffs, key, 0.0, f"variation.coefficients.{key}")
            chk.number(coeffs[key], f"variation.coefficients.{key}")
        _check_schedule(cfg, chk, 0.1, 24)
    elif kind == "egb-limit":
        var.setdefault("dim", 4)
        _check_component(var, chk, None, allow_custom=False)
        var.pop("dim", None)
        chk.default(var, "alpha", 1.0, "variation.alpha")
        chk.number(var["alpha"], "variation.alpha")
        _check_schedule(cfg, chk, 0.1, 24)
    elif kind == "blowup":
        chk.default(var, "gamma", [[1.0, 0.0], [0.0, 1.0]], "variation.gamma")
        chk.default(var, "theta", [[1.0, 0.0], [0.0, -1.0]], "variation.theta")
        chk.default(var, "delta", 0.1, "variation.delta")
        chk.number(var["delta"], "variation.delta", 0, None, lo_open=True)
        d = len(var["gamma"])
        chk.default(var, "periods", [2 * math.pi] * d, "variation.periods")
        chk.default(var, "t_nodes", 128, "variation.t_nodes")
        chk.default(var, "x_nodes", 32, "variation.x_nodes")
        chk.number(var["t_nodes"], "variation.t_nodes", 8, 4096, integer=True)
        chk.number(var["x_nodes"], "variation.x_nodes", 5, 1024, integer=True)
        chk.default(var, "route_check", False, "variation.route_check")
        chk.default(cfg, "accuracy", 4, "accuracy")
        if cfg["accuracy"] not in (2, 4):
            chk.err(f"accuracy: {cfg['accuracy']!r} not one of (2, 4)")
        _check_schedule(cfg, chk, 0.2, 13)
    return cfg, chk


def parse_scenario(source) -> ScenarioConfig:
    """Validate a scenario from a YAML path or an already-loaded mapping.

    Raises ScenarioError carrying every validation message.
    """
    path = None
    if isinstance(source, dict):
        raw = source
    else:
        path = os.fspath(source)
        try:
            with open(path, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh)
        except OSError as exc:
            raise ScenarioError([f"cannot read scenario: {exc}"]) from None
        except yaml.YAMLError as exc:
            raise ScenarioError([f"malformed YAML: {exc}"]) from None
    if not isinstance(raw, dict):
        raise ScenarioError(["scenario must be a mapping at the top level"])
    cfg, chk = _validate(raw)
    if chk.errors:
        raise ScenarioError(chk.errors)
    return ScenarioConfig(cfg["kind"], cfg, chk.defaults, path)


# --------------------------------------------------------------------------
# execution helpers


def _plain(obj):
    """Convert numpy scalars/arrays and tuples into JSON/YAML-friendly values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def _schedule(cfg: dict, fallback=None) -> np.ndarray:
    sec = cfg["schedule"]
    if sec.get("values") is not None:
        return np.asarray(sec["values"], dtype=float)
    eps0 = sec.get("eps0", fallback)
    return geometric_schedule(float(eps0), int(sec["count"]), float(sec["ratio"]))


def _metric(cfg: dict):
    from .fieldio import read_field

    sec = cfg["metric"]
    if sec.get("file"):
        g = read_field(sec["file"])
        return g
    gs = cfg["grid"]
    grid = build_grid(gs["bounds"], gs["counts"], gs["periodic"])
    params = dict(sec.get("params") or {})
    if sec["name"] in ("random_smooth", "random_polynomial"):
        params.setdefault("seed", int(cfg["seed"]))
    return build(sec["name"], grid, **params)


def _mask(cfg: dict, grid):
    from .curvature import interior_mask

    sec = cfg["mask"]
    if sec["kind"] == "all":
        return None
    if sec["kind"] == "interior":
        return interior_mask(grid, int(sec["layers"]))
    return box_mask(grid, sec["lower"], sec["upper"])


def _component(var: dict):
    comp = var["component"]
    dim = int(var.get("dim", 4))
    if comp == "sphere":
        return sphere_oracle(dim, float(var["radius"]))
    if comp == "flat_torus":
        return flat_torus_oracle(dim, var["periods"])
    return {"n": dim, "action": float(var["action"])}


class _Assertions:
    def __init__(self):
        self.items = []

    def add(self, name, passed, value=None, tolerance=None, expected=None):
        self.items.append({"name": name, "passed": bool(passed), "value": value, "expected": expected, "tolerance": tolerance})

    @property
    def ok(self):
        return all(a["passed"] for a in self.items)


def _write_csv(path: str, columns: dict) -> None:
    keys = list(columns)
    rows = zip(*[np.asarray(columns[k], dtype=float).ravel() for k in keys])
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for row in rows:
            w.writerow([format(float(v), ".17g") for v in row])


# --------------------------------------------------------------------------
# pipelines: each returns (columns, results) and records assertions


def _run_curvature_check(cfg, asrt, threads):
    from .catalog import get_entry
    from .curvature import scalar_curvature

    g = _metric(cfg)
    acc = int(cfg["accuracy"])
    mask = _mask(cfg, g.grid)
    sel = np.ones(g.grid.shape, bool) if mask is None else mask
    R_d = scalar_curvature(g, "direct", acc).values
    R_c = scalar_curvature(g, "christoffel", acc).values
    tol = cfg["tolerance"]
    scale = max(1.0, float(np.max(np.abs(R_c[sel]))))
    route_rel = float(np.max(np.abs(R_d[sel] - R_c[sel]))) / scale
    asrt.add("direct_vs_christoffel", route_rel <= tol["route_rel"], route_rel, tol["route_rel"])
    results = {"max_abs_R": scale, "route_rel": route_rel, "nodes": int(sel.sum())}
    cols = {f"x{i}": g.grid.coords()[..., i][sel] for i in range(g.dim)}
    cols["R_direct"] = R_d[sel]
    cols["R_christoffel"] = R_c[sel]
    name = cfg["metric"].get("name")
    oracle_R = None
    if name == "flat":
        oracle_R = 0.0
    elif name == "sphere_stereographic":
        oracle_R = float(get_entry(name).oracle(g.dim, **cfg["metric"]["params"])["R"])
    if oracle_R is not None:
        ref = max(1.0, abs(oracle_R))
        err = float(np.max(np.abs(R_d[sel] - oracle_R))) / ref
        asrt.add("oracle_scalar", err <= tol["oracle_rel"], err, tol["oracle_rel"], oracle_R)
        results["oracle_R"] = oracle_R
        results["oracle_rel"] = err
        cols["R_oracle"] = np.full(int(sel.sum()), oracle_R)
    return cols, results


def _run_geometric_derivative(cfg, asrt, threads):
    from .curvature import gradient_check

    g = _metric(cfg)
    var = cfg["variation"]
    acc = int(cfg["accuracy"])
    mask = _mask(cfg, g.grid)
    hs = random_bump_variations(g.grid, int(var["candidates"]), int(cfg["seed"]), float(var["radius"]), float(var["jitter"]))
    recs = gradient_check(g, hs, float(var["step"]), mask, acc, float(var["min_alignment"]), int(var["count"]))
    used = [r for r in recs if r["used"]]
    tol = cfg["tolerance"]["rel"]
    asrt.add("enough_directions", len(used) >= int(var["count"]), len(used), None, int(var["count"]))
    for i, r in enumerate(used):
        asrt.add(f"direction_{i}", r["rel_error"] <= tol, r["rel_error"], tol)
    nan = float("nan")
    cols = {
        "index": np.arange(len(recs)),
        "used": [float(r["used"]) for r in recs],
        "alignment": [r["alignment"] for r in recs],
        "gradient": [r["gradient"] for r in recs],
        "central_difference": [r.get("central_difference", nan) for r in recs],
        "rel_error": [r.get("rel_error", nan) for r in recs],
        "scaled_error": [r.get("scaled_error", nan) for r in recs],
    }
    results = {
        "drawn": len(recs),
        "used": len(used),
        "max_rel_error": max((r["rel_error"] for r in used), default=nan),
        "max_scaled_error": max((r["scaled_error"] for r in used), default=nan),
    }
    return cols, results


def _run_disconnected(cfg, asrt, threads):
    from .disconnected import DisconnectedConfig, continuity_jump, topological_derivative_disconnected

    var = cfg["variation"]
    oracle = _component(var)
    dc = DisconnectedConfig(int(oracle["n"]), float(oracle["action"]))
    eps = _schedule(cfg)
    cls, sweep = topological_derivative_disconnected(dc, eps)
    fit = sweep.model
    expected_k = (dc.dim - 4) / 2
    tol = cfg["tolerance"]["exponent"]
    if hasattr(fit, "k"):
        asrt.add("quotient_exponent", abs(fit.k - expected_k) <= tol, fit.k, tol, expected_k)
    asrt.add("classification_consistent", True, cls.kind)
    jump = continuity_jump(dc, eps)
    results = {
        "classification": cls.as_dict(),
        "component_action": dc.component_action,
        "fit": model_dict(fit),
        "limit": model_dict(sweep.diagnostics.get("limit")),
        "continuity": {"limit": jump["limit"], "continuous": jump["continuous"]},
    }
    return sweep.columns, results


def _run_connected(cfg, asrt, threads):
    from .catalog import build as build_cap
    from .surgery import default_schedule, make_template, topological_derivative_connected, unit_ball_grid

    g = _metric(cfg)
    var = cfg["variation"]
    mask = _mask(cfg, g.grid)
    n = g.dim
    unit = unit_ball_grid(n, int(var["unit_counts"]))
    cap_params = dict(var["cap"].get("params") or {})
    cap = build_cap(var["cap"]["name"], unit, **cap_params)
    point = var.get("point")
    if point is None:
        point = [0.5 * (a + b) for a, b in g.grid.bounds]
    tpl = make_template(point, cap, tuple(var["collars"]), var["cutoff"], int(var["cap_euler"]), var.get("eps_max"))
    sec = cfg["schedule"]
    if sec.get("values") is None and sec.get("eps0") is None:
        eps = default_schedule(g, tpl, int(sec["count"]), mask)
        if sec["ratio"] != 0.5:
            eps = geometric_schedule(float(eps[0]), int(sec["count"]), float(sec["ratio"]))
    else:
        eps = _schedule(cfg)
    rtol = cfg["tolerance"]["rel"]
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        cls, sweep, report = topological_derivative_connected(g, mask, tpl, eps, rtol=rtol, executor=pool)
    finally:
        if pool is not None:
            pool.shutdown()
    asrt.add("conclusive", not report["inconclusive"], report["inconclusive"])
    asrt.add("matches_dimension_law", cls.kind == report["expected"], cls.kind, None, report["expected"])
    if "limit_vs_kappa_rel" in report:
        asrt.add("limit_vs_kappa", report["limit_vs_kappa_rel"] <= rtol, report["limit_vs_kappa_rel"], rtol)
    fit = sweep.model
    if hasattr(fit, "k") and report["kappa"] != 0:
        k_expected = (n - 2) / 2
        asrt.add("delta_S_exponent", abs(fit.k - k_expected) <= rtol, fit.k, rtol, k_expected)
    results = {
        "classification": cls.as_dict(),
        "kappa": report["kappa"],
        "limit": model_dict(report.get("limit")),
        "fit": model_dict(fit),
        "diagnostics": {k: v for k, v in sweep.diagnostics.items()},
    }
    cols = {k: sweep.columns[k] for k in ("epsilon", "I0", "I1", "I2", "I3", "total")}
    return cols, results


def _run_quadratic(cfg, asrt, threads):
    from .higher_order import ComponentTotals, QuadraticCoefficients, discontinuity_report, quadratic_topological_derivative

    var = cfg["variation"]
    coeffs = QuadraticCoefficients(**{k: float(v) for k, v in var["coefficients"].items()})
    oracle = _component(var)
    comp = ComponentTotals.from_oracle(oracle, coeffs)
    n = comp.n
    eps = _schedule(cfg)
    cls, sweep = quadratic_topological_derivative(coeffs, comp, n, eps)
    tol = cfg["tolerance"]["exponent"]
    fit = sweep.model
    expected_k = sweep.diagnostics["expected_leading_exponent"]
    if hasattr(fit, "k"):
        asrt.add("leading_exponent", abs(fit.k - expected_k) <= tol, fit.k, tol, expected_k)
    asrt.add("classification_consistent", True, cls.kind)
    disc = discontinuity_report(coeffs, comp, n, eps)
    results = {
        "classification": cls.as_dict(),
        "A_R": comp.A_R,
        "A_2": comp.A_2,
        "fit": model_dict(fit),
        "structure_coefficients": sweep.diagnostics["structure_coefficients"],
        "discontinuity": {"limit": disc["limit"], "discontinuous": disc["discontinuous"]},
    }
    return sweep.columns, results


def _run_egb(cfg, asrt, threads):
    from .higher_order import ComponentTotals, QuadraticCoefficients, egb_disconnected_limit

    var = cfg["variation"]
    oracle = _component(dict(var, dim=4))
    if "euler" in var:
        oracle = dict(oracle, euler=int(var["euler"]))
    comp = ComponentTotals.from_oracle(oracle, QuadraticCoefficients())
    res = egb_disconnected_limit(float(var["alpha"]), comp, schedule=_schedule(cfg))
    target = 32 * math.pi ** 2 * comp.euler
    rel = res["cgb_residual"] / max(1.0, abs(target))
    asrt.add("chern_gauss_bonnet", rel <= cfg["tolerance"]["cgb_rel"], rel, cfg["tolerance"]["cgb_rel"])
    num_err = abs(res["numeric_limit"] - res["limit"]) / max(1.0, abs(res["limit"]))
    asrt.add("numeric_limit", num_err <= 1e-6, num_err, 1e-6)
    results = {
        "gauss_bonnet_total": comp.gauss_bonnet_total,
        "euler": comp.euler,
        "limit": res["limit"],
        "numeric_limit": res["numeric_limit"],
        "discontinuous": res["discontinuous"],
    }
    return {"epsilon": res["epsilons"], "delta_S": res["values"]}, results


def _run_blowup(cfg, asrt, threads):
    from .blowup import CollapsingFamily, blowup_sweep, derivative_bounds, route_convergence

    var = cfg["variation"]
    fam = CollapsingFamily(np.array(var["gamma"], float), np.array(var["theta"], float), float(var["delta"]),
                           tuple(var["periods"]), int(var["t_nodes"]), int(var["x_nodes"]))
    eps = _schedule(cfg)
    res = blowup_sweep(fam, eps, accuracy=int(cfg["accuracy"]))
    tol = cfg["tolerance"]
    fit = res["fit_direct"]
    asrt.add("c_m1_negative", fit.c_m1 < 0, fit.c_m1)
    asrt.add("c_1_zero", abs(fit.c_1) <= tol["c1_abs"], fit.c_1, tol["c1_abs"], 0.0)
    asrt.add("c_m1_vs_adm", res["rel_diff_c_m1"] <= tol["c_m1_rel"], res["rel_diff_c_m1"], tol["c_m1_rel"])
    asrt.add("fit_conclusive", not res["inconclusive"], fit.residual)
    b1 = derivative_bounds(fam, float(eps[0]))
    b2 = derivative_bounds(fam, float(eps[0]) / 2)
    drift = max(abs(b1[k] - b2[k]) for k in b1)
    asrt.add("derivative_bounds_eps_independent", drift <= 1e-12, drift, 1e-12)
    results = {
        "c_m1": fit.c_m1,
        "c_1": fit.c_1,
        "residual": fit.residual,
        "c_m1_adm": res["fit_adm"].c_m1,
        "c_m1_reference": res["c_m1_reference"],
        "rel_diff_c_m1": res["rel_diff_c_m1"],
        "derivative_bounds": {str(k): v for k, v in b1.items()},
    }
    if var["route_check"]:
        rc = route_convergence(fam)
        results["route_convergence"] = {"t_nodes": rc["t_nodes"], "errors": rc["errors"], "orders": rc["orders"]}
        asrt.add("route_order", float(np.min(rc["orders"])) >= 1.8, float(np.min(rc["orders"])), 1.8)
    return res["columns"], results


PIPELINES = {
    "curvature-check": _run_curvature_check,
    "geometric-derivative": _run_geometric_derivative,
    "disconnected-sweep": _run_disconnected,
    "connected-sweep": _run_connected,
    "quadratic-sweep": _run_quadratic,
    "egb-limit": _run_egb,
    "blowup": _run_blowup,
}


def run(config: ScenarioConfig, out_dir, threads: int = 1, seed=None) -> tuple:
    """Execute a validated scenario; write CSV, JSON summary and echo into ``out_dir``.

    Returns ``(status, summary)``; status 0 iff every built-in assertion passed.
    """
    if seed is not None:
        config.data["seed"] = int(seed)
    os.makedirs(out_dir, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise ScenarioError([f"output directory {out_dir!r} is not writable"])
    out = config.data["output"]
    asrt = _Assertions()
    summary = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "kind": config.kind,
        "tolerances": _plain(config.data.get("tolerance", {})),
        "echo": config.echo(),
    }
    try:
        columns, results = PIPELINES[config.kind](config.data, asrt, max(1, int(threads)))
        _write_csv(os.path.join(out_dir, out["csv"]), columns)
        summary["results"] = _plain(results)
        summary["csv"] = out["csv"]
        status = 0 if asrt.ok else 1
    except TopovarError as exc:
        summary["error"] = {"type": type(exc).__name__, "message": str(exc)}
        status = 1
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        summary["error"] = {"type": type(exc).__name__, "message": str(exc)}
        status = 1
    summary["assertions"] = _plain(asrt.items)
    summary["status"] = "pass" if status == 0 else "fail"
    with open(os.path.join(out_dir, out["json"]), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(os.path.join(out_dir, out["echo"]), "w", encoding="utf-8") as fh:
        yaml.safe_dump(config.echo(), fh, sort_keys=True)
    return status, summary
