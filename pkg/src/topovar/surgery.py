"""Connected variations: excise a small ball, glue in a scaled cap.

Everything is computed on a *unit-ball grid*: a box ``[-L, L]^n`` whose
nodes include ``|x| = 1`` on the axes plus two nodes of margin. A ball of
radius ``sqrt(eps)`` around ``p`` is pulled back to it by
``x -> p + sqrt(eps) x`` (Euclidean normal coordinates), and the action
difference splits into four region integrals:

* ``I0 = -integral over the unit ball of L[pulled]``
* ``I1 = integral over 1 >= |x| >= e2 of L[pulled]``
* ``I2 = integral over e2 >= |x| >= e1 of L[eps f cap + (1 - f) pulled]``
* ``I3 = integral over |x| <= e1 of L[eps cap]``

Region integrals use fractional cell weights, so the splits are additive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .asymptotics import (
    Divergent,
    Limit,
    SweepResult,
    check_schedule,
    fit_power_law,
    geometric_schedule,
    one_sided_limit,
)
from .catalog import ball_volume
from .chart import (
    Grid,
    MetricField,
    ScalarField,
    ball_weights,
    build_grid,
    check_signature,
    quadrature_weights,
)
from .curvature import lagrangian_density
from .disconnected import Classification
from .errors import (
    ConfigurationError,
    ConsistencyError,
    DomainError,
    GeometryError,
    SignatureError,
    SignatureViolationError,
)

DEFAULT_COLLARS = (0.5, 0.8)
DEFAULT_POINTS = 20
I3_RTOL = 1e-12
UNIT_MARGIN = 2
CROP_HALO = 2


# --------------------------------------------------------------------------
# unit-ball grid and cutoff


def unit_ball_grid(n: int, counts: int) -> Grid:
    """Box ``[-L, L]^n`` with ``L = (N-1)/(N-5)``: nodes at +-1 and two margin nodes."""
    if counts < 7 or counts % 2 == 0:
        raise ConfigurationError(f"unit-ball grid needs an odd node count >= 7, got {counts}")
    L = (counts - 1) / (counts - 1 - 2 * UNIT_MARGIN)
    return build_grid([(-L, L)] * n, [counts] * n, [False] * n)


def smoothstep_cutoff(r, e1: float, e2: float):
    """1 for ``r <= e1``, 0 for ``r >= e2``, quintic smoothstep in between (C2)."""
    s = np.clip((np.asarray(r, dtype=float) - e1) / (e2 - e1), 0.0, 1.0)
    return 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)


CUTOFFS = {"smoothstep": smoothstep_cutoff}


def _radius(grid: Grid) -> np.ndarray:
    return np.sqrt(sum(x * x for x in grid.mesh(sparse=True))) * np.ones(grid.shape)


@dataclass(frozen=True)
class SurgeryTemplate:
    """Surgery data: point, collars, cap metric on the unit-ball grid, cutoff."""

    point: tuple
    cap_metric: MetricField
    collars: tuple = DEFAULT_COLLARS
    cutoff_name: str = "smoothstep"
    cap_euler: int = 0
    eps_max: Optional[float] = None
    cutoff: ScalarField = field(default=None, compare=False, repr=False)
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        e1, e2 = (float(c) for c in self.collars)
        if not 0 < e1 < e2 < 1:
            raise ConfigurationError(f"collars must satisfy 0 < e1 < e2 < 1, got {self.collars}")
        if len(self.point) != self.cap_metric.dim:
            raise ConfigurationError("surgery point and cap dimension differ")
        if self.cutoff_name not in CUTOFFS:
            raise ConfigurationError(f"unknown cutoff {self.cutoff_name!r}")
        grid = self.cap_metric.grid
        if any(grid.periodic) or not all(np.isclose(b, -a) for a, b in grid.bounds):
            raise ConfigurationError("cap metric must live on a symmetric unit-ball grid")
        if self.eps_max is not None and not self.eps_max > 0:
            raise DomainError("eps_max must be positive")
        f = CUTOFFS[self.cutoff_name](_radius(grid), e1, e2)
        object.__setattr__(self, "collars", (e1, e2))
        object.__setattr__(self, "point", tuple(float(v) for v in self.point))
        object.__setattr__(self, "cutoff", ScalarField(grid, f))

    @property
    def grid(self) -> Grid:
        return self.cap_metric.grid

    @property
    def dim(self) -> int:
        return self.cap_metric.dim

    def weights(self) -> dict:
        """Fractional region weights (times quadrature weights) on the unit grid."""
        return _region_weights(self.grid, self.collars)

    def inner_integral(self) -> float:
        """``integral of L[cap]`` over ``|x| <= e1``; computed once per template."""
        if "inner" not in self._cache:
            self._cache["inner"] = _cap_density_integral(self, self.weights()["inner"], self.collars[0])
        return self._cache["inner"]


_WEIGHT_CACHE: dict = {}


def _region_weights(grid: Grid, collars) -> dict:
    key = (grid, tuple(collars))
    if key not in _WEIGHT_CACHE:
        q = quadrature_weights(grid)
        ball = ball_weights(grid, np.zeros(grid.dim), 1.0)
        mid = ball_weights(grid, np.zeros(grid.dim), collars[1])
        inner = ball_weights(grid, np.zeros(grid.dim), collars[0])
        _WEIGHT_CACHE[key] = {
            "ball": q * ball,
            "outer": q * (ball - mid),
            "transition": q * (mid - inner),
            "inner": q * inner,
        }
        if len(_WEIGHT_CACHE) > 16:
            _WEIGHT_CACHE.pop(next(iter(_WEIGHT_CACHE)))
    return _WEIGHT_CACHE[key]


def make_template(point, cap_metric: MetricField, collars=DEFAULT_COLLARS, cutoff: str = "smoothstep",
                  cap_euler: int = 0, eps_max: Optional[float] = None) -> SurgeryTemplate:
    return SurgeryTemplate(tuple(point), cap_metric, tuple(collars), cutoff, int(cap_euler), eps_max)


# --------------------------------------------------------------------------
# cropping helpers


def _crop_slices(grid: Grid, radius: float, halo: int = CROP_HALO) -> tuple:
    out = []
    for i in range(grid.dim):
        x = grid.axis_coords(i)
        idx = np.flatnonzero(np.abs(x) <= radius + 1e-12)
        lo = max(0, int(idx[0]) - halo)
        hi = min(grid.counts[i], int(idx[-1]) + 1 + halo)
        out.append(slice(lo, hi))
    return tuple(out)


def _subgrid(grid: Grid, sl: tuple) -> Grid:
    bounds, counts = [], []
    for i, s in enumerate(sl):
        x = grid.axis_coords(i)[s]
        bounds.append((float(x[0]), float(x[-1])))
        counts.append(len(x))
    return Grid(tuple(bounds), tuple(counts), tuple(False for _ in sl))


def _is_constant(comps: np.ndarray) -> bool:
    flat = comps.reshape(-1, *comps.shape[-2:])
    return bool(np.all(flat == flat[0]))


def _region_integral(comps: np.ndarray, grid: Grid, weights: np.ndarray, radius: float,
                     signature, det_floor: float, route: str = "direct") -> float:
    """Integrate L of the metric ``comps`` against ``weights``, cropped to ``|x| <= radius``."""
    sl = _crop_slices(grid, radius)
    sub = comps[sl]
    if _is_constant(sub):
        return 0.0
    g = MetricField(_subgrid(grid, sl), sub, signature, det_floor)
    dens = lagrangian_density(g, route)
    return float(np.sum((dens.values * weights[sl]).ravel()))


# --------------------------------------------------------------------------
# pullback and assembly


def _check_ball_inside(g: MetricField, p, eps: float, unit: Grid, mask=None) -> None:
    grid = g.grid
    reach = math.sqrt(eps) * unit.bounds[0][1]
    for i in range(grid.dim):
        if grid.periodic[i]:
            if 2 * reach >= grid.lengths[i]:
                raise GeometryError(f"axis {i}: pulled-back box wraps the period")
            continue
        a, b = grid.bounds[i]
        if p[i] - reach < a or p[i] + reach > b:
            raise GeometryError(
                f"axis {i}: pulled-back box [{p[i] - reach:.6g}, {p[i] + reach:.6g}] leaves the chart [{a}, {b}]"
            )
    if mask is not None:
        disp = grid.displacement(p)
        dist = np.sqrt(sum(d * d for d in disp))
        h = max(grid.spacing)
        need = dist <= math.sqrt(eps) + 2 * h * UNIT_MARGIN
        if np.any(need & ~np.asarray(mask, dtype=bool)):
            raise GeometryError("ball around the surgery point is not inside the region with a stencil margin")


def _interpolate(g: MetricField, pts: np.ndarray, order: int) -> np.ndarray:
    grid = g.grid
    n = grid.dim
    pad = 8
    comps = g.components
    pad_width = [(pad, pad) if per else (0, 0) for per in grid.periodic] + [(0, 0), (0, 0)]
    comps = np.pad(comps, pad_width, mode="wrap") if any(grid.periodic) else comps
    coords = []
    for i in range(n):
        a = grid.bounds[i][0]
        c = (pts[..., i] - a) / grid.spacing[i]
        if grid.periodic[i]:
            c = np.mod(c, grid.counts[i]) + pad
        coords.append(c)
    coords = np.stack(coords, axis=0)
    out = np.empty(pts.shape[:-1] + (n, n))
    for a in range(n):
        for b in range(a, n):
            vals = ndimage.map_coordinates(comps[..., a, b], coords, order=order, mode="nearest", prefilter=True)
            out[..., a, b] = vals
            out[..., b, a] = vals
    return out


def normal_ball_pullback(g: MetricField, p, eps: float, unit: Grid, mask=None, return_diagnostics: bool = False):
    """``eps g(p + sqrt(eps) x)`` sampled on the unit-ball grid.

    Uses ``g.evaluator`` when present (exact); otherwise cubic spline
    interpolation of the base grid, with ``|cubic - quintic|`` reported as the
    interpolation error estimate.
    """
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    p = np.asarray(p, dtype=float)
    if unit.dim != g.dim or p.shape != (g.dim,):
        raise ConfigurationError("dimension mismatch between metric, point and unit grid")
    _check_ball_inside(g, p, eps, unit, mask)
    pts = p + math.sqrt(eps) * unit.coords()
    diag = {}
    if g.evaluator is not None:
        vals = np.asarray(g.evaluator(pts), dtype=float)
        diag["interpolation_error"] = 0.0
        diag["sampling"] = "exact"
    else:
        vals = _interpolate(g, pts, 3)
        diag["interpolation_error"] = float(np.max(np.abs(vals - _interpolate(g, pts, 5))))
        diag["sampling"] = "cubic-spline"
    comps = eps * vals
    comps = 0.5 * (comps + np.swapaxes(comps, -1, -2))
    pulled = MetricField(unit, comps, g.signature, g.det_floor * min(1.0, eps ** g.dim))
    return (pulled, diag) if return_diagnostics else pulled


def _blend(cap: np.ndarray, other: np.ndarray, f: np.ndarray, eps_cap: float) -> np.ndarray:
    f4 = f[..., None, None]
    return eps_cap * f4 * cap + (1.0 - f4) * other


def _checked_metric(comps: np.ndarray, grid: Grid, signature, det_floor: float, error) -> MetricField:
    det = np.linalg.det(comps)
    bad = np.abs(det) < det_floor
    if bad.any():
        node = tuple(int(k) for k in np.unravel_index(int(np.flatnonzero(bad.ravel())[0]), grid.shape))
        raise error(f"interpolated metric degenerates at node {node}", node=node)
    check_signature(comps, signature, error=error)
    return MetricField(grid, comps, signature, det_floor)


def assemble_cap_metric(tpl: SurgeryTemplate, pulled: MetricField, eps: float) -> MetricField:
    """``eps f cap + (1 - f) pulled``; reduces exactly to each branch where f is 0 or 1."""
    if pulled.grid != tpl.grid:
        raise ConfigurationError("pulled metric is not on the template's unit-ball grid")
    comps = _blend(tpl.cap_metric.components, pulled.components, tpl.cutoff.values, eps)
    comps = 0.5 * (comps + np.swapaxes(comps, -1, -2))
    return _checked_metric(comps, tpl.grid, pulled.signature, pulled.det_floor, SignatureViolationError)


# --------------------------------------------------------------------------
# action difference


@dataclass(frozen=True)
class ConnectedDifference:
    epsilon: float
    I0: float
    I1: float
    I2: float
    I3: float
    total: float
    diagnostics: dict = field(default_factory=dict, compare=False)

    def row(self) -> list:
        return [self.epsilon, self.I0, self.I1, self.I2, self.I3, self.total]


def _cap_density_integral(tpl: SurgeryTemplate, weights: np.ndarray, radius: float, scale: float = 1.0) -> float:
    cap = tpl.cap_metric
    floor = cap.det_floor * min(1.0, scale ** cap.dim)
    return _region_integral(scale * cap.components, tpl.grid, weights, radius, cap.signature, floor)


def connected_action_difference(g: MetricField, mask, tpl: SurgeryTemplate, eps: float) -> ConnectedDifference:
    """Four-term action difference of the surgery at parameter ``eps``."""
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    if tpl.eps_max is not None and eps > tpl.eps_max * (1 + 1e-12):
        raise DomainError(f"eps {eps} exceeds the template maximum {tpl.eps_max}")
    n = g.dim
    if tpl.dim != n:
        raise ConfigurationError("template and metric dimensions differ")
    e1, e2 = tpl.collars
    W = tpl.weights()
    unit = tpl.grid
    pulled, diag = normal_ball_pullback(g, tpl.point, eps, unit, mask, return_diagnostics=True)
    sig, floor = pulled.signature, pulled.det_floor

    asm = assemble_cap_metric(tpl, pulled, eps)

    pc = pulled.components
    if _is_constant(pc):
        I0 = I1 = 0.0
    else:
        dens = lagrangian_density(pulled).values
        I0 = -float(np.sum((dens * W["ball"]).ravel()))
        I1 = float(np.sum((dens * W["outer"]).ravel()))
    I2 = _region_integral(asm.components, unit, W["transition"], e2, sig, floor)

    cap_floor = tpl.cap_metric.det_floor * min(1.0, eps ** n)
    I3 = _region_integral(eps * tpl.cap_metric.components, unit, W["inner"], e1, tpl.cap_metric.signature, cap_floor)
    I3_scaled = eps ** ((n - 2) / 2) * tpl.inner_integral()
    denom = max(abs(I3_scaled), np.finfo(float).tiny)
    diag["I3_two_route_rel"] = abs(I3 - I3_scaled) / denom if I3_scaled != 0 else abs(I3)
    if I3_scaled != 0 and diag["I3_two_route_rel"] > I3_RTOL:
        raise ConsistencyError(f"I3 routes disagree: {I3} vs {I3_scaled}")
    total = I0 + I1 + I2 + I3
    return ConnectedDifference(eps, I0, I1, I2, I3, total, diag)


def kappa(tpl: SurgeryTemplate, g_at_p) -> float:
    """``integral_inner L[cap] + integral_transition L[f cap + (1 - f) g(p)]``."""
    g0 = np.asarray(g_at_p, dtype=float)
    n = tpl.dim
    if g0.shape != (n, n):
        raise ConfigurationError("g(p) must be an n x n matrix")
    e1, e2 = tpl.collars
    W = tpl.weights()
    unit = tpl.grid
    inner = tpl.inner_integral()
    neg = int(np.sum(np.linalg.eigvalsh(g0) < 0))
    sig = (neg, n - neg)
    comps = _blend(tpl.cap_metric.components, np.broadcast_to(g0, unit.shape + (n, n)), tpl.cutoff.values, 1.0)
    comps = 0.5 * (comps + np.swapaxes(comps, -1, -2))
    _checked_metric(comps, unit, sig, tpl.cap_metric.det_floor, SignatureError)
    trans = _region_integral(comps, unit, W["transition"], e2, sig, tpl.cap_metric.det_floor)
    return inner + trans


def default_schedule(g: MetricField, tpl: SurgeryTemplate, count: int = DEFAULT_POINTS, mask=None) -> np.ndarray:
    """``eps_k = eps0 2^-k`` with ``sqrt(eps0) = 8 h`` (16 base nodes across the ball).

    ``eps0`` is lowered so the largest pulled-back box stays in the chart and
    the ball keeps its stencil margin inside ``mask``.
    """
    grid = g.grid
    h = max(grid.spacing)
    p = np.asarray(tpl.point, dtype=float)
    L = tpl.grid.bounds[0][1]
    room = [min(p[i] - a, b - p[i]) for i, (a, b) in enumerate(grid.bounds) if not grid.periodic[i]]
    room += [0.5 * grid.lengths[i] * 0.999 for i in range(grid.dim) if grid.periodic[i]]
    reach = min(room) / L
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if not m.all():
            disp = grid.displacement(p)
            dist = np.sqrt(sum(d * d for d in disp))
            reach = min(reach, float(dist[~m].min()) - 2 * h * UNIT_MARGIN - h)
    if reach <= 0:
        raise GeometryError("surgery point has no room for a ball inside the chart")
    eps0 = min((8 * h) ** 2, (0.999 * reach) ** 2)
    if tpl.eps_max is not None:
        eps0 = min(eps0, tpl.eps_max)
    return geometric_schedule(eps0, count)


def connected_sweep(g: MetricField, mask, tpl: SurgeryTemplate, schedule=None, tail: int = 8, executor=None) -> SweepResult:
    """Action differences along a schedule, with a power-law fit of ``total``."""
    eps = default_schedule(g, tpl, mask=mask) if schedule is None else check_schedule(schedule, min_points=1)
    run = lambda e: connected_action_difference(g, mask, tpl, float(e))
    rows = list(executor.map(run, eps)) if executor is not None else [run(e) for e in eps]
    total = np.array([r.total for r in rows])
    n = g.dim
    columns = {
        "epsilon": eps,
        "I0": np.array([r.I0 for r in rows]),
        "I1": np.array([r.I1 for r in rows]),
        "I2": np.array([r.I2 for r in rows]),
        "I3": np.array([r.I3 for r in rows]),
        "total": total,
        "quotient": total / eps,
    }
    diag = {
        "expected_exponent": (n - 2) / 2,
        "max_interpolation_error": max(r.diagnostics["interpolation_error"] for r in rows),
        "max_I3_two_route_rel": max(r.diagnostics["I3_two_route_rel"] for r in rows),
    }
    fit = None
    if len(eps) >= 4:
        try:
            fit = fit_power_law(eps, total, tail=min(tail, len(eps)))
        except Exception as exc:  # reported, not fatal: flat caps give sign-free zeros
            diag["fit_error"] = str(exc)
    return SweepResult(eps, total, fit, getattr(fit, "residual", 0.0), diag, columns)


def topological_derivative_connected(g: MetricField, mask, tpl: SurgeryTemplate, schedule=None,
                                     tail: int = 8, rtol: float = 1e-3, executor=None):
    """Classify the connected derivative from a sweep of ``Delta S / eps``.

    Returns ``(classification, sweep, report)``; ``report`` carries kappa, the
    one-sided limit and an ``inconclusive`` flag. The classification follows
    the sweep: Undefined when the quotient diverges, Value when it has a
    finite nonzero limit, Zero when it tends to zero.
    """
    n = g.dim
    sweep = connected_sweep(g, mask, tpl, schedule, tail, executor)
    eps, quot = sweep.epsilons, sweep.columns["quotient"]
    g_p = g.evaluator(np.asarray(tpl.point)) if g.evaluator is not None else _interpolate(g, np.asarray(tpl.point)[None], 3)[0]
    kap = kappa(tpl, g_p)
    report = {"kappa": kap, "inconclusive": False}
    try:
        lim = one_sided_limit(eps, quot, tail=min(tail, len(eps)), inconclusive_residual=rtol)
    except Exception as exc:
        report["inconclusive"] = True
        report["error"] = str(exc)
        return Classification("Undefined"), sweep, report
    report["limit"] = lim
    report["inconclusive"] = bool(getattr(lim, "inconclusive", False))
    if isinstance(lim, Divergent):
        cls = Classification("Undefined")
    elif isinstance(lim, Limit) and lim.value == 0.0:
        cls = Classification("Zero", 0.0)
    else:
        cls = Classification("Value", kap)
        report["limit_vs_kappa_rel"] = abs(lim.value - kap) / max(abs(kap), np.finfo(float).tiny)
        if report["limit_vs_kappa_rel"] > rtol:
            report["inconclusive"] = True
    expected = "Zero" if (n > 4 or kap == 0) else ("Value" if n == 4 else "Undefined")
    report["expected"] = expected
    if cls.kind != expected and not report["inconclusive"]:
        report["inconclusive"] = True
    return cls, sweep, report


def lebesgue_ratio(g: MetricField, tpl_or_grid, eps: float, point=None) -> float:
    """``-I0(eps) / eps^(n/2)``: tends to ``|B^n| L[g](p)`` for Euclidean normal coordinates."""
    unit = tpl_or_grid.grid if isinstance(tpl_or_grid, SurgeryTemplate) else tpl_or_grid
    p = tpl_or_grid.point if point is None else point
    pulled = normal_ball_pullback(g, p, eps, unit)
    W = _region_weights(unit, DEFAULT_COLLARS)
    dens = lagrangian_density(pulled).values
    return float(np.sum((dens * W["ball"]).ravel())) / eps ** (g.dim / 2)


def lebesgue_limit(n: int, scalar_at_p: float, det_at_p: float) -> float:
    """``|B^n| R(p) |det g(p)|^(1/2)`` with Euclidean auxiliary metric."""
    return ball_volume(n) * scalar_at_p * math.sqrt(abs(det_at_p))
