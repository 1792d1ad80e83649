"""Disconnected variations: adding a closed component scaled by eps.

The base configuration cancels in every difference, so only the component
action ``A'`` and its dimension enter. Components are given either by an
oracle value or by a periodic-grid metric whose action is integrated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .asymptotics import (
    Divergent,
    Limit,
    SweepResult,
    check_schedule,
    fit_power_law,
    geometric_schedule,
    one_sided_limit,
    Zero,
)
from .chart import MetricField
from .curvature import action
from .errors import ConfigurationError, ConsistencyError, DomainError

EXPONENT_TOL = 1e-6
LIMIT_RTOL = 1e-8
TWO_ROUTE_RTOL = 1e-12
DEFAULT_EPS0 = 1e-1
DEFAULT_POINTS = 24


@dataclass(frozen=True)
class Classification:
    """Outcome of a topological derivative: Undefined, Value or Zero."""

    kind: str
    value: Optional[float] = None

    def as_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value}


@dataclass(frozen=True)
class DisconnectedConfig:
    """Closed component of dimension ``dim`` with action ``component_action``.

    ``component_metric`` (periodic grid) is optional; when given, actions of
    the scaled component are also integrated directly.
    """

    dim: int
    component_action: float
    component_metric: Optional[MetricField] = None
    base: object = "any"

    def __post_init__(self):
        if self.dim < 2:
            raise ConfigurationError(f"component dimension must be >= 2, got {self.dim}")
        if not np.isfinite(self.component_action):
            raise ConfigurationError("component action must be finite")
        if self.component_metric is not None:
            if self.component_metric.dim != self.dim:
                raise ConfigurationError("component metric dimension differs from dim")
            if not all(self.component_metric.grid.periodic):
                raise ConfigurationError("component metrics must live on fully periodic grids")

    @classmethod
    def from_metric(cls, g: MetricField) -> "DisconnectedConfig":
        return cls(g.dim, action(g), g)


def _check_eps(eps):
    if not eps > 0:
        raise DomainError(f"eps must be positive (negative eps reverses the signature), got {eps}")


def disconnected_action_difference(cfg: DisconnectedConfig, eps: float, route: str = "oracle") -> float:
    """``S(eps) - S(0) = eps^((n-2)/2) A'``.

    ``route="direct"`` integrates the scaled component metric instead and
    needs ``cfg.component_metric``.
    """
    _check_eps(eps)
    n = cfg.dim
    if route == "oracle":
        return eps ** ((n - 2) / 2) * cfg.component_action
    if route == "direct":
        if cfg.component_metric is None:
            raise ConfigurationError("direct route needs a component metric")
        g = cfg.component_metric
        return action(MetricField(g.grid, eps * g.components, g.signature, g.det_floor * min(1.0, eps ** n)))
    raise ConfigurationError(f"unknown route {route!r}")


def disconnected_quotient_sweep(cfg: DisconnectedConfig, schedule=None, tail: Optional[int] = None) -> SweepResult:
    """Quotients ``(S(eps) - S(0)) / eps`` along a decreasing schedule and their power-law fit."""
    eps = geometric_schedule(DEFAULT_EPS0, DEFAULT_POINTS) if schedule is None else check_schedule(schedule)
    eps = check_schedule(eps)
    delta = np.array([disconnected_action_difference(cfg, e) for e in eps])
    quot = delta / eps
    fit = fit_power_law(eps, quot, tail=tail)
    diag = {"expected_exponent": (cfg.dim - 4) / 2}
    columns = {"epsilon": eps, "delta_S": delta, "quotient": quot}
    if cfg.component_metric is not None:
        direct = np.array([disconnected_action_difference(cfg, e, "direct") for e in eps])
        columns["delta_S_direct"] = direct
        scale = np.maximum(np.abs(delta), np.finfo(float).tiny)
        diag["two_route_max_rel"] = float(np.max(np.abs(direct - delta) / scale)) if np.any(delta) else float(np.max(np.abs(direct)))
    return SweepResult(eps, quot, fit, getattr(fit, "residual", 0.0), diag, columns)


def expected_classification(dim: int, component_action: float) -> Classification:
    if component_action == 0 or dim > 4:
        return Classification("Zero", 0.0)
    if dim == 4:
        return Classification("Value", float(component_action))
    return Classification("Undefined")


def topological_derivative_disconnected(cfg: DisconnectedConfig, schedule=None):
    """Classify the disconnected derivative and corroborate it by a sweep.

    Returns ``(classification, sweep)``. Raises ConsistencyError when the
    numerical sweep contradicts the closed-form classification.
    """
    expected = expected_classification(cfg.dim, cfg.component_action)
    sweep = disconnected_quotient_sweep(cfg, schedule)
    limit = one_sided_limit(sweep.epsilons, sweep.values)
    sweep.diagnostics["limit"] = limit
    scale = max(1.0, abs(cfg.component_action))
    theory_k = (cfg.dim - 4) / 2
    fit = sweep.model
    if isinstance(fit, Zero):
        ok = expected.kind == "Zero"
    else:
        ok = abs(fit.k - theory_k) < EXPONENT_TOL
        if expected.kind == "Undefined":
            ok = ok and isinstance(limit, Divergent)
        elif expected.kind == "Value":
            ok = ok and isinstance(limit, Limit) and abs(limit.value - expected.value) < LIMIT_RTOL * scale
        else:
            ok = ok and isinstance(limit, Limit) and abs(limit.value) < LIMIT_RTOL * scale
    if not ok:
        raise ConsistencyError(f"sweep {fit} / {limit} contradicts classification {expected.kind} for n={cfg.dim}")
    return expected, sweep


def continuity_jump(cfg: DisconnectedConfig, schedule=None) -> dict:
    """Limit of ``S(eps) - S(0)`` itself: 0 for n > 2, ``A'`` for n = 2."""
    eps = geometric_schedule(DEFAULT_EPS0, DEFAULT_POINTS) if schedule is None else check_schedule(schedule)
    delta = np.array([disconnected_action_difference(cfg, e) for e in eps])
    lim = one_sided_limit(eps, delta)
    value = lim.value if isinstance(lim, Limit) else float("nan")
    return {"limit": value, "continuous": isinstance(lim, Limit) and abs(value) <= LIMIT_RTOL * max(1.0, abs(cfg.component_action)), "fit": lim}
