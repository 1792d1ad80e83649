"""Parameter schedules, power-law and Laurent fits, one-sided limits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, FitError

MIN_POINTS = 4
ZERO_ATOL = 1e-14
FLAT_BAND = 1e-2
INCONCLUSIVE_RESIDUAL = 1e-6


@dataclass(frozen=True)
class PowerLaw:
    """``value ~ C eps^k``."""

    C: float
    k: float
    residual: float


@dataclass(frozen=True)
class Laurent:
    """``value ~ c_m1 / eps + c_1 eps``."""

    c_m1: float
    c_1: float
    residual: float


@dataclass(frozen=True)
class Zero:
    """All values below the absolute tolerance."""

    atol: float
    residual: float = 0.0


@dataclass(frozen=True)
class Limit:
    value: float
    exponent: float
    residual: float
    inconclusive: bool = False


@dataclass(frozen=True)
class Divergent:
    exponent: float
    residual: float
    inconclusive: bool = False


@dataclass
class SweepResult:
    """Values sampled along a decreasing schedule plus the fitted model."""

    epsilons: np.ndarray
    values: np.ndarray
    model: object = None
    residual: float = 0.0
    diagnostics: dict = field(default_factory=dict)
    columns: dict = field(default_factory=dict)

    def __post_init__(self):
        self.epsilons = np.asarray(self.epsilons, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        check_schedule(self.epsilons, min_points=1)
        if self.values.shape != self.epsilons.shape:
            raise ConfigurationError("values and epsilons differ in length")


def geometric_schedule(eps0: float, count: int, ratio: float = 0.5) -> np.ndarray:
    """``eps_k = eps0 ratio^k`` for ``k = 0 .. count-1``."""
    if eps0 <= 0 or not 0 < ratio < 1 or count < 1:
        raise ConfigurationError(f"bad schedule parameters eps0={eps0}, ratio={ratio}, count={count}")
    return eps0 * ratio ** np.arange(count, dtype=float)


def check_schedule(eps, min_points: int = MIN_POINTS) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    if eps.ndim != 1 or len(eps) < min_points:
        raise FitError(f"schedule needs at least {min_points} points, got {eps.size}")
    if not np.all(np.isfinite(eps)) or np.any(eps <= 0):
        raise ConfigurationError("schedule values must be positive and finite")
    if len(eps) > 1 and not np.all(np.diff(eps) < 0):
        raise ConfigurationError("schedule must be strictly decreasing")
    return eps


def _tail(eps, vals, tail: Optional[int]):
    eps = np.asarray(eps, dtype=float)
    vals = np.asarray(vals, dtype=float)
    if eps.shape != vals.shape:
        raise FitError("epsilons and values differ in length")
    if tail is not None:
        order = np.argsort(eps)[:tail]
        order = np.sort(order)
        eps, vals = eps[order], vals[order]
    if len(eps) < MIN_POINTS:
        raise FitError(f"need at least {MIN_POINTS} points, got {len(eps)}")
    return eps, vals


def fit_power_law(epsilons, values, tail: Optional[int] = None, atol: Optional[float] = None):
    """Least-squares line through ``(log eps, log |value|)``.

    Returns :class:`Zero` when every value is below
    ``atol = 1e-14 max(1, scale)``; ``scale`` defaults to 1 so that exact
    zeros and rounding noise are recognised.
    """
    eps, vals = _tail(epsilons, values, tail)
    if atol is None:
        atol = ZERO_ATOL
    mag = np.abs(vals)
    if mag.max() < atol:
        return Zero(atol)
    big = mag >= atol
    signs = np.sign(vals[big])
    if not (np.all(signs > 0) or np.all(signs < 0)) or not big.all():
        raise FitError("values change sign or vanish; a single power law does not fit")
    x, y = np.log(eps), np.log(mag)
    A = np.stack([np.ones_like(x), x], axis=1)
    (logC, k), *_ = np.linalg.lstsq(A, y, rcond=None)
    C = float(signs[0] * np.exp(logC))
    model = C * eps ** k
    residual = float(np.max(np.abs(model - vals) / mag))
    return PowerLaw(C, float(k), residual)


def fit_linear_basis(epsilons, values, powers: Sequence[float]) -> tuple:
    """Least-squares coefficients of ``sum_j c_j eps^{p_j}``; returns (coeffs, residual).

    Columns are scaled to unit norm before solving, so the fit stays well
    conditioned across many decades of ``eps``.
    """
    eps = np.asarray(epsilons, dtype=float)
    vals = np.asarray(values, dtype=float)
    if len(eps) < max(MIN_POINTS, len(powers)):
        raise FitError(f"need at least {max(MIN_POINTS, len(powers))} points")
    A = np.stack([eps ** p for p in powers], axis=1)
    norms = np.linalg.norm(A, axis=0)
    if np.any(norms == 0):
        raise FitError("design column vanishes")
    As = A / norms
    if np.linalg.matrix_rank(As, tol=1e-12 * max(As.shape)) < len(powers):
        raise FitError("rank-deficient design (repeated epsilons?)")
    coef, *_ = np.linalg.lstsq(As, vals, rcond=None)
    coef = coef / norms
    scale = max(np.max(np.abs(vals)), np.finfo(float).tiny)
    residual = float(np.max(np.abs(A @ coef - vals)) / scale)
    return coef, residual


def fit_laurent(epsilons, values) -> Laurent:
    """Fit ``c_m1 / eps + c_1 eps`` by linear least squares.

    Rows are multiplied by ``eps`` (basis ``{1, eps^2}`` against
    ``eps * value``), which keeps the design well conditioned when the
    schedule spans many decades.
    """
    eps = np.asarray(epsilons, dtype=float)
    vals = np.asarray(values, dtype=float)
    if len(eps) >= 2 and np.all(eps == eps[0]):
        raise FitError("rank-deficient design: all epsilons equal")
    coef, _ = fit_linear_basis(eps, eps * vals, (0.0, 2.0))
    model = coef[0] / eps + coef[1] * eps
    scale = max(np.max(np.abs(vals)), np.finfo(float).tiny)
    residual = float(np.max(np.abs(model - vals)) / scale)
    return Laurent(float(coef[0]), float(coef[1]), residual)


def one_sided_limit(epsilons, values, tail: Optional[int] = None, band: float = FLAT_BAND,
                    inconclusive_residual: float = INCONCLUSIVE_RESIDUAL, mean_points: int = 4):
    """Classify the ``eps -> 0+`` behaviour of ``values``.

    The exponent ``k`` comes from a power-law fit over the ``mean_points``
    smallest ``eps`` (the asymptotic end; a fit over a longer tail would mix
    in subleading corrections). ``k > band``: :class:`Limit` 0;
    ``|k| <= band``: :class:`Limit` equal to the mean of those values;
    ``k < -band``: :class:`Divergent`. A fit over the whole tail supplies the
    residual; above ``inconclusive_residual`` the result is flagged.
    """
    eps, vals = _tail(epsilons, values, tail)
    fit = fit_power_law(eps, vals)
    if isinstance(fit, Zero):
        return Limit(0.0, float("inf"), 0.0)
    order = np.argsort(eps)[:max(mean_points, MIN_POINTS)]
    local = fit_power_law(eps[order], vals[order])
    if isinstance(local, Zero):
        return Limit(0.0, float("inf"), fit.residual)
    residual = min(fit.residual, local.residual)
    flag = residual > inconclusive_residual
    k = local.k
    if k > band:
        return Limit(0.0, k, residual, flag)
    if k < -band:
        return Divergent(k, residual, flag)
    return Limit(float(np.mean(vals[order[:mean_points]])), k, residual, flag)


def model_dict(model) -> dict:
    """JSON-friendly description of a fitted model."""
    if model is None:
        return {"kind": "none"}
    out = {"kind": type(model).__name__}
    for key, val in model.__dict__.items():
        out[key] = bool(val) if isinstance(val, (bool, np.bool_)) else float(val)
    return out
