"""Quadratic-curvature and Gauss-Bonnet actions under disconnected variations.

For a closed component scaled by ``eps`` in dimension ``n`` the quadratic
action changes by ``eps^((n-4)/2) (-2 eps^2 Lambda V + eps A_R + A_2)``;
the quadratic part is scale invariant in four dimensions, which moves the
critical dimension of the topological derivative from 4 to 6.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .asymptotics import (
    Divergent,
    Limit,
    SweepResult,
    check_schedule,
    fit_linear_basis,
    fit_power_law,
    geometric_schedule,
    one_sided_limit,
)
from .chart import MetricField, ScalarField, integrate, map_slabs
from .curvature import _mm, riemann_kernel, scalar_direct_kernel
from .disconnected import Classification
from .errors import ConfigurationError, ConsistencyError, DomainError

CGB_FACTOR = 32 * math.pi ** 2
CGB_RTOL = 1e-8
EXPONENT_TOL = 1e-6
LIMIT_RTOL = 1e-6


@dataclass(frozen=True)
class QuadraticCoefficients:
    Lambda: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    @property
    def has_quadratic(self) -> bool:
        return any(c != 0 for c in (self.alpha, self.beta, self.gamma))


@dataclass(frozen=True)
class ComponentTotals:
    """Closed-component integrals: ``A_R``, ``A_2``, volume, Gauss-Bonnet total, Euler number."""

    n: int
    A_R: float
    A_2: float
    volume: float
    gauss_bonnet_total: float = 0.0
    euler: Optional[int] = None

    @classmethod
    def from_oracle(cls, oracle: dict, coeffs: QuadraticCoefficients) -> "ComponentTotals":
        A_2 = coeffs.alpha * oracle["R2_total"] + coeffs.beta * oracle["ricci_sq_total"] + coeffs.gamma * oracle["riemann_sq_total"]
        return cls(int(oracle["n"]), float(oracle["action"]), float(A_2), float(oracle["volume"]),
                   float(oracle["gauss_bonnet_total"]), oracle.get("euler"))


# --------------------------------------------------------------------------
# nodewise invariants


def invariant_kernel(g: np.ndarray, spacing, periodic, accuracy: int = 2, det_floor: float = 0.0):
    """Nodewise ``R^2``, ``|Ric|^2``, ``|Riem|^2`` and ``|det g|^(1/2)``."""
    lead = g.shape[:-2]
    n = g.shape[-1]
    _, riem, ric, ginv, det = riemann_kernel(g, spacing, periodic, accuracy, det_floor)
    ric = 0.5 * (ric + np.swapaxes(ric, -1, -2))
    R = np.sum(ginv * ric, axis=(-2, -1))
    ric_up = _mm(_mm(ginv, ric), ginv)
    ric2 = np.sum(ric * ric_up, axis=(-2, -1))
    # lower r, then raise s, m, n one index at a time
    k = n ** 3
    low = _mm(g, riem.reshape(lead + (n, k))).reshape(lead + (n, n, n, n))
    up = riem
    for axis in (-3, -2, -1):
        moved = np.moveaxis(up, axis, -1)
        shape = moved.shape
        up = np.moveaxis(_mm(moved.reshape(lead + (k, n)), ginv).reshape(shape), -1, axis)
    riem2 = np.sum(low * up, axis=(-4, -3, -2, -1))
    return R * R, ric2, riem2, np.sqrt(np.abs(det))


def quadratic_invariants(g: MetricField, accuracy: int = 2):
    """``(R^2, |Ric|^2, |Riem|^2)`` as scalar fields, indices raised with ``g``."""
    grid = g.grid

    def fn(arrs, sp, per):
        return invariant_kernel(arrs[0], sp, per, accuracy, g.det_floor)[:3]

    R2, ric2, riem2 = map_slabs(fn, [g.components], grid, 2 * (accuracy // 2), budget=20_000)
    return ScalarField(grid, R2), ScalarField(grid, ric2), ScalarField(grid, riem2)


def gauss_bonnet_density(g: MetricField, accuracy: int = 2) -> ScalarField:
    """Nodewise ``R^2 - 4 |Ric|^2 + |Riem|^2``."""
    R2, ric2, riem2 = quadratic_invariants(g, accuracy)
    return ScalarField(g.grid, R2.values - 4 * ric2.values + riem2.values)


def quadratic_action(g: MetricField, mask, coeffs: QuadraticCoefficients, accuracy: int = 2) -> float:
    """``integral (-2 Lambda + R + alpha R^2 + beta |Ric|^2 + gamma |Riem|^2) |det g|^(1/2)``."""
    grid = g.grid
    need_quad = coeffs.has_quadratic

    def fn(arrs, sp, per):
        gm = arrs[0]
        R, adet = scalar_direct_kernel(gm, sp, per, accuracy, g.det_floor)
        dens = -2 * coeffs.Lambda + R
        if need_quad:
            R2, ric2, riem2, _ = invariant_kernel(gm, sp, per, accuracy, g.det_floor)
            dens = dens + coeffs.alpha * R2 + coeffs.beta * ric2 + coeffs.gamma * riem2
        return dens * np.sqrt(adet)

    dens = map_slabs(fn, [g.components], grid, 2 * (accuracy // 2), budget=20_000)
    return integrate(ScalarField(grid, dens), mask)


# --------------------------------------------------------------------------
# disconnected variations


def quadratic_disconnected_difference(coeffs: QuadraticCoefficients, comp: ComponentTotals, n: int, eps: float) -> float:
    """``eps^((n-4)/2) (-2 eps^2 Lambda V + eps A_R + A_2)``."""
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    return eps ** ((n - 4) / 2) * (-2 * eps * eps * coeffs.Lambda * comp.volume + eps * comp.A_R + comp.A_2)


def _leading_term(coeffs: QuadraticCoefficients, comp: ComponentTotals, n: int):
    """Lowest power of eps in the quotient ``Delta S / eps`` with nonzero coefficient."""
    terms = [((n - 6) / 2, comp.A_2), ((n - 4) / 2, comp.A_R), ((n - 2) / 2, -2 * coeffs.Lambda * comp.volume)]
    for k, c in terms:
        if c != 0:
            return k, c
    return None, 0.0


def expected_quadratic_classification(coeffs, comp, n) -> Classification:
    k, c = _leading_term(coeffs, comp, n)
    if k is None or k > 0:
        return Classification("Zero", 0.0)
    if k == 0:
        return Classification("Value", float(c))
    return Classification("Undefined")


def quadratic_sweep(coeffs: QuadraticCoefficients, comp: ComponentTotals, n: int, schedule=None, tail: int = 8) -> SweepResult:
    """Differences and quotients along a schedule with leading-exponent and structure fits."""
    eps = geometric_schedule(0.1, 24) if schedule is None else check_schedule(schedule)
    delta = np.array([quadratic_disconnected_difference(coeffs, comp, n, e) for e in eps])
    quot = delta / eps
    fit = fit_power_law(eps, delta, tail=tail)
    structure, structure_res = fit_linear_basis(eps, delta * eps ** (-(n - 4) / 2), (2.0, 1.0, 0.0))
    diag = {
        "expected_leading_exponent": (n - 4) / 2 if comp.A_2 != 0 else (n - 2) / 2,
        "structure_coefficients": [float(c) for c in structure],
        "structure_expected": [-2 * coeffs.Lambda * comp.volume, comp.A_R, comp.A_2],
        "structure_residual": structure_res,
    }
    columns = {"epsilon": eps, "delta_S": delta, "quotient": quot}
    return SweepResult(eps, delta, fit, getattr(fit, "residual", 0.0), diag, columns)


def quadratic_topological_derivative(coeffs: QuadraticCoefficients, comp: ComponentTotals, n: int, schedule=None):
    """Classification of the quadratic-action derivative, corroborated by a sweep.

    Returns ``(classification, sweep)``; raises ConsistencyError on disagreement.
    """
    expected = expected_quadratic_classification(coeffs, comp, n)
    sweep = quadratic_sweep(coeffs, comp, n, schedule)
    quot = sweep.columns["quotient"]
    lim = one_sided_limit(sweep.epsilons, quot, tail=8)
    sweep.diagnostics["limit"] = lim
    scale = max(1.0, abs(comp.A_2), abs(comp.A_R))
    if expected.kind == "Undefined":
        ok = isinstance(lim, Divergent)
    elif expected.kind == "Value":
        ok = isinstance(lim, Limit) and abs(lim.value - expected.value) <= LIMIT_RTOL * abs(expected.value)
    else:
        ok = isinstance(lim, Limit) and abs(lim.value) <= LIMIT_RTOL * scale
    if not ok:
        raise ConsistencyError(f"sweep limit {lim} contradicts classification {expected.kind} for n={n}")
    return expected, sweep


def discontinuity_report(coeffs: QuadraticCoefficients, comp: ComponentTotals, n: int, schedule=None) -> dict:
    """Limit of ``Delta S_Q`` itself; a nonzero limit is a jump."""
    eps = geometric_schedule(0.1, 24) if schedule is None else check_schedule(schedule)
    delta = np.array([quadratic_disconnected_difference(coeffs, comp, n, e) for e in eps])
    lim = one_sided_limit(eps, delta, tail=8)
    value = lim.value if isinstance(lim, Limit) else float("nan")
    jump = not (isinstance(lim, Limit) and abs(value) <= LIMIT_RTOL * max(1.0, abs(comp.A_2)))
    return {"limit": value, "discontinuous": jump, "fit": lim}


# --------------------------------------------------------------------------
# Einstein-Gauss-Bonnet


def chern_gauss_bonnet_check(gb_total: float, euler: int, rtol: float = CGB_RTOL, atol: float = 1e-9) -> float:
    """Residual ``|GB_total - 32 pi^2 chi|``; raises ConsistencyError beyond tolerance."""
    target = CGB_FACTOR * euler
    res = abs(gb_total - target)
    if res > max(atol, rtol * abs(target)):
        raise ConsistencyError(f"Gauss-Bonnet total {gb_total} != 32 pi^2 chi = {target} (chi={euler})")
    return res


def egb_disconnected_difference(alpha: float, comp: ComponentTotals, eps: float) -> float:
    """``eps A_R + alpha GB_total`` for a four-dimensional component."""
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    if comp.n != 4:
        raise ConfigurationError("the Gauss-Bonnet jump formula is for four-dimensional components")
    return eps * comp.A_R + alpha * comp.gauss_bonnet_total


def egb_disconnected_limit(alpha: float, comp: ComponentTotals, eps: float = None, schedule=None) -> dict:
    """Difference at ``eps`` (if given), its ``eps -> 0+`` limit, and the Euler-number check."""
    if comp.euler is None:
        raise ConfigurationError("component Euler characteristic is required")
    residual = chern_gauss_bonnet_check(comp.gauss_bonnet_total, comp.euler)
    eps_s = geometric_schedule(0.1, 24) if schedule is None else check_schedule(schedule)
    vals = np.array([egb_disconnected_difference(alpha, comp, e) for e in eps_s])
    lim = alpha * comp.gauss_bonnet_total
    numeric = float(np.mean(vals[-4:]))
    out = {
        "limit": lim,
        "numeric_limit": numeric,
        "discontinuous": lim != 0,
        "cgb_residual": residual,
        "epsilons": eps_s,
        "values": vals,
    }
    if eps is not None:
        out["difference"] = egb_disconnected_difference(alpha, comp, eps)
    return out
