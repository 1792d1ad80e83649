"""Analytic metric families with closed-form curvature oracles.

Builders return :class:`~topovar.chart.MetricField` objects carrying an exact
``evaluator`` so that off-grid sampling (ball pullbacks) never needs
interpolation. Oracles return plain floats or arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate as sp_integrate
from scipy.special import gamma as gamma_fn

from .chart import Grid, MetricField, TensorField
from .errors import ConfigurationError, SupportError


def eta(n: int, signature=None) -> np.ndarray:
    """Diagonal constant metric with ``r`` leading minus signs."""
    r = 0 if signature is None else int(signature[0])
    if signature is not None and sum(signature) != n:
        raise ConfigurationError(f"signature {signature} incompatible with dimension {n}")
    return np.diag([-1.0] * r + [1.0] * (n - r))


def _constant_evaluator(mat: np.ndarray) -> Callable:
    return lambda x: np.broadcast_to(mat, np.shape(x)[:-1] + mat.shape).copy()


def _broadcast_metric(grid: Grid, mat: np.ndarray) -> np.ndarray:
    return np.broadcast_to(mat, grid.shape + mat.shape)


# --------------------------------------------------------------------------
# closed-form sphere data


def sphere_volume(n: int) -> float:
    """Volume of the unit round sphere S^n."""
    return 2 * math.pi ** ((n + 1) / 2) / gamma_fn((n + 1) / 2)


def ball_volume(n: int) -> float:
    """Volume of the unit Euclidean ball in R^n."""
    return math.pi ** (n / 2) / gamma_fn(n / 2 + 1)


def sphere_oracle(n: int, radius: float = 1.0) -> dict:
    """Constant-curvature totals for the round sphere of the given radius."""
    rho2 = radius * radius
    R = n * (n - 1) / rho2
    ric2 = n * (n - 1) ** 2 / rho2 ** 2
    riem2 = 2 * n * (n - 1) / rho2 ** 2
    vol = sphere_volume(n) * radius ** n
    out = {
        "n": n,
        "R": R,
        "ricci_sq": ric2,
        "riemann_sq": riem2,
        "gauss_bonnet": R * R - 4 * ric2 + riem2,
        "volume": vol,
        "action": R * vol,
        "euler": 1 + (-1) ** n,
    }
    out["R2_total"] = R * R * vol
    out["ricci_sq_total"] = ric2 * vol
    out["riemann_sq_total"] = riem2 * vol
    out["gauss_bonnet_total"] = out["gauss_bonnet"] * vol
    return out


def quadratic_total(oracle: dict, alpha: float, beta: float, gamma: float) -> float:
    """``integral (alpha R^2 + beta |Ric|^2 + gamma |Riem|^2) dvol`` from an oracle dict."""
    return alpha * oracle["R2_total"] + beta * oracle["ricci_sq_total"] + gamma * oracle["riemann_sq_total"]


def flat_torus_oracle(n: int, periods) -> dict:
    vol = float(np.prod(periods))
    return {
        "n": n, "R": 0.0, "ricci_sq": 0.0, "riemann_sq": 0.0, "gauss_bonnet": 0.0,
        "volume": vol, "action": 0.0, "euler": 0,
        "R2_total": 0.0, "ricci_sq_total": 0.0, "riemann_sq_total": 0.0, "gauss_bonnet_total": 0.0,
    }


# --------------------------------------------------------------------------
# builders


def flat(n: int, signature=None, grid: Grid = None) -> MetricField:
    """Constant diagonal metric ``diag(-1, ..., 1)`` on ``grid``."""
    if grid is None or grid.dim != n:
        raise ConfigurationError("flat metric needs a grid of matching dimension")
    mat = eta(n, signature)
    sig = (0, n) if signature is None else tuple(signature)
    return MetricField(grid, _broadcast_metric(grid, mat), sig, evaluator=_constant_evaluator(mat))


def sphere_stereographic(n: int, radius: float = 1.0, grid: Grid = None) -> MetricField:
    """Round sphere of radius ``radius`` in stereographic coordinates.

    ``g_ij = (2 rho^2 / (rho^2 + |x|^2))^2 delta_ij``.
    """
    if grid is None or grid.dim != n:
        raise ConfigurationError("sphere chart needs a grid of matching dimension")
    if radius <= 0:
        raise ConfigurationError(f"sphere radius must be positive, got {radius}")
    if any(grid.periodic):
        raise ConfigurationError("stereographic chart needs a non-periodic grid")
    rho2 = radius * radius

    def ev(x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        c = (2 * rho2 / (rho2 + r2)) ** 2
        return c[..., None, None] * np.eye(n)

    return MetricField(grid, ev(grid.coords()), (0, n), evaluator=ev)


def sphere_scalar_oracle(n: int, radius: float = 1.0) -> float:
    return n * (n - 1) / radius ** 2


def flat_torus(n: int, periods, counts) -> MetricField:
    """Identity metric on a fully periodic box ``prod [0, L_i)``."""
    periods = np.broadcast_to(np.asarray(periods, dtype=float), (n,))
    counts = np.broadcast_to(np.asarray(counts, dtype=int), (n,))
    from .chart import build_grid

    grid = build_grid([(0.0, float(L)) for L in periods], [int(c) for c in counts], [True] * n)
    return flat(n, (0, n), grid)


def _bump_profile(x, center, radius):
    """``(1 - s)^4`` with ``s = |x - c|^2 / r^2`` inside the support, else 0."""
    d = np.asarray(x, dtype=float) - np.asarray(center, dtype=float)
    s = np.sum(d * d, axis=-1) / radius ** 2
    return np.where(s < 1, (1 - np.minimum(s, 1)) ** 4, 0.0)


def _grid_bump(grid: Grid, center, radius):
    disp = grid.displacement(center)
    s = sum(d * d for d in disp) / radius ** 2
    s = np.broadcast_to(s, grid.shape)
    return np.where(s < 1, (1 - np.minimum(s, 1)) ** 4, 0.0)


def check_bump_support(grid: Grid, center, radius, margin_nodes: int = 2) -> None:
    """Support ball must stay ``margin_nodes`` spacings inside non-periodic
    edges and shorter than half a period on periodic axes."""
    for i in range(grid.dim):
        a, b = grid.bounds[i]
        h = grid.spacing[i]
        if grid.periodic[i]:
            if radius >= (b - a) / 2:
                raise SupportError(f"axis {i}: support radius {radius} wraps the period {b - a}")
        else:
            lo, hi = center[i] - radius, center[i] + radius
            if lo < a + margin_nodes * h or hi > b - margin_nodes * h:
                raise SupportError(
                    f"axis {i}: support [{lo:.6g}, {hi:.6g}] not inside the interior margin "
                    f"[{a + margin_nodes * h:.6g}, {b - margin_nodes * h:.6g}]"
                )


def bump_perturbation(grid: Grid, center, radius: float, amplitude: float, pattern=None, margin_nodes: int = 2) -> TensorField:
    """Compactly supported symmetric (0,2) tensor ``amplitude (1 - s)^4 pattern``."""
    n = grid.dim
    center = np.asarray(center, dtype=float)
    pat = np.eye(n) if pattern is None else np.asarray(pattern, dtype=float)
    if pat.shape != (n, n) or not np.array_equal(pat, pat.T):
        raise ConfigurationError("bump pattern must be a symmetric n x n matrix")
    if radius <= 0:
        raise ConfigurationError("bump radius must be positive")
    check_bump_support(grid, center, radius, margin_nodes)
    phi = _grid_bump(grid, center, radius)
    return TensorField(grid, (0, 2), amplitude * phi[..., None, None] * pat, symmetric=True)


def random_bump_variations(grid: Grid, count: int, seed: int = 0, radius: float = None, jitter: float = 0.5,
                           center=None) -> list:
    """``count`` random compact symmetric (0,2) variations.

    Each is a bump of the given radius around ``center`` shifted by up to
    ``jitter`` per axis, times a random symmetric matrix of unit spectral norm.
    """
    n = grid.dim
    rng = np.random.default_rng(seed)
    L = np.array(grid.lengths)
    lo = np.array([a for a, _ in grid.bounds])
    center = lo + L / 2 if center is None else np.asarray(center, dtype=float)
    radius = 0.4 * float(L.min()) if radius is None else float(radius)
    out = []
    for _ in range(count):
        c = center + rng.uniform(-jitter, jitter, n)
        A = rng.normal(size=(n, n))
        A = A + A.T
        A /= np.abs(np.linalg.eigvalsh(A)).max()
        out.append(bump_perturbation(grid, c, radius, 1.0, A))
    return out


def perturbed_torus(grid: Grid, amplitude: float = 0.1, center=None, radius=None, pattern=None) -> MetricField:
    """Identity metric plus a smooth compact bump on a periodic grid."""
    n = grid.dim
    if not all(grid.periodic):
        raise ConfigurationError("perturbed torus needs a fully periodic grid")
    L = np.array(grid.lengths)
    lo = np.array([a for a, _ in grid.bounds])
    center = lo + L / 2 if center is None else np.asarray(center, dtype=float)
    radius = 0.35 * float(L.min()) if radius is None else float(radius)
    if pattern is None:
        pattern = np.diag(np.linspace(1.0, -0.5, n))
        pattern[0, 1] = pattern[1, 0] = 0.5
    pattern = np.asarray(pattern, dtype=float)
    h = bump_perturbation(grid, center, radius, amplitude, pattern)
    base = np.eye(n)
    periods = L

    def ev(x):
        d = np.asarray(x, dtype=float) - center
        d = d - periods * np.round(d / periods)
        return base + amplitude * _bump_profile(d, 0.0, radius)[..., None, None] * pattern

    return MetricField(grid, base + h.components, (0, n), evaluator=ev)


@dataclass(frozen=True)
class ConformalBump:
    """``g = exp(2u) eta`` with ``u = amplitude (1 - |x - c|^2 / r^2)^4`` inside ``r``."""

    n: int
    center: tuple
    radius: float
    amplitude: float
    signature: tuple = None

    def u(self, x):
        return self.amplitude * _bump_profile(x, self.center, self.radius)

    def derivatives(self, x):
        """``u``, gradient and flat Laplacian (with respect to ``eta``)."""
        x = np.asarray(x, dtype=float)
        d = x - np.asarray(self.center)
        r2 = self.radius ** 2
        s = np.sum(d * d, axis=-1) / r2
        inside = s < 1
        one = np.where(inside, 1 - np.minimum(s, 1), 0.0)
        A = self.amplitude
        phi, dphi, ddphi = A * one ** 4, -4 * A * one ** 3, 12 * A * one ** 2
        ds = 2 * d / r2
        et = np.diag(eta(self.n, self.signature))
        grad = dphi[..., None] * ds
        lap = ddphi * np.sum(et * ds * ds, axis=-1) + dphi * 2 * np.sum(et) / r2
        grad_sq = np.sum(et * grad * grad, axis=-1)
        return phi, grad, lap, grad_sq

    def metric(self, x):
        u = self.u(x)
        return np.exp(2 * u)[..., None, None] * eta(self.n, self.signature)

    def scalar(self, x):
        """``R = -exp(-2u) (2(n-1) lap u + (n-1)(n-2) |grad u|^2)``."""
        n = self.n
        u, _, lap, gsq = self.derivatives(x)
        return -np.exp(-2 * u) * (2 * (n - 1) * lap + (n - 1) * (n - 2) * gsq)

    def density(self, x):
        return self.scalar(x) * np.exp(self.n * self.u(x))

    def total_action(self) -> float:
        """``(n-1)(n-2) integral exp((n-2)u) |grad u|^2`` as a radial quadrature.

        Valid for Riemannian signature, where the Laplacian term integrates by
        parts against the compact support.
        """
        n = self.n
        if self.signature not in (None, (0, n)):
            raise ConfigurationError("closed-form total only for Riemannian signature")
        A, r = self.amplitude, self.radius

        def integrand(rho):
            one = 1 - (rho / r) ** 2
            u = A * one ** 4
            du = -8 * A * one ** 3 * rho / r ** 2
            return rho ** (n - 1) * math.exp((n - 2) * u) * du * du

        val, _ = sp_integrate.quad(integrand, 0.0, r, epsabs=1e-14, epsrel=1e-13, limit=200)
        area = n * ball_volume(n)
        return (n - 1) * (n - 2) * area * val


def conformal_bump(grid: Grid, center=None, radius: float = 0.4, amplitude: float = 0.3, signature=None) -> MetricField:
    """Conformally flat metric ``exp(2u) eta`` with a compact polynomial bump ``u``."""
    n = grid.dim
    center = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    sig = (0, n) if signature is None else tuple(signature)
    cb = ConformalBump(n, tuple(center), float(radius), float(amplitude), sig)
    return MetricField(grid, cb.metric(grid.coords()), sig, evaluator=cb.metric)


def conformal_bump_data(grid_or_n, center=None, radius: float = 0.4, amplitude: float = 0.3, signature=None) -> ConformalBump:
    n = grid_or_n.dim if isinstance(grid_or_n, Grid) else int(grid_or_n)
    center = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    sig = (0, n) if signature is None else tuple(signature)
    return ConformalBump(n, tuple(center), float(radius), float(amplitude), sig)


def random_smooth(grid: Grid, seed: int = 0, amplitude: float = 0.15, modes: int = 3, signature=None,
                  background: str = "flat") -> MetricField:
    """Random smooth non-degenerate metric built from low-frequency modes.

    ``g = c(x) (B + amplitude sum_k cos(k.x + phase) S_k)`` with a random
    well-conditioned constant ``B`` of the requested signature and random
    symmetric ``S_k`` of unit spectral norm. ``background="sphere"`` sets
    ``c`` to the unit-sphere stereographic factor, which keeps the scalar
    curvature of Riemannian samples bounded away from zero; ``"flat"`` uses
    ``c = 1``.
    """
    if background not in ("flat", "sphere"):
        raise ConfigurationError(f"unknown background {background!r}")
    n = grid.dim
    sig = (0, n) if signature is None else tuple(signature)
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    scales = rng.uniform(1.0, 2.0, n) * np.diag(eta(n, sig))
    B = (Q * scales) @ Q.T
    B = 0.5 * (B + B.T)
    L = np.array(grid.lengths)
    terms = []
    for _ in range(modes):
        k = rng.integers(-1, 2, n).astype(float)
        if not k.any():
            k[0] = 1.0
        k = 2 * np.pi * k / L
        S = rng.normal(size=(n, n))
        S = S + S.T
        S /= np.linalg.norm(S, 2)
        terms.append((k, rng.uniform(0, 2 * np.pi), S))

    def ev(x):
        x = np.asarray(x, dtype=float)
        out = np.broadcast_to(B, x.shape[:-1] + (n, n)).copy()
        for k, ph, S in terms:
            out += amplitude * np.cos(x @ k + ph)[..., None, None] * S
        if background == "sphere":
            out *= ((2 / (1 + np.sum(x * x, axis=-1))) ** 2)[..., None, None]
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    return MetricField(grid, ev(grid.coords()), sig, evaluator=ev)


def random_polynomial(grid: Grid, seed: int = 0, amplitude: float = 0.05, curvature: float = 1.0) -> MetricField:
    """Random Riemannian metric with quadratic polynomial components.

    ``g = (1 - curvature |x - m|^2) B + amplitude sum_k p_k(x) S_k`` where
    ``m`` is the box midpoint, ``B`` a random well-conditioned SPD matrix and
    ``p_k`` random polynomials of degree <= 2. The second-order stencils
    (one-sided ones included) differentiate such components exactly, so the
    computed curvature carries rounding error only; the ``-curvature |x|^2``
    term keeps the scalar curvature positive on small boxes.
    """
    n = grid.dim
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    B = (Q * rng.uniform(1.0, 2.0, n)) @ Q.T
    B = 0.5 * (B + B.T)
    mid = np.array([(a + b) / 2 for a, b in grid.bounds])
    half = np.array(grid.lengths) / 2
    polys = []
    for _ in range(n):
        lin = rng.normal(size=n) / (half * n)
        quad = rng.normal(size=(n, n)) / (np.outer(half, half) * n * n)
        quad = 0.5 * (quad + quad.T)
        S = rng.normal(size=(n, n))
        S = S + S.T
        S /= np.linalg.norm(S, 2)
        polys.append((lin, quad, S))

    def ev(x):
        d = np.asarray(x, dtype=float) - mid
        out = (1 - curvature * np.sum(d * d, axis=-1))[..., None, None] * B
        for lin, quad, S in polys:
            p = d @ lin + np.einsum("...i,ij,...j->...", d, quad, d)
            out = out + amplitude * p[..., None, None] * S
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    return MetricField(grid, ev(grid.coords()), (0, n), evaluator=ev)


# --------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    builder: Callable
    oracle: Callable = None
    params: tuple = field(default_factory=tuple)
    description: str = ""


CATALOG = {
    "flat": CatalogEntry("flat", flat, lambda n, **_: {"R": 0.0, "action": 0.0}, ("n", "signature"), "constant diagonal metric"),
    "sphere_stereographic": CatalogEntry(
        "sphere_stereographic", sphere_stereographic, lambda n, radius=1.0, **_: sphere_oracle(n, radius),
        ("n", "radius"), "round sphere in a stereographic chart",
    ),
    "flat_torus": CatalogEntry(
        "flat_torus", flat_torus, lambda n, periods, **_: flat_torus_oracle(n, periods), ("n", "periods", "counts"),
        "identity metric on a periodic box",
    ),
    "perturbed_torus": CatalogEntry(
        "perturbed_torus", perturbed_torus, None, ("amplitude", "center", "radius", "pattern"),
        "identity plus a compact bump on a periodic box",
    ),
    "conformal_bump": CatalogEntry(
        "conformal_bump", conformal_bump, None, ("center", "radius", "amplitude", "signature"),
        "conformally flat metric with compact conformal factor",
    ),
    "random_smooth": CatalogEntry(
        "random_smooth", random_smooth, None, ("seed", "amplitude", "modes", "signature"),
        "random low-frequency smooth metric",
    ),
    "random_polynomial": CatalogEntry(
        "random_polynomial", random_polynomial, None, ("seed", "amplitude", "curvature"),
        "random metric with quadratic polynomial components",
    ),
}


def get_entry(name: str) -> CatalogEntry:
    try:
        return CATALOG[name]
    except KeyError:
        raise ConfigurationError(f"unknown catalog entry {name!r}") from None


def build(name: str, grid: Grid, **params) -> MetricField:
    """Build catalog entry ``name`` on ``grid`` with keyword parameters."""
    entry = get_entry(name)
    unknown = set(params) - set(entry.params) - {"background"}
    if unknown:
        raise ConfigurationError(f"{name}: unknown parameters {sorted(unknown)}; allowed {list(entry.params)}")
    if name in ("flat", "sphere_stereographic"):
        params.pop("n", None)
        return entry.builder(grid.dim, grid=grid, **params)
    if name == "flat_torus":
        if not all(grid.periodic) or any(a != 0 for a, _ in grid.bounds):
            raise ConfigurationError("flat_torus needs a periodic grid starting at 0")
        return flat_torus(grid.dim, grid.lengths, grid.counts)
    return entry.builder(grid, **params)
