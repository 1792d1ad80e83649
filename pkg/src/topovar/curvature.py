"""Curvature tensors, Lagrangian density, actions and the metric gradient.

Two independent routes to the scalar curvature are provided:

* ``direct``: a quasilinear formula using only first and second partials of
  ``g`` and algebra in ``g`` and its inverse;
* ``christoffel``: Levi-Civita symbols, Riemann tensor, Ricci contraction.

Large grids are processed slab by slab (see :func:`topovar.chart.map_slabs`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chart import (
    MetricField,
    ScalarField,
    TensorField,
    fd,
    integrate,
    map_slabs,
    metric_inverse_det,
    sobolev_norm,
)
from .errors import ConfigurationError, DegeneracyError, SupportError


# --------------------------------------------------------------------------
# array kernels: leading axes are grid axes, trailing axes are indices


def _mm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched matrix product; flattening the batch axes first is much faster."""
    lead = a.shape[:-2]
    out = np.matmul(a.reshape((-1,) + a.shape[-2:]), b.reshape((-1,) + b.shape[-2:]))
    return out.reshape(lead + out.shape[-2:])


def _inverse(g: np.ndarray, det_floor: float):
    det = np.linalg.det(g)
    if (np.abs(det) < det_floor).any():
        raise DegeneracyError(f"|det g| < {det_floor} inside curvature kernel")
    inv = np.linalg.inv(g)
    return 0.5 * (inv + np.swapaxes(inv, -1, -2)), det


def first_partials(arr: np.ndarray, spacing, periodic, accuracy: int = 2) -> np.ndarray:
    """First partials of ``arr`` stacked on a new axis placed right after the
    grid axes, so ``out[..., a, <index axes>] = d_a arr[..., <index axes>]``."""
    n = len(spacing)
    out = np.empty(arr.shape[:n] + (n,) + arr.shape[n:])
    for a in range(n):
        out[(slice(None),) * n + (a,)] = fd(arr, a, spacing[a], 1, periodic[a], accuracy)
    return out


def scalar_direct_kernel(g: np.ndarray, spacing, periodic, accuracy: int = 2, det_floor: float = 0.0):
    """Scalar curvature and |det g| from partials of ``g`` only.

    With ``D_abc = d_a g_bc`` the result is
    ``g^mn g^rs (d_r d_n g_ms - d_m d_n g_rs) + 3/4 I1 - 1/2 I2 - I3 + I4 - 1/4 I5``
    where ``I1 = D_abc D^abc``, ``I2 = D_abc D^bac`` and ``I3, I4, I5`` are
    the quadratic forms of the divergence ``g^ab D_abc`` and trace
    ``g^bc D_abc`` vectors.
    """
    n = len(spacing)
    ginv, det = _inverse(g, det_floor)
    D = first_partials(g, spacing, periodic, accuracy)  # D[..., a, b, c]

    lin = np.zeros(g.shape[:-2])
    for a in range(n):
        for b in range(a, n):
            if a == b:
                H = fd(g, a, spacing[a], 2, periodic[a], accuracy)
            else:
                H = fd(D[..., a, :, :], b, spacing[b], 1, periodic[b], accuracy)
            # K = g^-1 H g^-1 gives g^{m b} g^{a s} H_ms = K_ba
            K = _mm(_mm(ginv, H), ginv)
            trH = np.sum(ginv * H, axis=(-2, -1))
            w = 1.0 if a == b else 2.0
            lin += w * (K[..., a, b] - ginv[..., a, b] * trH)

    # D with every index raised, built one index at a time
    lead = g.shape[:-2]
    T = _mm(ginv, D.reshape(lead + (n, n * n)))  # [a, (j, k)]
    T = _mm(T.reshape(lead + (n * n, n)), ginv).reshape(lead + (n, n, n))  # [a, j, c]
    T = np.swapaxes(T, -3, -2).reshape(lead + (n, n * n))  # [j, (a, c)]
    Du = np.swapaxes(_mm(ginv, T).reshape(lead + (n, n, n)), -3, -2)  # [a, b, c]
    I1 = np.sum(D * Du, axis=(-3, -2, -1))
    I2 = np.sum(D * np.swapaxes(Du, -3, -2), axis=(-3, -2, -1))
    div = np.sum(ginv[..., :, :, None] * D, axis=(-3, -2))
    tr = np.sum(D * ginv[..., None, :, :], axis=(-2, -1))
    gdiv = _mm(ginv, div[..., None])[..., 0]
    gtr = _mm(ginv, tr[..., None])[..., 0]
    I3 = np.sum(div * gdiv, axis=-1)
    I4 = np.sum(div * gtr, axis=-1)
    I5 = np.sum(tr * gtr, axis=-1)
    R = lin + 0.75 * I1 - 0.5 * I2 - I3 + I4 - 0.25 * I5
    return R, np.abs(det)


def christoffel_kernel(g: np.ndarray, spacing, periodic, accuracy: int = 2, det_floor: float = 0.0):
    """Symmetrized Christoffel symbols ``gamma[..., r, a, b]``, inverse metric, det."""
    n = len(spacing)
    ginv, det = _inverse(g, det_floor)
    D = first_partials(g, spacing, periodic, accuracy)  # D[a, s, b] = d_a g_sb
    # lowered symbols [s, a, b] = d_a g_sb + d_b g_sa - d_s g_ab
    low = np.swapaxes(D, -3, -2) + np.swapaxes(np.swapaxes(D, -3, -2), -1, -2) - D
    lead = g.shape[:-2]
    gam = _mm(ginv, low.reshape(lead + (n, n * n))).reshape(lead + (n, n, n))
    gam *= 0.5
    gam = 0.5 * (gam + np.swapaxes(gam, -1, -2))
    return gam, ginv, det


def riemann_kernel(g: np.ndarray, spacing, periodic, accuracy: int = 2, det_floor: float = 0.0):
    """Christoffel symbols, Riemann ``R^r_{s m n}``, Ricci, inverse and det."""
    gam, ginv, det = christoffel_kernel(g, spacing, periodic, accuracy, det_floor)
    dG = first_partials(gam, spacing, periodic, accuracy)  # dG[m, r, a, b] = d_m gamma^r_ab
    deriv = np.einsum("...mrns->...rsmn", dG)
    lead = g.shape[:-2]
    n = len(spacing)
    # quad[r, s, m, n] = gamma^r_ml gamma^l_ns as one flat matrix product
    quad = _mm(gam.reshape(lead + (n * n, n)), gam.reshape(lead + (n, n * n)))
    quad = np.moveaxis(quad.reshape(lead + (n, n, n, n)), -1, -3)
    riem = deriv - np.swapaxes(deriv, -1, -2) + quad - np.swapaxes(quad, -1, -2)
    ric = np.einsum("...rsrn->...sn", riem)
    return gam, riem, ric, ginv, det


def ricci_kernel(g: np.ndarray, spacing, periodic, accuracy: int = 2, det_floor: float = 0.0):
    """Ricci tensor, inverse and det without forming the Riemann tensor.

    ``R_sn = d_r G^r_ns - d_n G^r_rs + G^r_rl G^l_ns - G^r_nl G^l_rs``.
    """
    n = len(spacing)
    gam, ginv, det = christoffel_kernel(g, spacing, periodic, accuracy, det_floor)
    div = sum(fd(gam[..., r, :, :], r, spacing[r], 1, periodic[r], accuracy) for r in range(n))
    contracted = np.einsum("...rrs->...s", gam)
    grad = first_partials(contracted, spacing, periodic, accuracy)  # [n, s]
    ric = div - grad
    ric += np.einsum("...l,...lns->...ns", contracted, gam)
    lead = g.shape[:-2]
    left = np.swapaxes(gam, -3, -2).reshape(lead + (n, n * n))  # [n, (r, l)]
    right = np.swapaxes(gam, -3, -2).reshape(lead + (n * n, n))  # [(r, l), s] = gam[l, r, s]
    ric -= _mm(left, right)
    ric = 0.5 * (ric + np.swapaxes(ric, -1, -2))
    return ric, ginv, det


def _halo(route: str, accuracy: int) -> int:
    r = accuracy // 2
    return r if route == "direct" else 2 * r


# --------------------------------------------------------------------------
# field-level API


@dataclass(frozen=True)
class CurvatureBundle:
    gamma: TensorField
    riemann: TensorField
    ricci: TensorField
    scalar: ScalarField
    scalar_direct: ScalarField


def curvature_tensors(g: MetricField, accuracy: int = 2) -> CurvatureBundle:
    """All curvature fields of ``g`` on its grid, both scalar routes included."""
    grid = g.grid
    sp, per = grid.spacing, grid.periodic
    gam, riem, ric, ginv, _ = riemann_kernel(g.components, sp, per, accuracy, g.det_floor)
    scalar = np.einsum("...ab,...ab->...", ginv, ric)
    R_direct, _ = scalar_direct_kernel(g.components, sp, per, accuracy, g.det_floor)
    return CurvatureBundle(
        gamma=TensorField(grid, (1, 2), gam),
        riemann=TensorField(grid, (1, 3), riem),
        ricci=TensorField(grid, (0, 2), ric),
        scalar=ScalarField(grid, scalar),
        scalar_direct=ScalarField(grid, R_direct),
    )


def scalar_curvature(g: MetricField, route: str = "direct", accuracy: int = 2) -> ScalarField:
    """Scalar curvature by either route, computed slab-wise to bound memory."""
    grid = g.grid
    floor = g.det_floor
    if route == "direct":
        def fn(arrs, sp, per):
            return scalar_direct_kernel(arrs[0], sp, per, accuracy, floor)[0]
    elif route == "christoffel":
        def fn(arrs, sp, per):
            ric, ginv, _ = ricci_kernel(arrs[0], sp, per, accuracy, floor)
            return np.einsum("...ab,...ab->...", ginv, ric)
    else:
        raise ConfigurationError(f"unknown curvature route {route!r}")
    return ScalarField(grid, map_slabs(fn, [g.components], grid, _halo(route, accuracy)))


def lagrangian_density(g: MetricField, route: str = "direct", accuracy: int = 2) -> ScalarField:
    """Nodewise ``R |det g|^(1/2)``."""
    grid = g.grid
    floor = g.det_floor
    if route == "direct":
        def fn(arrs, sp, per):
            R, adet = scalar_direct_kernel(arrs[0], sp, per, accuracy, floor)
            return R * np.sqrt(adet)
    elif route == "christoffel":
        def fn(arrs, sp, per):
            ric, ginv, det = ricci_kernel(arrs[0], sp, per, accuracy, floor)
            return np.einsum("...ab,...ab->...", ginv, ric) * np.sqrt(np.abs(det))
    else:
        raise ConfigurationError(f"unknown curvature route {route!r}")
    return ScalarField(grid, map_slabs(fn, [g.components], grid, _halo(route, accuracy)))


def action(g: MetricField, mask=None, route: str = "direct", accuracy: int = 2) -> float:
    """Einstein-Hilbert action over the masked region."""
    return integrate(lagrangian_density(g, route, accuracy), mask)


def einstein_tensor(g: MetricField, accuracy: int = 2) -> TensorField:
    """``G_mn = R_mn - R g_mn / 2`` with R the contracted Ricci scalar."""
    grid = g.grid
    floor = g.det_floor

    def fn(arrs, sp, per):
        gm = arrs[0]
        ric, ginv, _ = ricci_kernel(gm, sp, per, accuracy, floor)
        R = np.einsum("...ab,...ab->...", ginv, ric)
        G = ric - 0.5 * R[..., None, None] * gm
        return 0.5 * (G + np.swapaxes(G, -1, -2))

    comps = map_slabs(fn, [g.components], grid, _halo("christoffel", accuracy))
    return TensorField(grid, (0, 2), comps)


def erode(mask: np.ndarray, periodic, steps: int) -> np.ndarray:
    """Remove ``steps`` layers of nodes from a boolean mask (cross stencil).

    Non-periodic grid edges count as outside; periodic axes wrap.
    """
    m = np.asarray(mask, dtype=bool).copy()
    for _ in range(steps):
        out = m.copy()
        for ax, per in enumerate(periodic):
            for shift in (1, -1):
                if per:
                    out &= np.roll(m, shift, axis=ax)
                else:
                    moved = np.zeros_like(m)
                    src = [slice(None)] * m.ndim
                    dst = [slice(None)] * m.ndim
                    if shift == 1:
                        src[ax], dst[ax] = slice(None, -1), slice(1, None)
                    else:
                        src[ax], dst[ax] = slice(1, None), slice(None, -1)
                    moved[tuple(dst)] = m[tuple(src)]
                    out &= moved
        m = out
    return m


def check_support(h: TensorField, mask, margin: int) -> None:
    """Raise SupportError unless ``h`` vanishes within ``margin`` nodes of the mask edge."""
    grid = h.grid
    full = np.ones(grid.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    inner = erode(full, grid.periodic, margin)
    nz = np.any(h.components.reshape(grid.shape + (-1,)) != 0, axis=-1)
    bad = nz & ~inner
    if bad.any():
        node = tuple(int(k) for k in np.unravel_index(int(np.flatnonzero(bad.ravel())[0]), grid.shape))
        raise SupportError(f"variation is nonzero at node {node}, within {margin} nodes of the region edge")


def gradient_density(g: MetricField, accuracy: int = 2) -> TensorField:
    """``-G^{mn} |det g|^(1/2)`` as a (2,0) field; pairing it with ``h`` gives the first variation."""
    grid = g.grid
    floor = g.det_floor

    def fn(arrs, sp, per):
        gm = arrs[0]
        ric, ginv, det = ricci_kernel(gm, sp, per, accuracy, floor)
        R = np.sum(ginv * ric, axis=(-2, -1))
        G = ric - 0.5 * R[..., None, None] * gm
        return -_mm(_mm(ginv, G), ginv) * np.sqrt(np.abs(det))[..., None, None]

    dens = map_slabs(fn, [g.components], grid, _halo("christoffel", accuracy))
    return TensorField(grid, (2, 0), dens)


def geometric_functional_derivative(g: MetricField, h: TensorField, mask=None, accuracy: int = 2,
                                    density: TensorField = None) -> float:
    """First variation of the action in the direction ``h``.

    Returns ``-integral G^{mn} h_mn |det g|^(1/2)``, indices raised with the
    background metric; the sign makes it equal the derivative
    ``d/dt S[g + t h]`` at ``t = 0`` for compactly supported ``h``.
    ``density`` (from :func:`gradient_density`) may be passed to reuse the
    curvature work across several directions.
    """
    if h.valence != (0, 2):
        raise ConfigurationError(f"variation must be a (0,2) tensor, got valence {h.valence}")
    if not np.array_equal(h.components, np.swapaxes(h.components, -1, -2)):
        raise ConfigurationError("variation must be symmetric")
    if h.grid != g.grid:
        raise ConfigurationError("variation and metric live on different grids")
    check_support(h, mask, 2 * accuracy)
    if density is None:
        density = gradient_density(g, accuracy)
    elif density.grid != g.grid:
        raise ConfigurationError("gradient density lives on a different grid")
    pair = np.sum(density.components * h.components, axis=(-2, -1))
    return integrate(ScalarField(g.grid, pair), mask)


def action_central_difference(g: MetricField, h: TensorField, step: float, mask=None, accuracy: int = 2, route: str = "direct") -> float:
    """``(S[g + step h] - S[g - step h]) / (2 step)`` on the same grid."""
    plus = MetricField(g.grid, g.components + step * h.components, g.signature, g.det_floor)
    minus = MetricField(g.grid, g.components - step * h.components, g.signature, g.det_floor)
    return (action(plus, mask, route, accuracy) - action(minus, mask, route, accuracy)) / (2 * step)


def gradient_check(g: MetricField, variations, step: float = 1e-4, mask=None, accuracy: int = 4,
                   min_alignment: float = 0.25, wanted: int = None) -> list:
    """Compare the first variation with a central difference of the action.

    For each variation ``h`` the record holds the pairing ``-integral G.h``,
    the central difference (Christoffel route, the same discretisation the
    curvature comes from), the relative error against the central
    difference, and the error scaled by ``integral |G.h|``. ``alignment`` is
    the ratio ``|pairing| / integral |G.h|``; directions below
    ``min_alignment`` are nearly orthogonal to the gradient, where the
    relative error measures cancellation instead of the gradient. They are
    recorded with ``used=False`` and no central difference is taken. With
    ``wanted`` set, evaluation stops once that many directions were used.
    """
    dens = gradient_density(g, accuracy)
    grid = g.grid
    out = []
    for h in variations:
        if wanted is not None and sum(r["used"] for r in out) >= wanted:
            break
        pair = np.sum(dens.components * h.components, axis=(-2, -1))
        gd = geometric_functional_derivative(g, h, mask, accuracy, density=dens)
        scale = integrate(ScalarField(grid, np.abs(pair)), mask)
        align = abs(gd) / scale if scale > 0 else 0.0
        rec = {"gradient": gd, "scale": scale, "alignment": align, "used": align >= min_alignment}
        if rec["used"]:
            cd = action_central_difference(g, h, step, mask, accuracy, route="christoffel")
            rec.update(central_difference=cd, rel_error=abs(gd - cd) / abs(cd), scaled_error=abs(gd - cd) / scale)
        out.append(rec)
    return out


def continuity_ratios(g: MetricField, h: TensorField, ts, region=None, domain=None, p: float = 2.0,
                      accuracy: int = 2) -> dict:
    """``||R[g + t h] - R[g]||_L1(region) / ||t h||_W2p(domain)`` for each ``t``.

    ``region`` and ``domain`` are masks (``None`` selects the whole grid).
    Returns ``{"t": ..., "l1": ..., "w2p": ..., "ratio": ...}``.
    """
    ts = np.asarray(ts, dtype=float)
    R0 = scalar_curvature(g, "direct", accuracy).values
    h_norm = sobolev_norm(h, 2, p, domain, accuracy=accuracy)
    if h_norm == 0:
        raise ConfigurationError("variation has zero W^{2,p} norm")
    l1 = np.empty_like(ts)
    for i, t in enumerate(ts):
        gt = MetricField(g.grid, g.components + t * h.components, g.signature, g.det_floor)
        dR = scalar_curvature(gt, "direct", accuracy).values - R0
        l1[i] = integrate(ScalarField(g.grid, np.abs(dR)), region)
    w2p = np.abs(ts) * h_norm
    return {"t": ts, "l1": l1, "w2p": w2p, "ratio": l1 / w2p}


def riemann_lowered(bundle: CurvatureBundle, g: MetricField) -> np.ndarray:
    """``R_{rsmn} = g_{rl} R^l_{smn}``."""
    return np.einsum("...rl,...lsmn->...rsmn", g.components, bundle.riemann.components)


def riemann_symmetry_residuals(bundle: CurvatureBundle, g: MetricField) -> dict:
    """Nodewise max residuals of the algebraic Riemann symmetries."""
    Rl = riemann_lowered(bundle, g)
    anti1 = Rl + np.swapaxes(Rl, -4, -3)
    anti2 = Rl + np.swapaxes(Rl, -2, -1)
    pair = Rl - np.einsum("...rsmn->...mnrs", Rl)
    bianchi = Rl + np.einsum("...rsmn->...rmns", Rl) + np.einsum("...rsmn->...rnsm", Rl)
    ric = bundle.ricci.components
    ric_sym = ric - np.swapaxes(ric, -1, -2)
    red = lambda a: np.abs(a).reshape(a.shape[: g.grid.dim] + (-1,)).max(axis=-1)
    return {
        "antisym_first": red(anti1),
        "antisym_second": red(anti2),
        "pair": red(pair),
        "bianchi": red(bianchi),
        "ricci_sym": red(ric_sym),
    }


def interior_mask(grid, layers: int = 2) -> np.ndarray:
    """Nodes at least ``layers`` away from every non-periodic grid edge."""
    return erode(np.ones(grid.shape, dtype=bool), grid.periodic, layers)


__all__ = [
    "CurvatureBundle",
    "curvature_tensors",
    "scalar_curvature",
    "lagrangian_density",
    "action",
    "einstein_tensor",
    "geometric_functional_derivative",
    "gradient_density",
    "gradient_check",
    "continuity_ratios",
    "interior_mask",
    "check_support",
    "erode",
    "action_central_difference",
    "riemann_symmetry_residuals",
    "metric_inverse_det",
]
