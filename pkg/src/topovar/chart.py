"""Uniform rectangular charts: grids, fields, finite differences, quadrature.

Every other module works on arrays whose leading axes are the grid axes and
whose trailing axes are tensor indices. Fields are immutable after
construction (the arrays are flagged read-only).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import ConfigurationError, DegeneracyError, SignatureError, StencilError

MIN_NODES = 5
DEFAULT_DET_FLOOR = 1e-10


class EmptyMaskWarning(UserWarning):
    """Integration mask selected no nodes; the integral is reported as 0."""


@dataclass(frozen=True)
class Grid:
    bounds: tuple
    counts: tuple
    periodic: tuple

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple:
        return tuple(self.counts)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def spacing(self) -> tuple:
        out = []
        for (a, b), n, per in zip(self.bounds, self.counts, self.periodic):
            out.append((b - a) / n if per else (b - a) / (n - 1))
        return tuple(out)

    @property
    def lengths(self) -> tuple:
        return tuple(b - a for a, b in self.bounds)

    def axis_coords(self, axis: int) -> np.ndarray:
        a = self.bounds[axis][0]
        return a + np.arange(self.counts[axis]) * self.spacing[axis]

    def mesh(self, sparse: bool = True) -> list:
        axes = [self.axis_coords(i) for i in range(self.dim)]
        return np.meshgrid(*axes, indexing="ij", sparse=sparse)

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(*shape, dim)``."""
        return np.stack(self.mesh(sparse=False), axis=-1)

    def node_coord(self, index) -> np.ndarray:
        return np.array([self.axis_coords(i)[k] for i, k in enumerate(index)])

    def displacement(self, center) -> list:
        """Per-axis sparse displacement from ``center``, minimum image on periodic axes."""
        out = []
        for i, x in enumerate(self.mesh(sparse=True)):
            d = x - center[i]
            if self.periodic[i]:
                L = self.lengths[i]
                d = d - L * np.round(d / L)
            out.append(d)
        return out

    def nearest_index(self, point) -> tuple:
        idx = []
        for i in range(self.dim):
            k = int(round((point[i] - self.bounds[i][0]) / self.spacing[i]))
            idx.append(k % self.counts[i] if self.periodic[i] else min(max(k, 0), self.counts[i] - 1))
        return tuple(idx)


def build_grid(bounds, counts, periodic=None) -> Grid:
    """Build a uniform grid.

    Args:
        bounds: one ``(a, b)`` pair per axis, or a single pair for a 1-D grid.
        counts: node count per axis (or a single int).
        periodic: per-axis flags; defaults to all False. Periodic axes store
            ``counts[i]`` nodes with the endpoint ``b`` identified with ``a``.
    """
    if np.ndim(bounds) == 1:
        bounds = [bounds]
    if np.ndim(counts) == 0:
        counts = [counts] * len(bounds)
    if periodic is None:
        periodic = [False] * len(bounds)
    elif isinstance(periodic, (bool, np.bool_)):
        periodic = [bool(periodic)] * len(bounds)
    bounds = tuple((float(a), float(b)) for a, b in bounds)
    counts = tuple(int(c) for c in counts)
    periodic = tuple(bool(p) for p in periodic)
    if not (len(bounds) == len(counts) == len(periodic)) or not bounds:
        raise ConfigurationError("bounds, counts and periodic must have equal non-zero length")
    for i, ((a, b), n) in enumerate(zip(bounds, counts)):
        if not (math.isfinite(a) and math.isfinite(b)) or a >= b:
            raise ConfigurationError(f"axis {i}: degenerate bounds [{a}, {b}]")
        if n < MIN_NODES:
            raise StencilError(f"axis {i}: {n} nodes, stencils need at least {MIN_NODES}")
    return Grid(bounds, counts, periodic)


def _freeze(arr) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = _freeze(self.values)
        if vals.shape != self.grid.shape:
            raise ConfigurationError(f"scalar values shape {vals.shape} != grid shape {self.grid.shape}")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class TensorField:
    grid: Grid
    valence: tuple
    components: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        comps = _freeze(self.components)
        n = self.grid.dim
        rank = sum(self.valence)
        expected = self.grid.shape + (n,) * rank
        if comps.shape != expected:
            raise ConfigurationError(f"tensor components shape {comps.shape} != {expected}")
        if self.symmetric:
            if rank < 2 or not np.array_equal(comps, np.swapaxes(comps, -1, -2)):
                raise ConfigurationError("tensor flagged symmetric is not symmetric in its last two indices")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "valence", tuple(int(v) for v in self.valence))


def signature_counts(mats: np.ndarray) -> tuple:
    """Per-node (negative, positive) eigenvalue counts of symmetric matrices."""
    ev = np.linalg.eigvalsh(mats)
    return (ev < 0).sum(axis=-1), (ev > 0).sum(axis=-1)


def check_signature(mats: np.ndarray, signature, error=SignatureError) -> None:
    """Raise ``error`` naming the first node whose sign counts differ from ``signature``."""
    r, s = signature
    spatial = mats.shape[:-2]
    if r == 0:
        try:
            np.linalg.cholesky(mats)
            return
        except np.linalg.LinAlgError:
            pass
    neg, pos = signature_counts(mats)
    bad = (neg != r) | (pos != s)
    if bad.any():
        flat = int(np.flatnonzero(bad.ravel())[0])
        node = tuple(int(k) for k in np.unravel_index(flat, spatial)) if spatial else ()
        raise error(
            f"signature ({int(neg.ravel()[flat])},{int(pos.ravel()[flat])}) at node {node}, expected ({r},{s})",
            node=node,
        )


@dataclass(frozen=True)
class MetricField:
    """Symmetric non-degenerate metric sampled on a grid.

    ``evaluator``, when present, maps coordinate arrays of shape ``(..., n)``
    to component arrays ``(..., n, n)`` and is used instead of interpolation
    wherever the metric must be sampled off-grid.
    """

    grid: Grid
    components: np.ndarray
    signature: tuple = None
    det_floor: float = DEFAULT_DET_FLOOR
    evaluator: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        n = self.grid.dim
        comps = _freeze(self.components)
        if n < 2:
            raise ConfigurationError("metrics need dimension >= 2")
        if comps.shape != self.grid.shape + (n, n):
            raise ConfigurationError(f"metric components shape {comps.shape} != {self.grid.shape + (n, n)}")
        if not np.array_equal(comps, np.swapaxes(comps, -1, -2)):
            raise ConfigurationError("metric components are not exactly symmetric")
        sig = (0, n) if self.signature is None else tuple(int(v) for v in self.signature)
        if len(sig) != 2 or sum(sig) != n or min(sig) < 0:
            raise ConfigurationError(f"signature {sig} incompatible with dimension {n}")
        det = np.linalg.det(comps)
        low = np.abs(det) < self.det_floor
        if low.any():
            node = tuple(int(k) for k in np.unravel_index(int(np.flatnonzero(low.ravel())[0]), self.grid.shape))
            raise DegeneracyError(f"|det g| < {self.det_floor} at node {node}", node=node)
        check_signature(comps, sig)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "signature", sig)

    @property
    def dim(self) -> int:
        return self.grid.dim

    def scaled(self, factor: float) -> "MetricField":
        ev = self.evaluator
        scaled_ev = None if ev is None else (lambda x, _ev=ev, _c=factor: _c * _ev(x))
        return MetricField(self.grid, factor * self.components, self.signature, self.det_floor * min(1.0, factor ** self.dim), scaled_ev)


# --------------------------------------------------------------------------
# finite differences


def _window(f: np.ndarray, axis: int, start: int, count: int) -> np.ndarray:
    idx = [slice(None)] * f.ndim
    idx[axis] = slice(start, start + count)
    return f[tuple(idx)]


def _central(f, axis, h, order, accuracy, first, count):
    """Central stencil values for ``count`` nodes starting at index ``first``.

    Stencils are sums of differences so constants differentiate to exact zeros.
    """
    w = lambda k: _window(f, axis, first + k, count)
    if accuracy == 2:
        if order == 1:
            return (w(1) - w(-1)) / (2 * h)
        return ((w(1) - w(0)) + (w(-1) - w(0))) / (h * h)
    if order == 1:
        return (8 * (w(1) - w(-1)) - (w(2) - w(-2))) / (12 * h)
    c = w(0)
    return (16 * ((w(1) - c) + (w(-1) - c)) - ((w(2) - c) + (w(-2) - c))) / (12 * h * h)


def fd(values: np.ndarray, axis: int, h: float, order: int = 1, periodic: bool = False, accuracy: int = 2) -> np.ndarray:
    """Finite-difference derivative of ``values`` along ``axis``.

    Central stencils in the interior, second-order one-sided stencils on the
    boundary layer of non-periodic axes, wraparound on periodic axes.
    ``accuracy=4`` switches the interior to fourth-order stencils (the second
    layer of a non-periodic axis keeps the second-order central stencil).
    """
    if order not in (1, 2):
        raise ConfigurationError(f"derivative order {order} not in (1, 2)")
    if accuracy not in (2, 4):
        raise ConfigurationError(f"accuracy {accuracy} not in (2, 4)")
    f = np.asarray(values, dtype=float)
    N = f.shape[axis]
    if N < MIN_NODES:
        raise StencilError(f"{N} nodes along axis {axis}, need at least {MIN_NODES}")
    if periodic:
        r = accuracy // 2
        padded = np.concatenate(
            [_window(f, axis, N - r, r), f, _window(f, axis, 0, r)], axis=axis
        )
        return _central(padded, axis, h, order, accuracy, r, N)

    out = np.empty_like(f)
    put = lambda start, count, val: _window(out, axis, start, count).__setitem__(Ellipsis, val)
    at = lambda k: _window(f, axis, k, 1)
    put(1, N - 2, _central(f, axis, h, order, 2, 1, N - 2))
    if accuracy == 4:
        put(2, N - 4, _central(f, axis, h, order, 4, 2, N - 4))
    if order == 1:
        put(0, 1, (3 * (at(1) - at(0)) - (at(2) - at(1))) / (2 * h))
        put(N - 1, 1, (3 * (at(N - 1) - at(N - 2)) - (at(N - 2) - at(N - 3))) / (2 * h))
    else:
        put(0, 1, (2 * (at(0) - at(1)) - 3 * (at(1) - at(2)) + (at(2) - at(3))) / (h * h))
        put(N - 1, 1, (2 * (at(N - 1) - at(N - 2)) - 3 * (at(N - 2) - at(N - 3)) + (at(N - 3) - at(N - 4))) / (h * h))
    return out


def partial_derivative(fld, axis: int, order: int = 1, accuracy: int = 2):
    """Partial derivative of a field along one grid axis, same field type back.

    Metric fields come back as plain (0,2) tensor fields.
    """
    grid = fld.grid
    if not 0 <= axis < grid.dim:
        raise ConfigurationError(f"axis {axis} out of range for dimension {grid.dim}")
    h, per = grid.spacing[axis], grid.periodic[axis]
    if isinstance(fld, ScalarField):
        return ScalarField(grid, fd(fld.values, axis, h, order, per, accuracy))
    if isinstance(fld, MetricField):
        return TensorField(grid, (0, 2), fd(fld.components, axis, h, order, per, accuracy))
    if isinstance(fld, TensorField):
        return TensorField(grid, fld.valence, fd(fld.components, axis, h, order, per, accuracy))
    raise TypeError(f"cannot differentiate {type(fld).__name__}")


def mixed_derivative(values: np.ndarray, a: int, b: int, spacing, periodic, accuracy: int = 2) -> np.ndarray:
    """Second derivative along axes ``a`` and ``b``; distinct axes compose first derivatives."""
    if a == b:
        return fd(values, a, spacing[a], 2, periodic[a], accuracy)
    first = fd(values, a, spacing[a], 1, periodic[a], accuracy)
    return fd(first, b, spacing[b], 1, periodic[b], accuracy)


def map_slabs(func, arrays: Sequence[np.ndarray], grid: Grid, halo: int, budget: int = 60_000):
    """Apply a stencil kernel slab by slab along axis 0 to bound memory.

    ``func(sub_arrays, spacing, periodic)`` must return an array (or tuple of
    arrays) whose leading axes are the sub-grid axes. Halo layers are computed
    and discarded; the kept nodes see exactly the stencils they would see on
    the full grid, so results are bit-identical to a single call.
    """
    N0 = grid.counts[0]
    per_layer = max(1, grid.size // N0)
    thick = max(MIN_NODES, budget // per_layer)
    spacing, periodic = grid.spacing, grid.periodic
    if thick >= N0:
        return func(list(arrays), spacing, periodic)
    sub_periodic = (False,) + tuple(periodic[1:])
    outputs = None
    for a in range(0, N0, thick):
        b = min(N0, a + thick)
        if periodic[0]:
            idx = np.arange(a - halo, b + halo) % N0
            lo = a - halo
        else:
            lo, hi = max(0, a - halo), min(N0, b + halo)
            if hi - lo < MIN_NODES:
                lo, hi = max(0, min(lo, hi - MIN_NODES)), min(N0, max(hi, lo + MIN_NODES))
            idx = np.arange(lo, hi)
        res = func([np.take(arr, idx, axis=0) for arr in arrays], spacing, sub_periodic)
        single = not isinstance(res, tuple)
        res = (res,) if single else res
        if outputs is None:
            outputs = [np.empty((N0,) + r.shape[1:], dtype=r.dtype) for r in res]
        for out, r in zip(outputs, res):
            out[a:b] = r[a - lo:b - lo]
    return outputs[0] if single else tuple(outputs)


# --------------------------------------------------------------------------
# quadrature


def axis_weights(grid: Grid, axis: int) -> np.ndarray:
    """Trapezoidal weights on non-periodic axes, rectangle weights on periodic ones."""
    h = grid.spacing[axis]
    w = np.full(grid.counts[axis], h)
    if not grid.periodic[axis]:
        w[0] = w[-1] = h / 2
    return w


def quadrature_weights(grid: Grid) -> np.ndarray:
    w = np.ones(grid.shape)
    for i in range(grid.dim):
        shape = [1] * grid.dim
        shape[i] = grid.counts[i]
        w = w * axis_weights(grid, i).reshape(shape)
    return w


def integrate(density, mask=None) -> float:
    """Integrate a scalar density over the grid or a masked part of it.

    ``mask`` may be boolean (node indicator) or real-valued cell fractions
    in [0, 1] such as those from :func:`ball_weights`. Summation runs over a
    contiguous flattened array, so it is deterministic for a fixed grid.
    """
    grid = density.grid
    vals = density.values * quadrature_weights(grid)
    if mask is not None:
        m = np.asarray(mask)
        if m.shape != grid.shape:
            raise ConfigurationError(f"mask shape {m.shape} != grid shape {grid.shape}")
        if not m.any():
            warnings.warn("integration mask is empty", EmptyMaskWarning, stacklevel=2)
            return 0.0
        vals = vals * m.astype(float)
    return float(np.sum(np.ascontiguousarray(vals).ravel()))


def box_mask(grid: Grid, lower, upper) -> np.ndarray:
    """Boolean indicator of nodes inside the closed coordinate box."""
    m = np.ones(grid.shape, dtype=bool)
    for i, x in enumerate(grid.mesh(sparse=True)):
        m = m & (x >= lower[i] - 1e-12) & (x <= upper[i] + 1e-12)
    return m


def ball_weights(grid: Grid, center, radius: float, quad_points: int = 8) -> np.ndarray:
    """Fraction of each node's cell lying inside a Euclidean ball.

    Cells are ``[x - h/2, x + h/2]`` boxes. Cut cells are integrated exactly
    along axis 0 and with Gauss-Legendre points along the remaining axes, so
    weighted sums reproduce ball integrals to second order with an accurate
    volume instead of a staircase.
    """
    n = grid.dim
    h = np.array(grid.spacing)
    disp = np.broadcast_arrays(*grid.displacement(center))
    absd = [np.abs(d) for d in disp]
    near = np.sqrt(sum(np.maximum(a - h[i] / 2, 0.0) ** 2 for i, a in enumerate(absd)))
    far = np.sqrt(sum((a + h[i] / 2) ** 2 for i, a in enumerate(absd)))
    frac = np.where(far <= radius, 1.0, 0.0)
    cut = (far > radius) & (near < radius)
    if not cut.any():
        return frac
    dcut = np.stack([d[cut] for d in disp], axis=-1)
    nodes, wts = leggauss(quad_points)
    nodes, wts = nodes / 2, wts / 2
    if n > 1:
        offs = np.stack(np.meshgrid(*([nodes] * (n - 1)), indexing="ij"), axis=-1).reshape(-1, n - 1)
        ow = np.prod(np.stack(np.meshgrid(*([wts] * (n - 1)), indexing="ij"), axis=-1).reshape(-1, n - 1), axis=1)
    else:
        offs, ow = np.zeros((1, 0)), np.ones(1)
    out = np.empty(len(dcut))
    chunk = max(1, 2_000_000 // len(ow))
    for s in range(0, len(dcut), chunk):
        d = dcut[s:s + chunk]
        y = d[:, None, 1:] + offs[None, :, :] * h[1:]
        rho2 = radius * radius - np.sum(y * y, axis=-1)
        rho = np.sqrt(np.maximum(rho2, 0.0))
        lo = np.maximum(d[:, None, 0] - h[0] / 2, -rho)
        hi = np.minimum(d[:, None, 0] + h[0] / 2, rho)
        length = np.clip(hi - lo, 0.0, None)
        out[s:s + chunk] = (length * ow).sum(axis=1) / h[0]
    frac[cut] = out
    return frac


# --------------------------------------------------------------------------
# metric algebra and norms


def metric_inverse_det(g: MetricField):
    """Nodewise inverse metric (as a (2,0) tensor) and determinant."""
    comps = g.components
    det = np.linalg.det(comps)
    low = np.abs(det) < g.det_floor
    if low.any():
        node = tuple(int(k) for k in np.unravel_index(int(np.flatnonzero(low.ravel())[0]), g.grid.shape))
        raise DegeneracyError(f"|det g| < {g.det_floor} at node {node}", node=node)
    inv = np.linalg.inv(comps)
    inv = 0.5 * (inv + np.swapaxes(inv, -1, -2))
    return TensorField(g.grid, (2, 0), inv, symmetric=True), ScalarField(g.grid, det)


def _components(fld) -> np.ndarray:
    if isinstance(fld, ScalarField):
        return fld.values[..., None]
    if isinstance(fld, (TensorField, MetricField)):
        c = fld.components
        return c.reshape(fld.grid.shape + (-1,))
    raise TypeError(f"no components for {type(fld).__name__}")


def sobolev_norm(fld, k: int, p: float, mask=None, aux_metric: Optional[MetricField] = None, accuracy: int = 2) -> float:
    """W^{k,p} norm over a masked region with the Euclidean auxiliary metric.

    Sums ``integral |d^j T|^p`` for ``j = 0..k`` where ``|d^j T|`` is the
    Euclidean norm over all components and all ordered derivative index
    tuples. ``p = inf`` sums the nodewise suprema instead.
    """
    grid = fld.grid
    if k not in (0, 1, 2):
        raise ConfigurationError(f"Sobolev order {k} not in (0, 1, 2)")
    if not p >= 1:
        raise ConfigurationError(f"Sobolev exponent {p} must be >= 1")
    if aux_metric is not None:
        n = aux_metric.dim
        if aux_metric.signature != (0, n):
            raise SignatureError(f"auxiliary metric must be Riemannian, got signature {aux_metric.signature}")
        if not np.allclose(aux_metric.components, np.eye(n), atol=1e-14):
            raise ConfigurationError("only the Euclidean auxiliary metric is supported")
    T = _components(fld)
    sp, per = grid.spacing, grid.periodic
    n = grid.dim
    sq = [np.sum(T * T, axis=-1)]
    if k >= 1:
        firsts = [fd(T, a, sp[a], 1, per[a], accuracy) for a in range(n)]
        sq.append(sum(np.sum(d * d, axis=-1) for d in firsts))
    if k >= 2:
        acc = np.zeros(grid.shape)
        for a in range(n):
            for b in range(n):
                if a == b:
                    d2 = fd(T, a, sp[a], 2, per[a], accuracy)
                else:
                    d2 = fd(firsts[a], b, sp[b], 1, per[b], accuracy)
                acc += np.sum(d2 * d2, axis=-1)
        sq.append(acc)
    m = np.ones(grid.shape, dtype=bool) if mask is None else np.asarray(mask)
    if math.isinf(p):
        sel = m.astype(bool)
        if not sel.any():
            return 0.0
        return float(sum(np.sqrt(s[sel]).max() for s in sq))
    total = 0.0
    for s in sq:
        total += integrate(ScalarField(grid, np.sqrt(s) ** p), m)
    return total ** (1.0 / p)
