import math

import numpy as np
import pytest

from topovar.catalog import (
    bump_perturbation,
    flat,
    perturbed_torus,
    random_bump_variations,
    random_smooth,
    sphere_stereographic,
)
from topovar.chart import TensorField, build_grid
from topovar.curvature import (
    action_central_difference,
    continuity_ratios,
    curvature_tensors,
    einstein_tensor,
    geometric_functional_derivative,
    gradient_check,
    interior_mask,
    lagrangian_density,
    riemann_symmetry_residuals,
    scalar_curvature,
)
from topovar.errors import ConfigurationError, SupportError


def sphere_errors(n, counts, radius=1.0, route="direct"):
    grid = build_grid([(-0.5, 0.5)] * n, counts)
    g = sphere_stereographic(n, radius, grid=grid)
    R = scalar_curvature(g, route).values
    m = interior_mask(grid, 2)
    return np.max(np.abs(R[m] - n * (n - 1) / radius ** 2)), grid.spacing[0]


def observed_order(errs, hs):
    return np.diff(np.log(errs)) / np.diff(np.log(hs))


@pytest.mark.parametrize("signature", [(0, 3), (1, 2)])
def test_flat_all_zero(signature):
    g = flat(3, signature, grid=build_grid([(0, 1)] * 3, 7))
    b = curvature_tensors(g)
    for f in (b.gamma, b.riemann, b.ricci):
        assert np.all(f.components == 0)
    assert np.all(b.scalar.values == 0) and np.all(b.scalar_direct.values == 0)
    assert np.all(lagrangian_density(g).values == 0)


def test_s2_scalar_second_order():
    errs, hs = zip(*(sphere_errors(2, N) for N in (21, 41, 81)))
    assert errs[-1] < 1e-3
    assert np.all(observed_order(errs, hs) > 1.8)


def test_s2_radius_two():
    err, _ = sphere_errors(2, 81, radius=2.0)
    assert err < 1e-4


@pytest.mark.parametrize("route", ["direct", "christoffel"])
def test_s3_routes_converge(route):
    errs, hs = zip(*(sphere_errors(3, N, route=route) for N in (11, 21, 41)))
    assert np.all(observed_order(errs, hs) > 1.8)


def test_route_agreement_order():
    diffs, hs = [], []
    for N in (17, 33):
        grid = build_grid([(-0.5, 0.5)] * 3, N)
        g = random_smooth(grid, seed=3, amplitude=0.1)
        m = interior_mask(grid, 2)
        d = scalar_curvature(g, "direct").values - scalar_curvature(g, "christoffel").values
        diffs.append(np.max(np.abs(d[m])))
        hs.append(grid.spacing[0])
    assert np.all(observed_order(diffs, hs) > 1.8)


def test_scalar_scaling_by_two():
    grid = build_grid([(-0.5, 0.5)] * 3, 9)
    g = random_smooth(grid, seed=1)
    R1 = scalar_curvature(g).values
    R2 = scalar_curvature(g.scaled(2.0)).values
    assert np.max(np.abs(R2 - R1 / 2)) <= 1e-12 * np.max(np.abs(R1))


def test_density_scaling():
    eps = 0.37
    grid = build_grid([(-0.5, 0.5)] * 3, 9)
    g = random_smooth(grid, seed=2)
    L1 = lagrangian_density(g).values
    L2 = lagrangian_density(g.scaled(eps)).values
    assert np.max(np.abs(L2 - eps ** 0.5 * L1)) <= 1e-12 * np.max(np.abs(L1))


def test_einstein_vanishes_in_two_dimensions():
    errs, hs = [], []
    for N in (21, 41, 81):
        grid = build_grid([(-0.5, 0.5)] * 2, N)
        g = random_smooth(grid, seed=5, amplitude=0.1)
        G = einstein_tensor(g).components
        m = interior_mask(grid, 2)
        errs.append(np.max(np.abs(G[m])))
        hs.append(grid.spacing[0])
    assert np.all(observed_order(errs, hs) > 1.8)


def test_einstein_s3_is_minus_metric():
    errs = []
    for N in (21, 41):
        grid = build_grid([(-0.5, 0.5)] * 3, N)
        g = sphere_stereographic(3, grid=grid)
        G = einstein_tensor(g).components
        m = interior_mask(grid, 2)
        errs.append(np.max(np.abs(G[m] + g.components[m])))
    assert errs[1] < errs[0] / 3.5 and errs[1] < 0.02


def test_riemann_symmetries_second_order():
    res_by_h = []
    for N in (17, 33):
        grid = build_grid([(-0.5, 0.5)] * 3, N)
        g = random_smooth(grid, seed=7, amplitude=0.1)
        res = riemann_symmetry_residuals(curvature_tensors(g), g)
        m = interior_mask(grid, 2)
        res_by_h.append({k: float(v[m].max()) for k, v in res.items()})
    # exact by construction
    for key in ("antisym_second", "bianchi"):
        assert res_by_h[1][key] < 1e-12
    for key in ("pair", "antisym_first", "ricci_sym"):
        coarse, fine = res_by_h[0][key], res_by_h[1][key]
        assert fine < 1e-12 or fine < coarse / 3.5


class TestFunctionalDerivative:
    def setup_method(self):
        self.grid = build_grid([(0, 2 * math.pi)] * 3, 24, periodic=True)
        self.g = perturbed_torus(self.grid, amplitude=0.1, radius=2.8)

    def test_zero_variation(self):
        h = TensorField(self.grid, (0, 2), np.zeros(self.grid.shape + (3, 3)))
        assert geometric_functional_derivative(self.g, h) == 0.0

    def test_flat_background_zero(self):
        grid = build_grid([(-1, 1)] * 3, 17)
        g = flat(3, grid=grid)
        h = bump_perturbation(grid, [0, 0, 0], 0.6, 0.2)
        assert geometric_functional_derivative(g, h) == 0.0
        assert abs(action_central_difference(g, h, 1e-4)) < 1e-6

    def test_support_touching_margin(self):
        grid = build_grid([(-1, 1)] * 3, 17)
        g = flat(3, grid=grid)
        h = bump_perturbation(grid, [0, 0, 0], 0.6, 0.2)
        mask = np.zeros(grid.shape, bool)
        mask[4:13, 4:13, 4:13] = True
        with pytest.raises(SupportError):
            geometric_functional_derivative(g, h, mask)

    def test_rejects_wrong_valence(self):
        h = TensorField(self.grid, (2, 0), np.zeros(self.grid.shape + (3, 3)))
        with pytest.raises(ConfigurationError):
            geometric_functional_derivative(self.g, h)

    def test_gradient_matches_central_difference(self):
        hs = random_bump_variations(self.grid, 12, seed=0, radius=2.5)
        recs = gradient_check(self.g, hs, wanted=3)
        used = [r for r in recs if r["used"]]
        assert len(used) == 3
        for r in used:
            assert r["rel_error"] < 1e-3
            assert r["scaled_error"] < 1e-3

    def test_skipped_directions_have_no_difference(self):
        hs = random_bump_variations(self.grid, 6, seed=1, radius=2.5)
        recs = gradient_check(self.g, hs, min_alignment=1.01)
        assert not any(r["used"] for r in recs)
        assert all("central_difference" not in r for r in recs)


def test_continuity_ratios_bounded():
    grid = build_grid([(-0.5, 0.5)] * 3, 15)
    g = sphere_stereographic(3, grid=grid)
    pattern = np.array([[1, 0.3, 0], [0.3, -0.5, 0.2], [0, 0.2, 0.4]])
    h = bump_perturbation(grid, [0, 0, 0], 0.35, 1.0, pattern)
    out = continuity_ratios(g, h, 10.0 ** -np.arange(1, 7), region=interior_mask(grid, 2))
    assert np.all(out["ratio"] > 0)
    assert np.max(out["ratio"]) <= 2 * out["ratio"][2]
    assert out["w2p"][0] == pytest.approx(10 * out["w2p"][1], rel=1e-12)


def test_continuity_zero_variation_rejected():
    grid = build_grid([(-0.5, 0.5)] * 2, 9)
    g = flat(2, grid=grid)
    with pytest.raises(ConfigurationError):
        continuity_ratios(g, TensorField(grid, (0, 2), np.zeros(grid.shape + (2, 2))), [0.1])
