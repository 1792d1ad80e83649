import math

import numpy as np
import pytest

from topovar.catalog import (
    CATALOG,
    build,
    bump_perturbation,
    conformal_bump,
    conformal_bump_data,
    flat,
    flat_torus,
    flat_torus_oracle,
    perturbed_torus,
    random_bump_variations,
    random_polynomial,
    random_smooth,
    sphere_oracle,
    sphere_stereographic,
)
from topovar.chart import ScalarField, build_grid, integrate
from topovar.curvature import action, interior_mask, scalar_curvature
from topovar.errors import ConfigurationError, SupportError


def test_flat_lorentzian_components():
    g = flat(4, (1, 3), grid=build_grid([(0, 1)] * 4, 5))
    assert np.array_equal(g.components[1, 2, 3, 4], np.diag([-1.0, 1, 1, 1]))
    assert action(g) == 0.0


def test_flat_riemannian_identity():
    g = flat(2, (0, 2), grid=build_grid([(0, 1)] * 2, 5))
    assert np.array_equal(g.components[0, 0], np.eye(2))


@pytest.mark.parametrize(
    "n,expected",
    [(2, 8 * math.pi), (3, 12 * math.pi ** 2), (4, 32 * math.pi ** 2), (5, 20 * math.pi ** 3)],
)
def test_sphere_actions(n, expected):
    assert sphere_oracle(n)["action"] == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("n,vol", [(2, 4 * math.pi), (3, 2 * math.pi ** 2), (4, 8 * math.pi ** 2 / 3), (5, math.pi ** 3)])
def test_sphere_volumes(n, vol):
    assert sphere_oracle(n)["volume"] == pytest.approx(vol, rel=1e-14)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
@pytest.mark.parametrize("radius", [0.5, 1.0, 2.0])
def test_oracle_self_consistency(n, radius):
    o = sphere_oracle(n, radius)
    assert o["action"] == pytest.approx(o["R"] * o["volume"], rel=1e-14)
    assert o["action"] == pytest.approx(n * (n - 1) * radius ** (n - 2) * o["volume"] / radius ** n, rel=1e-14)


def test_s4_euler():
    assert sphere_oracle(4)["euler"] == 2


def test_sphere_radius_two_scalar():
    grid = build_grid([(-0.5, 0.5)] * 2, 41)
    R = scalar_curvature(sphere_stereographic(2, 2.0, grid=grid)).values
    assert np.max(np.abs(R[interior_mask(grid)] - 0.5)) < 2e-4


def test_flat_torus():
    g = flat_torus(3, [1.0, 2.0, 3.0], 8)
    assert all(g.grid.periodic)
    assert action(g) == 0.0
    assert integrate(_ones(g)) == pytest.approx(6.0, rel=1e-14)
    o = flat_torus_oracle(4, [2 * math.pi] * 4)
    assert o["euler"] == 0 and o["gauss_bonnet_total"] == 0.0 and o["volume"] == pytest.approx((2 * math.pi) ** 4)


def _ones(g):
    from topovar.chart import ScalarField

    return ScalarField(g.grid, np.ones(g.grid.shape))


class TestBump:
    grid = build_grid([(-1, 1)] * 3, 21)

    def test_zero_amplitude(self):
        assert np.all(bump_perturbation(self.grid, [0, 0, 0], 0.5, 0.0).components == 0)

    def test_center_value(self):
        pat = np.array([[1.0, 0.2, 0], [0.2, -1, 0], [0, 0, 0.5]])
        h = bump_perturbation(self.grid, [0, 0, 0], 0.5, 0.3, pat)
        assert np.allclose(h.components[10, 10, 10], 0.3 * pat, rtol=0, atol=1e-16)

    def test_compact_support(self):
        h = bump_perturbation(self.grid, [0, 0, 0], 0.5, 1.0)
        r = np.linalg.norm(self.grid.coords(), axis=-1)
        assert np.all(h.components[r >= 0.5] == 0)

    def test_support_outside_margin(self):
        with pytest.raises(SupportError):
            bump_perturbation(self.grid, [0.7, 0, 0], 0.3, 1.0)

    def test_asymmetric_pattern(self):
        with pytest.raises(ConfigurationError):
            bump_perturbation(self.grid, [0, 0, 0], 0.3, 1.0, np.triu(np.ones((3, 3))))

    def test_random_variations_deterministic(self):
        a = random_bump_variations(self.grid, 3, seed=4, radius=0.4, jitter=0.2)
        b = random_bump_variations(self.grid, 3, seed=4, radius=0.4, jitter=0.2)
        for x, y in zip(a, b):
            assert np.array_equal(x.components, y.components)
        pats = [x.components[x.components.any(axis=(-1, -2))][0] for x in a]
        assert not np.allclose(pats[0] / np.abs(pats[0]).max(), pats[1] / np.abs(pats[1]).max())


def test_perturbed_torus_needs_periodic():
    with pytest.raises(ConfigurationError):
        perturbed_torus(build_grid([(0, 1)] * 2, 9))


def test_perturbed_torus_evaluator_matches_nodes():
    grid = build_grid([(0, 2 * math.pi)] * 3, 12, periodic=True)
    g = perturbed_torus(grid, 0.1, radius=2.0)
    assert np.allclose(g.evaluator(grid.coords()), g.components, rtol=0, atol=1e-15)


def test_conformal_bump_scalar_and_total():
    n = 3
    cb = conformal_bump_data(n, radius=0.4, amplitude=0.3)
    errs = []
    for N in (17, 33):
        grid = build_grid([(-0.5, 0.5)] * n, N)
        R = scalar_curvature(conformal_bump(grid, radius=0.4, amplitude=0.3)).values
        m = interior_mask(grid)
        errs.append(np.max(np.abs(R - cb.scalar(grid.coords()))[m]))
    assert errs[1] < errs[0] / 3.5
    # closed-form density integrated on a fine grid against the radial total
    grid = build_grid([(-0.5, 0.5)] * n, 129)
    total = integrate(ScalarField(grid, cb.density(grid.coords())))
    assert total == pytest.approx(cb.total_action(), rel=1e-5)


def test_random_polynomial_exact_second_derivatives():
    # quadratic components: both FD orders give the same curvature to rounding
    grid = build_grid([(-0.5, 0.5)] * 3, 9)
    g = random_polynomial(grid, seed=2)
    R2 = scalar_curvature(g, accuracy=2).values
    grid_f = build_grid([(-0.5, 0.5)] * 3, 17)
    Rf = scalar_curvature(random_polynomial(grid_f, seed=2), accuracy=2).values
    assert np.max(np.abs(R2 - Rf[::2, ::2, ::2])) < 1e-9


def test_random_smooth_signature():
    grid = build_grid([(-0.5, 0.5)] * 3, 7)
    g = random_smooth(grid, seed=1, signature=(1, 2))
    assert g.signature == (1, 2)


def test_build_dispatch():
    grid = build_grid([(-0.5, 0.5)] * 3, 7)
    assert np.array_equal(build("sphere_stereographic", grid, radius=2.0).components,
                          sphere_stereographic(3, 2.0, grid=grid).components)
    with pytest.raises(ConfigurationError):
        build("sphere_stereographic", grid, radiu=2.0)
    with pytest.raises(ConfigurationError):
        build("nope", grid)
    with pytest.raises(ConfigurationError):
        build("flat_torus", grid)
    assert set(CATALOG) >= {"flat", "sphere_stereographic", "flat_torus", "perturbed_torus", "conformal_bump"}
