import math

import numpy as np
import pytest
from scipy.special import erf

from topovar.chart import (
    EmptyMaskWarning,
    MetricField,
    ScalarField,
    box_mask,
    build_grid,
    fd,
    integrate,
    metric_inverse_det,
    partial_derivative,
    sobolev_norm,
)
from topovar.errors import ConfigurationError, DegeneracyError, SignatureError, StencilError


class TestGrid:
    def test_nonperiodic_spacing(self):
        g = build_grid([(0, 1)], 11)
        assert g.spacing == (0.1,)
        assert g.size == 11

    def test_periodic_no_duplicate_endpoint(self):
        g = build_grid([(0, 2 * math.pi)], 64, periodic=True)
        assert g.spacing[0] == pytest.approx(2 * math.pi / 64, abs=0)
        x = g.axis_coords(0)
        assert len(x) == 64 and x[-1] < 2 * math.pi

    def test_two_axes(self):
        g = build_grid([(0, 1), (0, 2)], (11, 21))
        assert g.size == 231
        assert g.spacing == pytest.approx((0.1, 0.1), abs=1e-15)

    def test_coords_reproducible(self):
        g = build_grid([(-1, 1), (0, 3)], (7, 9))
        assert np.array_equal(g.coords(), build_grid([(-1, 1), (0, 3)], (7, 9)).coords())

    def test_degenerate_bounds(self):
        with pytest.raises(ConfigurationError):
            build_grid([(1, 1)], 11)

    def test_too_few_nodes(self):
        with pytest.raises(StencilError):
            build_grid([(0, 1)], 4)


class TestDerivatives:
    def test_constant_exact_zero(self):
        g = build_grid([(0, 1), (0, 1)], 9)
        f = ScalarField(g, np.full(g.shape, 3.7))
        for axis in (0, 1):
            for order in (1, 2):
                assert np.all(partial_derivative(f, axis, order).values == 0)

    def test_quadratic_second_derivative_exact(self):
        g = build_grid([(0, 1)], 11)
        x = g.axis_coords(0)
        d2 = fd(x ** 2, 0, g.spacing[0], 2)
        assert np.max(np.abs(d2 - 2)) < 1e-10

    def test_linearity(self, rng):
        g = build_grid([(0, 1), (0, 2)], (9, 13))
        a, b = rng.normal(size=g.shape), rng.normal(size=g.shape)
        lhs = fd(2 * a - 3 * b, 1, g.spacing[1])
        rhs = 2 * fd(a, 1, g.spacing[1]) - 3 * fd(b, 1, g.spacing[1])
        assert np.max(np.abs(lhs - rhs)) < 1e-11

    @pytest.mark.parametrize("accuracy,expected", [(2, 2), (4, 4)])
    def test_periodic_sin_order(self, accuracy, expected):
        errs, hs = [], []
        for N in (16, 32, 64):
            g = build_grid([(0, 2 * math.pi)], N, periodic=True)
            x = g.axis_coords(0)
            errs.append(np.max(np.abs(fd(np.sin(x), 0, g.spacing[0], 1, True, accuracy) - np.cos(x))))
            hs.append(g.spacing[0])
        slopes = np.diff(np.log(errs)) / np.diff(np.log(hs))
        assert np.all(np.abs(slopes - expected) < 0.2)

    def test_boundary_stencils_second_order(self):
        errs, hs = [], []
        for N in (21, 41, 81):
            g = build_grid([(0, 1)], N)
            x = g.axis_coords(0)
            errs.append(np.max(np.abs(fd(np.exp(x), 0, g.spacing[0], 2) - np.exp(x))))
            hs.append(g.spacing[0])
        slopes = np.diff(np.log(errs)) / np.diff(np.log(hs))
        assert np.all(slopes > 1.8)

    def test_bad_axis(self):
        g = build_grid([(0, 1), (0, 1)], 9)
        with pytest.raises(ConfigurationError):
            partial_derivative(ScalarField(g, np.zeros(g.shape)), 2)


class TestIntegrate:
    def test_unit_square(self):
        g = build_grid([(0, 1), (0, 1)], 11)
        assert integrate(ScalarField(g, np.ones(g.shape))) == pytest.approx(1.0, abs=1e-15)

    def test_periodic_sin(self):
        g = build_grid([(0, 2 * math.pi)], 64, periodic=True)
        assert abs(integrate(ScalarField(g, np.sin(g.axis_coords(0))))) < 1e-14

    def test_gaussian_erf(self):
        g = build_grid([(-4, 4)], 401)
        val = integrate(ScalarField(g, np.exp(-g.axis_coords(0) ** 2)))
        assert val == pytest.approx(math.sqrt(math.pi) * erf(4.0), abs=1e-8)

    def test_additive_over_disjoint_masks(self, rng):
        g = build_grid([(0, 1), (0, 1)], 15)
        f = ScalarField(g, rng.normal(size=g.shape))
        m = box_mask(g, [0, 0], [0.5, 1])
        total = integrate(f)
        assert integrate(f, m) + integrate(f, ~m) == pytest.approx(total, rel=1e-12, abs=1e-14)

    def test_bit_reproducible(self, rng):
        g = build_grid([(0, 1), (0, 1), (0, 1)], 13)
        f = ScalarField(g, rng.normal(size=g.shape))
        assert integrate(f) == integrate(f)

    def test_empty_mask_warns(self):
        g = build_grid([(0, 1), (0, 1)], 9)
        with pytest.warns(EmptyMaskWarning):
            assert integrate(ScalarField(g, np.ones(g.shape)), np.zeros(g.shape, bool)) == 0.0


class TestMetric:
    def test_identity_inverse(self):
        g = build_grid([(0, 1)] * 3, 5)
        m = MetricField(g, np.broadcast_to(np.eye(3), g.shape + (3, 3)))
        inv, det = metric_inverse_det(m)
        assert np.allclose(inv.components, np.eye(3)) and np.allclose(det.values, 1)

    def test_lorentzian_inverse(self):
        eta = np.diag([-1.0, 1, 1, 1])
        g = build_grid([(0, 1)] * 4, 5)
        m = MetricField(g, np.broadcast_to(eta, g.shape + (4, 4)), (1, 3))
        inv, det = metric_inverse_det(m)
        assert np.array_equal(inv.components[0, 0, 0, 0], eta)
        assert np.all(det.values == -1)

    def test_scaled_identity(self):
        g = build_grid([(0, 1)] * 3, 5)
        m = MetricField(g, np.broadcast_to(2 * np.eye(3), g.shape + (3, 3)))
        inv, det = metric_inverse_det(m)
        assert np.allclose(inv.components, np.eye(3) / 2, atol=1e-15)
        assert np.allclose(det.values, 8, atol=1e-12)

    def test_inverse_identity_residual(self, rng):
        from conftest import random_spd

        g = build_grid([(0, 1)] * 2, 6)
        m = MetricField(g, random_spd(rng, 2, g.shape))
        inv, _ = metric_inverse_det(m)
        assert np.max(np.abs(inv.components @ m.components - np.eye(2))) < 1e-12

    def test_degeneracy_names_node(self):
        g = build_grid([(0, 1)] * 2, 5)
        comps = np.broadcast_to(np.eye(2), g.shape + (2, 2)).copy()
        comps[2, 3] = np.diag([1.0, 1e-12])
        with pytest.raises(DegeneracyError) as exc:
            MetricField(g, comps)
        assert exc.value.node == (2, 3)

    def test_asymmetric_rejected(self):
        g = build_grid([(0, 1)] * 2, 5)
        comps = np.broadcast_to(np.array([[1.0, 0.1], [0.0, 1.0]]), g.shape + (2, 2))
        with pytest.raises(ConfigurationError):
            MetricField(g, comps)

    def test_signature_change_rejected(self):
        g = build_grid([(0, 1)] * 2, 5)
        comps = np.broadcast_to(np.eye(2), g.shape + (2, 2)).copy()
        comps[0, 0] = np.diag([-1.0, 1.0])
        with pytest.raises(SignatureError):
            MetricField(g, comps)


class TestSobolev:
    def test_zero_field(self):
        g = build_grid([(0, 1)] * 2, 9)
        f = ScalarField(g, np.zeros(g.shape))
        assert all(sobolev_norm(f, k, p) == 0 for k in (0, 1, 2) for p in (1, 2, math.inf))

    def test_constant_k0(self):
        g = build_grid([(0, 2), (0, 3)], 9)
        f = ScalarField(g, np.full(g.shape, -1.5))
        assert sobolev_norm(f, 0, 3) == pytest.approx((1.5 ** 3 * 6) ** (1 / 3), rel=1e-12)

    def test_sin_w12(self):
        g = build_grid([(0, 2 * math.pi)], 256, periodic=True)
        f = ScalarField(g, np.sin(g.axis_coords(0)))
        assert sobolev_norm(f, 1, 2, accuracy=4) == pytest.approx(math.sqrt(2 * math.pi), abs=1e-6)

    def test_monotone_in_k(self, rng):
        g = build_grid([(0, 1)] * 2, 11)
        f = ScalarField(g, rng.normal(size=g.shape))
        n0, n1, n2 = (sobolev_norm(f, k, 2) for k in (0, 1, 2))
        assert n2 >= n1 >= n0

    def test_non_riemannian_aux_rejected(self):
        g = build_grid([(0, 1)] * 2, 9)
        aux = MetricField(g, np.broadcast_to(np.diag([-1.0, 1.0]), g.shape + (2, 2)), (1, 1))
        with pytest.raises(SignatureError):
            sobolev_norm(ScalarField(g, np.zeros(g.shape)), 1, 2, aux_metric=aux)

    def test_tensor_norm_linear_in_amplitude(self):
        from topovar.catalog import bump_perturbation

        g = build_grid([(-1, 1)] * 2, 21)
        h1 = bump_perturbation(g, [0, 0], 0.6, 1.0)
        h3 = bump_perturbation(g, [0, 0], 0.6, 3.0)
        assert sobolev_norm(h3, 2, 2) == pytest.approx(3 * sobolev_norm(h1, 2, 2), rel=1e-10)
