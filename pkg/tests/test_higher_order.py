import math

import numpy as np
import pytest

from topovar.asymptotics import geometric_schedule
from topovar.catalog import flat, flat_torus_oracle, random_smooth, sphere_oracle, sphere_stereographic
from topovar.chart import build_grid
from topovar.curvature import interior_mask
from topovar.errors import ConfigurationError, ConsistencyError, DomainError
from topovar.higher_order import (
    CGB_FACTOR,
    ComponentTotals,
    QuadraticCoefficients,
    chern_gauss_bonnet_check,
    discontinuity_report,
    egb_disconnected_difference,
    egb_disconnected_limit,
    gauss_bonnet_density,
    quadratic_action,
    quadratic_disconnected_difference,
    quadratic_invariants,
    quadratic_sweep,
    quadratic_topological_derivative,
)

R2_ONLY = QuadraticCoefficients(alpha=1.0)


def sphere_totals(n, coeffs=R2_ONLY):
    return ComponentTotals.from_oracle(sphere_oracle(n), coeffs)


def s4_errors(N):
    grid = build_grid([(-0.5, 0.5)] * 4, N)
    g = sphere_stereographic(4, grid=grid)
    m = interior_mask(grid)
    R2, ric2, riem2 = (f.values[m] for f in quadratic_invariants(g))
    gb = gauss_bonnet_density(g).values[m]
    return (np.max(np.abs(R2 - 144)), np.max(np.abs(ric2 - 36)), np.max(np.abs(riem2 - 24)),
            np.max(np.abs(gb - 24))), grid.spacing[0]


def test_flat_invariants_zero():
    g = flat(3, grid=build_grid([(0, 1)] * 3, 7))
    for f in quadratic_invariants(g):
        assert np.all(f.values == 0)
    assert np.all(gauss_bonnet_density(g).values == 0)


def test_flat_quadratic_action():
    grid = build_grid([(0, 1), (0, 2), (0, 1)], 7)
    g = flat(3, grid=grid)
    assert quadratic_action(g, None, QuadraticCoefficients()) == 0.0
    assert quadratic_action(g, None, QuadraticCoefficients(Lambda=0.5)) == pytest.approx(-2.0, rel=1e-14)


def test_s4_invariants_and_gb_second_order():
    (e1, h1), (e2, h2) = s4_errors(9), s4_errors(17)
    order = np.log(np.array(e1) / np.array(e2)) / math.log(h1 / h2)
    assert np.all(order > 1.8)
    assert e2[3] < 0.3 * e1[3]


def test_invariant_scaling():
    grid = build_grid([(-0.5, 0.5)] * 3, 9)
    g = random_smooth(grid, seed=4, background="sphere")
    eps = 0.37
    for a, b in zip(quadratic_invariants(g), quadratic_invariants(g.scaled(eps))):
        assert np.max(np.abs(b.values - a.values / eps ** 2)) <= 1e-12 * np.max(np.abs(a.values))


def test_gb_integral_scale_invariant_in_four_dims():
    grid = build_grid([(-0.5, 0.5)] * 4, 7)
    g = random_smooth(grid, seed=1, background="sphere")
    coeffs = QuadraticCoefficients(alpha=1.0, beta=-4.0, gamma=1.0)
    a = quadratic_action(g, None, coeffs) - quadratic_action(g, None, QuadraticCoefficients())
    b = quadratic_action(g.scaled(0.3), None, coeffs) - quadratic_action(g.scaled(0.3), None, QuadraticCoefficients())
    assert b == pytest.approx(a, rel=1e-11)


def test_s4_r2_total():
    assert sphere_oracle(4)["R2_total"] == pytest.approx(384 * math.pi ** 2, rel=1e-14)


def test_reduces_to_einstein_hilbert():
    comp = ComponentTotals.from_oracle(sphere_oracle(5), QuadraticCoefficients())
    eps = 0.03
    assert quadratic_disconnected_difference(QuadraticCoefficients(), comp, 5, eps) == pytest.approx(
        eps ** 1.5 * comp.A_R, rel=1e-14)


def test_nonpositive_eps():
    with pytest.raises(DomainError):
        quadratic_disconnected_difference(R2_ONLY, sphere_totals(4), 4, 0.0)


@pytest.mark.parametrize("n", [4, 5, 6, 7, 8])
def test_leading_exponent(n):
    sw = quadratic_sweep(R2_ONLY, sphere_totals(n), n)
    assert sw.model.k == pytest.approx((n - 4) / 2, abs=1e-6)


def test_critical_dimension_shift_same_component():
    comp = sphere_totals(5)
    eh = ComponentTotals(5, comp.A_R, 0.0, comp.volume)
    assert quadratic_sweep(R2_ONLY, comp, 5).model.k == pytest.approx(0.5, abs=1e-6)
    assert quadratic_sweep(R2_ONLY, eh, 5).model.k == pytest.approx(1.5, abs=1e-6)


def test_structure_fit():
    coeffs = QuadraticCoefficients(Lambda=0.3, alpha=1.0, beta=0.5, gamma=0.2)
    comp = ComponentTotals.from_oracle(sphere_oracle(5), coeffs)
    sw = quadratic_sweep(coeffs, comp, 5, geometric_schedule(0.5, 16))
    got = np.array(sw.diagnostics["structure_coefficients"])
    want = np.array(sw.diagnostics["structure_expected"])
    assert np.allclose(got, want, rtol=1e-10, atol=1e-10 * np.max(np.abs(want)))


def test_classifications():
    cls5, _ = quadratic_topological_derivative(R2_ONLY, sphere_totals(5), 5)
    assert cls5.kind == "Undefined"
    cls6, _ = quadratic_topological_derivative(R2_ONLY, sphere_totals(6), 6)
    assert cls6.kind == "Value" and cls6.value == pytest.approx(960 * math.pi ** 3, rel=1e-6)
    cls7, _ = quadratic_topological_derivative(R2_ONLY, sphere_totals(7), 7)
    assert cls7.kind == "Zero"


def test_four_dim_discontinuity():
    rep = discontinuity_report(R2_ONLY, sphere_totals(4), 4)
    assert rep["discontinuous"]
    assert rep["limit"] == pytest.approx(384 * math.pi ** 2, rel=1e-6)
    assert not discontinuity_report(R2_ONLY, sphere_totals(5), 5)["discontinuous"]


def test_cgb_check():
    o = sphere_oracle(4)
    assert o["gauss_bonnet_total"] == pytest.approx(64 * math.pi ** 2, rel=1e-14)
    assert chern_gauss_bonnet_check(o["gauss_bonnet_total"], 2) < 1e-10
    assert CGB_FACTOR * 2 == pytest.approx(64 * math.pi ** 2)
    with pytest.raises(ConsistencyError):
        chern_gauss_bonnet_check(o["gauss_bonnet_total"], 0)


def test_egb_sphere_and_torus():
    s4 = sphere_totals(4, QuadraticCoefficients())
    res = egb_disconnected_limit(0.7, s4, eps=0.01)
    assert res["limit"] == pytest.approx(0.7 * 64 * math.pi ** 2, rel=1e-14)
    assert res["numeric_limit"] == pytest.approx(res["limit"], rel=1e-6)
    assert res["discontinuous"]
    assert res["difference"] == pytest.approx(0.01 * s4.A_R + res["limit"], rel=1e-14)
    t4 = ComponentTotals.from_oracle(flat_torus_oracle(4, [2 * math.pi] * 4), QuadraticCoefficients())
    res_t = egb_disconnected_limit(0.7, t4)
    assert res_t["limit"] == 0.0 and not res_t["discontinuous"]


def test_egb_alpha_zero_is_einstein_hilbert():
    s4 = sphere_totals(4, QuadraticCoefficients())
    assert egb_disconnected_difference(0.0, s4, 1e-3) == pytest.approx(1e-3 * s4.A_R, rel=1e-14)
    assert not egb_disconnected_limit(0.0, s4)["discontinuous"]


def test_egb_needs_four_dims_and_euler():
    with pytest.raises(ConfigurationError):
        egb_disconnected_difference(1.0, sphere_totals(5), 0.1)
    comp = ComponentTotals(4, 1.0, 0.0, 1.0, 0.0, None)
    with pytest.raises(ConfigurationError):
        egb_disconnected_limit(1.0, comp)
