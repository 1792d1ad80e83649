import math

import numpy as np
import pytest

from topovar.blowup import (
    CollapsingFamily,
    adm_action,
    blowup_sweep,
    collapsing_metric,
    default_schedule,
    derivative_bounds,
    direct_action,
    extrinsic_curvature,
    extrinsic_curvature_fd,
    leading_coefficient,
    route_convergence,
)
from topovar.errors import AmplitudeError, ConfigurationError, DomainError

THETA = np.diag([1.0, -1.0])


def family(delta=0.1, **kw):
    return CollapsingFamily(np.eye(2), THETA, delta, **kw)


def test_spatial_metric_values():
    fam = family()
    assert np.allclose(fam.spatial(math.pi / 2), np.diag([1.1, 0.9]), rtol=0, atol=1e-15)
    assert np.array_equal(fam.spatial(0.0), np.eye(2))


def test_metric_blocks():
    g = collapsing_metric(family(), 0.3, t_nodes=16)
    c = g.components
    assert np.allclose(c[..., 0, 0], 0.09, rtol=0, atol=1e-16)
    assert np.all(c[..., 0, 1:] == 0)
    assert g.dim == 3 and all(g.grid.periodic)


def test_validation():
    with pytest.raises(ConfigurationError):
        CollapsingFamily(np.eye(2), np.eye(2), 0.1)
    with pytest.raises(ConfigurationError):
        CollapsingFamily(np.eye(2), np.zeros((2, 2)), 0.1)
    with pytest.raises(AmplitudeError):
        family(delta=1.5)
    with pytest.raises(DomainError):
        collapsing_metric(family(), 0.0)


def test_extrinsic_curvature():
    fam = family()
    assert np.allclose(extrinsic_curvature(fam, 0.5, math.pi / 2), 0, atol=1e-16)
    assert np.allclose(extrinsic_curvature(fam, 0.01, 0.0), -5 * THETA, rtol=1e-14, atol=0)


def test_extrinsic_curvature_fd_order():
    fam = family()
    errs = []
    for m in (32, 64):
        t = 2 * math.pi * np.arange(m) / m
        errs.append(np.max(np.abs(extrinsic_curvature_fd(fam, 0.1, m) - extrinsic_curvature(fam, 0.1, t))))
    assert math.log2(errs[0] / errs[1]) > 1.9


def test_adm_leading_order():
    fam = family(0.05)
    c = leading_coefficient(fam)
    assert c == pytest.approx(-2 * math.pi ** 3 * 0.05 ** 2, rel=5e-3)
    assert adm_action(fam, 0.1) == pytest.approx(c / 0.1, rel=1e-12)


def test_sweep_fit():
    res = blowup_sweep(family())
    fit = res["fit_direct"]
    assert fit.c_m1 < 0
    assert abs(fit.c_1) < 1e-6
    assert res["rel_diff_c_m1"] < 1e-3
    assert not res["inconclusive"]
    assert list(res["columns"]) == ["epsilon", "action_direct", "action_adm"]
    assert np.array_equal(res["epsilons"], default_schedule())


def test_route_convergence_second_order():
    rc = route_convergence(family(), t_nodes=(32, 64))
    assert rc["orders"][0] > 1.8


def test_derivative_bounds_eps_independent():
    fam = family(x_nodes=8, t_nodes=32)
    a = derivative_bounds(fam, 0.2)
    b = derivative_bounds(fam, 0.1)
    assert set(a) == {0, 1, 2, 3, 4}
    for k in range(1, 5):
        assert abs(a[k] - b[k]) <= 1e-12
    assert a[1] > 0


def test_amplitude_law():
    ratios = [leading_coefficient(family(d)) / d ** 2 for d in (0.05, 0.1, 0.2)]
    assert max(ratios) / min(ratios) - 1 < 1e-2


def test_zero_theta_direction_gives_no_divergence():
    # trace-free theta against a non-identity gamma
    gam = np.diag([2.0, 1.0])
    th = np.array([[2.0, 0.0], [0.0, -1.0]])
    fam = CollapsingFamily(gam, th, 0.2, t_nodes=64, x_nodes=8)
    assert direct_action(fam, 0.1, accuracy=4) == pytest.approx(adm_action(fam, 0.1), rel=1e-4)
