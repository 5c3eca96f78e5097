import numpy as np
import pytest

from ipeq import (
    GeometryModel,
    asymptotic_dtn_apply,
    build_operator,
    dtn_direct,
    dtn_sampler,
    estimate_rho_H,
    geometry_weights,
    symbol_coefficients,
)
from ipeq.errors import FitError, OrderError

# -tau I1(tau)/I0(tau) at tau = 20 and 40, mpmath at 30 digits
BESSEL_RATIO = {20.0: -19.493410157796143, 40.0: -39.49679365345403}


@pytest.fixture(scope="module")
def disc():
    return build_operator(GeometryModel("disc", 200, mode_cutoff=3))


def test_interval_symbol():
    s = symbol_coefficients(build_operator(GeometryModel("interval", 100)))
    np.testing.assert_allclose(s.coefficients[:, 0], -1.0, atol=1e-12)
    np.testing.assert_allclose(s.coefficients[:, 1], 0.0, atol=1e-12)
    assert not np.any(s.principal)


def test_unit_disc_symbol(disc):
    s = symbol_coefficients(disc)
    np.testing.assert_allclose(s.coefficients[:, 0], -1.0, atol=1e-10)
    np.testing.assert_allclose(s.coefficients[:, 1], 0.5, atol=1e-10)
    np.testing.assert_allclose(s.principal[:, 2], -0.5 * s.modes**2, atol=1e-10)
    np.testing.assert_allclose(s.mean_curvature, -1.0, atol=1e-10)


def test_radius_two_curvature_term():
    s = symbol_coefficients(build_operator(GeometryModel("disc", 100, radius=2.0, mode_cutoff=1)))
    np.testing.assert_allclose(s.coefficients[:, 1], 0.25, atol=1e-10)


def test_flat_asymptotics(m1):
    s = symbol_coefficients(m1)
    h = np.array([1.0, 0.0])
    approx = asymptotic_dtn_apply(s, 10.0, h, order=1)
    np.testing.assert_allclose(approx, -10.0 * h)
    exact = dtn_direct(m1, -100.0).matrix @ h
    # the remainder is -10 (coth 10 - 1) ~ -4.12e-8
    assert abs((exact[0] - approx[0]) / (-10 * (1 / np.tanh(10.0) - 1)) - 1) < 1e-3


def test_disc_first_order_error_is_inverse_tau(disc):
    s = symbol_coefficients(disc)
    K = disc.geometry.mode_cutoff
    h = np.zeros(disc.n_boundary)
    h[K] = 1.0
    err = {t: abs(asymptotic_dtn_apply(s, t, h, order=1)[K] - BESSEL_RATIO[t]) for t in (20.0, 40.0)}
    assert abs(asymptotic_dtn_apply(s, 20.0, h, order=1)[K] - (-19.5)) < 1e-9
    assert 1.8 < err[20.0] / err[40.0] < 2.2


def test_zero_vector_maps_to_zero(disc):
    s = symbol_coefficients(disc)
    assert not np.any(asymptotic_dtn_apply(s, 5.0, np.zeros(disc.n_boundary), order=3))
    with pytest.raises(OrderError):
        asymptotic_dtn_apply(s, 5.0, np.zeros(disc.n_boundary), order=4)


def test_estimates_on_interval(m1):
    est = estimate_rho_H(dtn_sampler(m1))
    np.testing.assert_allclose(est.rho, 1.0, atol=1e-4)
    np.testing.assert_allclose(est.mean_curvature, 0.0, atol=1e-3)


def test_estimates_on_disc(disc):
    est = estimate_rho_H(dtn_sampler(disc))
    np.testing.assert_allclose(est.rho, 1.0, atol=1e-3)
    np.testing.assert_allclose(est.mean_curvature, -1.0, atol=5e-2)


def test_scaled_metric_keeps_chart_free_rho():
    op = build_operator(GeometryModel("interval", 200), 4.0)
    np.testing.assert_allclose(estimate_rho_H(dtn_sampler(op)).rho, 1.0, atol=1e-4)


def test_short_ladder_rejected(m1):
    with pytest.raises(FitError):
        estimate_rho_H(dtn_sampler(m1), taus=[10, 11, 12, 13, 14])


def test_third_order_remainder_slope(disc):
    s = symbol_coefficients(disc)
    K = disc.geometry.mode_cutoff
    for k in (-2, -1, 0, 1, 2):
        h = np.zeros(disc.n_boundary)
        h[K + k] = 1.0
        rem = [abs(dtn_direct(disc, -t * t).matrix[K + k, K + k] - asymptotic_dtn_apply(s, t, h, order=3)[K + k])
               for t in (20.0, 40.0)]
        assert np.log2(rem[1] / rem[0]) <= -2.5


def test_estimate_feeds_anchor(disc):
    est = estimate_rho_H(dtn_sampler(disc))
    w = geometry_weights(disc)
    np.testing.assert_allclose(est.rho, w.rho, atol=1e-3)
    np.testing.assert_allclose(est.mean_curvature, w.mean_curvature, atol=5e-2)
