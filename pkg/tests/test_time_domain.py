import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ipeq import (
    BoundarySource,
    GeometryModel,
    Monomial,
    PolynomialBump,
    ResponseKernel,
    build_operator,
    delay_residual,
    dtn_direct,
    dtn_sampler,
    eigenvalues,
    evolve,
    response_direct,
    response_from_dtn,
)
from ipeq.energy_flux import mass
from ipeq.errors import HorizonError, PathError, StabilityError
from ipeq.time_domain import Integrated, SmoothStep, profile_from_json, stable_dt


@pytest.fixture(scope="module")
def fine():
    return build_operator(GeometryModel("interval", 400))


def left_bump(a=0.0, b=0.4):
    return BoundarySource.separable([1.0, 0.0], PolynomialBump(a, b, 4))


def test_wave_is_a_travelling_pulse(fine):
    f = left_bump()
    tr = evolve(fine, "wave", f, 0.8, 2.5e-4)
    x = fine.nodes
    expect = PolynomialBump(0.0, 0.4, 4).value(0.8 - x)
    assert np.abs(tr.states[-1] - expect).max() < 1e-4


def test_wave_response_is_minus_source_derivative(fine):
    f = left_bump()
    r = response_direct(fine, "wave", f, 1.8, 2.5e-4)
    t = r.times
    assert np.abs(r.samples[:, 0] + f(t, 1)[:, 0]).max() < 1e-3 * np.abs(f(t, 1)).max()


def test_wave_causality(fine):
    """Nothing reaches the far end before t = 1 beyond a dispersive precursor at the front."""
    leaks = []
    for dt in (5e-4, 2.5e-4):
        r = response_direct(fine, "wave", left_bump(), 1.2, dt)
        peak = np.abs(r.samples[:, 0]).max()
        far = np.abs(r.samples[:, 1]) / peak
        assert far[r.times < 0.9].max() < 1e-10
        leaks.append(far[r.times < 0.99].max())
    assert leaks[1] < leaks[0] / 2


def test_zero_source_gives_zero_heat(small_interval):
    tr = evolve(small_interval, "heat", BoundarySource.zero(2), 0.5, 1e-3)
    assert not np.any(tr.states)


def test_schrodinger_norm_conserved_after_source(small_interval):
    f = left_bump(0.0, 0.3)
    tr = evolve(small_interval, "schrodinger", f, 1.0, 1e-3)
    after = tr.times > 0.3 + 1e-9
    norms = np.array([mass(small_interval, s) for s in tr.states[after]])
    assert np.ptp(norms) < 1e-10 * norms.max()


def test_heat_steady_state(small_interval):
    f = BoundarySource.separable([1.0, 0.0], SmoothStep(0.0, 0.2))
    r = response_direct(small_interval, "heat", f, 3.0, 2e-3)
    limit = dtn_direct(small_interval, 0.0).matrix @ np.array([1.0, 0.0])
    np.testing.assert_allclose(r.samples[-1], limit, atol=1e-6)


@pytest.mark.parametrize("kind,dt,tol", [("heat", 1e-3, 1e-4), ("schrodinger", 2.5e-4, 1e-3),
                                         ("wave", 1.25e-4, 1e-3)])
def test_synthesis_matches_stepping(small_interval, kind, dt, tol):
    f = BoundarySource.separable([1.0, 0.5], PolynomialBump(0.0, 0.5))
    direct = response_direct(small_interval, kind, f, 1.0, dt)
    synth = response_from_dtn(dtn_sampler(small_interval), kind, f, 1.0, dt,
                              lowest_eigenvalue=eigenvalues(small_interval)[0])
    assert np.abs(direct.samples - synth.samples).max() < tol


def test_contour_left_of_spectrum_rejected(small_interval):
    shifted = small_interval.shifted(-50.0)
    f = left_bump()
    with pytest.raises(PathError):
        response_from_dtn(dtn_sampler(shifted), "heat", f, 1.0, 1e-2, mu=1.0,
                          lowest_eigenvalue=eigenvalues(shifted)[0])


def test_unstable_step_rejected(small_interval):
    with pytest.raises(StabilityError):
        response_direct(small_interval, "wave", left_bump(), 0.1, 2 * stable_dt(small_interval))


def test_delay_past_horizon(small_interval):
    with pytest.raises(HorizonError):
        delay_residual(small_interval, "heat", left_bump(), 1.0, 1.0, 1e-2)


def test_profiles_json_round_trip():
    for p in (PolynomialBump(0.1, 0.7, 5), SmoothStep(0.0, 0.3), Monomial(3.5, 2.0),
              Integrated(PolynomialBump(0.0, 1.0, 4))):
        back = profile_from_json(p.to_json())
        t = np.linspace(0, 1.2, 13)
        np.testing.assert_allclose(back.value(t), p.value(t), rtol=1e-13, atol=1e-15)


def test_response_kernel_json_round_trip(small_interval):
    r = response_direct(small_interval, "schrodinger", left_bump(), 0.2, 1e-2)
    back = ResponseKernel.from_json(r.to_json())
    np.testing.assert_array_equal(back.samples, r.samples)


def test_integrated_profile():
    b = PolynomialBump(0.2, 0.9, 4)
    I = Integrated(b)
    t = np.linspace(0, 1.5, 31)
    dense = np.linspace(0, 1.5, 150001)
    vals = b.value(dense)
    running = np.concatenate([[0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(dense))])
    np.testing.assert_allclose(I.value(t), np.interp(t, dense, running), atol=1e-9)
    np.testing.assert_allclose(I.value(t, 1), b.value(t))


def test_monomial_laplace():
    m = Monomial(3.0, 2.0)
    om = np.array([1.0, 2.0 + 1.0j])
    np.testing.assert_allclose(m.laplace(om), 2.0 * 6.0 / om**4)


@pytest.mark.parametrize("kind", ["wave", "heat", "schrodinger"])
def test_time_shift_commutes(small_interval, kind):
    f = BoundarySource.separable([1.0, -0.4], PolynomialBump(0.0, 0.3))
    dt = 5e-4 if kind == "wave" else 1e-3
    assert delay_residual(small_interval, kind, f, 0.25, 1.0, dt) < 1e-8


@settings(max_examples=10, deadline=None)
@given(F=st.lists(st.floats(-3, 3), min_size=2, max_size=2), a=st.floats(0.0, 0.5), w=st.floats(0.1, 0.5))
def test_real_sources_give_real_responses(small_interval, F, a, w):
    f = BoundarySource.separable(F, PolynomialBump(a, a + w))
    for kind in ("wave", "heat"):
        assert np.isrealobj(response_direct(small_interval, kind, f, 0.5, 1e-3).samples)


@settings(max_examples=10, deadline=None)
@given(alpha=st.floats(-2, 2), beta=st.floats(-2, 2), kind=st.sampled_from(["wave", "heat", "schrodinger"]))
def test_linearity(small_interval, alpha, beta, kind):
    f = BoundarySource.separable([1.0, 0.2], PolynomialBump(0.0, 0.3))
    h = BoundarySource.separable([-0.5, 1.0], PolynomialBump(0.1, 0.5, 4))
    R = lambda s: response_direct(small_interval, kind, s, 0.6, 1e-3).samples  # noqa: E731
    lhs = R(f * alpha + h * beta)
    rhs = alpha * R(f) + beta * R(h)
    assert np.abs(lhs - rhs).max() <= 1e-10 * (1 + np.abs(rhs).max())


def test_heat_laplace_consistency(small_interval):
    """Laplace transform of the heat response equals Lambda_{-omega} applied to the source transform."""
    f = BoundarySource.separable([1.0, 0.3], PolynomialBump(0.0, 0.3))
    dt, T = 1e-3, 8.0
    r = response_direct(small_interval, "heat", f, T, dt)
    t = r.times
    for omega in (2.0, 5.0 + 3.0j):
        w = np.exp(-omega * t)[:, None]
        lhs = np.trapezoid(w * r.samples, dx=dt, axis=0) if hasattr(np, "trapezoid") else np.trapz(w * r.samples, dx=dt, axis=0)
        rhs = dtn_direct(small_interval, -omega).matrix @ f.laplace(omega)
        assert np.abs(lhs - rhs).max() < 1e-3 * np.abs(rhs).max()
