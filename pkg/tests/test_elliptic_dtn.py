import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ipeq import (
    BoundarySpectralData,
    GeometryModel,
    NearPoleError,
    bsd_equivalent,
    bsd_from_dtn,
    build_operator,
    compute_bsd,
    dtn_derivative_from_bsd,
    dtn_direct,
    dtn_from_bsd,
    dtn_sampler,
    eigenvalues,
    geometry_weights,
    locate_poles,
    residue_kernel,
)
from ipeq.elliptic_dtn import DtnSample, global_sign, solve_dirichlet

# closed forms evaluated once with mpmath at 30 digits
NEG_COTH_1 = -1.3130352854993313
CSCH_1 = 0.8509181282393215
DISC_BESSEL_20 = -19.493410157796143  # -20 I1(20) / I0(20)
DERIV_AT_MINUS_100 = 0.04999999608380810  # d/dz of -sqrt(z) cot sqrt(z)


def test_harmonic_solution_is_linear(m1):
    v = solve_dirichlet(m1, 0.0, np.array([0.0, 1.0]))
    np.testing.assert_allclose(v, m1.nodes, atol=1e-12)


def test_solve_at_eigenvalue_raises(m1):
    with pytest.raises(NearPoleError):
        solve_dirichlet(m1, eigenvalues(m1)[0], np.array([1.0, 0.0]))


def test_disc_constant_solution():
    op = build_operator(GeometryModel("disc", 60, mode_cutoff=0))
    np.testing.assert_allclose(solve_dirichlet(op, 0.0, np.array([1.0])), 1.0, atol=1e-12)


def test_dtn_at_zero(m1):
    np.testing.assert_allclose(dtn_direct(m1, 0.0).matrix, [[-1, 1], [1, -1]], atol=1e-12)


def test_dtn_hyperbolic(m1):
    m = dtn_direct(m1, -1.0).matrix
    np.testing.assert_allclose(np.diag(m), NEG_COTH_1, rtol=1e-10)
    np.testing.assert_allclose([m[0, 1], m[1, 0]], CSCH_1, rtol=1e-10)


def test_dtn_disc_bessel_ratio(m2):
    K = m2.geometry.mode_cutoff
    assert abs(dtn_direct(m2, -400.0).matrix[K, K] / DISC_BESSEL_20 - 1) < 1e-8


def test_dtn_complex_closed_form(m1):
    k = np.sqrt(5 + 3j)
    m = dtn_direct(m1, 5 + 3j).matrix
    np.testing.assert_allclose(m[0, 0], -k / np.tan(k), rtol=1e-9)
    np.testing.assert_allclose(m[0, 1], k / np.sin(k), rtol=1e-9)


def test_derivative_closed_form(m1):
    d = dtn_derivative_from_bsd(compute_bsd(m1, 50), -100.0)
    assert abs(d.matrix[0, 0] / DERIV_AT_MINUS_100 - 1) < 1e-4


def test_single_entry_derivative_is_rank_one():
    t = np.array([0.6, -1.3])
    bsd = BoundarySpectralData(np.array([4.0]), t[None, :])
    z = 1.5 + 0.5j
    d = dtn_derivative_from_bsd(bsd, z, tail=False)
    np.testing.assert_allclose(d.matrix, -global_sign() * np.outer(t, t) / (z - 4.0) ** 2, rtol=1e-13)


def test_doubling_entries_stays_within_tail_bound(m1):
    short = dtn_derivative_from_bsd(compute_bsd(m1, 50), -3.0)
    long = dtn_derivative_from_bsd(compute_bsd(m1, 100), -3.0)
    assert np.abs(long.matrix - short.matrix).max() <= short.tail_bound


def test_zero_length_path_returns_anchor(m1):
    bsd = compute_bsd(m1, 50)
    s = dtn_from_bsd(bsd, geometry_weights(m1), -1600.0, 40.0)
    np.testing.assert_array_equal(s.matrix, np.diag([-40.0, -40.0]))


def test_disc_k0_reconstruction(m2):
    K = m2.geometry.mode_cutoff
    s = dtn_from_bsd(compute_bsd(m2, 200), geometry_weights(m2), 0.0, 40.0)
    assert abs(s.matrix[K, K] - dtn_direct(m2, 0.0).matrix[K, K]) < 2e-2


@pytest.mark.parametrize("z", [0.0, -1.0, 5 + 3j])
def test_reconstruction_within_budget(m1, z):
    s = dtn_from_bsd(compute_bsd(m1, 200), geometry_weights(m1), z, 40.0)
    err = np.abs(s.matrix - dtn_direct(m1, z).matrix).max()
    assert err <= s.budget["total"]


def test_locate_poles(m1):
    lam = eigenvalues(m1)
    poles = locate_poles(dtn_sampler(m1), 5.0, 50.0)
    np.testing.assert_allclose(poles, lam[:2], rtol=1e-6)
    assert locate_poles(dtn_sampler(m1), -5.0, 5.0) == []


def test_poles_follow_potential_shift(small_interval):
    shifted = small_interval.shifted(100.0)
    base = locate_poles(dtn_sampler(small_interval), 5.0, 100.0)
    moved = locate_poles(dtn_sampler(shifted), 105.0, 200.0)
    np.testing.assert_allclose(np.array(moved) - np.array(base), 100.0, atol=1e-6)


def test_residue_kernels(m1):
    lam = eigenvalues(m1)
    k1 = residue_kernel(dtn_sampler(m1), lam[0], 1.0)
    assert k1.rank == 1
    assert abs(abs(k1.kernel[0, 0]) / (2 * np.pi**2) - 1) < 1e-6
    k2 = residue_kernel(dtn_sampler(m1), lam[1], 1.0)
    assert abs(k2.kernel[0, 0] / (8 * np.pi**2) - 1) < 1e-6
    assert abs(k2.kernel[0, 1] / (-8 * np.pi**2) - 1) < 1e-6


def test_degenerate_cluster_kernel(small_disc):
    bsd = compute_bsd(small_disc, 8)
    idx = next(i for i in bsd.clusters() if len(i) == 2)
    lam = bsd.eigenvalues[idx[0]]
    rk = residue_kernel(dtn_sampler(small_disc), lam, 0.5)
    assert rk.rank == 2
    ref = dict(bsd.cluster_kernels())[float(bsd.eigenvalues[idx].mean())]
    np.testing.assert_allclose(rk.kernel, ref, atol=1e-6 * np.abs(ref).max())


def test_round_trip(small_interval):
    ref = compute_bsd(small_interval, 5)
    got = bsd_from_dtn(dtn_sampler(small_interval), 5.0, 0.5 * (ref.eigenvalues[4] + 36 * np.pi**2))
    assert bsd_equivalent(ref, got, tol=1e-6).equivalent


def test_noisy_sampler_still_finds_eigenvalues(small_interval):
    rng = np.random.default_rng(7)

    def noisy(z):
        m = dtn_direct(small_interval, z).matrix
        return m + 1e-3 * rng.standard_normal(m.shape)

    lam = eigenvalues(small_interval)[:2]
    found = locate_poles(noisy, 5.0, 50.0)
    assert len(found) == 2
    np.testing.assert_allclose(found, lam, rtol=1e-2)


def test_sample_json_round_trip(m1):
    s = dtn_direct(m1, 2 + 1j)
    back = DtnSample.from_json(s.to_json())
    np.testing.assert_array_equal(back.matrix, s.matrix)
    assert back.z == s.z


@settings(max_examples=20, deadline=None)
@given(x=st.floats(-200, 200), y=st.floats(0.1, 50))
def test_conjugation(small_disc, x, y):
    z = complex(x, y)
    a = dtn_direct(small_disc, z).matrix
    b = dtn_direct(small_disc, z.conjugate()).matrix
    assert np.abs(a.conj().T - b).max() < 1e-10 * (1 + np.abs(a).max())


def test_residue_is_first_order(m1):
    lam = float(eigenvalues(m1)[0])
    K = residue_kernel(dtn_sampler(m1), lam, 1.0).kernel
    errs = []
    for r in (1e-2, 5e-3):
        z = lam + r
        errs.append(np.abs(global_sign() * r * dtn_direct(m1, z).matrix - K).max())
    assert 1.6 < errs[0] / errs[1] < 2.4
