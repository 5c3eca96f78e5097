import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ipeq import BoundarySpectralData, ShapeError, bsd_equivalent, compute_bsd

SQRT2_PI = np.sqrt(2) * np.pi  # 4.44288...


def test_first_trace_magnitude(m1):
    bsd = compute_bsd(m1, 5)
    t = bsd.traces[0] * np.sign(bsd.traces[0, 0])
    np.testing.assert_allclose(t, [SQRT2_PI, SQRT2_PI], rtol=1e-6)


def test_trace_sign_pattern(m1):
    bsd = compute_bsd(m1, 6)
    for l in range(1, 7):
        left, right = bsd.traces[l - 1]
        assert np.sign(left * right) == (-1) ** (l + 1)


def test_degenerate_disc_traces_orthonormal(small_disc):
    bsd = compute_bsd(small_disc, 8)
    idx = next(i for i in bsd.clusters() if len(i) == 2)
    t = bsd.traces[idx]
    G = (t / np.linalg.norm(t, axis=1)[:, None]) @ (t / np.linalg.norm(t, axis=1)[:, None]).T
    np.testing.assert_allclose(G, np.eye(2), atol=1e-12)


def test_negated_traces_are_equivalent(small_interval):
    bsd = compute_bsd(small_interval, 10)
    flipped = BoundarySpectralData(bsd.eigenvalues, -bsd.traces, bsd.boundary)
    assert bsd_equivalent(bsd, flipped).equivalent


def test_perturbed_eigenvalue_is_named(small_interval):
    bsd = compute_bsd(small_interval, 10)
    lam = bsd.eigenvalues.copy()
    lam[3] += 10 * 1e-6 * (1 + abs(lam[3]))
    rep = bsd_equivalent(bsd, BoundarySpectralData(lam, bsd.traces, bsd.boundary), tol=1e-6)
    assert not rep.equivalent
    assert rep.failed_clusters == [3]


def test_rotated_degenerate_pair_is_equivalent(small_disc):
    bsd = compute_bsd(small_disc, 8)
    idx = next(i for i in bsd.clusters() if len(i) == 2)
    c, s = np.cos(0.7), np.sin(0.7)
    tr = bsd.traces.copy()
    tr[idx] = np.array([[c, -s], [s, c]]) @ tr[idx]
    assert bsd_equivalent(bsd, BoundarySpectralData(bsd.eigenvalues, tr, bsd.boundary)).equivalent


def test_json_round_trip(small_disc):
    bsd = compute_bsd(small_disc, 6)
    back = BoundarySpectralData.from_json(bsd.to_json())
    np.testing.assert_array_equal(back.eigenvalues, bsd.eigenvalues)
    np.testing.assert_array_equal(back.traces, bsd.traces)


def test_shape_checks():
    with pytest.raises(ShapeError):
        BoundarySpectralData(np.ones(3), np.ones((2, 2)))
    with pytest.raises(ShapeError):
        BoundarySpectralData.from_json({"entries": [{"lambda": 1.0}]})


@settings(max_examples=25, deadline=None)
@given(theta=st.floats(0, 2 * np.pi), flip=st.booleans())
def test_cluster_kernel_invariant_under_rotation(small_disc, theta, flip):
    bsd = compute_bsd(small_disc, 8)
    c, s = np.cos(theta), np.sin(theta)
    Q = np.array([[c, -s], [s, c]]) @ np.diag([1.0, -1.0 if flip else 1.0])
    tr = bsd.traces.copy()
    for idx in bsd.clusters():
        if len(idx) == 2:
            tr[idx] = Q @ tr[idx]
    mixed = BoundarySpectralData(bsd.eigenvalues, tr, bsd.boundary)
    for (l1, k1), (l2, k2) in zip(bsd.cluster_kernels(), mixed.cluster_kernels()):
        assert l1 == l2
        np.testing.assert_allclose(k1, k2, atol=1e-10 * (1 + np.abs(k1).max()))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_resorting_is_idempotent(small_interval, seed):
    bsd = compute_bsd(small_interval, 12)
    perm = np.random.default_rng(seed).permutation(len(bsd))
    again = BoundarySpectralData(bsd.eigenvalues[perm], bsd.traces[perm], bsd.boundary)
    np.testing.assert_array_equal(again.eigenvalues, bsd.eigenvalues)
    np.testing.assert_array_equal(again.traces, bsd.traces)
