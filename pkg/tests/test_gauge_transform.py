import numpy as np
import pytest

from ipeq import (
    GaugePair,
    GeometryModel,
    apply_gauge,
    boundary_shift,
    bsd_equivalent,
    build_conductivity_operator,
    build_operator,
    compute_bsd,
    dtn_direct,
    dtn_gauge_residual,
    dtn_sampler,
    eigendecompose,
    eigenvalues,
)
from ipeq.errors import InvalidModelError
from ipeq.verification import GAUGE_Z

GEO = GeometryModel("interval", 120)
DISC = GeometryModel("disc", 60, mode_cutoff=2)


def bend(x):
    return x + 0.1 * np.sin(np.pi * x) * x * (1 - x)


@pytest.fixture(scope="module")
def pair():
    return GaugePair.from_map(bend)


@pytest.fixture(scope="module")
def cond():
    return build_conductivity_operator(GEO, lambda x: 1 + x**2 / 2, lambda x: 0.5 * np.cos(2 * x))


@pytest.fixture(scope="module")
def gauged(cond, pair):
    return apply_gauge(cond, pair)


def test_unit_conductivity_is_the_laplacian():
    a = build_conductivity_operator(GEO, 1.0)
    np.testing.assert_allclose(eigenvalues(a), eigenvalues(build_operator(GEO)), rtol=1e-12)
    d = build_conductivity_operator(DISC, 1.0)
    np.testing.assert_allclose(eigenvalues(d), eigenvalues(build_operator(DISC)), rtol=1e-12)


def test_conductivity_operator_is_self_adjoint(cond):
    for b in cond.blocks + build_conductivity_operator(DISC, lambda r: 1 + r**2).blocks:
        A = np.asarray(b.stiffness.todense() if hasattr(b.stiffness, "todense") else b.stiffness)
        np.testing.assert_allclose(A, A.T, atol=1e-12 * np.abs(A).max())


def test_disc_modes_decouple():
    op = build_conductivity_operator(DISC, lambda r: 1 + r**2)
    m = dtn_direct(op, -2.0).matrix
    np.testing.assert_allclose(m - np.diag(np.diag(m)), 0.0, atol=1e-12)


def test_identity_pair_changes_nothing(cond):
    same = apply_gauge(cond, GaugePair.identity())
    np.testing.assert_allclose(eigenvalues(same)[:20], eigenvalues(cond)[:20], rtol=1e-10)
    np.testing.assert_allclose(boundary_shift(cond, GaugePair.identity()), 0.0, atol=1e-10)


def test_gauge_keeps_boundary_data(cond, gauged):
    rep = bsd_equivalent(compute_bsd(cond, 12), compute_bsd(gauged, 12), tol=1e-6)
    assert rep.equivalent, rep.to_json()


def test_gauge_moves_eigenfunctions(cond, gauged):
    a, b = eigendecompose(cond, 3).vectors, eigendecompose(gauged, 3).vectors
    dist = [min(np.abs(a[:, j] - b[:, j]).max(), np.abs(a[:, j] + b[:, j]).max()) for j in range(3)]
    assert min(dist) > 1e-3


def test_dtn_shift_is_b_kappa(cond, gauged, pair):
    ge = dtn_gauge_residual(dtn_sampler(cond), dtn_sampler(gauged), GAUGE_Z)
    assert ge.equivalent
    np.testing.assert_allclose(ge.sigma, boundary_shift(cond, pair), atol=1e-5)
    assert np.abs(ge.sigma).max() > 1e-2


def test_self_comparison_has_zero_shift(cond):
    ge = dtn_gauge_residual(dtn_sampler(cond), dtn_sampler(cond), GAUGE_Z)
    assert ge.equivalent and not np.any(ge.sigma)


def test_unrelated_pair_rejected(cond):
    other = build_conductivity_operator(GEO, lambda x: 1 + x / 3, lambda x: 0.5 * np.cos(2 * x))
    assert not dtn_gauge_residual(dtn_sampler(cond), dtn_sampler(other), GAUGE_Z).equivalent


def test_coordinate_change_of_schrodinger_form():
    op = build_operator(GEO, lambda x: 1 + 0.2 * x, lambda x: 3 * x)
    moved = apply_gauge(op, GaugePair.from_map(bend))
    ge = dtn_gauge_residual(dtn_sampler(op), dtn_sampler(moved), GAUGE_Z, tol=1e-6)
    assert ge.equivalent
    assert np.abs(ge.sigma).max() < 1e-8


def test_inverse_map_closes(cond, gauged, pair):
    back = apply_gauge(gauged, pair.inverse())
    np.testing.assert_allclose(eigenvalues(back)[:10], eigenvalues(cond)[:10], rtol=1e-8)
    ge = dtn_gauge_residual(dtn_sampler(cond), dtn_sampler(back), GAUGE_Z, tol=1e-8)
    assert ge.equivalent


def test_disc_gauge():
    op = build_conductivity_operator(DISC, lambda r: 1 + r**2 / 2)
    p = GaugePair.from_map(lambda r: 1 + 0.3 * r**2 * (1 - r**2) ** 2, kind="disc")
    moved = apply_gauge(op, p)
    assert bsd_equivalent(compute_bsd(op, 10), compute_bsd(moved, 10), tol=1e-6).equivalent
    ge = dtn_gauge_residual(dtn_sampler(op), dtn_sampler(moved), GAUGE_Z)
    np.testing.assert_allclose(ge.sigma, boundary_shift(op, p), atol=1e-5)


def test_bad_maps_rejected(cond):
    with pytest.raises(InvalidModelError):
        GaugePair.from_map(lambda x: 0.9 * x)
    with pytest.raises(InvalidModelError):
        GaugePair.from_map(lambda x: x - 0.3 * np.sin(2 * np.pi * x))
    with pytest.raises(InvalidModelError):
        apply_gauge(cond, GaugePair.identity("interval", 2.0))


def test_pair_json_round_trip(pair):
    back = GaugePair.from_json(pair.to_json())
    x = np.linspace(0, 1, 11)
    np.testing.assert_allclose(back.X(x), pair.X(x), atol=1e-6)
    np.testing.assert_allclose(back.kappa(x), pair.kappa(x), atol=1e-5)
