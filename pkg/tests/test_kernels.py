import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dmps.exceptions import DegenerateDataError, InvalidInputError
from dmps.kernels import (
    as_sample_matrix,
    build_kernel_bundle,
    build_kernel_gradients,
    gaussian_kernel,
    gaussian_kernel_grad1,
    median_bandwidth,
    train_kernel_stats,
)

# Hand-computed constants used as frozen oracles below.
EPS_TWO_POINTS = 0.7213475204444817  # 1 / (2 ln 2), unit-distance pair
EPS_THREE_COLINEAR = 0.45511961331341866  # 1 / (2 ln 3), median gap 1
E_INV = 0.36787944117144233
E_INV_SQRT = 0.6065306597126334


def test_as_sample_matrix_promotes_1d():
    out = as_sample_matrix([0.0, 1.0, 2.0])
    assert out.shape == (3, 1)


def test_as_sample_matrix_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        as_sample_matrix(np.empty((0, 2)))
    with pytest.raises(InvalidInputError):
        as_sample_matrix(np.ones((2, 2, 2)))
    with pytest.raises(InvalidInputError):
        as_sample_matrix([[0.0, np.nan]])


def test_median_bandwidth_two_points():
    eps = median_bandwidth([[0.0], [1.0]])
    assert eps == pytest.approx(EPS_TWO_POINTS, rel=1e-14)


def test_median_bandwidth_three_colinear():
    eps = median_bandwidth([[0.0], [1.0], [2.0]])
    assert eps == pytest.approx(EPS_THREE_COLINEAR, rel=1e-14)


def test_median_bandwidth_errors():
    with pytest.raises(InvalidInputError):
        median_bandwidth([[1.0, 2.0]])
    with pytest.raises(DegenerateDataError):
        median_bandwidth(np.zeros((5, 2)))


@given(scale=st.floats(0.1, 10.0), seed=st.integers(0, 2**32 - 1))
def test_median_bandwidth_quadratic_scaling(scale, seed):
    x = np.random.default_rng(seed).normal(size=(12, 3))
    base = median_bandwidth(x)
    assert median_bandwidth(scale * x) == pytest.approx(scale**2 * base, rel=1e-10)


def test_gaussian_kernel_known_value():
    K = gaussian_kernel([[0.0]], [[1.0]], 0.5)
    assert K[0, 0] == pytest.approx(E_INV, rel=1e-14)


def test_gaussian_kernel_basic_properties(rng):
    x = rng.normal(size=(6, 3))
    K = gaussian_kernel(x, x, 0.7)
    assert np.allclose(np.diag(K), 1.0)
    assert np.allclose(K, K.T)
    assert np.all(K > 0.0) and np.all(K <= 1.0)


def test_gaussian_kernel_grad_known_values():
    g = gaussian_kernel_grad1([[0.0]], [[1.0]], 1.0)
    assert g[0, 0, 0] == pytest.approx(E_INV_SQRT, rel=1e-14)
    g = gaussian_kernel_grad1([[1.0]], [[0.0]], 1.0)
    assert g[0, 0, 0] == pytest.approx(-E_INV_SQRT, rel=1e-14)


@given(seed=st.integers(0, 2**32 - 1))
def test_gaussian_kernel_grad_antisymmetry(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(4, 2))
    y = rng.normal(size=(3, 2))
    gxy = gaussian_kernel_grad1(x, y, 0.9)
    gyx = gaussian_kernel_grad1(y, x, 0.9)
    assert np.allclose(gxy, -np.transpose(gyx, (1, 0, 2)), atol=1e-14)


def test_gaussian_kernel_grad_matches_fd(rng):
    eps = 0.6
    h = 1e-5 * np.sqrt(eps)
    for _ in range(5):
        x = rng.normal(size=(3,))
        Y = rng.normal(size=(4, 3))
        ana = gaussian_kernel_grad1(x[None, :], Y, eps)[0]
        for a in range(3):
            e = np.zeros(3)
            e[a] = h
            fd = (
                gaussian_kernel((x + e)[None, :], Y, eps)
                - gaussian_kernel((x - e)[None, :], Y, eps)
            )[0] / (2 * h)
            assert np.linalg.norm(fd - ana[:, a]) <= 1e-8 + 1e-6 * np.linalg.norm(
                ana[:, a]
            )


def test_bundle_train_stochasticity_and_symmetry(rng):
    z = rng.normal(size=(9, 2))
    eps = median_bandwidth(z)
    b = build_kernel_bundle(z, z, z, eps)
    # Pb rows and Pf columns are probability vectors over the training set.
    assert np.allclose(b.Pb.sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(b.Pf.sum(axis=0), 1.0, atol=1e-12)
    assert np.allclose(b.M, b.M.T, atol=1e-14)
    assert np.allclose(b.P, b.P.T, atol=1e-14)
    assert np.allclose(b.Pf, b.Pb.T, atol=1e-14)


def test_bundle_query_train_symmetry(rng):
    """P(x, z) = P(z, x) for arbitrary queries, not just training points."""
    z = rng.normal(size=(8, 3))
    x = rng.normal(size=(5, 3))
    eps = median_bandwidth(z)
    fwd = build_kernel_bundle(x, z, z, eps)
    rev = build_kernel_bundle(z, x, z, eps)
    assert np.allclose(fwd.P, rev.P.T, atol=1e-13)


def test_bundle_stats_cache_is_exact(rng):
    z = rng.normal(size=(10, 2))
    x = rng.normal(size=(4, 2))
    eps = 0.8
    stats = train_kernel_stats(z, eps)
    a = build_kernel_bundle(x, z, z, eps)
    b = build_kernel_bundle(x, z, z, eps, stats)
    for name in ("K", "M", "Pf", "Pb", "P"):
        assert np.array_equal(getattr(a, name), getattr(b, name)), name


def test_bundle_stats_bandwidth_mismatch(rng):
    z = rng.normal(size=(6, 2))
    stats = train_kernel_stats(z, 0.5)
    with pytest.raises(InvalidInputError):
        build_kernel_bundle(z, z, z, 0.6, stats)


def _bundle_rows(x_row, Y, train, eps, stats):
    b = build_kernel_bundle(x_row[None, :], Y, train, eps, stats)
    return {"K": b.K[0], "M": b.M[0], "Pf": b.Pf[0], "Pb": b.Pb[0], "P": b.P[0]}


def test_bundle_gradients_match_fd(rng):
    d = 3
    train = rng.normal(size=(7, d))
    Y = rng.normal(size=(4, d))
    eps = median_bandwidth(train)
    stats = train_kernel_stats(train, eps)
    h = 1e-5 * np.sqrt(eps)
    for _ in range(4):
        X = rng.normal(size=(3, d))
        bundle = build_kernel_bundle(X, Y, train, eps, stats)
        grads = build_kernel_gradients(X, Y, train, eps, bundle)
        by_name = {
            "K": grads.gradK,
            "M": grads.gradM,
            "Pf": grads.gradPf,
            "Pb": grads.gradPb,
            "P": grads.gradP,
        }
        for i in range(X.shape[0]):
            for a in range(d):
                e = np.zeros(d)
                e[a] = h
                hi = _bundle_rows(X[i] + e, Y, train, eps, stats)
                lo = _bundle_rows(X[i] - e, Y, train, eps, stats)
                for name, g in by_name.items():
                    fd = (hi[name] - lo[name]) / (2 * h)
                    ana = g[i, :, a]
                    err = np.linalg.norm(fd - ana) / max(np.linalg.norm(ana), 1e-10)
                    assert err < 1e-6, f"{name} grad mismatch: {err}"


def test_bundle_gradients_train_points_drift_ready(rng):
    """Gradients evaluated with Y = train reuse the same normalization sums."""
    z = rng.normal(size=(8, 2))
    x = rng.normal(size=(5, 2))
    eps = median_bandwidth(z)
    bundle = build_kernel_bundle(x, z, z, eps)
    grads = build_kernel_gradients(x, z, z, eps, bundle)
    assert grads.gradP.shape == (5, 8, 2)
    # Pb rows sum to one identically in x, so their gradients sum to zero.
    assert np.allclose(grads.gradPb.sum(axis=1), 0.0, atol=1e-12)


def test_far_query_degrades_without_nan(rng):
    z = rng.normal(size=(6, 2))
    x = np.array([[1e6, -1e6]])
    eps = median_bandwidth(z)
    b = build_kernel_bundle(x, z, z, eps)
    g = build_kernel_gradients(x, z, z, eps, b)
    for arr in (b.K, b.M, b.Pf, b.Pb, b.P, g.gradP):
        assert np.all(np.isfinite(arr))


def test_dimension_mismatch_raises(rng):
    with pytest.raises(InvalidInputError):
        gaussian_kernel(rng.normal(size=(3, 2)), rng.normal(size=(3, 3)), 1.0)
    with pytest.raises(InvalidInputError):
        gaussian_kernel(rng.normal(size=(3, 2)), rng.normal(size=(3, 2)), -1.0)
