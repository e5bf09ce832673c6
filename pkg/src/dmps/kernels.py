"""Gaussian kernels, density normalizations, and their analytic gradients.

Everything here is finite-sample: degrees and normalizing sums are plain
sums over a fixed set of training points, never over the query points.
The normalization chain is

    K(x, y)  = exp(-||x - y||^2 / (2 eps))          raw Gaussian
    M(x, y)  = K(x, y) / sqrt(d(x) d(y))            degree-normalized
    Pf(x, y) = M(x, y) / sum_t M(z_t, y)            column-stochastic on train
    Pb(x, y) = M(x, y) / sum_t M(x, z_t)            row-stochastic on train
    P        = (Pf + Pb) / 2                        symmetric average

with d(x) = sum_t K(x, z_t) over training points z_t.  All first-argument
gradients are available in closed form and validated against finite
differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .exceptions import DegenerateDataError, InvalidInputError

# Degrees are strictly positive in exact arithmetic but can underflow to 0
# for queries very far from every training point; floor them so normalized
# kernels degrade to 0 instead of NaN.
_TINY = np.finfo(float).tiny


def as_sample_matrix(x, name: str = "samples") -> np.ndarray:
    """Coerce input to a finite float matrix of shape (n, d).

    1-D input is treated as n points in one ambient dimension.

    Raises
    ------
    InvalidInputError
        If the array is empty, has more than two axes, or contains
        non-finite entries.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(
            f"{name} must be a nonempty 2-D array of points, got shape {np.shape(x)}"
        )
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains NaN or Inf entries")
    return arr


def check_bandwidth(eps: float) -> float:
    if not np.isfinite(eps) or eps <= 0:
        raise InvalidInputError(f"bandwidth must be a positive real, got {eps}")
    return float(eps)


def median_bandwidth(train) -> float:
    """Bandwidth from the median pairwise distance: eps = med^2 / (2 ln N).

    Raises
    ------
    InvalidInputError
        Fewer than two training points.
    DegenerateDataError
        Median pairwise distance is zero (at least half the pairs coincide).
    """
    train = as_sample_matrix(train, "train")
    n = train.shape[0]
    if n < 2:
        raise InvalidInputError("median bandwidth needs at least 2 training points")
    med = float(np.median(pdist(train)))
    if med <= 0.0:
        raise DegenerateDataError("median pairwise distance is zero; bandwidth undefined")
    return med**2 / (2.0 * np.log(n))


def _check_pair(X: np.ndarray, Y: np.ndarray) -> None:
    if X.shape[1] != Y.shape[1]:
        raise InvalidInputError(
            f"ambient dimension mismatch: {X.shape[1]} vs {Y.shape[1]}"
        )


def gaussian_kernel(X, Y, eps: float) -> np.ndarray:
    """Raw Gaussian kernel matrix, entry (i, j) = exp(-||x_i - y_j||^2 / (2 eps))."""
    X = as_sample_matrix(X, "X")
    Y = as_sample_matrix(Y, "Y")
    eps = check_bandwidth(eps)
    _check_pair(X, Y)
    return np.exp(cdist(X, Y, "sqeuclidean") / (-2.0 * eps))


def gaussian_kernel_grad1(X, Y, eps: float) -> np.ndarray:
    """Gradient of the raw Gaussian kernel in its first argument.

    Returns an (n, m, d) array whose (i, j) slice is
    -((x_i - y_j) / eps) * K(x_i, y_j); zero at coincident arguments.
    """
    X = as_sample_matrix(X, "X")
    Y = as_sample_matrix(Y, "Y")
    eps = check_bandwidth(eps)
    _check_pair(X, Y)
    K = np.exp(cdist(X, Y, "sqeuclidean") / (-2.0 * eps))
    diff = X[:, None, :] - Y[None, :, :]
    return (-1.0 / eps) * diff * K[:, :, None]


@dataclass(frozen=True)
class TrainKernelStats:
    """Degree and normalization sums of the training set, reusable across queries.

    d_train[t] = sum_s K(z_t, z_s) and m_sums[t] = sum_s M(z_s, z_t); both are
    symmetric in the training kernel so row and column versions coincide.
    """

    eps: float
    d_train: np.ndarray
    m_sums: np.ndarray


def train_kernel_stats(train, eps: float) -> TrainKernelStats:
    """Precompute training degrees and M-column sums for repeated bundle builds."""
    train = as_sample_matrix(train, "train")
    eps = check_bandwidth(eps)
    K = gaussian_kernel(train, train, eps)
    d = np.maximum(K.sum(axis=1), _TINY)
    sq = np.sqrt(d)
    m_sums = np.maximum((K / np.outer(sq, sq)).sum(axis=0), _TINY)
    return TrainKernelStats(eps=eps, d_train=d, m_sums=m_sums)


@dataclass(frozen=True)
class KernelBundle:
    """Kernel matrices between an (n, d) query set X and an (m, d) set Y.

    All normalizations are taken against a fixed training set, not against
    X or Y.  ``d_row``/``d_col`` are the degrees of X rows / Y columns;
    ``s_row``/``s_col`` the corresponding M-normalization sums.
    """

    eps: float
    K: np.ndarray
    M: np.ndarray
    Pf: np.ndarray
    Pb: np.ndarray
    P: np.ndarray
    d_row: np.ndarray
    d_col: np.ndarray
    s_row: np.ndarray
    s_col: np.ndarray
    # intermediates against the training set, reused by the gradient builder
    k_train: np.ndarray
    d_train: np.ndarray


def build_kernel_bundle(
    X, Y, train, eps: float, stats: TrainKernelStats | None = None
) -> KernelBundle:
    """Build K, M, Pf, Pb, P between X and Y with training-set normalization.

    Parameters
    ----------
    X, Y : array-like
        Query point sets of shapes (n, d) and (m, d).
    train : array-like
        Training points defining degrees and normalizing sums.
    eps : float
        Kernel bandwidth.
    stats : TrainKernelStats, optional
        Precomputed training sums (must match ``train`` and ``eps``); avoids
        the O(N^2) training kernel when evaluating many query batches.
    """
    X = as_sample_matrix(X, "X")
    Y = as_sample_matrix(Y, "Y")
    train_arr = as_sample_matrix(train, "train")
    eps = check_bandwidth(eps)
    _check_pair(X, Y)
    _check_pair(X, train_arr)

    if stats is None:
        stats = train_kernel_stats(train_arr, eps)
    elif abs(stats.eps - eps) > 1e-15 * max(1.0, eps):
        raise InvalidInputError("train stats were computed with a different bandwidth")
    d_train = stats.d_train
    sq_train = np.sqrt(d_train)

    y_is_train = Y is train or (
        Y.shape == train_arr.shape and np.array_equal(Y, train_arr)
    )

    K = gaussian_kernel(X, Y, eps)
    KXT = K if y_is_train else gaussian_kernel(X, train_arr, eps)
    d_row = np.maximum(KXT.sum(axis=1), _TINY)
    sq_row = np.sqrt(d_row)

    if y_is_train:
        d_col = d_train
        s_col = stats.m_sums
    else:
        KTY = gaussian_kernel(train_arr, Y, eps)
        d_col = np.maximum(KTY.sum(axis=0), _TINY)
        s_col = np.maximum(
            (KTY / (sq_train[:, None] * np.sqrt(d_col)[None, :])).sum(axis=0), _TINY
        )
    sq_col = np.sqrt(d_col)

    M = K / (sq_row[:, None] * sq_col[None, :])
    s_row = np.maximum((KXT / (sq_row[:, None] * sq_train[None, :])).sum(axis=1), _TINY)

    Pf = M / s_col[None, :]
    Pb = M / s_row[:, None]
    P = 0.5 * (Pf + Pb)
    return KernelBundle(
        eps=eps,
        K=K,
        M=M,
        Pf=Pf,
        Pb=Pb,
        P=P,
        d_row=d_row,
        d_col=d_col,
        s_row=s_row,
        s_col=s_col,
        k_train=KXT,
        d_train=d_train,
    )


@dataclass(frozen=True)
class KernelGradientBundle:
    """First-argument gradients of every matrix in a KernelBundle, shape (n, m, d)."""

    gradK: np.ndarray
    gradM: np.ndarray
    gradPf: np.ndarray
    gradPb: np.ndarray
    gradP: np.ndarray


def build_kernel_gradients(
    X, Y, train, eps: float, bundle: KernelBundle
) -> KernelGradientBundle:
    """Analytic first-argument gradients of K, M, Pf, Pb, P.

    ``bundle`` must come from ``build_kernel_bundle`` with the same
    (X, Y, train, eps).  The degree term uses the chain rule
    d/dx sqrt(d(x)) = grad d(x) / (2 sqrt(d(x))) with
    grad d(x) = sum_t grad_1 K(x, z_t).
    """
    X = as_sample_matrix(X, "X")
    Y = as_sample_matrix(Y, "Y")
    train_arr = as_sample_matrix(train, "train")
    eps = check_bandwidth(eps)
    if bundle.K.shape != (X.shape[0], Y.shape[0]):
        raise InvalidInputError("bundle shape does not match the query sets")
    if abs(bundle.eps - eps) > 1e-15 * max(1.0, eps):
        raise InvalidInputError("bundle was built with a different bandwidth")

    K = bundle.K
    KXT = bundle.k_train
    d_row, d_col = bundle.d_row, bundle.d_col
    sq_row, sq_col = np.sqrt(d_row), np.sqrt(d_col)
    sq_train = np.sqrt(bundle.d_train)
    s_row, s_col = bundle.s_row, bundle.s_col

    gradK = gaussian_kernel_grad1(X, Y, eps)

    # grad d(x) = sum_t grad_1 K(x, z_t) = -(d(x) x - KXT @ train) / eps
    grad_d = -(d_row[:, None] * X - KXT @ train_arr) / eps
    grad_sqrt_d = grad_d / (2.0 * sq_row[:, None])

    inv_norm = 1.0 / (sq_row[:, None] * sq_col[None, :])
    gradM = gradK * inv_norm[:, :, None] - (K * inv_norm / sq_row[:, None])[
        :, :, None
    ] * grad_sqrt_d[:, None, :]

    gradPf = gradM / s_col[None, :, None]

    # grad s_row(x) = sum_t grad_1 M(x, z_t); assembled with 2-D ops only.
    w = KXT / sq_train[None, :]
    grad_ksum = -(w.sum(axis=1)[:, None] * X - w @ train_arr) / eps
    grad_s_row = grad_ksum / sq_row[:, None] - grad_sqrt_d * (
        (w.sum(axis=1) / d_row)[:, None]
    )

    gradPb = (gradM - bundle.Pb[:, :, None] * grad_s_row[:, None, :]) / s_row[
        :, None, None
    ]

    gradP = 0.5 * (gradPf + gradPb)
    return KernelGradientBundle(
        gradK=gradK, gradM=gradM, gradPf=gradPf, gradPb=gradPb, gradP=gradP
    )
