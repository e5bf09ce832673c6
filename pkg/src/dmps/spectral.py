"""Spectral inversion of the learned generator and the particle drift field.

The symmetric training kernel P admits a Mercer-style decomposition
P = sum_i lambda_i phi_i phi_i^T.  The generator approximation
L f = (f - P f) / eps then has eigenpairs (sigma_i, phi_i) with
sigma_i = (1 - lambda_i) / eps.  Inverting L on the complement of its
null mode gives per-mode weights w_i = eps / ((1 - lambda_i) lambda_i^2),
and the drift used to transport particles is the gradient of the
inverse-generator kernel,

    grad_1 Kinv(x, x') = gradP(x, :) @ [Phi diag(w) Phi^T] @ P(:, x'),

with the middle N x N factor formed once per fitted model and cached.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import DegenerateSpectrumError, InvalidInputError
from .kernels import (
    TrainKernelStats,
    as_sample_matrix,
    build_kernel_bundle,
    check_bandwidth,
    gaussian_kernel,
    median_bandwidth,
    train_kernel_stats,
)

_TINY = np.finfo(float).tiny

_CLAMP_TOL = 1e-8
_MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Spectrum:
    """Eigendecomposition of the symmetric training kernel.

    ``lambdas`` is nonincreasing; ``phis`` holds the matching eigenvectors
    as columns, orthonormal under the plain-sum inner product.
    """

    lambdas: np.ndarray
    phis: np.ndarray
    epsilon: float

    @property
    def n(self) -> int:
        return self.lambdas.shape[0]


@dataclass(frozen=True)
class InverseSpectrum:
    """Truncated inverse-generator weights.

    ``weights[i] = eps / ((1 - lambda_i) lambda_i^2)`` for kept modes and 0
    for truncated ones; ``kept`` lists the retained mode indices.
    """

    weights: np.ndarray
    kept: np.ndarray


def eigendecompose(p_train, eps: float, symmetry_tol: float = 1e-10) -> Spectrum:
    """Full symmetric eigendecomposition of P, sorted by descending eigenvalue.

    Eigenvalues within 1e-8 of 0 or 1 are clamped to the bound; any
    remaining negative values (possible at floating-point level) are
    clamped to 0 so that downstream truncation removes them.
    """
    P = np.asarray(p_train, dtype=float)
    eps = check_bandwidth(eps)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
        raise InvalidInputError(f"expected a square kernel matrix, got shape {P.shape}")
    if not np.all(np.isfinite(P)):
        raise InvalidInputError("kernel matrix contains NaN or Inf entries")
    if P.shape[0] > 1 and np.max(np.abs(P - P.T)) > symmetry_tol:
        raise InvalidInputError(
            f"kernel matrix is not symmetric within {symmetry_tol:g}"
        )
    vals, vecs = np.linalg.eigh(0.5 * (P + P.T))
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    vals[np.abs(vals) <= _CLAMP_TOL] = 0.0
    vals[np.abs(vals - 1.0) <= _CLAMP_TOL] = 1.0
    vals[vals < 0.0] = 0.0
    return Spectrum(lambdas=vals, phis=vecs, epsilon=eps)


def inverse_spectrum(
    spec: Spectrum,
    sigma_min: float | None = None,
    lambda_min: float = 1e-3,
) -> InverseSpectrum:
    """Invert the generator spectrum, truncating non-invertible modes.

    A mode is truncated iff sigma_i = (1 - lambda_i)/eps < sigma_min (the
    near-constant mode, whose generator eigenvalue vanishes) or
    lambda_i < lambda_min (numerically negligible kernel mode).
    ``sigma_min`` defaults to 1e-8 / eps.

    The lambda_min floor doubles as an off-manifold safety: the
    inverse-kernel middle weight eps / ((1 - lambda) lambda^2) grows like
    1/lambda^2, and the compensating lambda^2 factor is only recovered
    when queries lie near the training data.  Keeping near-null modes
    makes the drift explode for particles away from the support, so the
    floor is deliberately far above rounding noise.

    Raises
    ------
    DegenerateSpectrumError
        If every mode is truncated.
    """
    if sigma_min is None:
        sigma_min = 1e-8 / spec.epsilon
    if sigma_min <= 0 or lambda_min <= 0:
        raise InvalidInputError("sigma_min and lambda_min must be positive")
    lam = spec.lambdas
    sigmas = (1.0 - lam) / spec.epsilon
    kept_mask = (sigmas >= sigma_min) & (lam >= lambda_min)
    if not np.any(kept_mask):
        raise DegenerateSpectrumError(
            "all spectral modes were truncated; cannot invert the generator"
        )
    weights = np.zeros_like(lam)
    lk = lam[kept_mask]
    weights[kept_mask] = spec.epsilon / ((1.0 - lk) * lk**2)
    return InverseSpectrum(weights=weights, kept=np.nonzero(kept_mask)[0])


def apply_generator(spec: Spectrum, f_train) -> np.ndarray:
    """Apply the learned generator (f - P f)/eps at the training points.

    ``f_train`` may be a length-n vector or an (n, k) stack of columns;
    P is applied through its spectral reconstruction.
    """
    f = np.asarray(f_train, dtype=float)
    if not np.all(np.isfinite(f)):
        raise InvalidInputError("function values contain NaN or Inf")
    squeeze = f.ndim == 1
    f2 = f[:, None] if squeeze else f
    if f2.shape[0] != spec.n:
        raise InvalidInputError(
            f"expected {spec.n} function values, got {f2.shape[0]}"
        )
    proj = spec.phis @ (spec.lambdas[:, None] * (spec.phis.T @ f2))
    out = (f2 - proj) / spec.epsilon
    return out[:, 0] if squeeze else out


def apply_inverse_generator(spec: Spectrum, inv: InverseSpectrum, g_train) -> np.ndarray:
    """Apply the truncated inverse generator Phi diag(lambda w lambda) Phi^T."""
    g = np.asarray(g_train, dtype=float)
    squeeze = g.ndim == 1
    g2 = g[:, None] if squeeze else g
    if g2.shape[0] != spec.n:
        raise InvalidInputError(f"expected {spec.n} values, got {g2.shape[0]}")
    diag = spec.lambdas**2 * inv.weights
    out = spec.phis @ (diag[:, None] * (spec.phis.T @ g2))
    return out[:, 0] if squeeze else out


@dataclass(frozen=True)
class DiffusionModel:
    """A fitted drift model: training set, spectrum, inverse, cached middle factor.

    Immutable once constructed; safe to share across threads.
    """

    train: np.ndarray
    epsilon: float
    spectrum: Spectrum
    inverse: InverseSpectrum
    middle: np.ndarray
    stats: TrainKernelStats

    @property
    def dim(self) -> int:
        return self.train.shape[1]


def fit_diffusion_model(
    train,
    eps: float | None = None,
    sigma_min: float | None = None,
    lambda_min: float = 1e-3,
) -> DiffusionModel:
    """Fit the inverse-generator drift model on a training sample.

    ``eps`` defaults to the median-heuristic bandwidth.  The O(N^3)
    eigendecomposition and the N x N middle factor are paid once here;
    drift evaluations afterwards cost O(M N d + M N) per batch.
    """
    train = as_sample_matrix(train, "train")
    if eps is None:
        eps = median_bandwidth(train)
    else:
        eps = check_bandwidth(eps)
    stats = train_kernel_stats(train, eps)
    bundle = build_kernel_bundle(train, train, train, eps, stats)
    spectrum = eigendecompose(bundle.P, eps)
    inverse = inverse_spectrum(spectrum, sigma_min=sigma_min, lambda_min=lambda_min)
    middle = (spectrum.phis * inverse.weights[None, :]) @ spectrum.phis.T
    return DiffusionModel(
        train=train,
        epsilon=eps,
        spectrum=spectrum,
        inverse=inverse,
        middle=middle,
        stats=stats,
    )


def drift_field(model: DiffusionModel, particles) -> np.ndarray:
    """Mean inverse-generator kernel gradient over the particle ensemble.

    Row i is (1/M) sum_j grad_1 Kinv(x_i, x_j), evaluated through the
    cached middle factor; P(z, x_j) is obtained as P(x_j, z), which holds
    exactly at finite sample.
    """
    X = as_sample_matrix(particles, "particles")
    if X.shape[1] != model.dim:
        raise InvalidInputError(
            f"particles have dimension {X.shape[1]}, model expects {model.dim}"
        )
    eps = model.epsilon
    train = model.train
    sq_train = np.sqrt(model.stats.d_train)
    s_col = model.stats.m_sums

    # The contraction sum_k grad_1 P(x_i, z_k) c_k collapses to matrix
    # products: every gradient term is a column-weighted sum of
    # -(x - z) K(x, z) / eps plus a rank-one degree correction, so no
    # (particles x train x dim) tensor is ever materialized.
    K = gaussian_kernel(X, train, eps)
    d_row = np.maximum(K.sum(axis=1), _TINY)
    sq_row = np.sqrt(d_row)
    m_mat = K / (sq_row[:, None] * sq_train[None, :])
    s_row = np.maximum(m_mat.sum(axis=1), _TINY)

    b = 0.5 * (m_mat.sum(axis=0) / s_col + (m_mat / s_row[:, None]).sum(axis=0))
    c = model.middle @ b

    grad_d = -(d_row[:, None] * X - K @ train) / eps
    g_row = grad_d / (2.0 * sq_row[:, None])

    def weighted_grad_m(u):
        # sum_k grad_1 M(x_i, z_k) u_k for a train-indexed weight vector u
        mu = m_mat @ u
        return (
            -(mu[:, None] * X - (m_mat * u[None, :]) @ train) / eps
            - (mu / sq_row)[:, None] * g_row
        )

    a_forward = weighted_grad_m(c / s_col)
    grad_s_row = weighted_grad_m(np.ones(len(train)))
    a_backward = (
        weighted_grad_m(c) - ((m_mat @ c) / s_row)[:, None] * grad_s_row
    ) / s_row[:, None]
    return (a_forward + a_backward) / (2.0 * X.shape[0])


def save_model(model: DiffusionModel, path) -> None:
    """Serialize a fitted model to a single .npz artifact with a version header."""
    np.savez_compressed(
        Path(path),
        format_version=np.array(_MODEL_FORMAT_VERSION),
        train=model.train,
        epsilon=np.array(model.epsilon),
        lambdas=model.spectrum.lambdas,
        phis=model.spectrum.phis,
        weights=model.inverse.weights,
        kept=model.inverse.kept,
        middle=model.middle,
    )


def load_model(path) -> DiffusionModel:
    """Load a model saved by :func:`save_model`.

    Training-kernel statistics are not stored; they are recomputed from the
    training samples (O(N^2), cheap next to the stored middle factor).
    """
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"model file not found: {path}")
    with np.load(path) as data:
        missing = {
            "format_version",
            "train",
            "epsilon",
            "lambdas",
            "phis",
            "weights",
            "kept",
            "middle",
        } - set(data.files)
        if missing:
            raise InvalidInputError(f"model file missing fields: {sorted(missing)}")
        version = int(data["format_version"])
        if version > _MODEL_FORMAT_VERSION:
            raise InvalidInputError(
                f"model format version {version} is newer than supported "
                f"({_MODEL_FORMAT_VERSION})"
            )
        train = np.array(data["train"])
        eps = float(data["epsilon"])
        spectrum = Spectrum(
            lambdas=np.array(data["lambdas"]),
            phis=np.array(data["phis"]),
            epsilon=eps,
        )
        inverse = InverseSpectrum(
            weights=np.array(data["weights"]), kept=np.array(data["kept"])
        )
        middle = np.array(data["middle"])
    return DiffusionModel(
        train=train,
        epsilon=eps,
        spectrum=spectrum,
        inverse=inverse,
        middle=middle,
        stats=train_kernel_stats(train, eps),
    )
