"""Particle-evolution samplers: drift descent, SVGD, and unadjusted Langevin.

The drift sampler transports particles deterministically along the
inverse-generator kernel gradient of a fitted model.  The two baselines
need the score ``grad log pi`` instead, estimated from samples as the
gradient of the log kernel density estimate at the model bandwidth:

    score(x) = -(x - sum_i w_i(x) z_i) / eps,   w_i(x) ∝ K_eps(x, z_i),

i.e. the displacement from the kernel-weighted local mean of the
training set.  The weights concentrate on the nearest training point far
from the data, so the score keeps a restoring pull of magnitude
``|x - z_nearest| / eps`` there.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DegenerateDataError, DivergenceError, InvalidInputError
from .kernels import (
    as_sample_matrix,
    gaussian_kernel,
    gaussian_kernel_grad1,
    median_bandwidth,
)
from .spectral import DiffusionModel, Spectrum, drift_field


@dataclass(frozen=True)
class SamplerConfig:
    """Shared sampler settings.

    ``tol`` is the mean per-particle displacement threshold used by the
    deterministic samplers, compared against ``tol * step_size``; ``None``
    resolves to the scale-aware default 1e-4 * sqrt(eps) where a bandwidth
    is available.  ``init`` names the initialization policy consumed by
    the experiment harness (the samplers themselves take explicit initial
    particle matrices).  ``record_every`` controls snapshot cadence; only
    the first and final states are kept when it is None.
    """

    step_size: float
    max_iters: int
    tol: float | None = None
    seed: int | None = None
    init: object = "subsample-jitter"
    record_every: int | None = None

    def validate(self) -> None:
        if not np.isfinite(self.step_size) or self.step_size <= 0:
            raise InvalidInputError(
                f"step_size must be a positive real, got {self.step_size}"
            )
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be at least 1")
        if self.tol is not None and not self.tol >= 0:
            raise InvalidInputError("tol must be nonnegative")
        if self.record_every is not None and self.record_every < 1:
            raise InvalidInputError("record_every must be at least 1 when given")


@dataclass(frozen=True)
class Trajectory:
    """Recorded run of a particle sampler."""

    snapshots: list = field(default_factory=list)  # (iteration, (M, d) array)
    converged: bool = False
    iters_run: int = 0

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1][1]


def _resolve_tol(cfg: SamplerConfig, eps: float | None) -> float:
    if cfg.tol is not None:
        return cfg.tol
    if eps is not None:
        return 1e-4 * np.sqrt(eps)
    return 0.0  # no scale available: run out the iteration budget


def _check_finite(x: np.ndarray, t: int) -> None:
    if not np.all(np.isfinite(x)):
        raise DivergenceError("particle update produced non-finite values", t)


def _record(snapshots, t, x, cfg):
    if cfg.record_every is not None and t % cfg.record_every == 0:
        snapshots.append((t, x.copy()))
        return True
    return False


def dmps_run(model: DiffusionModel, init_particles, cfg: SamplerConfig) -> Trajectory:
    """Deterministic drift descent x <- x - h * drift(x).

    Stops once the mean per-particle displacement of a step falls below
    ``tol * h``, or after ``max_iters`` steps.  No randomness enters the
    update, so identical inputs give bitwise-identical trajectories.

    Raises
    ------
    DivergenceError
        If an update produces non-finite particle positions.
    """
    cfg.validate()
    x = as_sample_matrix(init_particles, "init_particles").copy()
    if x.shape[1] != model.dim:
        raise InvalidInputError(
            f"particles have dimension {x.shape[1]}, model expects {model.dim}"
        )
    tol = _resolve_tol(cfg, model.epsilon)
    h = cfg.step_size
    snapshots = [(0, x.copy())]
    converged = False
    t = 0
    for t in range(1, cfg.max_iters + 1):
        step = h * drift_field(model, x)
        x -= step
        _check_finite(x, t)
        recorded = _record(snapshots, t, x, cfg)
        if float(np.linalg.norm(step, axis=1).mean()) < tol * h:
            converged = True
            if not recorded:
                snapshots.append((t, x.copy()))
            break
    else:
        if not recorded:
            snapshots.append((t, x.copy()))
    return Trajectory(snapshots=snapshots, converged=converged, iters_run=t)


def score_at(spec: Spectrum, train, queries) -> np.ndarray:
    """Estimated score grad log pi at arbitrary query points.

    Per coordinate c: -(x_c - sum_i w_i(x) z_i_c) / eps with kernel-row
    weights w_i(x) = K(x, z_i) / sum_j K(x, z_j).  Prefer
    :func:`make_score_fn` when evaluating many batches against the same
    training set.
    """
    return make_score_fn(spec, train)(queries)


def make_score_fn(spec, train):
    """Build a reusable score callable bound to a training set.

    ``spec`` may be a fitted Spectrum or a bare bandwidth value.  The
    returned function maps an (M, d) query matrix to the (M, d) score
    estimate; it exposes the bandwidth as ``.epsilon``.  Queries whose
    kernel row underflows entirely (astronomically far from the data)
    degrade to a pull toward the origin instead of NaN.
    """
    train = as_sample_matrix(train, "train")
    if isinstance(spec, Spectrum):
        if train.shape[0] != spec.n:
            raise InvalidInputError(
                f"spectrum was fitted on {spec.n} points, train has {train.shape[0]}"
            )
        eps = spec.epsilon
    else:
        eps = float(spec)
        if not np.isfinite(eps) or eps <= 0:
            raise InvalidInputError(f"bandwidth must be positive, got {spec}")
    tiny = np.finfo(float).tiny

    def score(queries):
        q = as_sample_matrix(queries, "queries")
        if q.shape[1] != train.shape[1]:
            raise InvalidInputError(
                f"queries have dimension {q.shape[1]}, train has {train.shape[1]}"
            )
        K = gaussian_kernel(q, train, eps)
        local_mean = (K @ train) / np.maximum(K.sum(axis=1, keepdims=True), tiny)
        return -(q - local_mean) / eps

    score.epsilon = eps
    return score


def estimate_score(spec: Spectrum, train) -> np.ndarray:
    """Score estimate at the training points themselves (N, d).

    Shares the exact-kernel evaluation path with :func:`score_at`, so the
    two agree to rounding at training points.
    """
    train = as_sample_matrix(train, "train")
    return make_score_fn(spec, train)(train)


def svgd_run(score_fn, init_particles, cfg: SamplerConfig) -> Trajectory:
    """Stein variational gradient descent with a Gaussian kernel.

    Update: x_i <- x_i + (h/M) sum_j [K(x_j, x_i) score(x_j) + grad_1 K(x_j, x_i)],
    with the kernel bandwidth recomputed each iteration from the current
    particles via the median heuristic.  A single particle reduces to plain
    gradient ascent on log pi.
    """
    cfg.validate()
    x = as_sample_matrix(init_particles, "init_particles").copy()
    tol = _resolve_tol(cfg, getattr(score_fn, "epsilon", None))
    h = cfg.step_size
    m = x.shape[0]
    snapshots = [(0, x.copy())]
    converged = False
    t = 0
    for t in range(1, cfg.max_iters + 1):
        scores = score_fn(x)
        if m == 1:
            phi = scores
        else:
            try:
                bw = median_bandwidth(x)
            except DegenerateDataError:
                # collapsed ensemble: kernel terms cancel, keep the score push
                phi = scores.mean(axis=0, keepdims=True).repeat(m, axis=0)
            else:
                K = gaussian_kernel(x, x, bw)
                # sum_j grad_1 K(x_j, x_i) without the (m, m, d) tensor
                repulsion = -(K.T @ x - K.sum(axis=0)[:, None] * x) / bw
                phi = (K.T @ scores + repulsion) / m
        step = h * phi
        x += step
        _check_finite(x, t)
        recorded = _record(snapshots, t, x, cfg)
        if float(np.linalg.norm(step, axis=1).mean()) < tol * h:
            converged = True
            if not recorded:
                snapshots.append((t, x.copy()))
            break
    else:
        if not recorded:
            snapshots.append((t, x.copy()))
    return Trajectory(snapshots=snapshots, converged=converged, iters_run=t)


def ula_run(score_fn, init_particles, cfg: SamplerConfig, noise=None) -> Trajectory:
    """Unadjusted Langevin: x <- x + h * score(x) + sqrt(2h) * xi.

    Runs exactly ``max_iters`` steps (no tolerance-based stop); the noise
    stream is drawn from ``cfg.seed``.  ``noise`` may supply a
    (max_iters, M, d) array of standard-normal draws instead, which makes
    equivariance properties exactly testable.
    """
    cfg.validate()
    x = as_sample_matrix(init_particles, "init_particles").copy()
    h = cfg.step_size
    scale = np.sqrt(2.0 * h)
    rng = np.random.default_rng(cfg.seed)
    if noise is not None:
        noise = np.asarray(noise, dtype=float)
        if noise.shape != (cfg.max_iters,) + x.shape:
            raise InvalidInputError(
                f"noise must have shape {(cfg.max_iters,) + x.shape}, got {noise.shape}"
            )
    snapshots = [(0, x.copy())]
    for t in range(1, cfg.max_iters + 1):
        xi = noise[t - 1] if noise is not None else rng.standard_normal(x.shape)
        x += h * score_fn(x) + scale * xi
        _check_finite(x, t)
        recorded = _record(snapshots, t, x, cfg)
    if not recorded:
        snapshots.append((cfg.max_iters, x.copy()))
    return Trajectory(snapshots=snapshots, converged=True, iters_run=cfg.max_iters)


def export_trajectory(traj: Trajectory, path) -> None:
    """Write snapshots as CSV with columns iter, particle_id, x_0..x_{d-1}."""
    if not traj.snapshots:
        raise InvalidInputError("trajectory has no snapshots to export")
    d = traj.snapshots[0][1].shape[1]
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "particle_id"] + [f"x_{c}" for c in range(d)])
        for it, snap in traj.snapshots:
            for pid, row in enumerate(snap):
                writer.writerow([it, pid] + [repr(float(v)) for v in row])
