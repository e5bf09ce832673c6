"""Synthetic dataset generators and external data ingestion.

The toy domains used throughout the experiments live here: a
mouse-head-shaped union of disks in the plane, a pair of disjoint
half-annulus "moons", a noisy circular arc tilted into three
dimensions, and a uniform half-sphere in arbitrary ambient dimension.
A loader for the gluon-jet point-cloud file (shape 177252 x 30 x 4 on
disk) handles slicing, feature selection, and standardization.

Every generator is a pure function of ``(n, seed, params)`` built on
``numpy.random.default_rng``, so reference sets of any size regenerate
bit-identically.  Membership predicates are exported alongside the
samplers so tests and diagnostics can verify support constraints
directly.
"""

from __future__ import annotations

import dataclasses
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .exceptions import InvalidInputError
from .kernels import as_sample_matrix

__all__ = [
    "MICKEY_HEAD_RADIUS",
    "MICKEY_EAR_RADIUS",
    "MICKEY_EAR_CENTERS",
    "sample_mickey",
    "in_mickey",
    "sample_two_moons",
    "two_moons_component",
    "ARC_ROTATION",
    "sample_arc",
    "sample_hypersemisphere",
    "GluonNormalization",
    "GLUON_SHAPE",
    "load_gluon",
    "init_particles",
    "DatasetSpec",
    "generate_dataset",
    "write_samples_csv",
    "read_samples_csv",
]

# Mouse-head geometry: one unit head disk plus two smaller ear disks.
# The constants are fixed so experiments are reproducible.
MICKEY_HEAD_RADIUS = 1.0
MICKEY_EAR_RADIUS = 0.45
MICKEY_EAR_CENTERS = ((-0.9, 0.9), (0.9, 0.9))

# Fixed tilt applied to the planar arc to embed it in general position
# in R^3.  Any orthogonal matrix would do; this one is pinned so that
# regenerated datasets match bit for bit.
ARC_ROTATION = Rotation.from_euler("zx", [0.4, 0.3]).as_matrix()

GLUON_SHAPE = (177252, 30, 4)


def _require_positive_count(n: int, name: str = "n") -> int:
    n = int(n)
    if n < 1:
        raise InvalidInputError(f"{name} must be a positive integer, got {n}")
    return n


# ---------------------------------------------------------------------------
# Mouse head: union of three disks, uniform by rejection sampling.
# ---------------------------------------------------------------------------


def in_mickey(
    points: np.ndarray,
    head_radius: float = MICKEY_HEAD_RADIUS,
    ear_radius: float = MICKEY_EAR_RADIUS,
    ear_centers: Sequence[Sequence[float]] = MICKEY_EAR_CENTERS,
) -> np.ndarray:
    """Boolean membership mask for the disk-union domain."""
    pts = as_sample_matrix(points, "points")
    if pts.shape[1] != 2:
        raise InvalidInputError("mickey points must be 2-D")
    inside = np.einsum("ij,ij->i", pts, pts) <= head_radius**2
    for c in ear_centers:
        diff = pts - np.asarray(c, dtype=float)
        inside |= np.einsum("ij,ij->i", diff, diff) <= ear_radius**2
    return inside


def sample_mickey(
    n: int,
    seed: int,
    head_radius: float = MICKEY_HEAD_RADIUS,
    ear_radius: float = MICKEY_EAR_RADIUS,
    ear_centers: Sequence[Sequence[float]] = MICKEY_EAR_CENTERS,
) -> np.ndarray:
    """Sample uniformly from the union of head and ear disks.

    Rejection sampling from the bounding box of the union, so every
    returned point satisfies the membership predicate exactly.
    """
    n = _require_positive_count(n)
    if head_radius <= 0 or ear_radius <= 0:
        raise InvalidInputError("disk radii must be positive")
    centers = np.asarray(ear_centers, dtype=float)
    if centers.ndim != 2 or centers.shape[1] != 2:
        raise InvalidInputError("ear_centers must be a sequence of 2-D points")

    lo = np.minimum(centers.min(axis=0) - ear_radius, -head_radius)
    hi = np.maximum(centers.max(axis=0) + ear_radius, head_radius)
    rng = np.random.default_rng(seed)

    out = np.empty((n, 2))
    filled = 0
    while filled < n:
        draw = rng.uniform(lo, hi, size=(max(2 * (n - filled), 256), 2))
        keep = draw[
            in_mickey(draw, head_radius, ear_radius, centers)
        ]
        take = min(len(keep), n - filled)
        out[filled : filled + take] = keep[:take]
        filled += take
    return out


# ---------------------------------------------------------------------------
# Two moons: disjoint half annuli, uniform by area.
# ---------------------------------------------------------------------------

_MOON_DEFAULT_INNER = 0.8
_MOON_DEFAULT_OUTER = 1.2
_MOON_DEFAULT_CENTER2 = (1.0, 0.4)


def _half_annulus_mask(
    pts: np.ndarray,
    center: np.ndarray,
    r_inner: float,
    r_outer: float,
    upper: bool,
) -> np.ndarray:
    diff = pts - center
    r2 = np.einsum("ij,ij->i", diff, diff)
    radial = (r2 >= r_inner**2) & (r2 <= r_outer**2)
    half = diff[:, 1] >= 0 if upper else diff[:, 1] <= 0
    return radial & half


def two_moons_component(
    points: np.ndarray,
    r_inner: float = _MOON_DEFAULT_INNER,
    r_outer: float = _MOON_DEFAULT_OUTER,
    center2: Sequence[float] = _MOON_DEFAULT_CENTER2,
) -> np.ndarray:
    """Label each point -1 (outside), 0 (upper moon), or 1 (lower moon).

    Points falling in both closed components are labeled 2; for valid
    parameter sets this never happens because construction verifies the
    components are disjoint.
    """
    pts = as_sample_matrix(points, "points")
    if pts.shape[1] != 2:
        raise InvalidInputError("two-moons points must be 2-D")
    c1 = np.zeros(2)
    c2 = np.asarray(center2, dtype=float)
    in1 = _half_annulus_mask(pts, c1, r_inner, r_outer, upper=True)
    in2 = _half_annulus_mask(pts, c2, r_inner, r_outer, upper=False)
    label = np.full(len(pts), -1, dtype=int)
    label[in1] = 0
    label[in2] = 1
    label[in1 & in2] = 2
    return label


def _moons_overlap(
    r_inner: float,
    r_outer: float,
    center2: np.ndarray,
    resolution: int = 301,
) -> bool:
    """Grid check for a positive-area intersection of the two moons.

    The components are compact, so any overlap with nonzero area shows
    up on a fine enough grid over the intersection of the bounding
    boxes.  Tangency along a measure-zero set can slip through; that is
    acceptable for rejecting obviously bad parameter choices.
    """
    lo1 = np.array([-r_outer, 0.0])
    hi1 = np.array([r_outer, r_outer])
    lo2 = center2 + np.array([-r_outer, -r_outer])
    hi2 = center2 + np.array([r_outer, 0.0])
    lo = np.maximum(lo1, lo2)
    hi = np.minimum(hi1, hi2)
    if np.any(lo >= hi):
        return False
    xs = np.linspace(lo[0], hi[0], resolution)
    ys = np.linspace(lo[1], hi[1], resolution)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    in1 = _half_annulus_mask(pts, np.zeros(2), r_inner, r_outer, upper=True)
    in2 = _half_annulus_mask(pts, center2, r_inner, r_outer, upper=False)
    return bool(np.any(in1 & in2))


def sample_two_moons(
    n: int,
    seed: int,
    r_inner: float = _MOON_DEFAULT_INNER,
    r_outer: float = _MOON_DEFAULT_OUTER,
    center2: Sequence[float] = _MOON_DEFAULT_CENTER2,
) -> np.ndarray:
    """Sample uniformly from two disjoint half-annulus components.

    The upper moon is centered at the origin, the lower moon at
    ``center2``.  Each point picks a component with probability 1/2
    (the components have equal area) and then draws an area-uniform
    location: angle uniform over the half circle, radius via the
    square-root inverse CDF.

    Raises
    ------
    InvalidInputError
        If the radii are invalid or the chosen parameters make the two
        components overlap.
    """
    n = _require_positive_count(n)
    if not 0 < r_inner < r_outer:
        raise InvalidInputError(
            f"need 0 < r_inner < r_outer, got ({r_inner}, {r_outer})"
        )
    c2 = np.asarray(center2, dtype=float)
    if c2.shape != (2,) or not np.all(np.isfinite(c2)):
        raise InvalidInputError("center2 must be a finite 2-D point")
    if _moons_overlap(r_inner, r_outer, c2):
        raise InvalidInputError(
            "two-moons components overlap for these parameters; "
            "move center2 or shrink the annulus"
        )

    rng = np.random.default_rng(seed)
    component = rng.integers(0, 2, size=n)
    theta = rng.uniform(0.0, np.pi, size=n)
    theta = np.where(component == 1, theta + np.pi, theta)
    r = np.sqrt(r_inner**2 + rng.uniform(size=n) * (r_outer**2 - r_inner**2))
    pts = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    pts[component == 1] += c2
    return pts


# ---------------------------------------------------------------------------
# Noisy arc in R^3.
# ---------------------------------------------------------------------------


def _check_rotation(rotation) -> np.ndarray:
    rot = np.asarray(rotation, dtype=float)
    if rot.shape != (3, 3) or not np.all(np.isfinite(rot)):
        raise InvalidInputError("rotation must be a finite 3x3 matrix")
    if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-10):
        raise InvalidInputError("rotation must be orthogonal")
    return rot


def sample_arc(
    n: int,
    seed: int,
    theta_min: float = 0.0,
    theta_max: float = np.pi,
    radial_noise: float = 1e-2,
    rotation: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Sample a unit-radius arc with small outward radial noise in R^3.

    Angles are uniform on ``[theta_min, theta_max]`` and the radius is
    ``1 + U(0, radial_noise)``, so the cloud lies in a thin annular
    band of a plane.  The planar points ``(r cos t, r sin t, 0)`` are
    then mapped by ``rotation`` (the fixed module constant
    ``ARC_ROTATION`` by default) so the support sits in a tilted plane.
    """
    n = _require_positive_count(n)
    if not theta_min < theta_max:
        raise InvalidInputError("need theta_min < theta_max")
    if radial_noise < 0:
        raise InvalidInputError("radial_noise must be nonnegative")
    rot = ARC_ROTATION if rotation is None else _check_rotation(rotation)

    rng = np.random.default_rng(seed)
    theta = rng.uniform(theta_min, theta_max, size=n)
    r = 1.0 + rng.uniform(0.0, radial_noise, size=n)
    flat = np.column_stack([r * np.cos(theta), r * np.sin(theta), np.zeros(n)])
    return flat @ rot.T


# ---------------------------------------------------------------------------
# Uniform half-sphere in d dimensions.
# ---------------------------------------------------------------------------


def sample_hypersemisphere(n: int, d: int, seed: int) -> np.ndarray:
    """Sample uniformly on the unit half-sphere with last coordinate >= 0.

    Standard Gaussian vectors are normalized to the sphere and then
    reflected through the equatorial plane, which preserves uniformity.
    """
    n = _require_positive_count(n)
    d = int(d)
    if d < 2:
        raise InvalidInputError(f"ambient dimension must be >= 2, got {d}")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    g[:, -1] = np.abs(g[:, -1])
    return g


# ---------------------------------------------------------------------------
# Gluon-jet point-cloud ingestion.
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class GluonNormalization:
    """Per-coordinate affine normalization fitted on a training subsample.

    ``normalize`` maps raw features to zero mean and unit variance;
    ``denormalize`` inverts it exactly.  ``row_indices`` records which
    jets were subsampled so the raw values remain addressable.
    """

    mean: np.ndarray
    scale: np.ndarray
    particle_index: int
    row_indices: np.ndarray

    def normalize(self, raw: np.ndarray) -> np.ndarray:
        return (np.asarray(raw, dtype=float) - self.mean) / self.scale

    def denormalize(self, standardized: np.ndarray) -> np.ndarray:
        return np.asarray(standardized, dtype=float) * self.scale + self.mean


def load_gluon(
    path,
    particle_index: int,
    n_train: int,
    seed: int,
) -> tuple:
    """Load one particle slice of the gluon-jet array and standardize it.

    The on-disk array must have shape ``177252 x 30 x 4`` (jets x
    particles x features).  The loader selects ``particle_index`` for
    every jet, keeps the first three features (dropping the mask
    channel), subsamples ``n_train`` jets without replacement, and
    standardizes each coordinate over that subsample.

    Returns
    -------
    (samples, normalization)
        ``samples`` has shape ``(n_train, 3)`` with per-column mean 0
        and variance 1; ``normalization`` is the fitted
        :class:`GluonNormalization`.

    Raises
    ------
    OSError
        If the file is missing or unreadable, or its shape differs
        from the expected ``177252 x 30 x 4``.
    InvalidInputError
        If ``particle_index`` or ``n_train`` is out of range.
    """
    particle_index = int(particle_index)
    if not 0 <= particle_index < GLUON_SHAPE[1]:
        raise InvalidInputError(
            f"particle_index must be in [0, {GLUON_SHAPE[1] - 1}], "
            f"got {particle_index}"
        )
    n_train = _require_positive_count(n_train, "n_train")
    if n_train > GLUON_SHAPE[0]:
        raise InvalidInputError(
            f"n_train cannot exceed the {GLUON_SHAPE[0]} available jets"
        )

    expected = "x".join(str(s) for s in GLUON_SHAPE)
    try:
        data = np.load(path, mmap_mode="r", allow_pickle=False)
    except OSError as exc:
        raise OSError(
            f"cannot read gluon file {path!r} "
            f"(expected a {expected} array): {exc}"
        ) from exc
    except ValueError as exc:
        raise OSError(
            f"gluon file {path!r} is not a valid array file "
            f"(expected a {expected} array): {exc}"
        ) from exc
    if data.ndim != 3 or data.shape != GLUON_SHAPE:
        raise OSError(
            f"gluon file {path!r} has shape {data.shape}, "
            f"expected {expected}"
        )

    rng = np.random.default_rng(seed)
    rows = np.sort(rng.choice(GLUON_SHAPE[0], size=n_train, replace=False))
    raw = np.asarray(data[rows, particle_index, :3], dtype=float)

    mean = raw.mean(axis=0)
    scale = raw.std(axis=0)
    # A constant column carries no information to rescale; keep it
    # centered instead of dividing by zero.
    scale = np.where(scale > 0, scale, 1.0)
    norm = GluonNormalization(
        mean=mean, scale=scale, particle_index=particle_index, row_indices=rows
    )
    return norm.normalize(raw), norm


# ---------------------------------------------------------------------------
# Particle initialization policies.
# ---------------------------------------------------------------------------


def init_particles(
    policy,
    m: int,
    d: int,
    seed: Optional[int] = None,
    train: Optional[np.ndarray] = None,
    eps: Optional[float] = None,
    low: float = -1.0,
    high: float = 1.0,
) -> np.ndarray:
    """Build an initial particle ensemble under the named policy.

    Policies
    --------
    ``"subsample-jitter"``
        Picks ``m`` training points (without replacement when the
        training set is large enough) and adds isotropic Gaussian
        jitter with standard deviation ``sqrt(eps) / 10``, keeping the
        ensemble inside the support up to a small blur.  Requires
        ``train`` and ``eps``.
    ``"uniform-box"``
        Independent uniform draws from ``[low, high]^d``.
    array-like
        Passing an explicit array uses it unchanged (validated against
        ``m`` and ``d``).
    """
    m = _require_positive_count(m, "m")
    d = int(d)
    if d < 1:
        raise InvalidInputError(f"dimension must be >= 1, got {d}")

    if isinstance(policy, str):
        if policy == "subsample-jitter":
            if train is None:
                raise InvalidInputError(
                    "subsample-jitter initialization requires training data"
                )
            if eps is None or not np.isfinite(eps) or eps <= 0:
                raise InvalidInputError(
                    "subsample-jitter initialization requires a positive "
                    "bandwidth eps"
                )
            pts = as_sample_matrix(train, "train")
            if pts.shape[1] != d:
                raise InvalidInputError(
                    f"train has dimension {pts.shape[1]}, expected {d}"
                )
            rng = np.random.default_rng(seed)
            idx = rng.choice(len(pts), size=m, replace=m > len(pts))
            jitter = rng.normal(scale=np.sqrt(eps) / 10.0, size=(m, d))
            return pts[idx] + jitter
        if policy == "uniform-box":
            if not low < high:
                raise InvalidInputError("need low < high for uniform-box")
            rng = np.random.default_rng(seed)
            return rng.uniform(low, high, size=(m, d))
        raise InvalidInputError(f"unknown initialization policy {policy!r}")

    explicit = as_sample_matrix(policy, "initial particles")
    if explicit.shape != (m, d):
        raise InvalidInputError(
            f"explicit initial particles have shape {explicit.shape}, "
            f"expected ({m}, {d})"
        )
    return explicit


# ---------------------------------------------------------------------------
# Named dataset dispatch.
# ---------------------------------------------------------------------------

_GENERATORS = {
    "mickey": sample_mickey,
    "two_moons": sample_two_moons,
    "arc": sample_arc,
    "hypersemisphere": sample_hypersemisphere,
}


@dataclasses.dataclass(frozen=True)
class DatasetSpec:
    """A reproducible dataset request: name, size, seed, parameters."""

    name: str
    n: int
    seed: int
    params: dict = dataclasses.field(default_factory=dict)

    def sample(self) -> np.ndarray:
        return generate_dataset(self.name, self.n, self.seed, self.params)


def generate_dataset(
    name: str,
    n: int,
    seed: int,
    params: Optional[dict] = None,
) -> np.ndarray:
    """Generate a named dataset; params are forwarded as keyword args.

    ``hypersemisphere`` requires ``d`` in params; ``gluon`` requires
    ``path`` and accepts ``particle_index`` (the standardized samples
    are returned, the normalization record is dropped).
    """
    params = dict(params or {})
    if name == "gluon":
        if "path" not in params:
            raise InvalidInputError("gluon dataset requires a 'path' parameter")
        samples, _ = load_gluon(
            params["path"],
            particle_index=params.get("particle_index", 0),
            n_train=n,
            seed=seed,
        )
        return samples
    try:
        generator = _GENERATORS[name]
    except KeyError:
        known = ", ".join(sorted([*_GENERATORS, "gluon"]))
        raise InvalidInputError(
            f"unknown dataset {name!r}; expected one of: {known}"
        ) from None
    try:
        return generator(n=n, seed=seed, **params)
    except TypeError as exc:
        raise InvalidInputError(
            f"bad parameters for dataset {name!r}: {exc}"
        ) from exc


# ---------------------------------------------------------------------------
# Plain CSV round-trip for sample matrices.
# ---------------------------------------------------------------------------


def write_samples_csv(path, samples: np.ndarray) -> None:
    """Write a sample matrix as CSV with an ``x_0,...,x_{d-1}`` header."""
    x = as_sample_matrix(samples, "samples")
    header = ",".join(f"x_{j}" for j in range(x.shape[1]))
    np.savetxt(path, x, delimiter=",", header=header, comments="")


def read_samples_csv(path) -> np.ndarray:
    """Read a sample matrix written by :func:`write_samples_csv`."""
    try:
        out = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read sample CSV {path!r}: {exc}") from exc
    return out
