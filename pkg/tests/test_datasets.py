"""Dataset generator tests.

Distributional checks compare empirical statistics against analytic or
independently computed oracles: the disk-union area ratio for the
mouse-head domain, the closed-form inter-component gap for the two
moons, a Kolmogorov-Smirnov test for the arc angles, and a separate
Monte Carlo run for the half-sphere coordinate mean.
"""

import numpy as np
import pytest
from scipy.stats import kstest

from dmps import InvalidInputError
from dmps.datasets import (
    ARC_ROTATION,
    DatasetSpec,
    GLUON_SHAPE,
    MICKEY_EAR_CENTERS,
    MICKEY_EAR_RADIUS,
    MICKEY_HEAD_RADIUS,
    generate_dataset,
    in_mickey,
    init_particles,
    load_gluon,
    read_samples_csv,
    sample_arc,
    sample_hypersemisphere,
    sample_mickey,
    sample_two_moons,
    two_moons_component,
    write_samples_csv,
)

# ---------------------------------------------------------------------------
# Mouse-head domain.
# ---------------------------------------------------------------------------


def test_mickey_membership():
    pts = sample_mickey(5000, seed=0)
    assert pts.shape == (5000, 2)
    assert np.all(in_mickey(pts))


def test_mickey_mirror_symmetry():
    # The domain is symmetric in x, so the mean x-coordinate is zero in
    # expectation; allow three standard errors of the Monte Carlo mean.
    pts = sample_mickey(10_000, seed=3)
    stderr = pts[:, 0].std(ddof=1) / np.sqrt(len(pts))
    assert abs(pts[:, 0].mean()) < 3 * stderr


def _circle_lens_area(r1: float, r2: float, dist: float) -> float:
    """Area of the intersection of two overlapping circles.

    Standard circular-segment decomposition; valid for partial overlap
    (|r1 - r2| < dist < r1 + r2).
    """
    alpha = np.arccos((dist**2 + r1**2 - r2**2) / (2 * dist * r1))
    beta = np.arccos((dist**2 + r2**2 - r1**2) / (2 * dist * r2))
    kite = 0.5 * np.sqrt(
        (-dist + r1 + r2)
        * (dist + r1 - r2)
        * (dist - r1 + r2)
        * (dist + r1 + r2)
    )
    return r1**2 * alpha + r2**2 * beta - kite


def test_mickey_head_fraction_matches_area_ratio():
    # Expected fraction of points inside the head disk equals its share
    # of the union area.  Each ear overlaps the head (center distance
    # 1.273 < 1.45 = sum of radii) but not the other ear, so the union
    # area is head + 2 * (ear - lens).
    r1, r2 = MICKEY_HEAD_RADIUS, MICKEY_EAR_RADIUS
    dist = np.linalg.norm(MICKEY_EAR_CENTERS[0])
    lens = _circle_lens_area(r1, r2, dist)
    union = np.pi * r1**2 + 2 * (np.pi * r2**2 - lens)
    expected = np.pi * r1**2 / union

    pts = sample_mickey(100_000, seed=11)
    frac = np.mean(np.einsum("ij,ij->i", pts, pts) <= r1**2)
    assert abs(frac / expected - 1.0) < 0.02


def test_mickey_rejects_bad_parameters():
    with pytest.raises(InvalidInputError):
        sample_mickey(0, seed=0)
    with pytest.raises(InvalidInputError):
        sample_mickey(10, seed=0, head_radius=-1.0)


# ---------------------------------------------------------------------------
# Two moons.
# ---------------------------------------------------------------------------

# Closest approach for the default geometry: the upper moon's endpoints
# (0.8, 0) and (1.2, 0) sit inside the lower moon's inner hole around
# (1, 0.4) at distance sqrt(0.2) from its center, so the gap to the
# inner radius 0.8 is 0.8 - sqrt(0.2).
TWO_MOONS_GAP = 0.8 - np.sqrt(0.2)


def test_two_moons_membership_exactly_one_component():
    pts = sample_two_moons(4000, seed=1)
    labels = two_moons_component(pts)
    assert np.all((labels == 0) | (labels == 1))


def test_two_moons_balanced_split():
    n = 4000
    pts = sample_two_moons(n, seed=5)
    count = np.sum(two_moons_component(pts) == 0)
    assert abs(count - n / 2) < 3 * np.sqrt(n * 0.25)


def test_two_moons_gap_matches_analytic_minimum():
    pts = sample_two_moons(6000, seed=7)
    labels = two_moons_component(pts)
    a, b = pts[labels == 0], pts[labels == 1]
    diff = a[:, None, :] - b[None, :, :]
    observed = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff).min())
    # Sampled points cannot be closer than the set gap, and with a few
    # thousand points per moon the nearest pair approaches it.
    assert observed >= TWO_MOONS_GAP - 1e-12
    assert observed <= TWO_MOONS_GAP + 0.2


def test_two_moons_rejects_overlapping_parameters():
    with pytest.raises(InvalidInputError):
        sample_two_moons(100, seed=0, center2=(0.2, 0.2))
    with pytest.raises(InvalidInputError):
        sample_two_moons(100, seed=0, r_inner=1.2, r_outer=0.8)


# ---------------------------------------------------------------------------
# Arc in R^3.
# ---------------------------------------------------------------------------


def test_arc_pre_rotation_frame():
    pts = sample_arc(2000, seed=2)
    flat = pts @ ARC_ROTATION
    assert np.max(np.abs(flat[:, 2])) < 1e-12
    radii = np.linalg.norm(flat[:, :2], axis=1)
    assert np.all(radii >= 1.0 - 1e-12)
    assert np.all(radii <= 1.01 + 1e-12)


def test_arc_identity_rotation_is_planar():
    pts = sample_arc(500, seed=4, rotation=np.eye(3))
    assert np.all(pts[:, 2] == 0.0)


def test_arc_angles_uniform_by_ks():
    pts = sample_arc(10_000, seed=8)
    flat = pts @ ARC_ROTATION
    theta = np.arctan2(flat[:, 1], flat[:, 0])
    assert kstest(theta / np.pi, "uniform").pvalue > 0.01


def test_arc_custom_angular_range():
    pts = sample_arc(1000, seed=9, theta_min=0.5, theta_max=1.0)
    flat = pts @ ARC_ROTATION
    theta = np.arctan2(flat[:, 1], flat[:, 0])
    assert np.all(theta >= 0.5 - 1e-12)
    assert np.all(theta <= 1.0 + 1e-12)


def test_arc_rejects_bad_parameters():
    with pytest.raises(InvalidInputError):
        sample_arc(100, seed=0, theta_min=1.0, theta_max=1.0)
    skew = np.eye(3)
    skew[0, 1] = 0.5
    with pytest.raises(InvalidInputError):
        sample_arc(100, seed=0, rotation=skew)


# ---------------------------------------------------------------------------
# Half-sphere.
# ---------------------------------------------------------------------------


def test_hypersemisphere_support():
    pts = sample_hypersemisphere(3000, d=6, seed=0)
    assert pts.shape == (3000, 6)
    assert np.max(np.abs(np.linalg.norm(pts, axis=1) - 1.0)) < 1e-12
    assert np.all(pts[:, -1] >= 0)


def test_hypersemisphere_last_coordinate_mean_matches_oracle():
    d = 5
    pts = sample_hypersemisphere(20_000, d=d, seed=13)

    # Independent Monte Carlo oracle for E |g_d| / ||g||.
    g = np.random.default_rng(987654).standard_normal((400_000, d))
    vals = np.abs(g[:, -1]) / np.linalg.norm(g, axis=1)
    oracle = vals.mean()

    stderr = np.sqrt(
        pts[:, -1].var(ddof=1) / len(pts) + vals.var(ddof=1) / len(vals)
    )
    assert abs(pts[:, -1].mean() - oracle) < 3 * stderr


def test_hypersemisphere_first_coordinate_mean_is_zero():
    pts = sample_hypersemisphere(20_000, d=3, seed=21)
    stderr = pts[:, 0].std(ddof=1) / np.sqrt(len(pts))
    assert abs(pts[:, 0].mean()) < 3 * stderr


def test_hypersemisphere_rejects_low_dimension():
    with pytest.raises(InvalidInputError):
        sample_hypersemisphere(10, d=1, seed=0)


# ---------------------------------------------------------------------------
# Gluon loader.
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def gluon_file(tmp_path_factory):
    """A full-shape stand-in for the jet file, filled with Gaussians."""
    path = tmp_path_factory.mktemp("gluon") / "jets.npy"
    mm = np.lib.format.open_memmap(
        path, mode="w+", dtype=np.float32, shape=GLUON_SHAPE
    )
    rng = np.random.default_rng(0)
    chunk = 30_000
    for start in range(0, GLUON_SHAPE[0], chunk):
        stop = min(start + chunk, GLUON_SHAPE[0])
        mm[start:stop] = rng.standard_normal(
            (stop - start,) + GLUON_SHAPE[1:], dtype=np.float32
        )
    mm.flush()
    del mm
    return path


def test_gluon_shape_and_standardization(gluon_file):
    samples, norm = load_gluon(gluon_file, particle_index=3, n_train=800, seed=5)
    assert samples.shape == (800, 3)
    assert np.max(np.abs(samples.mean(axis=0))) < 1e-10
    assert np.max(np.abs(samples.std(axis=0) - 1.0)) < 1e-10
    assert norm.particle_index == 3
    assert len(norm.row_indices) == 800
    assert len(np.unique(norm.row_indices)) == 800


def test_gluon_round_trip_denormalization(gluon_file):
    samples, norm = load_gluon(gluon_file, particle_index=0, n_train=200, seed=9)
    raw = np.load(gluon_file, mmap_mode="r")[norm.row_indices, 0, :3]
    assert np.max(np.abs(norm.denormalize(samples) - raw)) < 1e-10


def test_gluon_deterministic(gluon_file):
    a, norm_a = load_gluon(gluon_file, particle_index=1, n_train=100, seed=3)
    b, norm_b = load_gluon(gluon_file, particle_index=1, n_train=100, seed=3)
    assert np.array_equal(a, b)
    assert np.array_equal(norm_a.row_indices, norm_b.row_indices)


def test_gluon_particle_index_out_of_range(gluon_file):
    with pytest.raises(InvalidInputError):
        load_gluon(gluon_file, particle_index=30, n_train=10, seed=0)
    with pytest.raises(InvalidInputError):
        load_gluon(gluon_file, particle_index=-1, n_train=10, seed=0)


def test_gluon_missing_file_mentions_expected_shape(tmp_path):
    with pytest.raises(OSError, match="177252"):
        load_gluon(tmp_path / "absent.npy", particle_index=0, n_train=10, seed=0)


def test_gluon_corrupt_file(tmp_path):
    bad = tmp_path / "bad.npy"
    bad.write_text("definitely not an array")
    with pytest.raises(OSError, match="177252"):
        load_gluon(bad, particle_index=0, n_train=10, seed=0)


def test_gluon_wrong_shape(tmp_path):
    small = tmp_path / "small.npy"
    np.save(small, np.zeros((5, 30, 4), dtype=np.float32))
    with pytest.raises(OSError, match="177252"):
        load_gluon(small, particle_index=0, n_train=2, seed=0)


# ---------------------------------------------------------------------------
# Particle initialization.
# ---------------------------------------------------------------------------


def test_init_uniform_box_bounds():
    pts = init_particles("uniform-box", m=500, d=3, seed=0)
    assert pts.shape == (500, 3)
    assert np.all(pts >= -1.0)
    assert np.all(pts <= 1.0)


def test_init_explicit_passthrough():
    given = np.arange(12.0).reshape(6, 2)
    out = init_particles(given, m=6, d=2)
    assert np.array_equal(out, given)
    with pytest.raises(InvalidInputError):
        init_particles(given, m=5, d=2)


def test_init_subsample_jitter_stays_near_train(rng):
    train = rng.normal(size=(300, 2))
    eps = 0.04
    pts = init_particles(
        "subsample-jitter", m=200, d=2, seed=1, train=train, eps=eps
    )
    sigma = np.sqrt(eps) / 10.0
    diff = pts[:, None, :] - train[None, :, :]
    nearest = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff).min(axis=1))
    # Each particle sits a Gaussian jitter away from its source point,
    # so the nearest training point is within a few sigma.
    assert np.all(nearest <= 5 * sigma * np.sqrt(2))
    assert np.any(nearest > 0)


def test_init_subsample_jitter_requires_train_and_eps():
    with pytest.raises(InvalidInputError):
        init_particles("subsample-jitter", m=10, d=2, seed=0)
    with pytest.raises(InvalidInputError):
        init_particles(
            "subsample-jitter", m=10, d=2, seed=0, train=np.zeros((5, 2))
        )


def test_init_unknown_policy():
    with pytest.raises(InvalidInputError):
        init_particles("sprinkle", m=10, d=2, seed=0)


# ---------------------------------------------------------------------------
# Dispatch, determinism, CSV.
# ---------------------------------------------------------------------------


def test_generators_regenerate_bit_identically():
    cases = [
        ("mickey", {}),
        ("two_moons", {}),
        ("arc", {}),
        ("hypersemisphere", {"d": 6}),
    ]
    for name, params in cases:
        a = generate_dataset(name, 20_000, seed=42, params=params)
        b = generate_dataset(name, 20_000, seed=42, params=params)
        assert np.array_equal(a, b), name


def test_generate_dataset_dispatch_and_errors():
    spec = DatasetSpec(name="hypersemisphere", n=50, seed=1, params={"d": 4})
    assert spec.sample().shape == (50, 4)
    with pytest.raises(InvalidInputError):
        generate_dataset("nope", 10, seed=0)
    with pytest.raises(InvalidInputError):
        generate_dataset("gluon", 10, seed=0)
    with pytest.raises(InvalidInputError):
        generate_dataset("arc", 10, seed=0, params={"bogus": 1})


def test_csv_round_trip(tmp_path):
    x = np.random.default_rng(5).normal(size=(40, 3))
    path = tmp_path / "samples.csv"
    write_samples_csv(path, x)
    header = path.read_text().splitlines()[0]
    assert header == "x_0,x_1,x_2"
    assert np.array_equal(read_samples_csv(path), x)


def test_csv_read_missing_file(tmp_path):
    with pytest.raises(OSError):
        read_samples_csv(tmp_path / "absent.csv")
