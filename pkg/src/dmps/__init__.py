"""Sample-driven generative modeling with diffusion-map particle systems.

The package approximates the generator of an overdamped Langevin diffusion
from training samples alone, then transports particle ensembles toward the
data distribution by descending a kernel-smoothed divergence.  Score-driven
baselines (SVGD, unadjusted Langevin) and an entropic optimal-transport
evaluation stack are included, together with synthetic dataset generators
and a reproducible experiment harness.
"""

__version__ = "0.1.0"

from .exceptions import (
    DegenerateDataError,
    DegenerateSpectrumError,
    DivergenceError,
    DmpsError,
    InvalidInputError,
)
from .kernels import (
    KernelBundle,
    KernelGradientBundle,
    build_kernel_bundle,
    build_kernel_gradients,
    gaussian_kernel,
    gaussian_kernel_grad1,
    median_bandwidth,
)
from .spectral import (
    DiffusionModel,
    Spectrum,
    apply_generator,
    apply_inverse_generator,
    drift_field,
    eigendecompose,
    fit_diffusion_model,
    load_model,
    save_model,
)
from .ot import OTConfig, OTReport, exact_ot_small, sinkhorn_distance
from .samplers import (
    SamplerConfig,
    Trajectory,
    dmps_run,
    estimate_score,
    export_trajectory,
    make_score_fn,
    score_at,
    svgd_run,
    ula_run,
)
from .datasets import (
    DatasetSpec,
    generate_dataset,
    init_particles,
    load_gluon,
    read_samples_csv,
    sample_arc,
    sample_hypersemisphere,
    sample_mickey,
    sample_two_moons,
    write_samples_csv,
)
from .experiments import (
    ExperimentConfig,
    ResultRow,
    default_ot_config,
    default_sampler_configs,
    emit_summary,
    run_experiment,
)
