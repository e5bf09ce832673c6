"""Batch experiment harness: fit, sample, evaluate, summarize.

A single :class:`ExperimentConfig` describes a full comparison run:
dataset, training size, particle counts, the samplers to compare with
their step-size settings, the transport-cost evaluation, and the trial
count.  :func:`run_experiment` executes it and returns one
:class:`ResultRow` per (trial, particle count, sampler) cell.

Reproducibility contract
------------------------
Every random draw derives from ``master_seed`` through a fixed tree of
``numpy.random.SeedSequence`` paths ``(master_seed, trial, role, ...)``
with the roles

=====  =========================================
0      training sample for the trial
1      reference sample for the trial
2      initial particle ensemble (per m)
3      sampler noise stream (per m, ULA only)
=====  =========================================

so identical configs produce identical costs, iteration counts, and
particle outputs.  Within a (trial, m) cell all samplers consume the
same training set, the same reference set, and the same initial
ensemble; only the sampler dynamics differ.  Recorded wall times are
measurements, not derived values, and naturally vary between runs.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .datasets import DatasetSpec, generate_dataset, init_particles
from .exceptions import DmpsError, InvalidInputError
from .ot import OTConfig, sinkhorn_distance
from .samplers import SamplerConfig, dmps_run, make_score_fn, svgd_run, ula_run
from .spectral import fit_diffusion_model

__all__ = [
    "SAMPLER_NAMES",
    "ExperimentConfig",
    "ResultRow",
    "default_ot_config",
    "default_sampler_configs",
    "derive_seed",
    "run_experiment",
    "rows_to_csv",
    "rows_from_csv",
    "emit_summary",
    "write_outputs",
]

SAMPLER_NAMES = ("dmps", "svgd", "ula")

_ROLE_TRAIN = 0
_ROLE_REFERENCE = 1
_ROLE_INIT = 2
_ROLE_SAMPLER = 3


def derive_seed(master_seed: int, *path: int) -> int:
    """Derive a child seed from the master seed and an integer path."""
    seq = np.random.SeedSequence([int(master_seed), *[int(p) for p in path]])
    return int(seq.generate_state(1, np.uint64)[0])


def default_sampler_configs() -> dict:
    """Step-size presets used by the comparison experiments.

    The drift-transport sampler takes large steps because its update is
    a preconditioned gradient flow; its cap is sized so that particles
    initialized away from the data still have time to migrate onto the
    support (the tolerance stops well-initialized runs much earlier).
    The Langevin chain needs small steps for a stable discretization;
    the kernelized variational sampler sits in between.  All values are
    plain defaults and can be overridden per experiment.
    """
    return {
        "dmps": SamplerConfig(step_size=0.3, max_iters=2000),
        "svgd": SamplerConfig(step_size=0.05, max_iters=500),
        "ula": SamplerConfig(step_size=5e-4, max_iters=2000),
    }


def default_ot_config() -> OTConfig:
    """Transport-cost settings used by the comparison experiments.

    Squared Euclidean ground cost with a moderate entropic penalty; the
    marginal tolerance is looser than the solver default because each
    evaluation pairs hundreds of particles with a 20k-point reference
    and the cost shift from the looser stop is far below the
    between-sampler differences being compared.
    """
    return OTConfig(reg=1e-2, marginal_tol=1e-4, squared=True)


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one comparison experiment.

    ``dataset`` supplies the domain name and shape parameters; its own
    ``n``/``seed`` fields are ignored here because the harness draws
    fresh training and reference sets per trial from the master-seed
    tree.  ``m_particles`` may be a single count or a list.  ``eps``
    overrides the median-heuristic bandwidth when set.  ``init_policy``
    is shared by all samplers within a cell so their ensembles start
    identically ("uniform-box" draws from ``[init_low, init_high]^d``).
    """

    dataset: DatasetSpec
    n_train: int
    m_particles: Sequence[int]
    samplers: dict = dataclasses.field(default_factory=default_sampler_configs)
    ot: OTConfig = dataclasses.field(default_factory=default_ot_config)
    n_reference: int = 20_000
    trials: int = 10
    master_seed: int = 0
    eps: Optional[float] = None
    init_policy: str = "subsample-jitter"
    init_low: float = -1.0
    init_high: float = 1.0
    output_dir: Optional[str] = None

    def __post_init__(self):
        if isinstance(self.m_particles, (int, np.integer)):
            object.__setattr__(self, "m_particles", (int(self.m_particles),))
        else:
            object.__setattr__(
                self, "m_particles", tuple(int(m) for m in self.m_particles)
            )

    def validate(self) -> None:
        if int(self.trials) < 1:
            raise InvalidInputError("trials must be >= 1")
        if int(self.n_train) < 2:
            raise InvalidInputError("n_train must be >= 2")
        if int(self.n_reference) < 1:
            raise InvalidInputError("n_reference must be >= 1")
        if not self.m_particles:
            raise InvalidInputError("m_particles must be non-empty")
        if any(m < 1 for m in self.m_particles):
            raise InvalidInputError("m_particles entries must be positive")
        if not self.samplers:
            raise InvalidInputError("at least one sampler is required")
        for name, cfg in self.samplers.items():
            if name not in SAMPLER_NAMES:
                raise InvalidInputError(
                    f"unknown sampler {name!r}; expected one of {SAMPLER_NAMES}"
                )
            cfg.validate()
        if self.eps is not None and (
            not np.isfinite(self.eps) or self.eps <= 0
        ):
            raise InvalidInputError("eps override must be positive")
        if self.init_policy not in ("subsample-jitter", "uniform-box"):
            raise InvalidInputError(
                "init_policy must be 'subsample-jitter' or 'uniform-box'"
            )
        self.ot.validate()

    def to_manifest(self) -> dict:
        """Fully materialized config (every default echoed) for outputs."""
        return {
            "version": __version__,
            "dataset": {
                "name": self.dataset.name,
                "params": dict(self.dataset.params),
            },
            "n_train": int(self.n_train),
            "m_particles": list(self.m_particles),
            "samplers": {
                name: dataclasses.asdict(cfg)
                for name, cfg in sorted(self.samplers.items())
            },
            "ot": dataclasses.asdict(self.ot),
            "n_reference": int(self.n_reference),
            "trials": int(self.trials),
            "master_seed": int(self.master_seed),
            "eps": None if self.eps is None else float(self.eps),
            "init_policy": self.init_policy,
            "init_low": float(self.init_low),
            "init_high": float(self.init_high),
            "output_dir": self.output_dir,
        }


@dataclasses.dataclass(frozen=True)
class ResultRow:
    """One evaluated sampler run (or a recorded failure)."""

    dataset: str
    sampler: str
    n_train: int
    m_particles: int
    trial: int
    ot_cost: float
    iters: int
    wall_time_seconds: float
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


_CSV_FIELDS = [f.name for f in dataclasses.fields(ResultRow)]


def rows_to_csv(rows: Sequence[ResultRow], path=None) -> str:
    """Serialize result rows as CSV; write to ``path`` when given."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_FIELDS)
    for row in rows:
        writer.writerow(
            [
                row.dataset,
                row.sampler,
                row.n_train,
                row.m_particles,
                row.trial,
                repr(float(row.ot_cost)),
                row.iters,
                repr(float(row.wall_time_seconds)),
                row.status,
            ]
        )
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def rows_from_csv(path) -> list:
    """Read result rows written by :func:`rows_to_csv`."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != _CSV_FIELDS:
                raise InvalidInputError(
                    f"results file {path!r} has columns {reader.fieldnames}, "
                    f"expected {_CSV_FIELDS}"
                )
            rows = [
                ResultRow(
                    dataset=rec["dataset"],
                    sampler=rec["sampler"],
                    n_train=int(rec["n_train"]),
                    m_particles=int(rec["m_particles"]),
                    trial=int(rec["trial"]),
                    ot_cost=float(rec["ot_cost"]),
                    iters=int(rec["iters"]),
                    wall_time_seconds=float(rec["wall_time_seconds"]),
                    status=rec["status"],
                )
                for rec in reader
            ]
    except OSError as exc:
        raise OSError(f"cannot read results file {path!r}: {exc}") from exc
    return rows


def _run_one_sampler(name, cfg, model, score_fn, init):
    if name == "dmps":
        return dmps_run(model, init, cfg)
    if name == "svgd":
        return svgd_run(score_fn, init, cfg)
    if name == "ula":
        return ula_run(score_fn, init, cfg)
    raise InvalidInputError(f"unknown sampler {name!r}")


def run_experiment(cfg: ExperimentConfig, progress=None) -> list:
    """Run all (trial, m, sampler) cells and return their result rows.

    Each trial draws fresh training and reference sets, fits the
    diffusion model once, and reuses the same initial ensemble for
    every sampler at a given particle count.  A failing cell records a
    row with ``status`` describing the error and a NaN cost; remaining
    cells still run.  When ``cfg.output_dir`` is set the results CSV,
    manifest, and summary files are written there.

    ``progress`` is an optional callable receiving human-readable
    status lines.
    """
    cfg.validate()
    say = progress if progress is not None else (lambda msg: None)
    name = cfg.dataset.name
    params = dict(cfg.dataset.params)
    rows = []

    for trial in range(int(cfg.trials)):
        train = generate_dataset(
            name,
            int(cfg.n_train),
            derive_seed(cfg.master_seed, trial, _ROLE_TRAIN),
            params,
        )
        reference = generate_dataset(
            name,
            int(cfg.n_reference),
            derive_seed(cfg.master_seed, trial, _ROLE_REFERENCE),
            params,
        )
        d = train.shape[1]

        try:
            model = fit_diffusion_model(train, eps=cfg.eps)
            score_fn = make_score_fn(model.spectrum, model.train)
        except DmpsError as exc:
            say(f"trial {trial}: model fit failed: {exc}")
            for m in cfg.m_particles:
                for sampler in sorted(cfg.samplers):
                    rows.append(
                        ResultRow(
                            dataset=name,
                            sampler=sampler,
                            n_train=int(cfg.n_train),
                            m_particles=int(m),
                            trial=trial,
                            ot_cost=float("nan"),
                            iters=0,
                            wall_time_seconds=0.0,
                            status=f"failed: {exc}",
                        )
                    )
            continue

        for m in cfg.m_particles:
            init = init_particles(
                cfg.init_policy,
                m=int(m),
                d=d,
                seed=derive_seed(cfg.master_seed, trial, _ROLE_INIT, m),
                train=train,
                eps=model.epsilon,
                low=cfg.init_low,
                high=cfg.init_high,
            )
            for sampler in sorted(cfg.samplers):
                run_cfg = cfg.samplers[sampler]
                if sampler == "ula":
                    run_cfg = dataclasses.replace(
                        run_cfg,
                        seed=derive_seed(
                            cfg.master_seed, trial, _ROLE_SAMPLER, m
                        ),
                    )
                start = time.perf_counter()
                try:
                    traj = _run_one_sampler(
                        sampler, run_cfg, model, score_fn, init
                    )
                    report = sinkhorn_distance(traj.final, reference, cfg.ot)
                    elapsed = time.perf_counter() - start
                    rows.append(
                        ResultRow(
                            dataset=name,
                            sampler=sampler,
                            n_train=int(cfg.n_train),
                            m_particles=int(m),
                            trial=trial,
                            ot_cost=report.cost,
                            iters=traj.iters_run,
                            wall_time_seconds=elapsed,
                        )
                    )
                    say(
                        f"trial {trial} m={m} {sampler}: "
                        f"cost={report.cost:.6g} ({elapsed:.2f}s)"
                    )
                except DmpsError as exc:
                    elapsed = time.perf_counter() - start
                    say(f"trial {trial} m={m} {sampler}: failed: {exc}")
                    rows.append(
                        ResultRow(
                            dataset=name,
                            sampler=sampler,
                            n_train=int(cfg.n_train),
                            m_particles=int(m),
                            trial=trial,
                            ot_cost=float("nan"),
                            iters=0,
                            wall_time_seconds=elapsed,
                            status=f"failed: {exc}",
                        )
                    )

    if cfg.output_dir is not None:
        write_outputs(cfg, rows)
    return rows


def emit_summary(rows: Sequence[ResultRow]) -> tuple:
    """Aggregate rows into (text table, CSV text).

    Rows are grouped by (dataset, sampler, n_train, m_particles); each
    group reports the mean transport cost and the standard error of the
    mean (sample standard deviation over sqrt of the trial count; a
    single trial reports a standard error of 0 by convention).  Failed
    rows are excluded from the statistics but counted.
    """
    if not rows:
        raise InvalidInputError("cannot summarize an empty row list")

    groups: dict = {}
    for row in rows:
        key = (row.dataset, row.sampler, row.n_train, row.m_particles)
        groups.setdefault(key, []).append(row)

    header = [
        "dataset",
        "sampler",
        "n_train",
        "m_particles",
        "trials",
        "failed",
        "mean_cost",
        "stderr",
    ]
    records = []
    for key in sorted(groups):
        group = groups[key]
        costs = np.array([r.ot_cost for r in group if r.ok])
        failed = sum(1 for r in group if not r.ok)
        if len(costs) == 0:
            mean, stderr = float("nan"), float("nan")
        elif len(costs) == 1:
            mean, stderr = float(costs[0]), 0.0
        else:
            mean = float(costs.mean())
            stderr = float(costs.std(ddof=1) / np.sqrt(len(costs)))
        records.append(
            [*key, len(group), failed, mean, stderr]
        )

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for rec in records:
        writer.writerow(rec[:6] + [repr(float(v)) for v in rec[6:]])
    csv_text = buf.getvalue()

    cells = [header] + [
        rec[:6] + [f"{rec[6]:.6g}", f"{rec[7]:.2g}"] for rec in records
    ]
    cells = [[str(c) for c in line] for line in cells]
    widths = [max(len(line[j]) for line in cells) for j in range(len(header))]
    text = "\n".join(
        "  ".join(c.ljust(w) for c, w in zip(line, widths)).rstrip()
        for line in cells
    )
    return text + "\n", csv_text


def write_outputs(cfg: ExperimentConfig, rows: Sequence[ResultRow]) -> Path:
    """Write results.csv, manifest.json, summary.txt/csv under output_dir."""
    if cfg.output_dir is None:
        raise InvalidInputError("config has no output_dir")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows_to_csv(rows, out / "results.csv")
    (out / "manifest.json").write_text(
        json.dumps(cfg.to_manifest(), indent=2) + "\n"
    )
    text, csv_text = emit_summary(rows)
    (out / "summary.txt").write_text(text)
    (out / "summary.csv").write_text(csv_text)
    return out
