"""Command-line interface for dataset generation, fitting, sampling,
evaluation, and batch experiments.

Subcommands
-----------
``generate-data``
    Draw a named synthetic dataset and write it as CSV.
``fit``
    Fit the diffusion model on a training CSV and save it as ``.npz``.
``sample``
    Load a saved model and transport a particle ensemble with one of
    the samplers, writing the final particles (and optionally the
    trajectory) as CSV.
``evaluate``
    Entropy-regularized transport cost between two sample CSVs.
``experiment``
    Run a full multi-trial comparison described by a JSON config.
``summarize``
    Re-aggregate a results CSV into summary tables.

Exit codes: 0 on success, 1 for input errors (bad arguments, files,
or config values), 2 for numerical failures (degenerate data or
divergent sampler runs).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import (
    DatasetSpec,
    generate_dataset,
    init_particles,
    read_samples_csv,
    write_samples_csv,
)
from .exceptions import DmpsError, InvalidInputError
from .experiments import (
    SAMPLER_NAMES,
    ExperimentConfig,
    default_ot_config,
    default_sampler_configs,
    emit_summary,
    rows_from_csv,
    run_experiment,
    write_outputs,
)
from .ot import OTConfig, sinkhorn_distance
from .samplers import (
    SamplerConfig,
    dmps_run,
    export_trajectory,
    make_score_fn,
    svgd_run,
    ula_run,
)
from .spectral import fit_diffusion_model, load_model, save_model

__all__ = ["main", "load_experiment_config"]


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage problems as input errors."""

    def error(self, message):
        raise InvalidInputError(message)


def _parse_json_object(text: str, what: str) -> dict:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{what} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise InvalidInputError(f"{what} must be a JSON object")
    return obj


def _check_keys(obj: dict, allowed, what: str) -> None:
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise InvalidInputError(
            f"unknown {what} keys {unknown}; allowed: {sorted(allowed)}"
        )


_SAMPLER_FIELD_NAMES = {f.name for f in dataclasses.fields(SamplerConfig)}
_OT_FIELD_NAMES = {f.name for f in dataclasses.fields(OTConfig)}


def load_experiment_config(path, output_dir=None) -> ExperimentConfig:
    """Parse and schema-validate a JSON experiment config file.

    Required keys: ``dataset`` (object with ``name`` and optional
    ``params``), ``n_train``, ``m_particles``.  Optional keys take the
    documented defaults; sampler entries override the presets field by
    field.  ``output_dir`` passed here (from the command line) wins
    over the config value.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read config file {path!r}: {exc}") from exc
    obj = _parse_json_object(text, f"config file {path!r}")
    _check_keys(
        obj,
        {
            "dataset",
            "n_train",
            "m_particles",
            "samplers",
            "ot",
            "n_reference",
            "trials",
            "master_seed",
            "eps",
            "init",
            "output_dir",
        },
        "config",
    )
    for key in ("dataset", "n_train", "m_particles"):
        if key not in obj:
            raise InvalidInputError(f"config is missing required key {key!r}")

    ds = obj["dataset"]
    if not isinstance(ds, dict):
        raise InvalidInputError("config 'dataset' must be an object")
    _check_keys(ds, {"name", "params"}, "dataset")
    if "name" not in ds:
        raise InvalidInputError("config 'dataset' needs a 'name'")
    dataset = DatasetSpec(
        name=str(ds["name"]),
        n=int(obj["n_train"]),
        seed=0,
        params=dict(ds.get("params", {})),
    )

    presets = default_sampler_configs()
    samplers = {}
    chosen = obj.get("samplers", {name: {} for name in SAMPLER_NAMES})
    if not isinstance(chosen, dict):
        raise InvalidInputError("config 'samplers' must be an object")
    for name, overrides in chosen.items():
        if name not in presets:
            raise InvalidInputError(
                f"unknown sampler {name!r}; expected one of {SAMPLER_NAMES}"
            )
        if not isinstance(overrides, dict):
            raise InvalidInputError(f"sampler {name!r} overrides must be an object")
        _check_keys(overrides, _SAMPLER_FIELD_NAMES, f"sampler {name!r}")
        samplers[name] = dataclasses.replace(presets[name], **overrides)

    ot_obj = obj.get("ot", {})
    if not isinstance(ot_obj, dict):
        raise InvalidInputError("config 'ot' must be an object")
    _check_keys(ot_obj, _OT_FIELD_NAMES, "ot")
    ot = dataclasses.replace(default_ot_config(), **ot_obj)

    init_obj = obj.get("init", {})
    if not isinstance(init_obj, dict):
        raise InvalidInputError("config 'init' must be an object")
    _check_keys(init_obj, {"policy", "low", "high"}, "init")

    cfg = ExperimentConfig(
        dataset=dataset,
        n_train=int(obj["n_train"]),
        m_particles=obj["m_particles"],
        samplers=samplers,
        ot=ot,
        n_reference=int(obj.get("n_reference", 20_000)),
        trials=int(obj.get("trials", 10)),
        master_seed=int(obj.get("master_seed", 0)),
        eps=None if obj.get("eps") is None else float(obj["eps"]),
        init_policy=str(init_obj.get("policy", "subsample-jitter")),
        init_low=float(init_obj.get("low", -1.0)),
        init_high=float(init_obj.get("high", 1.0)),
        output_dir=(
            str(output_dir)
            if output_dir is not None
            else obj.get("output_dir")
        ),
    )
    cfg.validate()
    return cfg


def _cmd_generate_data(args) -> int:
    params = _parse_json_object(args.params, "--params")
    samples = generate_dataset(args.name, args.n, args.seed, params)
    write_samples_csv(args.out, samples)
    print(f"wrote {samples.shape[0]} x {samples.shape[1]} samples to {args.out}")
    return 0


def _cmd_fit(args) -> int:
    train = read_samples_csv(args.train)
    model = fit_diffusion_model(train, eps=args.eps)
    save_model(model, args.out)
    kept = int(np.count_nonzero(model.inverse.kept))
    print(
        f"fitted model on {train.shape[0]} x {train.shape[1]} samples: "
        f"eps={model.epsilon:.6g}, kept {kept} modes -> {args.out}"
    )
    return 0


def _build_sampler_config(args, preset: SamplerConfig) -> SamplerConfig:
    overrides = {}
    if args.step_size is not None:
        overrides["step_size"] = args.step_size
    if args.max_iters is not None:
        overrides["max_iters"] = args.max_iters
    if args.tol is not None:
        overrides["tol"] = args.tol
    if args.record_every is not None:
        overrides["record_every"] = args.record_every
    overrides["seed"] = args.seed
    cfg = dataclasses.replace(preset, **overrides)
    cfg.validate()
    return cfg


def _cmd_sample(args) -> int:
    model = load_model(args.model)
    cfg = _build_sampler_config(args, default_sampler_configs()[args.sampler])
    init = init_particles(
        args.init,
        m=args.m,
        d=model.dim,
        seed=args.seed,
        train=model.train,
        eps=model.epsilon,
        low=args.init_low,
        high=args.init_high,
    )
    if args.sampler == "dmps":
        traj = dmps_run(model, init, cfg)
    else:
        score_fn = make_score_fn(model.spectrum, model.train)
        run = svgd_run if args.sampler == "svgd" else ula_run
        traj = run(score_fn, init, cfg)
    write_samples_csv(args.out, traj.final)
    if args.trajectory is not None:
        export_trajectory(traj, args.trajectory)
    state = "converged" if traj.converged else "stopped at the iteration cap"
    print(
        f"{args.sampler} moved {args.m} particles for {traj.iters_run} "
        f"iterations ({state}) -> {args.out}"
    )
    return 0


def _cmd_evaluate(args) -> int:
    samples = read_samples_csv(args.samples)
    reference = read_samples_csv(args.reference)
    cfg = OTConfig(
        reg=args.reg,
        max_iters=args.max_iters,
        marginal_tol=args.marginal_tol,
        squared=args.squared,
    )
    report = sinkhorn_distance(samples, reference, cfg)
    text = report.to_json()
    print(text)
    if args.out is not None:
        Path(args.out).write_text(text + "\n")
    return 0


def _cmd_experiment(args) -> int:
    cfg = load_experiment_config(args.config, output_dir=args.output_dir)
    progress = None if args.quiet else (lambda msg: print(msg, flush=True))
    rows = run_experiment(cfg, progress=progress)
    text, _ = emit_summary(rows)
    print(text, end="")
    if cfg.output_dir is not None:
        print(f"outputs written to {cfg.output_dir}")
    return 0


def _cmd_summarize(args) -> int:
    rows = rows_from_csv(args.results)
    text, csv_text = emit_summary(rows)
    print(text, end="")
    if args.out_dir is not None:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.txt").write_text(text)
        (out / "summary.csv").write_text(csv_text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="dmps",
        description="Sample-driven generative modeling via learned diffusion geometry.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="draw a synthetic dataset as CSV")
    p.add_argument("--name", required=True, help="dataset name")
    p.add_argument("--n", required=True, type=int, help="number of samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--params",
        default="{}",
        help="JSON object of dataset parameters (e.g. '{\"d\": 3}')",
    )
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_generate_data)

    p = sub.add_parser("fit", help="fit and save a diffusion model")
    p.add_argument("--train", required=True, help="training CSV path")
    p.add_argument(
        "--eps",
        type=float,
        default=None,
        help="kernel bandwidth (default: median heuristic)",
    )
    p.add_argument("--out", required=True, help="output model .npz path")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("sample", help="transport particles with a saved model")
    p.add_argument("--model", required=True, help="model .npz path")
    p.add_argument("--sampler", choices=SAMPLER_NAMES, default="dmps")
    p.add_argument("--m", required=True, type=int, help="number of particles")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step-size", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument(
        "--init",
        choices=["subsample-jitter", "uniform-box"],
        default="subsample-jitter",
    )
    p.add_argument("--init-low", type=float, default=-1.0)
    p.add_argument("--init-high", type=float, default=1.0)
    p.add_argument("--out", required=True, help="output CSV for final particles")
    p.add_argument(
        "--trajectory", default=None, help="optional CSV path for snapshots"
    )
    p.add_argument(
        "--record-every",
        type=int,
        default=None,
        help="snapshot cadence for --trajectory",
    )
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser(
        "evaluate", help="entropy-regularized transport cost between CSVs"
    )
    p.add_argument("--samples", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--reg", type=float, default=1e-2)
    p.add_argument("--max-iters", type=int, default=10_000)
    p.add_argument("--marginal-tol", type=float, default=1e-6)
    p.add_argument(
        "--squared", action="store_true", help="use squared Euclidean cost"
    )
    p.add_argument("--out", default=None, help="optional JSON report path")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("experiment", help="run a JSON-configured comparison")
    p.add_argument("--config", required=True, help="JSON config path")
    p.add_argument(
        "--output-dir",
        default=None,
        help="override the config's output directory",
    )
    p.add_argument("--quiet", action="store_true", help="suppress progress lines")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("summarize", help="re-aggregate a results CSV")
    p.add_argument("--results", required=True, help="results CSV path")
    p.add_argument("--out-dir", default=None, help="optional summary output dir")
    p.set_defaults(func=_cmd_summarize)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DmpsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
