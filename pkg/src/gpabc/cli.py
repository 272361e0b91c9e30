"""Command-line interface.

Subcommands: `run` one experiment, `repeat` a seeded batch of runs with TV
aggregation, `truth` ground-truth generation and caching, `uq` ensemble
summaries at dataset checkpoints of a stored run, `tv` comparison of two
stored posteriors.  Configuration comes from a JSON file whose keys mirror
ExperimentConfig; command-line flags override file keys.  Exit codes:
0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, GpAbcError
from .gp import DiscrepancyDataset
from .harness import (
    ExperimentConfig,
    GridDensity,
    ground_truth,
    load_reference,
    repeat_experiment,
    run_inference,
    save_reference,
    save_run_record,
    tv_distance,
    uq_checkpoint_summaries,
)
from .simulators import get_simulator


def _load_config(args):
    data = {}
    if args.config is not None:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    for key in ("simulator", "acquisition"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    for key in ("batch_size", "max_iterations", "initial_design", "epsilon"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if args.seed is not None:
        data["seed"] = args.seed
    if args.threads is not None:
        data["threads"] = args.threads
    if args.out is not None:
        data["out_dir"] = args.out
    if "simulator" not in data:
        raise ConfigError("a simulator must be named (config key or --simulator)")
    return ExperimentConfig.from_dict(data)


def _load_stored_posterior(path):
    path = Path(path)
    if path.is_dir():
        grid = path / "posterior_grid.npz"
        if grid.exists():
            return load_reference(grid)
        samples = path / "posterior_samples.csv"
        if samples.exists():
            return np.loadtxt(samples, delimiter=",", skiprows=1, ndmin=2)
        raise ConfigError(f"{path} holds no stored posterior")
    if path.suffix == ".npz":
        return load_reference(path)
    if path.suffix == ".csv":
        return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    raise ConfigError(f"unrecognised posterior file {path}")


def _cmd_run(args):
    config = _load_config(args)
    reference = load_reference(args.reference) if args.reference else None
    record = run_inference(config, reference=reference)
    if config.out_dir:
        out = save_run_record(record, config.out_dir)
        print(f"run written to {out}")
    if record.aborted:
        print(f"run aborted: {record.error}")
        return 3
    if record.final_tv is not None:
        print(f"final TV = {record.final_tv:.4f}")
    print(f"dataset size = {record.dataset_points.shape[0]}")
    return 0


def _cmd_repeat(args):
    config = _load_config(args)
    reference = load_reference(args.reference) if args.reference else None
    summary = repeat_experiment(config, runs=args.runs, reference=reference)
    if config.out_dir:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "tv_bands.csv", "w") as fh:
            fh.write("iteration,tv_median,tv_p5,tv_p95\n")
            for i, m, lo, hi in zip(summary.iterations, summary.tv_median,
                                    summary.tv_lo, summary.tv_hi):
                fh.write(f"{i},{m:.6g},{lo:.6g},{hi:.6g}\n")
        print(f"TV bands written to {out / 'tv_bands.csv'}")
    finite = summary.final_tvs[np.isfinite(summary.final_tvs)]
    if finite.size:
        print(f"median final TV = {np.median(finite):.4f} "
              f"({finite.size} runs, {summary.aborted} aborted)")
    return 0


def _cmd_truth(args):
    config = _load_config(args)
    reference = ground_truth(config)
    out = args.out or f"{config.simulator}_truth.npz"
    save_reference(reference, out)
    kind = "grid" if isinstance(reference, GridDensity) else "samples"
    print(f"ground truth ({kind}) written to {out}")
    return 0


def _cmd_uq(args):
    config = _load_config(args)
    run_dir = Path(args.run_dir)
    dataset_file = run_dir / "dataset.csv"
    if not dataset_file.exists():
        raise ConfigError(f"{dataset_file} not found; run `gpabc run` first")
    table = np.loadtxt(dataset_file, delimiter=",", skiprows=1, ndmin=2)
    sim = get_simulator(config.simulator)
    dataset = DiscrepancyDataset(table[:, :-1], table[:, -1], sim.bounds)
    checkpoints = args.checkpoints or None
    summaries = uq_checkpoint_summaries(config, dataset, checkpoints=checkpoints)
    out = Path(args.out) if args.out else run_dir / "uq_summaries.json"
    out.write_text(json.dumps(summaries, indent=2))
    print(f"UQ summaries written to {out}")
    return 0


def _cmd_tv(args):
    a = _load_stored_posterior(args.first)
    b = _load_stored_posterior(args.second)
    print(f"TV = {tv_distance(a, b):.6f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="gpabc",
                                     description="GP-surrogate ABC experiments")
    parser.add_argument("--seed", type=int, default=None, help="override the rng seed")
    parser.add_argument("--out", type=str, default=None, help="output path/directory")
    parser.add_argument("--threads", type=int, default=None,
                        help="parallel simulator invocations per batch")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", type=str, default=None, help="JSON config file")
        p.add_argument("--simulator", type=str, default=None)
        p.add_argument("--acquisition", type=str, default=None)
        p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        p.add_argument("--max-iterations", dest="max_iterations", type=int,
                       default=None)
        p.add_argument("--initial-design", dest="initial_design", type=int,
                       default=None)
        p.add_argument("--epsilon", type=float, default=None)

    p_run = sub.add_parser("run", help="run one experiment")
    add_config_args(p_run)
    p_run.add_argument("--reference", type=str, default=None,
                       help="stored ground truth for TV tracking")
    p_run.set_defaults(fn=_cmd_run)

    p_rep = sub.add_parser("repeat", help="seeded batch of runs + TV aggregation")
    add_config_args(p_rep)
    p_rep.add_argument("--runs", type=int, default=10)
    p_rep.add_argument("--reference", type=str, default=None)
    p_rep.set_defaults(fn=_cmd_repeat)

    p_truth = sub.add_parser("truth", help="generate and cache ground truth")
    add_config_args(p_truth)
    p_truth.set_defaults(fn=_cmd_truth)

    p_uq = sub.add_parser("uq", help="ensemble summaries at dataset checkpoints")
    add_config_args(p_uq)
    p_uq.add_argument("run_dir", type=str, help="directory written by `gpabc run`")
    p_uq.add_argument("--checkpoints", type=int, nargs="*", default=None)
    p_uq.set_defaults(fn=_cmd_uq)

    p_tv = sub.add_parser("tv", help="TV distance between two stored posteriors")
    p_tv.add_argument("first", type=str)
    p_tv.add_argument("second", type=str)
    p_tv.set_defaults(fn=_cmd_tv)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except GpAbcError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
