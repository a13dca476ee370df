"""Command-line entry point: experiment selection, execution, output.

Precedence for every setting: built-in default < config file < flag.
Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from streamadapt.engine import AblationFlags, RunResult, run
from streamadapt.errors import DataError, NumericalAbort, ValidationError
from streamadapt.model import ModelConfig
from streamadapt.streams import build_rounds, gen_hyperplane, gen_sea, load_csv

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


@dataclass
class RunSpec:
    """Everything that defines an experiment; serialized into summary.json."""

    data: str | None = None
    label_col: int = -1
    has_header: bool = True
    gen: str | None = None
    n_samples: int = 20000
    gen_dims: int = 4
    sea_noise: float = 0.0
    sources: int = 3
    rounds: int = 10
    alpha: float = 1.0
    lr: float = 0.01
    cmd_order: int = 5
    noise: float = 0.1
    bandwidth: float | None = None
    initial_nodes: int = 1
    no_reweight: bool = False
    no_structure: bool = False
    no_cmd: bool = False
    seed: list[int] = field(default_factory=lambda: [0])
    out: str = "runs"
    skip_first_in_summary: bool = False

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(
                f"unknown configuration keys: {', '.join(sorted(unknown))}"
            )
        return cls(**d)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="streamadapt",
        description="Online multi-source adaptation over drifting data "
                    "streams, with prequential evaluation.",
    )
    p.add_argument("--data", metavar="CSV", help="dataset file; one sample per row")
    p.add_argument("--label-col", type=int, metavar="IDX",
                   help="label column index, negative from the end (default -1)")
    p.add_argument("--gen", choices=["sea", "hyperplane"],
                   help="synthetic generator instead of --data")
    p.add_argument("--sources", type=int, metavar="N",
                   help="number of source streams (default 3)")
    p.add_argument("--rounds", type=int, metavar="N",
                   help="number of evaluation rounds (default 10)")
    p.add_argument("--alpha", type=float, metavar="A",
                   help="regularization trade-off (default 1.0)")
    p.add_argument("--lr", type=float, metavar="Z",
                   help="learning rate (default 0.01)")
    p.add_argument("--cmd-order", type=int, metavar="K",
                   help="highest matched central-moment order (default 5)")
    p.add_argument("--noise", type=float, metavar="P",
                   help="input masking fraction (default 0.1)")
    p.add_argument("--seed", metavar="LIST",
                   help="comma-separated seed list (default 0)")
    p.add_argument("--no-reweight", action="store_true", default=None,
                   help="disable the unsupervised smoothness step")
    p.add_argument("--no-structure", action="store_true", default=None,
                   help="disable hidden-unit growing/pruning")
    p.add_argument("--no-cmd", action="store_true", default=None,
                   help="disable the discrepancy-weighted regularizer")
    p.add_argument("--out", metavar="DIR", help="output directory (default runs)")
    p.add_argument("--config", metavar="JSON",
                   help="config file; flags override its values")
    return p


def _parse_seed_list(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip() != ""]
    except ValueError:
        raise ValidationError(f"seed list {text!r} is not comma-separated integers")
    if not seeds:
        raise ValidationError("seed list is empty")
    return seeds


def parse_args(argv) -> RunSpec:
    """Resolve flags, config file, and defaults into a validated RunSpec.

    Raises SystemExit(2) on any usage problem.
    """
    parser = _build_parser()
    args = parser.parse_args(argv)

    spec = RunSpec()
    if args.config is not None:
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as e:
            parser.error(f"cannot read config file: {e}")
        except json.JSONDecodeError as e:
            parser.error(f"config file is not valid JSON: {e}")
        if not isinstance(raw, dict):
            parser.error("config file must hold a JSON object")
        try:
            spec = RunSpec.from_dict(raw)
        except (ValidationError, TypeError) as e:
            parser.error(str(e))

    overrides = {
        "data": args.data, "label_col": args.label_col, "gen": args.gen,
        "sources": args.sources, "rounds": args.rounds, "alpha": args.alpha,
        "lr": args.lr, "cmd_order": args.cmd_order, "noise": args.noise,
        "no_reweight": args.no_reweight, "no_structure": args.no_structure,
        "no_cmd": args.no_cmd, "out": args.out,
    }
    for name, value in overrides.items():
        if value is not None:
            setattr(spec, name, value)
    if args.seed is not None:
        try:
            spec.seed = _parse_seed_list(args.seed)
        except ValidationError as e:
            parser.error(str(e))

    if spec.data is not None and spec.gen is not None:
        parser.error("--data and --gen are mutually exclusive")
    if spec.data is None and spec.gen is None:
        parser.error("one of --data or --gen is required")
    if spec.gen is not None and spec.gen not in ("sea", "hyperplane"):
        parser.error(f"unknown generator {spec.gen!r}")
    if spec.sources < 1:
        parser.error(f"--sources must be >= 1, got {spec.sources}")
    if spec.rounds < 1:
        parser.error(f"--rounds must be >= 1, got {spec.rounds}")
    if spec.n_samples < 1:
        parser.error(f"n_samples must be >= 1, got {spec.n_samples}")
    if not spec.seed:
        parser.error("seed list is empty")
    try:
        _model_config(spec, spec.seed[0])
    except ValidationError as e:
        parser.error(str(e))
    return spec


def _model_config(spec: RunSpec, seed: int) -> ModelConfig:
    return ModelConfig(
        learning_rate=spec.lr, alpha=spec.alpha, noise_fraction=spec.noise,
        cmd_order=spec.cmd_order, bandwidth=spec.bandwidth, rng_seed=seed,
        initial_nodes=spec.initial_nodes)


def _dataset_for_seed(spec: RunSpec, seed: int):
    if spec.gen == "sea":
        rng = np.random.default_rng([seed, 0])
        return gen_sea(spec.n_samples, noise_fraction=spec.sea_noise, rng=rng)
    if spec.gen == "hyperplane":
        rng = np.random.default_rng([seed, 0])
        return gen_hyperplane(spec.n_samples, d=spec.gen_dims, rng=rng)
    return load_csv(spec.data, label_col=spec.label_col,
                    has_header=spec.has_header)


def _fmt(v: float) -> str:
    # Shortest representation that round-trips, so statistics recomputed
    # from the file agree with the in-memory values.
    return repr(float(v))


def write_outputs(result: RunResult, spec: RunSpec, seed: int, outdir: str) -> str:
    """Write trace.csv and summary.json under a seed-named subdirectory;
    returns that subdirectory's path."""
    seed_dir = os.path.join(outdir, f"seed_{seed}")
    os.makedirs(seed_dir, exist_ok=True)
    n_src = spec.sources
    header = (["round", "acc_target"]
              + [f"acc_src_{j + 1}" for j in range(n_src)]
              + ["hidden_nodes", "grow_events", "prune_events"]
              + [f"cmd_{j + 1}" for j in range(n_src)]
              + ["train_ms"])
    lines = [",".join(header)]
    for r in result.records:
        row = ([str(r.round_index), _fmt(r.acc_target)]
               + [_fmt(a) for a in r.acc_sources]
               + [str(r.hidden_nodes), str(r.grow_events), str(r.prune_events)]
               + [_fmt(c) for c in r.cmd_values]
               + [_fmt(r.train_ms)])
        lines.append(",".join(row))
    with open(os.path.join(seed_dir, "trace.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

    summary = {
        "seed": seed,
        "mean_target_accuracy": result.mean_target_accuracy,
        "mean_source_accuracies": list(result.mean_source_accuracies),
        "mean_precision": list(result.mean_precision),
        "mean_recall": list(result.mean_recall),
        "final_hidden_nodes": result.final_hidden_nodes,
        "total_train_ms": result.total_train_ms,
        "rounds_completed": len(result.records),
        "spec": spec.to_dict(),
    }
    with open(os.path.join(seed_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return seed_dir


def main(argv=None) -> int:
    try:
        spec = parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK

    csv_dataset = None
    if spec.data is not None:
        try:
            csv_dataset = load_csv(spec.data, label_col=spec.label_col,
                                   has_header=spec.has_header)
        except (OSError, DataError) as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_DATA

    for seed in spec.seed:
        try:
            ds = csv_dataset if csv_dataset is not None else _dataset_for_seed(spec, seed)
            rounds = build_rounds(ds, spec.sources, spec.rounds)
        except (ValidationError, DataError) as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_DATA
        ablation = AblationFlags(
            enable_reweight=not spec.no_reweight,
            enable_structure=not spec.no_structure,
            enable_cmd=not spec.no_cmd)
        try:
            result = run(_model_config(spec, seed), ablation, rounds,
                         summary_skip_first=spec.skip_first_in_summary)
        except NumericalAbort as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_NUMERICAL
        except ValidationError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_DATA
        try:
            seed_dir = write_outputs(result, spec, seed, spec.out)
        except OSError as e:
            print(f"error: cannot write outputs: {e}", file=sys.stderr)
            return EXIT_DATA
        print(f"seed {seed}: mean target accuracy "
              f"{result.mean_target_accuracy:.4f}, final hidden nodes "
              f"{result.final_hidden_nodes}, outputs in {seed_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
