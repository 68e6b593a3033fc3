"""Main entry point for the team performance predictor."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.config import N_TEAMS, apply_overrides, load_config
from src.data.pipeline import (
    FeatureScaler,
    SampleSet,
    load_prepared,
    load_traces,
    prepare_dataset,
    save_prepared,
    segment_and_window,
)
from src.data.simulator import generate_dataset
from src.data.traces import read_trace
from src.errors import StgcnError
from src.evaluation.report import csv_text, write_report
from src.models import ModelConfig, PipelineConfig
from src.network.baselines import NETWORKS
from src.network.checkpoint import load_checkpoint
from src.network.gradcheck import TOLERANCE, run_suite, summarize
from src.pipeline.orchestrator import evaluate_params, predict_set, run_bench, run_study, train_and_save

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    """Bad command line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# Flags shared by prepare and train, mapped to RunConfig paths
PIPELINE_FLAGS = {
    "segment_len": "pipeline.segment_len_s",
    "interval": "pipeline.window_interval_s",
    "features": "pipeline.features",
    "threshold": "pipeline.threshold_points",
    "split": "pipeline.split_ratio",
    "distance_scale": "pipeline.distance_scale",
    "degree_source": "pipeline.degree_source",
    "normalize": "pipeline.normalize",
}
TRAIN_FLAGS = {
    "model": "model_kind",
    "lr": "training.lr",
    "batch": "training.batch_size",
    "iters": "training.iterations",
    "hidden": "model.hidden_dim",
    "gcn_act": "model.gcn_output_activation",
    "pooling": "model.pooling",
}


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--segment-len", type=float, help="Segment length in seconds")
    parser.add_argument("--interval", type=float, help="Seconds between windows")
    parser.add_argument("--features", choices=["both", "fov_only", "traj_only"], help="Node feature groups")
    parser.add_argument("--threshold", type=float, help="Points per segment for the high label")
    parser.add_argument("--split", type=float, help="Training fraction")
    parser.add_argument("--distance-scale", type=float, help="Multiplier on agent distances")
    parser.add_argument("--degree-source", choices=["self_loops", "adjacency"], help="Degree matrix source")
    parser.add_argument("--normalize", action="store_true", default=None,
                        help="Min-max scale features fitted on the training split")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stgcn", description="Team performance prediction with spatial-temporal graph networks")
    parser.add_argument("-v", "--verbose", action="store_true", help="Log informational messages")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="Generate synthetic mission traces")
    p.add_argument("--out", required=True, help="Output directory")
    p.add_argument("--teams", type=int, default=N_TEAMS, help="Number of teams")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="JSON config file")

    p = sub.add_parser("prepare", help="Segment traces into a prepared train/test dataset")
    p.add_argument("--data", required=True, help="Trace directory, manifest or trace file")
    p.add_argument("--out", required=True, help="Prepared dataset file (.npz)")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="JSON config file")
    _add_pipeline_flags(p)

    p = sub.add_parser("train", help="Train a network and write a checkpoint")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--data", help="Prepared dataset file, or traces to prepare on the fly")
    p.add_argument("--out", help="Checkpoint path")
    p.add_argument("--model", choices=sorted(NETWORKS), help="Network kind")
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--gcn-act", choices=["sigmoid", "relu"])
    p.add_argument("--pooling", choices=["mean", "max"])
    _add_pipeline_flags(p)

    p = sub.add_parser("eval", help="Evaluate a checkpoint on a test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="Prepared dataset file, or traces")
    p.add_argument("--out", required=True, help="Report path prefix")

    p = sub.add_parser("predict", help="Per-segment predictions for one trace")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--out", help="CSV output path")

    p = sub.add_parser("gradcheck", help="Finite-difference check of every network")
    p.add_argument("--seed", type=int, default=0, help="First seed")
    p.add_argument("--seeds", type=int, default=5, help="Number of seeds")
    p.add_argument("--hidden", type=int, default=8)
    p.add_argument("--windows", type=int, default=4)

    p = sub.add_parser("bench", help="Simulate, train ST-GCN and baselines, compare")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--teams", type=int, default=N_TEAMS)
    p.add_argument("--iters", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--raw-features", action="store_true", help="Disable feature scaling")

    p = sub.add_parser("study", help="Input-length or feature study of ST-GCN")
    p.add_argument("--kind", required=True, choices=["input_length", "features"])
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--teams", type=int, default=N_TEAMS)
    p.add_argument("--iters", type=int)
    p.add_argument("--lr", type=float)
    return parser


def _run_config(args: argparse.Namespace, flags: dict[str, str]):
    """Defaults, then the config file, then command-line flags."""
    overrides = {"seed": getattr(args, "seed", None)}
    overrides.update({path: getattr(args, name, None) for name, path in flags.items()})
    return apply_overrides(load_config(getattr(args, "config", None)), overrides)


def _load_dataset(data: str, pipeline: PipelineConfig):
    if Path(data).suffix == ".npz":
        return load_prepared(data)
    return prepare_dataset(load_traces(data), pipeline)


def cmd_simulate(args) -> int:
    run = _run_config(args, {})
    generated = generate_dataset(args.teams, args.out, seed=run.seed, check_config=run.pipeline)
    print(f"Wrote {len(generated.traces)} traces and {generated.manifest_path}")
    return EXIT_OK


def cmd_prepare(args) -> int:
    run = _run_config(args, PIPELINE_FLAGS)
    dataset = prepare_dataset(load_traces(args.data), run.pipeline)
    path = save_prepared(dataset, args.out)
    print(f"Prepared {len(dataset.train)} train / {len(dataset.test)} test samples -> {path}")
    return EXIT_OK


def cmd_train(args) -> int:
    run = _run_config(args, {**PIPELINE_FLAGS, **TRAIN_FLAGS})
    data = args.data or run.paths.data
    out = args.out or run.paths.checkpoint
    if not data or not out:
        raise UsageError("train needs --data and --out (or paths.data / paths.checkpoint in the config)")
    dataset = _load_dataset(data, run.pipeline)
    if dataset.pipeline.model_copy(update={"seed": run.seed}) != run.pipeline:
        logger.info("using the pipeline settings stored with %s", data)
        run = apply_overrides(run, {"pipeline": dataset.pipeline.model_dump()})
    print(f"Training {run.model_kind} on {len(dataset.train)} samples "
          f"({run.training.iterations} iterations, batch {run.training.batch_size}, lr {run.training.lr})")
    result, written = train_and_save(run.model_kind, run, dataset, out)
    print(f"Final loss {result.history[-1]:.6f}")
    for path in written:
        print(f"Wrote {path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    checkpoint, params = load_checkpoint(args.checkpoint)
    dataset = _load_dataset(args.data, checkpoint.pipeline or PipelineConfig())
    report = evaluate_params(checkpoint.model_kind, checkpoint.config, params, dataset.test)
    written = write_report(args.out, report)
    print(written[0].read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_predict(args) -> int:
    checkpoint, params = load_checkpoint(args.checkpoint)
    pipeline = checkpoint.pipeline or PipelineConfig()
    trace = read_trace(args.trace)
    samples = segment_and_window(trace, pipeline)
    rows: list[tuple[float, int, float]] = []
    if samples:
        sample_set = SampleSet.from_samples(samples, pipeline.window_interval_s)
        if checkpoint.feature_scaler is not None:
            scaler = FeatureScaler.from_state(checkpoint.feature_scaler)
            sample_set = sample_set.with_windows(scaler.transform(sample_set.windows))
        labels, prob_high = predict_set(checkpoint.model_kind, checkpoint.config, params, sample_set)
        rows = [(start, int(label), float(p))
                for start, label, p in zip(sample_set.segment_starts.tolist(), labels, prob_high)]
    text = csv_text(("segment_start", "label", "prob_high"), rows)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    config = ModelConfig(hidden_dim=args.hidden, num_windows=args.windows)
    results = run_suite(range(args.seed, args.seed + args.seeds), config)
    worst = 0.0
    for kind, blocks in summarize(results).items():
        print(f"\n{kind}")
        for block, error in blocks.items():
            status = "ok" if error < TOLERANCE else "FAIL"
            print(f"  {block:<8} max relative error {error:.3e}  {status}")
            worst = max(worst, error)
    print(f"\nWorst relative error {worst:.3e} (tolerance {TOLERANCE:.0e})")
    return EXIT_OK if worst < TOLERANCE else EXIT_DATA


def cmd_bench(args) -> int:
    run_bench(args.out, seed=args.seed, n_teams=args.teams, iterations=args.iters, lr=args.lr,
              normalize=not args.raw_features)
    return EXIT_OK


def cmd_study(args) -> int:
    run_study(args.kind, args.out, seed=args.seed, n_teams=args.teams, iterations=args.iters, lr=args.lr)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "prepare": cmd_prepare,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "gradcheck": cmd_gradcheck,
    "bench": cmd_bench,
    "study": cmd_study,
}


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code.

    0 on success, 1 on a usage error, 2 on a validation or data error.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (StgcnError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


def main():
    """Run the command-line interface."""
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
