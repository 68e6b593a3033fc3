"""Orchestrator for the multi-stage benchmark and parameter studies."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from src.config import BENCH_MODELS, FEATURE_PRESETS, INPUT_LENGTH_PRESETS, N_TEAMS, apply_overrides, bench_config
from src.data.pipeline import PreparedDataset, SampleSet, load_traces, prepare_dataset, save_prepared
from src.data.simulator import generate_dataset
from src.data.traces import Trace
from src.evaluation.metrics import evaluate, evaluate_by_group
from src.evaluation.report import ComparisonReport, combined_roc_csv, compare_models, csv_text, write_report
from src.models import EvaluationReport, ModelConfig, RunConfig
from src.network.baselines import build_network
from src.network.checkpoint import save_checkpoint
from src.network.numerics import Params
from src.network.trainer import TrainResult, train_network


@dataclass
class RunSummary:
    """Outputs of a bench or study run."""
    reports: dict[str, EvaluationReport] = field(default_factory=dict)
    table: Optional[ComparisonReport] = None
    files: list[Path] = field(default_factory=list)


def _banner(title: str) -> None:
    print("\n" + "=" * 70)
    print(title)
    print("=" * 70)


def _phase(title: str) -> None:
    print(f"\n[{title}]")
    print("-" * 70)


def write_history(path: Union[str, Path], result: TrainResult) -> Path:
    """Per-iteration mean batch loss and gradient norm as CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = ((i, loss, norm) for i, (loss, norm) in enumerate(zip(result.history, result.grad_norms), start=1))
    path.write_text(csv_text(("iteration", "loss", "grad_norm"), rows), encoding="utf-8")
    return path


def predict_set(model_kind: str, config: ModelConfig, params: Params,
                sample_set: SampleSet) -> tuple[np.ndarray, np.ndarray]:
    """Hard labels and P(high) for every sample of ``sample_set``."""
    network = build_network(model_kind, config)
    return network.predict_batch(sample_set.windows, sample_set.laplacians, params)


def evaluate_params(model_kind: str, config: ModelConfig, params: Params,
                    sample_set: SampleSet) -> EvaluationReport:
    labels, prob_high = predict_set(model_kind, config, params, sample_set)
    return EvaluationReport(
        model_kind=model_kind,
        overall=evaluate(labels, prob_high, sample_set.labels),
        by_mission=evaluate_by_group(labels, prob_high, sample_set.labels, sample_set.missions),
    )


def train_and_save(model_kind: str, run: RunConfig, dataset: PreparedDataset,
                   checkpoint_path: Union[str, Path], verbose: bool = True) -> tuple[TrainResult, list[Path]]:
    """Train ``model_kind`` on the train split; write the checkpoint and its loss history."""
    network = build_network(model_kind, run.model)
    result = train_network(network, dataset.train, run.training, seed=run.seed, verbose=verbose)
    checkpoint_path = Path(checkpoint_path)
    written = [
        save_checkpoint(checkpoint_path, result.params, run.model, model_kind, result.iterations,
                        pipeline=dataset.pipeline,
                        feature_scaler=dataset.scaler.to_state() if dataset.scaler else None),
        write_history(checkpoint_path.with_name(checkpoint_path.stem + "_history.csv"), result),
    ]
    return result, written


def _simulate(out_dir: Path, seed: int, n_teams: int) -> list[Trace]:
    traces_dir = out_dir / "traces"
    generated = generate_dataset(n_teams, traces_dir, seed=seed)
    print(f"Simulated {len(generated.traces)} teams into {traces_dir} "
          f"(attempts: {generated.attempts})")
    return load_traces(generated.manifest_path)


def _describe_split(dataset: PreparedDataset) -> None:
    low, high = dataset.train.class_counts()
    print(f"Train: {len(dataset.train)} samples (low {low}, high {high})")
    low, high = dataset.test.class_counts()
    print(f"Test:  {len(dataset.test)} samples (low {low}, high {high})")


def run_bench(out_dir: Union[str, Path], seed: int = 42, n_teams: int = N_TEAMS,
              iterations: Optional[int] = None, lr: Optional[float] = None,
              normalize: bool = True, models: Sequence[str] = BENCH_MODELS,
              verbose: bool = True) -> RunSummary:
    """Simulate, prepare, train ST-GCN and the baselines, then compare them on the test split.

    Args:
        out_dir: Directory receiving traces, dataset, checkpoints and reports.
        seed: Master seed for simulation, split, initialization and shuffling.
        n_teams: Simulated teams.
        iterations: Training iterations per model (config default when None).
        lr: Learning rate (benchmark preset when None).
        normalize: Min-max scale features fitted on the train split.
        models: Model kinds to train.
        verbose: Print training progress.

    Returns:
        RunSummary with one EvaluationReport per model and the comparison table.
    """
    out_dir = Path(out_dir)
    run = bench_config(seed, iterations, lr, normalize)
    summary = RunSummary()

    _banner("SYNTHETIC BENCHMARK")

    _phase("PHASE 1: SIMULATION")
    traces = _simulate(out_dir, seed, n_teams)

    _phase("PHASE 2: DATASET PREPARATION")
    dataset = prepare_dataset(traces, run.pipeline)
    summary.files.append(save_prepared(dataset, out_dir / "dataset.npz"))
    _describe_split(dataset)

    _phase("PHASE 3: TRAINING")
    params_by_kind = {}
    for kind in models:
        print(f"\nTraining {kind} ({run.training.iterations} iterations, lr {run.training.lr})")
        result, written = train_and_save(kind, run, dataset, out_dir / "checkpoints" / f"{kind}.json", verbose)
        params_by_kind[kind] = result.params
        summary.files.extend(written)

    _phase("PHASE 4: EVALUATION")
    for kind, params in params_by_kind.items():
        report = evaluate_params(kind, run.model, params, dataset.test)
        summary.reports[kind] = report
        summary.files.extend(write_report(out_dir / "reports" / kind, report))
        print(f"{kind:<10} accuracy {report.overall.accuracy:.4f}  rmse {report.overall.rmse:.4f}  "
              f"f1 {report.overall.f1:.4f}  auc {report.overall.auc:.4f}")

    summary.table = compare_models({kind: r.overall for kind, r in summary.reports.items()})
    summary.files.extend(_write_table(out_dir / "comparison", summary.table))
    _banner("COMPARISON")
    print(summary.table.to_text())
    return summary


def _write_table(prefix: Path, table: ComparisonReport) -> list[Path]:
    prefix.parent.mkdir(parents=True, exist_ok=True)
    text_path = prefix.with_suffix(".txt")
    csv_path = prefix.with_suffix(".csv")
    text_path.write_text(table.to_text(), encoding="utf-8")
    csv_path.write_text(table.to_csv(), encoding="utf-8")
    return [text_path, csv_path]


def study_variants(kind: str) -> dict[str, dict[str, object]]:
    """Pipeline overrides for each variant of an input-length or feature study."""
    if kind == "input_length":
        return {
            f"len_{name.replace('/', '_')}": {"pipeline.segment_len_s": seg, "pipeline.window_interval_s": step}
            for name, (seg, step) in INPUT_LENGTH_PRESETS.items()
        }
    if kind == "features":
        return {mode: {"pipeline.features": mode} for mode in FEATURE_PRESETS}
    raise ValueError(f"unknown study '{kind}', expected 'input_length' or 'features'")


def run_study(kind: str, out_dir: Union[str, Path], seed: int = 42, n_teams: int = N_TEAMS,
              iterations: Optional[int] = None, lr: Optional[float] = None,
              verbose: bool = True) -> RunSummary:
    """Train ST-GCN on each study variant over the same simulated traces and compare."""
    out_dir = Path(out_dir)
    base = bench_config(seed, iterations, lr)
    variants = study_variants(kind)
    summary = RunSummary()

    _banner(f"PARAMETER STUDY: {kind}")

    _phase("PHASE 1: SIMULATION")
    traces = _simulate(out_dir, seed, n_teams)

    for index, (name, overrides) in enumerate(variants.items(), start=2):
        _phase(f"PHASE {index}: VARIANT {name}")
        run = apply_overrides(base, overrides)
        dataset = prepare_dataset(traces, run.pipeline)
        _describe_split(dataset)
        result, written = train_and_save("stgcn", run, dataset, out_dir / "checkpoints" / f"{name}.json", verbose)
        summary.files.extend(written)
        report = evaluate_params("stgcn", run.model, result.params, dataset.test)
        summary.reports[name] = report
        summary.files.extend(write_report(out_dir / "reports" / name, report))

    summary.table = compare_models({name: r.overall for name, r in summary.reports.items()})
    summary.files.extend(_write_table(out_dir / "comparison", summary.table))
    roc_path = out_dir / "roc.csv"
    roc_path.write_text(combined_roc_csv({n: r.overall.roc for n, r in summary.reports.items()}), encoding="utf-8")
    summary.files.append(roc_path)
    _banner("COMPARISON")
    print(summary.table.to_text())
    return summary
