import pytest

from src.config import BENCH_MODELS
from src.evaluation.report import ComparisonReport
from src.models import PipelineConfig
from src.network.trainer import TrainResult
from src.pipeline.orchestrator import run_bench, run_study, study_variants, write_history


def test_input_length_variants_keep_fifteen_windows():
    variants = study_variants("input_length")
    assert sorted(variants) == ["len_15_1", "len_30_2", "len_60_4"]
    for overrides in variants.values():
        pipeline = PipelineConfig(segment_len_s=overrides["pipeline.segment_len_s"],
                                  window_interval_s=overrides["pipeline.window_interval_s"])
        assert pipeline.num_windows == 15


def test_feature_variants():
    assert list(study_variants("features")) == ["both", "fov_only", "traj_only"]
    with pytest.raises(ValueError, match="roles"):
        study_variants("roles")


def test_write_history(tmp_path):
    result = TrainResult(params={}, history=[0.7, 0.5], grad_norms=[1.5, 0.25], iterations=2)
    lines = write_history(tmp_path / "h.csv", result).read_text().splitlines()
    assert lines == ["iteration,loss,grad_norm", "1,0.7,1.5", "2,0.5,0.25"]


@pytest.mark.slow
def test_bench_end_to_end(tmp_path, capsys):
    summary = run_bench(tmp_path, seed=42, n_teams=8, iterations=20, verbose=False)
    assert list(summary.reports) == list(BENCH_MODELS)
    rows = ComparisonReport.parse_csv((tmp_path / "comparison.csv").read_text())
    assert [r["model"] for r in rows] == list(BENCH_MODELS)
    for kind in BENCH_MODELS:
        assert (tmp_path / "checkpoints" / f"{kind}.json").exists()
        assert (tmp_path / "reports" / f"{kind}.json").exists()
    assert (tmp_path / "dataset.npz").exists()
    assert "PHASE 4: EVALUATION" in capsys.readouterr().out


@pytest.mark.slow
def test_feature_study(tmp_path):
    summary = run_study("features", tmp_path, seed=7, n_teams=6, iterations=10, verbose=False)
    assert [name for name, _ in summary.table.rows] == ["both", "fov_only", "traj_only"]
    header = (tmp_path / "roc.csv").read_text().splitlines()[0]
    assert header == "model,fpr,tpr,threshold"


@pytest.mark.slow
def test_bench_accuracy(tmp_path):
    summary = run_bench(tmp_path, seed=42, verbose=False)
    accuracy = {kind: report.overall.accuracy for kind, report in summary.reports.items()}
    assert accuracy["stgcn"] >= 0.80
    assert accuracy["stgcn"] >= accuracy["gcn_only"] - 0.02
    assert accuracy["stgcn"] >= accuracy["gru_only"] - 0.02
