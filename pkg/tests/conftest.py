import pytest

from src.data.pipeline import Sample, SampleSet
from src.data.traces import Trace
from src.models import ModelConfig, TraceRecord
from src.network.graph import build_snapshot
from src.network.numerics import make_rng

ROLES = ("medic", "searcher", "engineer")


def make_trace(n_ticks=60, scores=None, trace_id="t", mission=None, offset=(0.0, 0.0), fov=None):
    """Three agents walking slowly to the right, one record per agent per second."""
    records = []
    for i in range(n_ticks):
        score = scores[i] if scores is not None else 0
        for agent in range(3):
            records.append(TraceRecord(
                t=float(i),
                agent_id=agent,
                role=ROLES[agent],
                x=offset[0] + 2.0 * agent + 0.5 * i,
                y=offset[1] + 1.0 * agent,
                heading=0.0,
                fov_victims=fov[i] if fov is not None else (i + agent) % 4,
                team_score=score,
            ))
    return Trace(trace_id=trace_id, records=tuple(records), mission=mission)


def random_sample(config: ModelConfig, seed: int, label: int = 0) -> Sample:
    rng = make_rng(seed, "test-sample")
    k, n, f = config.num_windows, config.num_nodes, config.input_dim
    windows = rng.normal(size=(k, n, f))
    positions = rng.uniform(0.0, 4.0, size=(k, n, 2))
    snapshots = tuple(build_snapshot(positions[t], 2.0 * t) for t in range(k))
    return Sample(windows=windows, snapshots=snapshots, label=label, segment_start=0.0, source_trace="rand")


@pytest.fixture
def small_config():
    return ModelConfig(input_dim=3, hidden_dim=5, num_nodes=3, num_windows=4, seed=3)


@pytest.fixture
def tiny_set(small_config):
    """Eight random samples, alternating labels."""
    samples = [random_sample(small_config, seed, label=seed % 2) for seed in range(8)]
    return SampleSet.from_samples(samples)


@pytest.fixture
def rising_scores():
    """Score gains 10 points in the first 30 s and nothing afterwards."""
    return [0] * 5 + [10] * 115
