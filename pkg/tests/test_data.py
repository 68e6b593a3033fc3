import math

import numpy as np
import orjson
import pytest

from src.data.pipeline import (
    FeatureScaler,
    SampleSet,
    label_segment,
    load_prepared,
    load_traces,
    prepare_dataset,
    save_prepared,
    segment_and_window,
    split_dataset,
)
from src.data.traces import compute_velocities, parse_trace, read_trace, trace_lines, write_trace
from src.errors import ConfigurationError, TraceParseError, TraceSchemaError, TraceValidationError
from src.models import PipelineConfig
from tests.conftest import ROLES, make_trace


def _line(t, agent, x=0.0, y=0.0, fov=0, score=0, **extra):
    record = {"t": t, "agent_id": agent, "role": ROLES[agent], "x": x, "y": y,
              "heading": 0.0, "fov_victims": fov, "team_score": score}
    record.update(extra)
    return orjson.dumps(record)


def _two_ticks():
    return [_line(t, a) for t in (0.0, 1.0) for a in range(3)]


class TestParseTrace:
    def test_well_formed(self):
        trace = parse_trace(_two_ticks())
        assert len(trace.records) == 6
        assert trace.agent_ids == (0, 1, 2)

    def test_negative_fov_is_a_validation_error(self):
        lines = _two_ticks()
        lines[4] = _line(1.0, 1, fov=-1)
        with pytest.raises(TraceValidationError) as excinfo:
            parse_trace(lines)
        assert excinfo.value.line_number == 5
        assert "fov_victims" in str(excinfo.value)

    def test_malformed_line_reports_its_number(self):
        lines = _two_ticks()
        lines[2] = b"{not json"
        with pytest.raises(TraceParseError, match="line 3"):
            parse_trace(lines)

    def test_unknown_field_rejected(self):
        lines = _two_ticks()
        lines[0] = _line(0.0, 0, speed=1.0)
        with pytest.raises(TraceValidationError, match="speed"):
            parse_trace(lines)

    def test_missing_agent(self):
        with pytest.raises(TraceSchemaError):
            parse_trace([_line(t, a) for t in (0.0, 1.0) for a in (0, 1)])

    def test_time_must_increase_per_agent(self):
        lines = _two_ticks() + [_line(0.5, 2)]
        with pytest.raises(TraceValidationError, match="line 7"):
            parse_trace(lines)

    def test_score_must_not_drop(self):
        lines = [_line(0.0, a, score=10) for a in range(3)] + [_line(1.0, a, score=0) for a in range(3)]
        with pytest.raises(TraceValidationError, match="team_score"):
            parse_trace(lines)

    def test_heading_range(self):
        lines = _two_ticks()
        lines[0] = _line(0.0, 0, heading=math.pi)
        with pytest.raises(TraceValidationError):
            parse_trace(lines)

    def test_write_then_read_is_exact(self, tmp_path):
        trace = make_trace(10, trace_id="team_x")
        path = write_trace(trace, tmp_path / "team_x.ndjson")
        assert read_trace(path).records == trace.records
        assert trace_lines(trace)[0].endswith(b"\n")


class TestVelocities:
    def test_unit_step(self):
        trace = parse_trace([_line(0.0, a) for a in range(3)] + [_line(1.0, 0, x=1.0)] +
                            [_line(1.0, a) for a in (1, 2)])
        v = compute_velocities(trace)
        assert v[0][0].tolist() == [0.0, 0.0, 0.0]
        assert v[0][1].tolist() == [1.0, 0.0, 1.0]
        assert np.all(v[1] == 0.0)

    def test_irregular_steps(self):
        times = [0.0, 0.5, 2.0, 2.25, 5.0]
        xs = [0.0, 1.0, 1.5, 4.0, 3.0]
        ys = [0.0, -1.0, 2.0, 2.0, 0.0]
        lines = [_line(t, a, x=xs[i] if a == 0 else 0.0, y=ys[i] if a == 0 else 0.0)
                 for i, t in enumerate(times) for a in range(3)]
        v = compute_velocities(parse_trace(lines))[0]
        for i in range(1, len(times)):
            dt = times[i] - times[i - 1]
            vx, vy = (xs[i] - xs[i - 1]) / dt, (ys[i] - ys[i - 1]) / dt
            assert v[i].tolist() == pytest.approx([vx, vy, math.hypot(vx, vy)], rel=1e-12)

    def test_needs_two_records(self):
        with pytest.raises(TraceSchemaError):
            compute_velocities(parse_trace([_line(0.0, a) for a in range(3)]))


class TestSegmentation:
    def test_full_mission_gives_thirty_samples(self):
        samples = segment_and_window(make_trace(900), PipelineConfig())
        assert len(samples) == 30
        assert all(s.windows.shape == (15, 3, 6) and len(s.snapshots) == 15 for s in samples)
        assert [s.segment_start for s in samples[:3]] == [0.0, 30.0, 60.0]

    def test_exact_threshold_is_high(self, rising_scores):
        samples = segment_and_window(make_trace(120, rising_scores), PipelineConfig())
        assert [s.label for s in samples] == [1, 0, 0, 0]
        assert samples[0].points_delta == 10.0

    def test_fov_only_and_concatenation(self):
        trace = make_trace(60)
        both = segment_and_window(trace, PipelineConfig())
        fov = segment_and_window(trace, PipelineConfig(features="fov_only"))
        traj = segment_and_window(trace, PipelineConfig(features="traj_only"))
        assert fov[0].windows.shape == (15, 3, 1)
        assert traj[0].windows.shape == (15, 3, 5)
        assert np.array_equal(both[0].windows, np.concatenate([fov[0].windows, traj[0].windows], axis=-1))

    def test_window_features(self):
        sample = segment_and_window(make_trace(60), PipelineConfig())[1]
        # window 2 of segment 1 samples t = 34; agent 1 walks 0.5 units per second along x
        assert sample.windows[2, 1].tolist() == [(34 + 1) % 4, 2.0 + 0.5 * 34, 1.0, 0.5, 0.5, 0.0]
        assert sample.snapshots[2].timestamp == 34.0

    def test_last_observation_carried_forward(self):
        sparse = [_line(float(t), a, x=float(t)) for t in range(0, 61, 4) for a in range(3)]
        sample = segment_and_window(parse_trace(sparse), PipelineConfig())[0]
        # instants 0, 2, 4, 6 see the records at 0, 0, 4, 4
        assert sample.windows[:4, 0, 1].tolist() == [0.0, 0.0, 4.0, 4.0]

    def test_short_trace_gives_no_samples(self, caplog):
        assert segment_and_window(make_trace(20), PipelineConfig()) == []
        assert "shorter than one" in caplog.text

    def test_gap_skips_segment(self, caplog):
        lines = [_line(float(t), a) for t in range(0, 30) for a in range(3)]
        lines += [_line(float(t), a) for t in range(70, 150) for a in range(3)]
        samples = segment_and_window(parse_trace(lines), PipelineConfig())
        assert [s.segment_start for s in samples] == [0.0, 30.0, 90.0, 120.0]
        assert "gap" in caplog.text

    def test_graph_options_flow_into_snapshots(self):
        cfg = PipelineConfig(distance_scale=0.5, degree_source="adjacency")
        snapshot = segment_and_window(make_trace(30), cfg)[0].snapshots[0]
        assert np.allclose(snapshot.laplacian, snapshot.adjacency + np.eye(3), atol=1e-12)


def test_label_segment():
    assert label_segment(0, 10) == 0
    assert label_segment(10, 10) == 1
    assert label_segment(50, 10) == 1
    assert label_segment(9.5, 10) == 0


class TestSplit:
    def test_sizes(self):
        train, test = split_dataset(list(range(10)), 0.8, 0)
        assert (len(train), len(test)) == (8, 2)

    def test_deterministic_and_conserving(self):
        items = list(range(23))
        first = split_dataset(items, 0.8, 5)
        assert first == split_dataset(items, 0.8, 5)
        assert sorted(first[0] + first[1]) == items
        assert not set(first[0]) & set(first[1])

    def test_too_few(self):
        with pytest.raises(ConfigurationError):
            split_dataset([1], 0.8, 0)


class TestPreparedDataset:
    def _traces(self):
        scores = [10 * (i // 20) for i in range(150)]
        return [make_trace(150, scores, trace_id=f"team_{i}", mission="AB"[i % 2]) for i in range(4)]

    def test_prepare_split_sizes(self):
        dataset = prepare_dataset(self._traces(), PipelineConfig())
        assert len(dataset.train) + len(dataset.test) == 20
        assert len(dataset.train) == 16
        assert set(dataset.train.missions) <= {"A", "B"}

    def test_scaler_fitted_on_train_only(self):
        dataset = prepare_dataset(self._traces(), PipelineConfig(normalize=True))
        assert dataset.scaler is not None
        flat = dataset.train.windows.reshape(-1, 6)
        assert flat.min() >= 0.0 and flat.max() <= 1.0

    def test_constant_feature_maps_to_zero(self):
        windows = np.ones((2, 3, 3, 2))
        windows[..., 1] = np.arange(18).reshape(2, 3, 3)
        scaler = FeatureScaler.fit(windows)
        out = scaler.transform(windows)
        assert np.all(out[..., 0] == 0.0)
        assert out[..., 1].max() == 1.0
        assert np.array_equal(FeatureScaler.from_state(scaler.to_state()).transform(windows), out)

    def test_save_and_load(self, tmp_path):
        dataset = prepare_dataset(self._traces(), PipelineConfig(normalize=True))
        loaded = load_prepared(save_prepared(dataset, tmp_path / "ds.npz"))
        assert loaded.pipeline == dataset.pipeline
        assert np.array_equal(loaded.train.windows, dataset.train.windows)
        assert np.array_equal(loaded.test.laplacians, dataset.test.laplacians)
        assert loaded.test.missions == dataset.test.missions
        assert np.array_equal(loaded.scaler.maximum, dataset.scaler.maximum)

    def test_archive_metadata_is_json(self, tmp_path):
        dataset = prepare_dataset(self._traces(), PipelineConfig())
        with np.load(save_prepared(dataset, tmp_path / "ds.npz")) as archive:
            meta = orjson.loads(str(archive["meta"]))
        assert meta["trace_ids"] == list(dataset.trace_ids)
        assert meta["scaler"] is None
        assert meta["pipeline"]["segment_len_s"] == 30.0

    def test_sample_set_round_trip(self):
        samples = segment_and_window(make_trace(60), PipelineConfig())
        restored = SampleSet.from_samples(samples).to_samples()
        assert [s.segment_start for s in restored] == [s.segment_start for s in samples]
        assert np.array_equal(restored[1].laplacians, samples[1].laplacians)

    def test_load_traces_from_directory(self, tmp_path):
        for trace in self._traces()[:2]:
            write_trace(trace, tmp_path / f"{trace.trace_id}.ndjson")
        assert [t.trace_id for t in load_traces(tmp_path)] == ["team_0", "team_1"]
