import math

import numpy as np
import pytest

from src.data.pipeline import MANIFEST_NAME, load_traces
from src.data.simulator import (
    CRITICAL_POINTS,
    NORMAL_POINTS,
    TeamPolicy,
    _assign_targets,
    bimodal_skills,
    fov_count,
    generate_dataset,
    generate_mission,
    simulate_team,
)
from src.errors import ClassImbalanceError, LayoutError
from src.models import DatasetManifest
from src.network.numerics import make_rng


def _final_score(skill, seed, duration_s=900.0):
    trace = simulate_team(generate_mission(seed), TeamPolicy(skill=skill), duration_s=duration_s, seed=seed)
    return trace.records[-1].team_score


class TestLayout:
    def test_default_counts_in_bounds(self):
        layout = generate_mission(0)
        assert layout.normal_victims.shape == (50, 2)
        assert layout.critical_victims.shape == (5, 2)
        assert np.all((layout.victims >= 0.0) & (layout.victims <= 50.0))

    def test_deterministic(self):
        a, b = generate_mission(3), generate_mission(3)
        assert np.array_equal(a.victims, b.victims)
        assert not np.array_equal(a.victims, generate_mission(4).victims)

    def test_min_separation(self):
        for seed in range(100):
            v = generate_mission(seed).victims
            d = np.linalg.norm(v[:, None] - v[None], axis=-1)
            np.fill_diagonal(d, np.inf)
            assert d.min() >= 1.0

    def test_impossible_layout(self):
        with pytest.raises(LayoutError):
            generate_mission(0, width=2.0, height=2.0, normal=50, critical=5, max_attempts=50)


class TestFov:
    def test_dead_ahead_at_range_is_counted(self):
        assert fov_count((0.0, 0.0, 0.0), [(15.0, 0.0)], 15.0, math.pi / 3) == 1

    def test_behind_is_not_counted(self):
        assert fov_count((0.0, 0.0, 0.0), [(-5.0, 0.0)], 15.0, math.pi / 3) == 0

    def test_full_circle_is_a_range_query(self):
        rng = make_rng(1)
        victims = rng.uniform(-20, 20, size=(200, 2))
        pose = (1.0, -2.0, 2.1)
        expected = int(np.sum(np.hypot(victims[:, 0] - 1.0, victims[:, 1] + 2.0) <= 15.0))
        assert fov_count(pose, victims, 15.0, math.pi) == expected

    def test_no_victims(self):
        assert fov_count((0.0, 0.0, 0.0), np.empty((0, 2)), 15.0, 1.0) == 0

    def test_bad_half_angle(self):
        with pytest.raises(ValueError):
            fov_count((0.0, 0.0, 0.0), [(1.0, 0.0)], 15.0, 0.0)


class TestSimulateTeam:
    @pytest.fixture(scope="class")
    def trace(self):
        return simulate_team(generate_mission(5), TeamPolicy(skill=0.8), seed=5, trace_id="team_5")

    def test_record_layout(self, trace):
        assert len(trace.records) == 900 * 3
        for agent in range(3):
            t = trace.tracks[agent].t
            assert np.all(np.diff(t) > 0.0)
        assert trace.records[-1].t == 899.0

    def test_score_accounting(self, trace):
        scores = np.array([r.team_score for r in trace.records if r.agent_id == 0])
        steps = np.diff(scores)
        assert np.all(steps >= 0)
        assert np.all(steps % NORMAL_POINTS == 0)
        assert scores[-1] > 0

    def test_final_score_is_a_rescue_sum(self, trace):
        final = trace.records[-1].team_score
        assert any((final - CRITICAL_POINTS * c) >= 0 and (final - CRITICAL_POINTS * c) % NORMAL_POINTS == 0
                   and (final - CRITICAL_POINTS * c) // NORMAL_POINTS <= 50 for c in range(6))

    def test_agents_stay_in_bounds_and_respect_speed(self, trace):
        speeds = TeamPolicy().speeds
        for agent, role in enumerate(("medic", "searcher", "engineer")):
            track = trace.tracks[agent]
            assert np.all((track.x >= 0.0) & (track.x <= 50.0) & (track.y >= 0.0) & (track.y <= 50.0))
            steps = np.hypot(np.diff(track.x), np.diff(track.y))
            assert np.all(steps <= speeds[role] * 1.0 + 1e-9)

    def test_headings_in_range(self, trace):
        headings = np.array([r.heading for r in trace.records])
        assert np.all((headings >= -math.pi) & (headings < math.pi))

    def test_deterministic(self, trace):
        again = simulate_team(generate_mission(5), TeamPolicy(skill=0.8), seed=5, trace_id="team_5")
        assert again.records == trace.records

    def test_walking_steps_leave_the_rescue_radius(self):
        policy = TeamPolicy()
        assert all(policy.speed(role) > policy.rescue_radius for role in ("medic", "searcher", "engineer"))

    def test_random_walkers_rarely_score(self):
        scores = [_final_score(0.0, seed, duration_s=300.0) for seed in range(3)]
        assert max(scores) <= NORMAL_POINTS

    def test_skilled_team_scores_steadily(self, trace):
        scores = np.array([r.team_score for r in trace.records if r.agent_id == 0])
        # first 5 minutes: at least one rescue in most 30 s segments
        gains = scores[29:300:30] - np.concatenate([[0], scores[29:270:30]])
        assert np.mean(gains >= NORMAL_POINTS) >= 0.6

    def test_critical_victims_pair_agents(self):
        victims = np.array([[0.0, 0.0], [10.0, 0.0], [20.0, 0.0], [40.0, 40.0]])
        positions = np.array([[0.0, 1.0], [10.0, 1.0], [20.0, 1.0]])
        critical = np.array([True, True, True, False])
        targets = _assign_targets(positions, victims, critical, np.ones(4, dtype=bool))
        assert targets == [0, 0, 3]

    @pytest.mark.slow
    def test_skilled_teams_beat_random_walkers(self):
        wins = sum(_final_score(1.0, seed) > _final_score(0.0, seed) for seed in range(20))
        # one-sided sign test at p < 0.05 needs 15 of 20
        assert wins >= 15

    @pytest.mark.slow
    def test_mean_score_grows_with_skill(self):
        means = [np.mean([_final_score(skill, seed) for seed in range(20)]) for skill in (0.1, 0.5, 0.9)]
        assert means[0] <= means[1] <= means[2]


class TestGenerateDataset:
    def test_writes_traces_and_manifest(self, tmp_path):
        generated = generate_dataset(4, tmp_path, seed=1, duration_s=120.0, min_minority=0.0)
        manifest = DatasetManifest.model_validate_json((tmp_path / MANIFEST_NAME).read_bytes())
        assert len(manifest.entries) == 4
        assert [e.mission for e in manifest.entries] == ["A", "B", "A", "B"]
        assert len(list(tmp_path.glob("*.ndjson"))) == 4
        loaded = load_traces(tmp_path)
        assert [t.records for t in loaded] == [t.records for t in generated.traces]
        assert [t.mission for t in loaded] == ["A", "B", "A", "B"]

    def test_deterministic(self, tmp_path):
        first = generate_dataset(2, tmp_path / "a", seed=9, duration_s=60.0, min_minority=0.0)
        second = generate_dataset(2, tmp_path / "b", seed=9, duration_s=60.0, min_minority=0.0)
        assert (tmp_path / "a" / MANIFEST_NAME).read_bytes() == (tmp_path / "b" / MANIFEST_NAME).read_bytes()
        assert [t.records for t in first.traces] == [t.records for t in second.traces]

    def test_gives_up_after_retries(self, tmp_path):
        with pytest.raises(ClassImbalanceError):
            generate_dataset(2, tmp_path, seed=0, duration_s=60.0, min_minority=0.9, max_attempts=2)

    def test_needs_two_teams(self, tmp_path):
        with pytest.raises(ValueError):
            generate_dataset(1, tmp_path)

    def test_bimodal_skills(self):
        skills = bimodal_skills(60, make_rng(0))
        assert np.sum(skills <= 0.3) == 30 and np.sum(skills >= 0.7) == 30
