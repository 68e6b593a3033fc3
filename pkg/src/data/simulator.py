"""Synthetic search-and-rescue missions.

Three agents move on an open rectangular field. Each tick an agent either
heads for the nearest unrescued victim (with probability equal to the team's
skill) or takes a random-walk step. The walk is correlated: the walking
direction turns by a small Gaussian angle each tick and bounces off the field
edges. A normal victim is rescued once some agent has stayed within the rescue
radius for ``dwell_s`` consecutive seconds (+10 points); a critical victim
needs two agents there at once (+50 points).

The rescue radius is smaller than every role's step, so a walking step always
leaves a victim the agent stands on. Holding position for the whole dwell
takes consecutive goal-directed ticks.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tenacity import RetryError, Retrying, retry_if_exception_type, stop_after_attempt

from src.data.pipeline import MANIFEST_NAME, build_samples
from src.data.traces import Trace, write_trace
from src.errors import ClassImbalanceError, LayoutError
from src.models import DatasetManifest, ManifestEntry, PipelineConfig, TraceRecord
from src.network.numerics import DTYPE, derive_seed, make_rng

logger = logging.getLogger(__name__)

NORMAL_POINTS = 10
CRITICAL_POINTS = 50
ROLES = ("medic", "searcher", "engineer")

SkillSampler = Callable[[int, np.random.Generator], np.ndarray]


class TeamPolicy(BaseModel):
    """Behavioural parameters of a simulated team."""
    model_config = ConfigDict(extra="forbid")

    skill: float = Field(default=0.8, ge=0.0, le=1.0, description="Probability of a goal-directed step")
    speeds: dict[str, float] = Field(
        default_factory=lambda: {"medic": 0.25, "searcher": 0.4, "engineer": 0.25},
        description="World units per second by role",
    )
    rescue_radius: float = Field(default=0.2, gt=0)
    walk_turn_sd: float = Field(default=0.4, ge=0.0, description="Std of the per-tick turn of a walking agent, radians")
    critical_coop_required: int = Field(default=2, ge=1)
    dwell_s: float = Field(default=3.0, gt=0)
    fov_radius: float = Field(default=15.0, gt=0)
    fov_half_angle: float = Field(default=math.pi / 3, gt=0, le=math.pi)

    def speed(self, role: str) -> float:
        value = self.speeds[role]
        if value <= 0:
            raise ValueError(f"speed for role {role} must be positive")
        return value


@dataclass(frozen=True)
class MissionLayout:
    """Victim placements on a ``width x height`` field."""
    width: float
    height: float
    normal_victims: np.ndarray    # (n, 2)
    critical_victims: np.ndarray  # (m, 2)

    @property
    def victims(self) -> np.ndarray:
        return np.vstack([self.normal_victims, self.critical_victims])

    @property
    def is_critical(self) -> np.ndarray:
        return np.concatenate([np.zeros(len(self.normal_victims), bool), np.ones(len(self.critical_victims), bool)])


def generate_mission(seed: int, width: float = 50.0, height: float = 50.0, normal: int = 50,
                     critical: int = 5, min_separation: float = 1.0, max_attempts: int = 1000) -> MissionLayout:
    """Uniformly random victim placement with a minimum pairwise separation.

    Raises:
        LayoutError: a victim cannot be placed within ``max_attempts`` draws.
    """
    rng = make_rng(seed, "layout")
    placed: list[np.ndarray] = []
    for i in range(normal + critical):
        for _ in range(max_attempts):
            candidate = rng.uniform((0.0, 0.0), (width, height))
            if not placed or np.min(np.linalg.norm(np.array(placed) - candidate, axis=1)) >= min_separation:
                placed.append(candidate)
                break
        else:
            raise LayoutError(f"could not place victim {i} after {max_attempts} attempts")
    points = np.array(placed, dtype=DTYPE).reshape(-1, 2)
    return MissionLayout(width, height, points[:normal], points[normal:])


def _angle_offset(bearing: np.ndarray, heading: float) -> np.ndarray:
    return np.abs((bearing - heading + np.pi) % (2.0 * np.pi) - np.pi)


def fov_count(pose: tuple[float, float, float], victims: np.ndarray, radius_fov: float,
              half_angle: float) -> int:
    """Victims inside the view cone: within ``radius_fov`` and ``half_angle`` of the heading.

    Both bounds are inclusive; a victim at the agent's own position counts.
    """
    if not 0.0 < half_angle <= math.pi:
        raise ValueError(f"half_angle must be in (0, pi], got {half_angle}")
    victims = np.asarray(victims, dtype=DTYPE).reshape(-1, 2)
    if victims.size == 0:
        return 0
    x, y, heading = pose
    delta = victims - np.array([x, y])
    dist = np.hypot(delta[:, 0], delta[:, 1])
    offset = _angle_offset(np.arctan2(delta[:, 1], delta[:, 0]), heading)
    # guard against rounding in the modulo for half_angle == pi
    visible = (dist <= radius_fov) & ((offset <= half_angle + 1e-12) | (dist == 0.0))
    return int(np.count_nonzero(visible))


def _wrap_heading(angle: float) -> float:
    wrapped = (angle + math.pi) % (2.0 * math.pi) - math.pi
    return -math.pi if wrapped >= math.pi else wrapped


def _assign_targets(positions: np.ndarray, victims: np.ndarray, critical: np.ndarray,
                    alive: np.ndarray) -> list[Optional[int]]:
    """Nearest unrescued victim per agent; a critical target also recruits its nearest free agent.

    An agent is free until it leads or joins a critical pair. An agent whose
    nearest victim is critical but finds no free helper falls back to its
    nearest normal victim, if one is left.
    """
    targets: list[Optional[int]] = [None] * len(positions)
    if not alive.any():
        return targets
    candidates = np.flatnonzero(alive)
    dist = np.linalg.norm(positions[:, None, :] - victims[None, candidates, :], axis=-1)
    for agent in range(len(positions)):
        targets[agent] = int(candidates[np.argmin(dist[agent])])
    paired: set[int] = set()
    for agent in range(len(positions)):
        victim = targets[agent]
        if agent in paired or not critical[victim]:
            continue
        d = np.linalg.norm(positions - victims[victim], axis=1)
        d[agent] = np.inf
        d[list(paired)] = np.inf
        if np.isfinite(d).any():
            helper = int(np.argmin(d))
            targets[helper] = victim
            paired |= {agent, helper}
        elif (~critical[candidates]).any():
            normal = candidates[~critical[candidates]]
            targets[agent] = int(normal[np.argmin(dist[agent][~critical[candidates]])])
    return targets


def simulate_team(layout: MissionLayout, policy: TeamPolicy, duration_s: float = 900.0,
                  tick_s: float = 1.0, seed: int = 0, trace_id: str = "team",
                  mission: Optional[str] = None) -> Trace:
    """Run one mission and record one row per agent per tick.

    Records are stamped ``t = i * tick_s`` for ``i = 0 .. duration_s / tick_s - 1``
    and describe the state after that tick's movement and rescues.
    """
    rng = make_rng(seed, "team")
    victims = layout.victims
    critical = layout.is_critical
    alive = np.ones(len(victims), dtype=bool)
    dwell = np.zeros(len(victims), dtype=np.int64)
    dwell_ticks = max(1, int(math.ceil(policy.dwell_s / tick_s - 1e-9)))
    bounds = np.array([layout.width, layout.height])

    n_agents = len(ROLES)
    positions = rng.uniform((0.0, 0.0), bounds, size=(n_agents, 2))
    headings = rng.uniform(-math.pi, math.pi, size=n_agents)
    walk = headings.copy()
    step_len = np.array([policy.speed(role) * tick_s for role in ROLES])
    score = 0
    records: list[TraceRecord] = []

    for tick in range(int(round(duration_s / tick_s))):
        t = tick * tick_s
        targets = _assign_targets(positions, victims, critical, alive)
        directed = rng.random(n_agents) < policy.skill
        turns = rng.normal(0.0, policy.walk_turn_sd, size=n_agents)
        for agent in range(n_agents):
            if directed[agent] and targets[agent] is not None:
                delta = victims[targets[agent]] - positions[agent]
                dist = float(np.hypot(*delta))
                move = delta * (min(step_len[agent], dist) / dist) if dist > 0 else np.zeros(2)
            else:
                walk[agent] += turns[agent]
                move = step_len[agent] * np.array([math.cos(walk[agent]), math.sin(walk[agent])])
                outside = (positions[agent] + move < 0.0) | (positions[agent] + move > bounds)
                if outside.any():
                    move[outside] = -move[outside]
                    walk[agent] = math.atan2(move[1], move[0])
            new_position = np.clip(positions[agent] + move, 0.0, bounds)
            moved = new_position - positions[agent]
            if np.any(moved != 0.0):
                headings[agent] = _wrap_heading(math.atan2(moved[1], moved[0]))
            positions[agent] = new_position

        near = np.linalg.norm(positions[:, None, :] - victims[None, :, :], axis=-1) <= policy.rescue_radius
        helpers = near.sum(axis=0)
        needed = np.where(critical, policy.critical_coop_required, 1)
        engaged = alive & (helpers >= needed)
        dwell = np.where(engaged, dwell + 1, 0)
        rescued = engaged & (dwell >= dwell_ticks)
        if rescued.any():
            score += int(np.sum(np.where(critical[rescued], CRITICAL_POINTS, NORMAL_POINTS)))
            alive &= ~rescued
            dwell[rescued] = 0

        remaining = victims[alive]
        for agent, role in enumerate(ROLES):
            records.append(TraceRecord(
                t=float(t),
                agent_id=agent,
                role=role,
                x=float(positions[agent, 0]),
                y=float(positions[agent, 1]),
                heading=float(headings[agent]),
                fov_victims=fov_count((positions[agent, 0], positions[agent, 1], headings[agent]),
                                      remaining, policy.fov_radius, policy.fov_half_angle),
                team_score=score,
            ))
    return Trace(trace_id=trace_id, records=tuple(records), mission=mission)


def bimodal_skills(n_teams: int, rng: np.random.Generator) -> np.ndarray:
    """Half the teams uniform in [0.1, 0.3], half in [0.7, 0.9], in shuffled order."""
    low = n_teams // 2
    skills = np.concatenate([rng.uniform(0.1, 0.3, size=low), rng.uniform(0.7, 0.9, size=n_teams - low)])
    return rng.permutation(skills)


@dataclass(frozen=True)
class GeneratedDataset:
    manifest: DatasetManifest
    manifest_path: Path
    traces: tuple[Trace, ...]
    attempts: int


def _generate_once(n_teams: int, skill_sampler: SkillSampler, seed: int, policy: TeamPolicy,
                   duration_s: float, tick_s: float, check_cfg: PipelineConfig,
                   min_minority: float) -> tuple[list[Trace], np.ndarray]:
    skills = np.clip(skill_sampler(n_teams, make_rng(seed, "skills")), 0.0, 1.0)
    traces = []
    for team in range(n_teams):
        mission = "A" if team % 2 == 0 else "B"
        layout = generate_mission(derive_seed(seed, "mission", team))
        team_policy = policy.model_copy(update={"skill": float(skills[team])})
        traces.append(simulate_team(layout, team_policy, duration_s, tick_s, derive_seed(seed, "team", team),
                                    trace_id=f"team_{team:03d}", mission=mission))
    labels = np.array([s.label for s in build_samples(traces, check_cfg)])
    minority = min(labels.mean(), 1.0 - labels.mean()) if labels.size else 0.0
    if minority < min_minority:
        raise ClassImbalanceError(f"minority label fraction {minority:.3f} below {min_minority}")
    return traces, skills


def generate_dataset(n_teams: int, out_dir: Union[str, Path], seed: int = 0,
                     skill_sampler: Optional[SkillSampler] = None, policy: Optional[TeamPolicy] = None,
                     duration_s: float = 900.0, tick_s: float = 1.0,
                     check_config: Optional[PipelineConfig] = None, min_minority: float = 0.2,
                     max_attempts: int = 5) -> GeneratedDataset:
    """Simulate ``n_teams`` teams and write their traces plus a manifest to ``out_dir``.

    Skills are redrawn (from a new derived seed) while the segmented dataset's
    minority label fraction is below ``min_minority``.

    Raises:
        ValueError: fewer than 2 teams.
        ClassImbalanceError: no attempt produced a balanced enough dataset.
    """
    if n_teams < 2:
        raise ValueError(f"need at least 2 teams, got {n_teams}")
    sampler = skill_sampler or bimodal_skills
    policy = policy or TeamPolicy()
    check_cfg = check_config or PipelineConfig()
    out_dir = Path(out_dir)

    attempt_no = 0
    try:
        for attempt in Retrying(stop=stop_after_attempt(max_attempts),
                                retry=retry_if_exception_type(ClassImbalanceError)):
            with attempt:
                attempt_no = attempt.retry_state.attempt_number
                if attempt_no > 1:
                    logger.warning("resampling team skills (attempt %d)", attempt_no)
                attempt_seed = seed if attempt_no == 1 else derive_seed(seed, "resample", attempt_no)
                traces, skills = _generate_once(n_teams, sampler, attempt_seed, policy, duration_s,
                                                tick_s, check_cfg, min_minority)
    except RetryError as e:
        raise ClassImbalanceError(f"no balanced dataset after {max_attempts} attempts") from e

    entries = []
    for team, trace in enumerate(traces):
        filename = f"{trace.trace_id}.ndjson"
        write_trace(trace, out_dir / filename)
        entries.append(ManifestEntry(path=filename, mission=trace.mission, team_id=team, skill=float(skills[team])))
    manifest = DatasetManifest(seed=seed, entries=entries)
    manifest_path = out_dir / MANIFEST_NAME
    manifest_path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    return GeneratedDataset(manifest, manifest_path, tuple(traces), attempt_no)
