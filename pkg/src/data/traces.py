"""Trace files: newline-delimited JSON records of one mission run.

Each line holds exactly the fields of :class:`src.models.TraceRecord`::

    {"t": 12.0, "agent_id": 1, "role": "searcher", "x": 3.5, "y": 10.0,
     "heading": 0.79, "fov_victims": 2, "team_score": 20}
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np
import orjson
from pydantic import ValidationError

from src.errors import TraceParseError, TraceSchemaError, TraceValidationError
from src.models import TraceRecord

logger = logging.getLogger(__name__)

AGENT_IDS = (0, 1, 2)


@dataclass(frozen=True)
class AgentTrack:
    """Column view of one agent's records, ordered by time."""
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    fov: np.ndarray


@dataclass(frozen=True)
class Trace:
    """Validated records of one team, sorted by (t, agent_id)."""
    trace_id: str
    records: tuple[TraceRecord, ...]
    mission: Optional[str] = None

    @property
    def agent_ids(self) -> tuple[int, ...]:
        return tuple(sorted({r.agent_id for r in self.records}))

    @property
    def last_time(self) -> float:
        return max(r.t for r in self.records)

    def agent_records(self, agent_id: int) -> list[TraceRecord]:
        return [r for r in self.records if r.agent_id == agent_id]

    @cached_property
    def tracks(self) -> dict[int, AgentTrack]:
        out = {}
        for agent_id in self.agent_ids:
            recs = self.agent_records(agent_id)
            out[agent_id] = AgentTrack(
                t=np.array([r.t for r in recs]),
                x=np.array([r.x for r in recs]),
                y=np.array([r.y for r in recs]),
                heading=np.array([r.heading for r in recs]),
                fov=np.array([r.fov_victims for r in recs], dtype=np.float64),
            )
        return out

    @cached_property
    def score_timeline(self) -> tuple[np.ndarray, np.ndarray]:
        """Times and team scores of all records in (t, agent_id) order."""
        return (np.array([r.t for r in self.records]),
                np.array([r.team_score for r in self.records], dtype=np.float64))

    def score_before(self, instant: float) -> float:
        """Team score of the latest record strictly before ``instant`` (0 if none)."""
        times, scores = self.score_timeline
        idx = int(np.searchsorted(times, instant, side="left")) - 1
        return float(scores[idx]) if idx >= 0 else 0.0


def parse_trace(lines: Iterable[Union[str, bytes]], trace_id: str = "<stream>",
                mission: Optional[str] = None) -> Trace:
    """Decode and validate a newline-delimited trace.

    Args:
        lines: Iterable of text or byte lines; blank lines are ignored.
        trace_id: Identifier recorded on the trace and its samples.
        mission: Optional mission tag.

    Returns:
        The validated Trace.

    Raises:
        TraceParseError: a line is not a JSON object.
        TraceValidationError: a field is out of range, or time/score go backwards.
        TraceSchemaError: one of the three agents has no records.
    """
    numbered: list[tuple[int, TraceRecord]] = []
    last_time: dict[int, float] = {}
    for line_number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            payload = orjson.loads(line)
        except orjson.JSONDecodeError as e:
            raise TraceParseError(f"malformed JSON ({e})", line_number) from e
        if not isinstance(payload, dict):
            raise TraceParseError("expected a JSON object", line_number)
        try:
            record = TraceRecord.model_validate(payload)
        except ValidationError as e:
            problems = "; ".join(f"{'.'.join(map(str, err['loc'])) or 'record'}: {err['msg']}" for err in e.errors())
            raise TraceValidationError(problems, line_number) from e
        previous = last_time.get(record.agent_id)
        if previous is not None and record.t <= previous:
            raise TraceValidationError(
                f"agent {record.agent_id} time {record.t} does not follow {previous}", line_number
            )
        last_time[record.agent_id] = record.t
        numbered.append((line_number, record))

    missing = sorted(set(AGENT_IDS) - set(last_time))
    if missing:
        raise TraceSchemaError(f"trace {trace_id} has no records for agent(s) {missing}")

    numbered.sort(key=lambda item: (item[1].t, item[1].agent_id))
    best = 0
    for line_number, record in numbered:
        if record.team_score < best:
            raise TraceValidationError(
                f"team_score {record.team_score} at t={record.t} drops below {best}", line_number
            )
        best = record.team_score
    return Trace(trace_id=trace_id, records=tuple(r for _, r in numbered), mission=mission)


def read_trace(path: Union[str, Path], mission: Optional[str] = None) -> Trace:
    path = Path(path)
    with open(path, "rb") as f:
        return parse_trace(f, trace_id=path.stem, mission=mission)


def trace_lines(trace: Trace) -> list[bytes]:
    return [orjson.dumps(record.model_dump()) + b"\n" for record in trace.records]


def write_trace(trace: Trace, path: Union[str, Path]) -> Path:
    """Write ``trace`` as NDJSON; floats use the shortest exact representation."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.writelines(trace_lines(trace))
    return path


def compute_velocities(trace: Trace) -> dict[int, np.ndarray]:
    """Backward-difference velocities per agent.

    Returns:
        ``agent_id -> (n_records, 3)`` array of ``(v_x, v_y, v)`` aligned with
        the agent's records; the first record of every agent gets zeros.

    Raises:
        TraceSchemaError: an agent has fewer than two records.
        TraceValidationError: an agent has two records with the same time.
    """
    out: dict[int, np.ndarray] = {}
    for agent_id, track in trace.tracks.items():
        if track.t.size < 2:
            raise TraceSchemaError(f"agent {agent_id} needs at least 2 records for velocities")
        dt = np.diff(track.t)
        if np.any(dt <= 0.0):
            raise TraceValidationError(f"agent {agent_id} has duplicate or unordered timestamps")
        vx = np.concatenate([[0.0], np.diff(track.x) / dt])
        vy = np.concatenate([[0.0], np.diff(track.y) / dt])
        out[agent_id] = np.column_stack([vx, vy, np.hypot(vx, vy)])
    return out
