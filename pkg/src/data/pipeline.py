"""From traces to labeled samples: segmentation, windowing, features, labels and splits."""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, TypeVar, Union

import numpy as np
import orjson

from src.data.traces import Trace, compute_velocities, read_trace
from src.errors import ConfigurationError, ShapeError
from src.models import DatasetManifest, PipelineConfig, ScalerState
from src.network.graph import GraphSnapshot, build_snapshot
from src.network.numerics import DTYPE, make_rng

logger = logging.getLogger(__name__)

T = TypeVar("T")

# tolerance when comparing float sampling instants with record timestamps
_TIME_EPS = 1e-9

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class Sample:
    """One segment: K windows of node features, their team graphs and a label."""
    windows: np.ndarray
    snapshots: tuple[GraphSnapshot, ...]
    label: int
    segment_start: float
    source_trace: str
    mission: Optional[str] = None
    points_delta: float = 0.0

    def __post_init__(self):
        if self.windows.ndim != 3 or self.windows.shape[0] != len(self.snapshots):
            raise ShapeError(f"{len(self.snapshots)} snapshots for windows of shape {self.windows.shape}")
        if not np.all(np.isfinite(self.windows)):
            raise ShapeError("sample features contain non-finite values")
        if self.label not in (0, 1):
            raise ShapeError(f"label must be 0 or 1, got {self.label}")

    @property
    def num_windows(self) -> int:
        return self.windows.shape[0]

    @property
    def laplacians(self) -> np.ndarray:
        return np.stack([s.laplacian for s in self.snapshots])

    @property
    def adjacencies(self) -> np.ndarray:
        return np.stack([s.adjacency for s in self.snapshots])


def label_segment(points_delta: float, threshold: float) -> int:
    """1 (high performance) iff the segment gained at least ``threshold`` points."""
    return int(points_delta >= threshold)


def segment_count(trace: Trace, cfg: PipelineConfig) -> int:
    """Complete segments in ``trace``: the last sampling instant must not pass the last record."""
    return int(math.floor((trace.last_time + cfg.window_interval_s) / cfg.segment_len_s + _TIME_EPS))


def segment_and_window(trace: Trace, cfg: PipelineConfig) -> list[Sample]:
    """Cut ``trace`` into consecutive non-overlapping labeled samples.

    At each sampling instant every agent contributes its latest record at or
    before that instant. Segments where an agent has no record within
    ``segment_len_s`` of an instant are skipped with a warning.
    """
    count = segment_count(trace, cfg)
    if count == 0:
        logger.warning("trace %s (%.1f s) is shorter than one %.1f s segment",
                       trace.trace_id, trace.last_time, cfg.segment_len_s)
        return []

    velocities = compute_velocities(trace)
    tracks = trace.tracks
    agents = trace.agent_ids
    k = cfg.num_windows
    samples: list[Sample] = []
    for seg in range(count):
        start = seg * cfg.segment_len_s
        instants = start + np.arange(k) * cfg.window_interval_s
        indices = {}
        for agent_id in agents:
            track = tracks[agent_id]
            idx = np.searchsorted(track.t, instants + _TIME_EPS, side="right") - 1
            if np.any(idx < 0) or np.any(instants - track.t[np.maximum(idx, 0)] > cfg.segment_len_s):
                indices = None
                logger.warning("trace %s: agent %d has a gap in segment starting at %.1f s; skipped",
                               trace.trace_id, agent_id, start)
                break
            indices[agent_id] = idx
        if indices is None:
            continue

        windows = np.empty((k, len(agents), cfg.feature_dim), dtype=DTYPE)
        positions = np.empty((k, len(agents), 2), dtype=DTYPE)
        for node, agent_id in enumerate(agents):
            track, idx = tracks[agent_id], indices[agent_id]
            kin = velocities[agent_id][idx]
            columns = {
                "fov_count": track.fov[idx],
                "x": track.x[idx],
                "y": track.y[idx],
                "v": kin[:, 2],
                "v_x": kin[:, 0],
                "v_y": kin[:, 1],
            }
            windows[:, node, :] = np.column_stack([columns[name] for name in cfg.feature_names])
            positions[:, node, 0] = track.x[idx]
            positions[:, node, 1] = track.y[idx]

        snapshots = tuple(
            build_snapshot(positions[i], instants[i], cfg.distance_scale, cfg.degree_source)
            for i in range(k)
        )
        delta = trace.score_before(start + cfg.segment_len_s) - trace.score_before(start)
        samples.append(Sample(
            windows=windows,
            snapshots=snapshots,
            label=label_segment(delta, cfg.threshold_points),
            segment_start=float(start),
            source_trace=trace.trace_id,
            mission=trace.mission,
            points_delta=delta,
        ))
    return samples


def split_dataset(samples: Sequence[T], ratio: float, seed: int) -> tuple[list[T], list[T]]:
    """Seeded shuffle, then the first ``ceil(ratio * n)`` items train and the rest test."""
    n = len(samples)
    if n < 2:
        raise ConfigurationError(f"need at least 2 samples to split, got {n}")
    if not 0.0 < ratio < 1.0:
        raise ConfigurationError(f"split ratio must be in (0, 1), got {ratio}")
    order = make_rng(seed, "split").permutation(n)
    n_train = math.ceil(round(ratio * n, 9))
    return [samples[i] for i in order[:n_train]], [samples[i] for i in order[n_train:]]


# ---------------------------------------------------------------------------
# Stacked sample sets, scaling and prepared datasets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SampleSet:
    """Samples stacked into arrays for batched training and evaluation."""
    windows: np.ndarray          # (S, K, N, F)
    adjacencies: np.ndarray      # (S, K, N, N)
    laplacians: np.ndarray       # (S, K, N, N)
    labels: np.ndarray           # (S,)
    segment_starts: np.ndarray   # (S,)
    sources: tuple[str, ...] = ()
    missions: tuple[str, ...] = ()
    window_interval_s: float = 2.0

    @classmethod
    def from_samples(cls, samples: Sequence[Sample], window_interval_s: float = 2.0) -> "SampleSet":
        if not samples:
            raise ConfigurationError("cannot stack an empty list of samples")
        return cls(
            windows=np.stack([s.windows for s in samples]),
            adjacencies=np.stack([s.adjacencies for s in samples]),
            laplacians=np.stack([s.laplacians for s in samples]),
            labels=np.array([s.label for s in samples], dtype=np.int64),
            segment_starts=np.array([s.segment_start for s in samples], dtype=DTYPE),
            sources=tuple(s.source_trace for s in samples),
            missions=tuple(s.mission or "" for s in samples),
            window_interval_s=window_interval_s,
        )

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def subset(self, indices) -> "SampleSet":
        indices = np.asarray(indices, dtype=np.int64)
        return SampleSet(
            windows=self.windows[indices],
            adjacencies=self.adjacencies[indices],
            laplacians=self.laplacians[indices],
            labels=self.labels[indices],
            segment_starts=self.segment_starts[indices],
            sources=tuple(self.sources[i] for i in indices) if self.sources else (),
            missions=tuple(self.missions[i] for i in indices) if self.missions else (),
            window_interval_s=self.window_interval_s,
        )

    def with_windows(self, windows: np.ndarray) -> "SampleSet":
        return SampleSet(windows, self.adjacencies, self.laplacians, self.labels, self.segment_starts,
                         self.sources, self.missions, self.window_interval_s)

    def mission_indices(self, mission: str) -> np.ndarray:
        return np.array([i for i, m in enumerate(self.missions) if m == mission], dtype=np.int64)

    def to_samples(self) -> list[Sample]:
        out = []
        for i in range(len(self)):
            start = float(self.segment_starts[i])
            snapshots = tuple(
                GraphSnapshot(self.adjacencies[i, w], self.laplacians[i, w], start + w * self.window_interval_s)
                for w in range(self.windows.shape[1])
            )
            out.append(Sample(
                windows=self.windows[i],
                snapshots=snapshots,
                label=int(self.labels[i]),
                segment_start=start,
                source_trace=self.sources[i] if self.sources else "",
                mission=(self.missions[i] or None) if self.missions else None,
            ))
        return out

    def class_counts(self) -> tuple[int, int]:
        high = int(self.labels.sum())
        return len(self) - high, high


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature min-max scaling; constant features map to 0."""
    minimum: np.ndarray
    maximum: np.ndarray

    @classmethod
    def fit(cls, windows: np.ndarray) -> "FeatureScaler":
        flat = windows.reshape(-1, windows.shape[-1])
        return cls(flat.min(axis=0), flat.max(axis=0))

    def transform(self, windows: np.ndarray) -> np.ndarray:
        span = self.maximum - self.minimum
        safe = np.where(span > 0.0, span, 1.0)
        return np.where(span > 0.0, (windows - self.minimum) / safe, 0.0)

    def to_state(self) -> ScalerState:
        return ScalerState(minimum=self.minimum.tolist(), maximum=self.maximum.tolist())

    @classmethod
    def from_state(cls, state: ScalerState) -> "FeatureScaler":
        return cls(np.array(state.minimum, dtype=DTYPE), np.array(state.maximum, dtype=DTYPE))


@dataclass(frozen=True)
class PreparedDataset:
    """Train/test split of one pipeline run, ready for training."""
    train: SampleSet
    test: SampleSet
    pipeline: PipelineConfig
    scaler: Optional[FeatureScaler] = None
    trace_ids: tuple[str, ...] = field(default_factory=tuple)


def load_traces(path: Union[str, Path]) -> list[Trace]:
    """Read traces listed in a manifest, or every ``*.ndjson`` file of a directory."""
    path = Path(path)
    manifest_path = path / MANIFEST_NAME if path.is_dir() else path
    if manifest_path.suffix == ".json" and manifest_path.exists():
        manifest = DatasetManifest.model_validate_json(manifest_path.read_bytes())
        base = manifest_path.parent
        return [read_trace(base / entry.path, mission=entry.mission) for entry in manifest.entries]
    if path.is_dir():
        return [read_trace(p) for p in sorted(path.glob("*.ndjson"))]
    return [read_trace(path)]


def build_samples(traces: Sequence[Trace], cfg: PipelineConfig) -> list[Sample]:
    samples: list[Sample] = []
    for trace in traces:
        samples.extend(segment_and_window(trace, cfg))
    return samples


def prepare_dataset(traces: Sequence[Trace], cfg: PipelineConfig) -> PreparedDataset:
    """Segment every trace, split samples, and fit the optional scaler on the train split."""
    samples = build_samples(traces, cfg)
    train, test = split_dataset(samples, cfg.split_ratio, cfg.seed)
    if not test:
        raise ConfigurationError(f"split ratio {cfg.split_ratio} leaves no test samples out of {len(samples)}")
    train_set = SampleSet.from_samples(train, cfg.window_interval_s)
    test_set = SampleSet.from_samples(test, cfg.window_interval_s)
    scaler = None
    if cfg.normalize:
        scaler = FeatureScaler.fit(train_set.windows)
        train_set = train_set.with_windows(scaler.transform(train_set.windows))
        test_set = test_set.with_windows(scaler.transform(test_set.windows))
    logger.info("prepared %d train / %d test samples from %d traces", len(train_set), len(test_set), len(traces))
    return PreparedDataset(train_set, test_set, cfg, scaler, tuple(t.trace_id for t in traces))


_SET_FIELDS = ("windows", "adjacencies", "laplacians", "labels", "segment_starts")


def save_prepared(dataset: PreparedDataset, path: Union[str, Path]) -> Path:
    """Write a prepared dataset as a compressed ``.npz`` archive with JSON metadata."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {}
    for split in ("train", "test"):
        sample_set: SampleSet = getattr(dataset, split)
        for name in _SET_FIELDS:
            arrays[f"{split}_{name}"] = getattr(sample_set, name)
    meta = {
        "pipeline": dataset.pipeline.model_dump(),
        "scaler": dataset.scaler.to_state().model_dump() if dataset.scaler else None,
        "trace_ids": list(dataset.trace_ids),
        "train_sources": list(dataset.train.sources),
        "test_sources": list(dataset.test.sources),
        "train_missions": list(dataset.train.missions),
        "test_missions": list(dataset.test.missions),
    }
    with open(path, "wb") as f:
        np.savez_compressed(f, meta=np.array(orjson.dumps(meta).decode("utf-8")), **arrays)
    return path


def load_prepared(path: Union[str, Path]) -> PreparedDataset:
    with np.load(Path(path), allow_pickle=False) as archive:
        meta = orjson.loads(str(archive["meta"]))
        pipeline = PipelineConfig.model_validate(meta["pipeline"])
        sets = {}
        for split in ("train", "test"):
            sets[split] = SampleSet(
                *(np.array(archive[f"{split}_{name}"]) for name in _SET_FIELDS),
                sources=tuple(meta[f"{split}_sources"]),
                missions=tuple(meta[f"{split}_missions"]),
                window_interval_s=pipeline.window_interval_s,
            )
    scaler = FeatureScaler.from_state(ScalerState.model_validate(meta["scaler"])) if meta["scaler"] else None
    return PreparedDataset(sets["train"], sets["test"], pipeline, scaler, tuple(meta["trace_ids"]))
