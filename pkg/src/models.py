"""Pydantic models for configuration, trace records, metrics and checkpoints."""

import math
from typing import Any, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator

ModelKind = Literal["stgcn", "fnn", "gcn_only", "gru_only"]
FeatureMode = Literal["both", "fov_only", "traj_only"]
Role = Literal["medic", "searcher", "engineer"]
Mission = Literal["A", "B"]

MAX_SEED = 2**64 - 1

# Node feature order inside a window matrix
FEATURE_NAMES: dict[str, tuple[str, ...]] = {
    "both": ("fov_count", "x", "y", "v", "v_x", "v_y"),
    "fov_only": ("fov_count",),
    "traj_only": ("x", "y", "v", "v_x", "v_y"),
}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)


class ModelConfig(_Strict):
    """Shape and activation settings of a network."""
    input_dim: int = Field(default=6, ge=1, description="Node features per window (F)")
    hidden_dim: int = Field(default=32, ge=1, description="Hidden units per node")
    num_nodes: int = Field(default=3, ge=2, description="Team members (N)")
    num_windows: int = Field(default=15, ge=1, description="Windows per sample (K)")
    num_classes: Literal[2] = Field(default=2, description="Binary high/low performance")
    gcn_output_activation: Literal["sigmoid", "relu"] = Field(
        default="sigmoid", description="Outer activation of the second GCN layer"
    )
    pooling: Literal["mean", "max"] = Field(
        default="mean", description="Global pooling over the per-window hidden states"
    )
    seed: int = Field(default=0, ge=0, le=MAX_SEED, description="Initialization seed")


class PipelineConfig(_Strict):
    """Segmentation, windowing, labelling and split settings."""
    segment_len_s: float = Field(default=30.0, gt=0, description="Segment length in seconds")
    window_interval_s: float = Field(default=2.0, gt=0, description="Seconds between sampling instants")
    threshold_points: float = Field(default=10.0, ge=0, description="Points per segment for the high label")
    features: FeatureMode = Field(default="both", description="Which node feature groups to keep")
    split_ratio: float = Field(default=0.8, gt=0, lt=1, description="Training fraction")
    seed: int = Field(default=0, ge=0, le=MAX_SEED, description="Split seed")
    distance_scale: float = Field(default=1.0, gt=0, description="Multiplier on distances before exp(-d)")
    degree_source: Literal["self_loops", "adjacency"] = Field(
        default="self_loops", description="Degree matrix taken from A + I or from A"
    )
    normalize: bool = Field(default=False, description="Min-max scale features fitted on the training split")

    @model_validator(mode="after")
    def _whole_number_of_windows(self) -> "PipelineConfig":
        ratio = self.segment_len_s / self.window_interval_s
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError(
                f"segment_len_s ({self.segment_len_s}) must be a whole multiple of "
                f"window_interval_s ({self.window_interval_s})"
            )
        return self

    @property
    def num_windows(self) -> int:
        return int(round(self.segment_len_s / self.window_interval_s))

    @property
    def feature_names(self) -> tuple[str, ...]:
        return FEATURE_NAMES[self.features]

    @property
    def feature_dim(self) -> int:
        return len(FEATURE_NAMES[self.features])


class TrainingConfig(_Strict):
    """Optimizer hyperparameters."""
    lr: float = Field(default=1e-4, ge=0, description="Adam learning rate")
    batch_size: int = Field(default=64, ge=1, description="Samples per minibatch")
    iterations: int = Field(default=1000, ge=1, description="Minibatch updates")


class PathsConfig(_Strict):
    """Filesystem locations used by the CLI."""
    data: Optional[str] = Field(default=None, description="Prepared dataset, trace directory or manifest")
    checkpoint: Optional[str] = Field(default=None, description="Checkpoint file")
    report: Optional[str] = Field(default=None, description="Report file prefix")


class RunConfig(_Strict):
    """Everything one CLI invocation needs. The top-level seed is authoritative."""
    model_kind: ModelKind = Field(default="stgcn", description="Network to train or evaluate")
    seed: int = Field(default=0, ge=0, le=MAX_SEED, description="Master seed")
    model: ModelConfig = Field(default_factory=ModelConfig)
    pipeline: PipelineConfig = Field(default_factory=PipelineConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)

    @model_validator(mode="after")
    def _derive_dependent_fields(self) -> "RunConfig":
        self.model = self.model.model_copy(update={
            "seed": self.seed,
            "input_dim": self.pipeline.feature_dim,
            "num_windows": self.pipeline.num_windows,
        })
        self.pipeline = self.pipeline.model_copy(update={"seed": self.seed})
        return self


class TraceRecord(BaseModel):
    """One observation of one agent."""
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)

    t: float = Field(ge=0, description="Seconds from mission start")
    agent_id: int = Field(ge=0, le=2, description="Team member index")
    role: Role = Field(description="Team role")
    x: float = Field(description="World x coordinate")
    y: float = Field(description="World y coordinate")
    heading: float = Field(description="Facing direction in radians, [-pi, pi)")
    fov_victims: int = Field(ge=0, description="Victims inside the field of view")
    team_score: int = Field(ge=0, description="Cumulative team points")

    @field_validator("heading")
    @classmethod
    def _heading_range(cls, value: float) -> float:
        if not -math.pi <= value < math.pi:
            raise ValueError(f"heading {value} outside [-pi, pi)")
        return value


class ManifestEntry(_Strict):
    path: str = Field(description="Trace file path, relative to the manifest")
    mission: Mission = Field(description="Mission tag")
    team_id: int = Field(ge=0, description="Team index")
    skill: Optional[float] = Field(default=None, description="Simulated team skill, if known")


class DatasetManifest(_Strict):
    """Trace files of a dataset with their mission tags."""
    seed: Optional[int] = Field(default=None, description="Generation seed")
    entries: List[ManifestEntry] = Field(default_factory=list)


class RocPoint(BaseModel):
    """One ROC point; the leading point's +inf threshold is written to JSON as null."""
    model_config = ConfigDict(extra="forbid")
    fpr: float
    tpr: float
    threshold: float

    @field_validator("threshold", mode="before")
    @classmethod
    def _null_threshold(cls, value: Any) -> Any:
        return math.inf if value is None else value

    @field_serializer("threshold", when_used="json")
    def _serialize_threshold(self, value: float) -> Optional[float]:
        return None if math.isinf(value) else value


class Metrics(BaseModel):
    """Binary classification metrics; class 1 (high performance) is positive."""
    model_config = ConfigDict(extra="forbid")

    accuracy: float = Field(description="(TP + TN) / total")
    rmse: float = Field(description="Root mean squared error over hard labels")
    precision: float = Field(description="TP / (TP + FP), 0 when undefined")
    recall: float = Field(description="TP / (TP + FN), 0 when undefined")
    f1: float = Field(description="Harmonic mean of precision and recall, 0 when undefined")
    f1_defined: bool = Field(description="False when TP + FP or TP + FN is zero")
    auc: float = Field(description="Trapezoidal area under the ROC curve")
    auc_defined: bool = Field(description="False when the truth has a single class")
    confusion: List[List[int]] = Field(description="[[TN, FP], [FN, TP]]")
    support: int = Field(description="Number of evaluated samples")
    roc: List[RocPoint] = Field(default_factory=list)


class ScalerState(_Strict):
    minimum: List[float]
    maximum: List[float]


class Checkpoint(BaseModel):
    """Serialized network. Field names are part of the on-disk format."""
    model_config = ConfigDict(extra="forbid")

    format_version: int = Field(description="Checkpoint format version")
    model_kind: ModelKind = Field(default="stgcn")
    config: ModelConfig
    params: dict[str, Any] = Field(description="Row-major nested float arrays per block")
    seed: int = Field(ge=0, le=MAX_SEED)
    trained_iterations: int = Field(ge=0)
    pipeline: Optional[PipelineConfig] = Field(default=None, description="Pipeline the network was trained on")
    feature_scaler: Optional[ScalerState] = Field(default=None)


class EvaluationReport(BaseModel):
    """Metrics of one checkpoint on one test split, overall and per mission."""
    model_config = ConfigDict(extra="forbid")

    model_kind: ModelKind
    overall: Metrics
    by_mission: dict[str, Metrics] = Field(default_factory=dict)
