"""Configuration management for the team performance predictor."""

from pathlib import Path
from typing import Any, Mapping, Optional, Union

from pydantic import ValidationError

from src.errors import ConfigurationError
from src.models import RunConfig

# Network
HIDDEN_DIM = 32
NUM_WINDOWS = 15

# Data pipeline
SEGMENT_LEN_S = 30.0
WINDOW_INTERVAL_S = 2.0
THRESHOLD_POINTS = 10.0
SPLIT_RATIO = 0.8

# Training
LEARNING_RATE = 1e-4
BATCH_SIZE = 64
ITERATIONS = 1000

# Synthetic benchmark
N_TEAMS = 60
BENCH_LEARNING_RATE = 1e-3
BENCH_MODELS = ("stgcn", "fnn", "gcn_only", "gru_only")

# Parameter studies: segment seconds / interval seconds, K = 15 in each
INPUT_LENGTH_PRESETS: dict[str, tuple[float, float]] = {
    "15/1": (15.0, 1.0),
    "30/2": (30.0, 2.0),
    "60/4": (60.0, 4.0),
}
FEATURE_PRESETS = ("both", "fov_only", "traj_only")


def _describe(error: ValidationError) -> str:
    return "; ".join(f"{'.'.join(map(str, e['loc'])) or 'config'}: {e['msg']}" for e in error.errors())


def validate_config(data: Mapping[str, Any]) -> RunConfig:
    """Validate a config mapping, naming every offending field on failure."""
    try:
        return RunConfig.model_validate(dict(data))
    except ValidationError as e:
        raise ConfigurationError(f"invalid config: {_describe(e)}") from e


def load_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """Read a JSON config document; the defaults when ``path`` is None."""
    if path is None:
        return RunConfig()
    try:
        return RunConfig.model_validate_json(Path(path).read_bytes())
    except ValidationError as e:
        raise ConfigurationError(f"{path}: {_describe(e)}") from e


def save_config(config: RunConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(config.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def apply_overrides(config: RunConfig, overrides: Mapping[str, Any]) -> RunConfig:
    """Return ``config`` with dotted-path overrides applied, e.g. ``{"training.lr": 1e-3}``.

    ``None`` values are skipped, so unset CLI flags leave the file or default value.
    """
    data = config.model_dump()
    for dotted, value in overrides.items():
        if value is None:
            continue
        *parents, leaf = dotted.split(".")
        node = data
        for key in parents:
            node = node[key]
        node[leaf] = value
    return validate_config(data)


def bench_config(seed: int, iterations: Optional[int] = None, lr: Optional[float] = None,
                 normalize: bool = True) -> RunConfig:
    """Defaults with the synthetic-benchmark presets (scaled features, faster learning rate)."""
    return apply_overrides(RunConfig(), {
        "seed": seed,
        "pipeline.normalize": normalize,
        "training.lr": BENCH_LEARNING_RATE if lr is None else lr,
        "training.iterations": iterations,
    })
