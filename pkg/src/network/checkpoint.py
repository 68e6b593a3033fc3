"""JSON checkpoints: one pydantic document per trained network.

Parameters are stored as row-major nested lists of floats. Python's float
repr is the shortest string that reads back to the same double, so a
save -> load -> save cycle reproduces the file byte for byte.
"""

from pathlib import Path
from typing import Optional, Union

import numpy as np
import orjson
from pydantic import ValidationError

from src.errors import CheckpointError, CheckpointVersionError
from src.models import Checkpoint, ModelConfig, ModelKind, PipelineConfig, ScalerState
from src.network.baselines import build_network
from src.network.numerics import DTYPE, Params, all_finite

FORMAT_VERSION = 1


def to_checkpoint(params: Params, config: ModelConfig, model_kind: ModelKind = "stgcn",
                  trained_iterations: int = 0, pipeline: Optional[PipelineConfig] = None,
                  feature_scaler: Optional[ScalerState] = None) -> Checkpoint:
    network = build_network(model_kind, config)
    network.check_params(params)
    ordered = {name: params[name].tolist() for name in network.param_shapes()}
    return Checkpoint(
        format_version=FORMAT_VERSION,
        model_kind=model_kind,
        config=config,
        params=ordered,
        seed=config.seed,
        trained_iterations=trained_iterations,
        pipeline=pipeline,
        feature_scaler=feature_scaler,
    )


def checkpoint_params(checkpoint: Checkpoint) -> Params:
    """Parameter arrays of ``checkpoint``, validated against its config."""
    network = build_network(checkpoint.model_kind, checkpoint.config)
    expected = network.param_shapes()
    if set(checkpoint.params) != set(expected):
        raise CheckpointError(f"blocks {sorted(checkpoint.params)} do not match {sorted(expected)}")
    params: Params = {}
    for name, shape in expected.items():
        try:
            block = np.array(checkpoint.params[name], dtype=DTYPE)
        except (TypeError, ValueError) as e:
            raise CheckpointError(f"block '{name}' is not a numeric array: {e}") from e
        if block.shape != shape:
            raise CheckpointError(f"block '{name}' has shape {block.shape}, expected {shape}")
        params[name] = block
    if not all_finite(params):
        raise CheckpointError("checkpoint contains non-finite parameters")
    return params


def save_checkpoint(path: Union[str, Path], params: Params, config: ModelConfig,
                    model_kind: ModelKind = "stgcn", trained_iterations: int = 0,
                    pipeline: Optional[PipelineConfig] = None,
                    feature_scaler: Optional[ScalerState] = None) -> Path:
    """Write a checkpoint document and return its path."""
    checkpoint = to_checkpoint(params, config, model_kind, trained_iterations, pipeline, feature_scaler)
    return write_checkpoint(checkpoint, path)


def write_checkpoint(checkpoint: Checkpoint, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(checkpoint.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def load_checkpoint(path: Union[str, Path]) -> tuple[Checkpoint, Params]:
    """Read and validate a checkpoint.

    Returns:
        The checkpoint document and its parameter arrays.

    Raises:
        CheckpointVersionError: ``format_version`` is not the supported one.
        CheckpointError: the document is malformed or its blocks do not match the config.
    """
    raw = Path(path).read_bytes()
    try:
        document = orjson.loads(raw)
    except orjson.JSONDecodeError as e:
        raise CheckpointError(f"{path}: not a JSON document ({e})") from e
    if not isinstance(document, dict):
        raise CheckpointError(f"{path}: expected a JSON object")
    version = document.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: checkpoint format_version {version!r} is incompatible with supported version {FORMAT_VERSION}"
        )
    try:
        checkpoint = Checkpoint.model_validate(document)
    except ValidationError as e:
        raise CheckpointError(f"{path}: {e}") from e
    return checkpoint, checkpoint_params(checkpoint)
