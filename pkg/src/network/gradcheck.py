"""Finite-difference verification of every network's hand-derived backward pass."""

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from src.models import ModelConfig
from src.network.baselines import NETWORKS, build_network
from src.network.graph import adjacency, normalized_laplacian
from src.network.numerics import DTYPE, Params, finite_difference_gradient, make_rng, relative_error

TOLERANCE = 1e-4


@dataclass(frozen=True)
class GradcheckResult:
    model_kind: str
    seed: int
    block_errors: dict[str, float]

    @property
    def max_error(self) -> float:
        return max(self.block_errors.values()) if self.block_errors else 0.0

    @property
    def passed(self) -> bool:
        return self.max_error < TOLERANCE


def random_batch(config: ModelConfig, seed: int, batch: int = 1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Random node features, operators built from random positions, and alternating labels."""
    rng = make_rng(seed, "gradcheck", "batch")
    k, n, f = config.num_windows, config.num_nodes, config.input_dim
    windows = rng.normal(size=(batch, k, n, f)).astype(DTYPE)
    positions = rng.uniform(0.0, 5.0, size=(batch, k, n, 2))
    laplacians = np.empty((batch, k, n, n), dtype=DTYPE)
    for b in range(batch):
        for t in range(k):
            laplacians[b, t] = normalized_laplacian(adjacency(positions[b, t]))
    labels = np.arange(batch, dtype=np.int64) % 2
    return windows, laplacians, labels


def check_gradients(model_kind: str, config: ModelConfig, seed: int, batch: int = 1,
                    eps: float = 1e-5) -> GradcheckResult:
    """Compare ``backward_batch`` with central differences of the mean batch loss.

    Parameters are drawn from a wider-than-Glorot uniform so that gates and
    activations sit away from their flat regions.
    """
    network = build_network(model_kind, config)
    windows, laplacians, labels = random_batch(config, seed, batch)
    rng = make_rng(seed, "gradcheck", "params", model_kind)
    params: Params = {name: rng.uniform(-0.8, 0.8, size=shape) for name, shape in network.param_shapes().items()}

    tape = network.forward_batch(windows, laplacians, params)
    analytic = network.backward_batch(tape, labels, params)
    numeric = finite_difference_gradient(
        lambda p: network.loss_batch(windows, laplacians, labels, p), params, eps
    )
    errors = {name: relative_error(analytic[name], numeric[name]) for name in params}
    return GradcheckResult(model_kind, seed, errors)


def run_suite(seeds: Iterable[int], config: Optional[ModelConfig] = None,
              kinds: Sequence[str] = tuple(NETWORKS), batch: int = 2) -> list[GradcheckResult]:
    """Gradient checks for every ``kind`` and ``seed``."""
    base = config or ModelConfig(hidden_dim=8, num_windows=4)
    results = []
    for seed in seeds:
        cfg = base.model_copy(update={"seed": seed})
        for kind in kinds:
            results.append(check_gradients(kind, cfg, seed, batch))
    return results


def summarize(results: Sequence[GradcheckResult]) -> dict[str, dict[str, float]]:
    """Worst error per model kind and block over all seeds."""
    table: dict[str, dict[str, float]] = {}
    for result in results:
        row = table.setdefault(result.model_kind, {})
        for block, error in result.block_errors.items():
            row[block] = max(row.get(block, 0.0), error)
    return table
