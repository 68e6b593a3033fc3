"""Minibatch Adam training shared by ST-GCN and the baselines."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from src.data.pipeline import SampleSet
from src.errors import ConfigurationError, DivergenceError
from src.models import ModelConfig, TrainingConfig
from src.network.baselines import BaselineKind, build_network
from src.network.numerics import AdamState, Params, adam_step, all_finite, batch_cross_entropy, global_norm, make_rng
from src.network.stgcn import Network

LOG_EVERY = 50


@dataclass
class TrainResult:
    """Trained parameters and per-iteration diagnostics."""
    params: Params
    history: list[float] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    iterations: int = 0


class _BatchSampler:
    """Yields index batches from a seeded permutation, reshuffling once every sample was drawn."""

    def __init__(self, n: int, batch_size: int, seed: int):
        self.n = n
        self.batch_size = min(batch_size, n)
        self.rng = make_rng(seed, "shuffle")
        self.order = self.rng.permutation(n)
        self.cursor = 0

    def next(self) -> np.ndarray:
        if self.cursor + self.batch_size > self.n:
            self.order = self.rng.permutation(self.n)
            self.cursor = 0
        batch = np.sort(self.order[self.cursor:self.cursor + self.batch_size])
        self.cursor += self.batch_size
        return batch


def _check_train_set(train_set: SampleSet) -> None:
    if len(train_set) == 0:
        raise ConfigurationError("training set is empty")
    low, high = train_set.class_counts()
    if low == 0 or high == 0:
        raise ConfigurationError(f"training set has a single class (low={low}, high={high})")


def train_network(network: Network, train_set: SampleSet, hyper: TrainingConfig,
                  seed: Optional[int] = None, params: Optional[Params] = None,
                  verbose: bool = True) -> TrainResult:
    """Run ``hyper.iterations`` Adam steps on minibatches of ``train_set``.

    Args:
        network: Network to train; its config fixes the parameter shapes.
        train_set: Stacked samples with both labels present.
        hyper: Learning rate, batch size and iteration count.
        seed: Seed for initialization and shuffling; defaults to the network config's seed.
        params: Starting parameters; freshly initialized when omitted.
        verbose: Print ``iteration / loss / grad-norm`` every 50 iterations.

    Returns:
        TrainResult with one mean batch loss per iteration.

    Raises:
        ConfigurationError: the train set is empty or single-class.
        ShapeError: the samples do not match the network config.
        DivergenceError: an update produced non-finite parameters.
    """
    _check_train_set(train_set)
    seed = network.config.seed if seed is None else seed
    params = network.init_params(seed) if params is None else dict(params)
    network.check_params(params)
    network.check_inputs(train_set.windows, train_set.laplacians)

    state = AdamState.for_params(params)
    sampler = _BatchSampler(len(train_set), hyper.batch_size, seed)
    result = TrainResult(params=params)
    for iteration in range(1, hyper.iterations + 1):
        idx = sampler.next()
        labels = train_set.labels[idx]
        tape = network.forward_batch(train_set.windows[idx], train_set.laplacians[idx], params)
        batch_loss = float(np.mean(batch_cross_entropy(tape.probs, labels)))
        grads = network.backward_batch(tape, labels, params)
        grad_norm = global_norm(grads)
        params, state = adam_step(params, grads, state, hyper.lr)
        if not all_finite(params):
            raise DivergenceError(f"non-finite parameters after iteration {iteration}")
        result.history.append(batch_loss)
        result.grad_norms.append(grad_norm)
        if verbose and (iteration % LOG_EVERY == 0 or iteration == hyper.iterations):
            print(f"  iteration {iteration:5d}  loss {batch_loss:.6f}  grad-norm {grad_norm:.4e}")

    result.params = params
    result.iterations = hyper.iterations
    return result


def train(train_set: SampleSet, config: ModelConfig, hyper: Optional[TrainingConfig] = None,
          verbose: bool = True) -> tuple[Params, list[float]]:
    """Train ST-GCN and return ``(params, history)``."""
    result = train_network(build_network("stgcn", config), train_set, hyper or TrainingConfig(),
                           verbose=verbose)
    return result.params, result.history


def train_baseline(kind: BaselineKind, train_set: SampleSet, config: ModelConfig,
                   hyper: Optional[TrainingConfig] = None, verbose: bool = True) -> tuple[Params, list[float]]:
    """Same contract as :func:`train` for an ablation network."""
    result = train_network(build_network(kind, config), train_set, hyper or TrainingConfig(),
                           verbose=verbose)
    return result.params, result.history


def evaluate_loss(network: Network, params: Params, sample_set: SampleSet) -> float:
    """Mean cross-entropy over a whole sample set."""
    return network.loss_batch(sample_set.windows, sample_set.laplacians, sample_set.labels, params)
