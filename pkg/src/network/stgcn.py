"""The ST-GCN network: per-window GCN, graph GRU over windows, global pooling, softmax head.

The forward pass is vectorized over a batch of samples; the backward pass is
derived by hand (reverse mode through the head, the pooling, the K GRU steps
and both GCN layers of every window).
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, ClassVar, Optional, Sequence

import numpy as np

from src.errors import ShapeError
from src.models import ModelConfig
from src.network.layers import (
    GRU_BLOCKS,
    GcnCache,
    GruCache,
    gcn_backward,
    gcn_forward,
    gru_backward,
    gru_forward,
    head_backward,
    head_forward,
    pool_backward,
    pool_forward,
)
from src.network.numerics import (
    DTYPE,
    Params,
    batch_cross_entropy,
    glorot_init,
    make_rng,
    one_hot,
    softmax_cross_entropy,
)


@dataclass
class ForwardTape:
    """Intermediates of one batched forward pass, enough to run backward."""
    windows: np.ndarray
    laplacians: np.ndarray
    probs: np.ndarray
    logits: np.ndarray
    flat: np.ndarray
    pooled: Optional[np.ndarray] = None
    pool_index: Optional[np.ndarray] = None
    states: Optional[np.ndarray] = None
    gcn: list[GcnCache] = field(default_factory=list)
    gru: list[GruCache] = field(default_factory=list)
    extra: dict[str, Any] = field(default_factory=dict)


def stack_inputs(samples: Sequence[Any]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack samples (objects with ``windows``, ``laplacians``, ``label``) into batch arrays."""
    windows = np.stack([s.windows for s in samples]).astype(DTYPE)
    laplacians = np.stack([s.laplacians for s in samples]).astype(DTYPE)
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return windows, laplacians, labels


class Network(ABC):
    """Common interface of ST-GCN and the ablation baselines."""

    kind: ClassVar[str]

    def __init__(self, config: ModelConfig):
        self.config = config

    @abstractmethod
    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        """Block name to shape, in initialization order."""

    @abstractmethod
    def forward_batch(self, windows: np.ndarray, laplacians: np.ndarray, params: Params) -> ForwardTape:
        ...

    @abstractmethod
    def backward_batch(self, tape: ForwardTape, labels: np.ndarray, params: Params,
                       scale: float = 1.0) -> Params:
        """Gradients of ``scale * mean batch loss`` for every block."""

    def init_params(self, seed: Optional[int] = None) -> Params:
        """Glorot-uniform matrices and zero biases, drawn in block order."""
        rng = make_rng(self.config.seed if seed is None else seed, "init", self.kind)
        params: Params = {}
        for name, shape in self.param_shapes().items():
            if len(shape) == 1:
                params[name] = np.zeros(shape, dtype=DTYPE)
            else:
                params[name] = glorot_init(shape[0], shape[1], rng)
        return params

    def zero_params(self) -> Params:
        return {name: np.zeros(shape, dtype=DTYPE) for name, shape in self.param_shapes().items()}

    def check_params(self, params: Params) -> None:
        expected = self.param_shapes()
        if set(params) != set(expected):
            raise ShapeError(f"{self.kind} expects blocks {sorted(expected)}, got {sorted(params)}")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ShapeError(f"block '{name}' should be {shape}, got {params[name].shape}")

    def check_inputs(self, windows: np.ndarray, laplacians: np.ndarray) -> None:
        cfg = self.config
        expected = (cfg.num_windows, cfg.num_nodes, cfg.input_dim)
        if windows.ndim != 4 or windows.shape[1:] != expected:
            raise ShapeError(f"windows should be (B, {expected[0]}, {expected[1]}, {expected[2]}), got {windows.shape}")
        if laplacians.shape != windows.shape[:2] + (cfg.num_nodes, cfg.num_nodes):
            raise ShapeError(f"operators {laplacians.shape} do not match windows {windows.shape}")

    # Single-sample conveniences -------------------------------------------------

    def forward(self, sample: Any, params: Params) -> tuple[np.ndarray, ForwardTape]:
        windows = np.asarray(sample.windows, dtype=DTYPE)[None]
        laplacians = np.asarray(sample.laplacians, dtype=DTYPE)[None]
        tape = self.forward_batch(windows, laplacians, params)
        return tape.probs[0], tape

    def backward(self, tape: ForwardTape, label: int, params: Params, scale: float = 1.0) -> Params:
        return self.backward_batch(tape, np.array([label], dtype=np.int64), params, scale)

    def loss_batch(self, windows: np.ndarray, laplacians: np.ndarray, labels: np.ndarray,
                   params: Params) -> float:
        tape = self.forward_batch(windows, laplacians, params)
        return float(np.mean(batch_cross_entropy(tape.probs, labels)))

    def predict_batch(self, windows: np.ndarray, laplacians: np.ndarray,
                      params: Params) -> tuple[np.ndarray, np.ndarray]:
        """Labels and P(high) for a batch; an exact 0.5 tie resolves to class 0."""
        probs = self.forward_batch(windows, laplacians, params).probs
        prob_high = probs[:, 1]
        return (probs[:, 1] > probs[:, 0]).astype(np.int64), prob_high

    def predict(self, sample: Any, params: Params) -> tuple[int, float]:
        probs, _ = self.forward(sample, params)
        return int(probs[1] > probs[0]), float(probs[1])

    # Shared tail: pooling + head ---------------------------------------------------

    def _pool_and_classify(self, tape: ForwardTape, states: np.ndarray, params: Params) -> ForwardTape:
        pooled, index = pool_forward(states, self.config.pooling)
        flat, logits, probs = head_forward(pooled, params["w_out"], params["b_out"])
        tape.states, tape.pooled, tape.pool_index = states, pooled, index
        tape.flat, tape.logits, tape.probs = flat, logits, probs
        return tape

    def _head_gradients(self, tape: ForwardTape, labels: np.ndarray, params: Params,
                        scale: float) -> tuple[Params, np.ndarray]:
        """Head gradients plus the gradient w.r.t. every per-window state ``(B, K, N, H)``."""
        batch = labels.shape[0]
        d_logits = scale * (tape.probs - one_hot(labels, self.config.num_classes)) / batch
        dw_out, db_out, d_flat = head_backward(d_logits, tape.flat, params["w_out"])
        d_pooled = d_flat.reshape(tape.pooled.shape)
        d_states = pool_backward(d_pooled, tape.states.shape[1], self.config.pooling, tape.pool_index)
        return {"w_out": dw_out, "b_out": db_out}, d_states


def _blank_tape(windows: np.ndarray, laplacians: np.ndarray) -> ForwardTape:
    empty = np.empty(0)
    return ForwardTape(windows=windows, laplacians=laplacians, probs=empty, logits=empty, flat=empty)


class STGCN(Network):
    """GCN feature extractor per window, chained through a shared graph GRU."""

    kind = "stgcn"

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        f, h, n = self.config.input_dim, self.config.hidden_dim, self.config.num_nodes
        return {
            "theta0": (f, h),
            "theta1": (h, h),
            "theta_r": (2 * h, h),
            "theta_u": (2 * h, h),
            "theta_c": (2 * h, h),
            "b_r": (h,),
            "b_u": (h,),
            "b_c": (h,),
            "w_out": (n * h, self.config.num_classes),
            "b_out": (self.config.num_classes,),
        }

    def forward_batch(self, windows: np.ndarray, laplacians: np.ndarray, params: Params) -> ForwardTape:
        self.check_inputs(windows, laplacians)
        outer = self.config.gcn_output_activation
        tape = _blank_tape(windows, laplacians)
        h = np.zeros(windows.shape[:1] + (self.config.num_nodes, self.config.hidden_dim), dtype=DTYPE)
        states = []
        for t in range(windows.shape[1]):
            f, gcn_cache = gcn_forward(windows[:, t], laplacians[:, t], params["theta0"], params["theta1"], outer)
            h, gru_cache = gru_forward(f, h, params)
            tape.gcn.append(gcn_cache)
            tape.gru.append(gru_cache)
            states.append(h)
        return self._pool_and_classify(tape, np.stack(states, axis=1), params)

    def backward_batch(self, tape: ForwardTape, labels: np.ndarray, params: Params,
                       scale: float = 1.0) -> Params:
        outer = self.config.gcn_output_activation
        grads = {name: np.zeros_like(value) for name, value in params.items()}
        head, d_states = self._head_gradients(tape, labels, params, scale)
        grads.update(head)

        # backpropagation through time, last window first
        dh_next = np.zeros_like(d_states[:, 0])
        for t in reversed(range(d_states.shape[1])):
            dh = d_states[:, t] + dh_next
            df, dh_next, gate_grads = gru_backward(dh, tape.gru[t], params)
            for name in GRU_BLOCKS:
                grads[name] += gate_grads[name]
            d_theta0, d_theta1 = gcn_backward(df, tape.laplacians[:, t], tape.gcn[t], params["theta1"], outer)
            grads["theta0"] += d_theta0
            grads["theta1"] += d_theta1
        return grads


# ---------------------------------------------------------------------------
# Functional surface
# ---------------------------------------------------------------------------

def gcn(x: np.ndarray, laplacian: np.ndarray, params: Params, config: ModelConfig) -> np.ndarray:
    """The two-layer GCN of one window, ``(N, F) -> (N, hidden)``."""
    out, _ = gcn_forward(x, laplacian, params["theta0"], params["theta1"], config.gcn_output_activation)
    return out


def gru_cell(f_t: np.ndarray, h_prev: np.ndarray, params: Params) -> tuple[np.ndarray, GruCache]:
    """One graph-GRU step; ``h_prev`` is zero for the first window."""
    return gru_forward(f_t, h_prev, params)


def forward(sample: Any, params: Params, config: ModelConfig) -> tuple[np.ndarray, ForwardTape]:
    """Class probabilities ``[P(low), P(high)]`` for one sample, plus the tape."""
    return STGCN(config).forward(sample, params)


def loss(probs: np.ndarray, label: int) -> float:
    """``-log probs[label]``."""
    logits = np.log(np.maximum(np.asarray(probs, dtype=DTYPE), np.finfo(DTYPE).tiny))
    return softmax_cross_entropy(logits, label)[0]


def backward(tape: ForwardTape, label: int, params: Params, config: ModelConfig,
             scale: float = 1.0) -> Params:
    return STGCN(config).backward(tape, label, params, scale)


def predict(sample: Any, params: Params, config: ModelConfig) -> tuple[int, float]:
    """Predicted label and P(high); ties go to class 0 (low performance)."""
    return STGCN(config).predict(sample, params)
