"""Dense linear algebra helpers, activations, Adam and a finite-difference oracle.

Every array in the network is a float64 numpy array. Parameters travel as an
ordered ``dict[str, np.ndarray]`` (a "parameter block" per key), which is the
layout the optimizer, the checkpoint codec and the gradient oracle all share.
"""

import zlib
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional

import numpy as np

from src.errors import DivergenceError, ShapeError

Matrix = np.ndarray
Params = dict[str, np.ndarray]
Activation = Literal["sigmoid", "relu", "tanh"]

DTYPE = np.float64


def as_matrix(data, rows: Optional[int] = None, cols: Optional[int] = None) -> Matrix:
    """Convert ``data`` to a finite 2-D float64 array, checking the shape if given."""
    m = np.asarray(data, dtype=DTYPE)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    if (rows is not None and m.shape[0] != rows) or (cols is not None and m.shape[1] != cols):
        raise ShapeError(f"expected shape ({rows}, {cols}), got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ShapeError("matrix contains non-finite entries")
    return m


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product ``a @ b``; leading batch axes broadcast as in numpy.

    Raises:
        ShapeError: if the inner dimensions differ. The message names both shapes.
        DivergenceError: if the product has a NaN or infinite entry.
    """
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}")
    out = np.matmul(a, b)
    if not np.all(np.isfinite(out)):
        raise DivergenceError(f"non-finite product of shapes {a.shape} and {b.shape}")
    return out


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form is overflow free and gives sigmoid(x) + sigmoid(-x) == 1 to rounding
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=DTYPE)))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=DTYPE), 0.0)


_ACTIVATIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sigmoid": sigmoid,
    "relu": relu,
    "tanh": lambda x: np.tanh(np.asarray(x, dtype=DTYPE)),
}


def apply_activation(m: np.ndarray, kind: Activation) -> np.ndarray:
    """Apply ``kind`` elementwise and return a new array."""
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation '{kind}'") from None
    return fn(m)


def activation_derivative(output: np.ndarray, pre_activation: np.ndarray, kind: Activation) -> np.ndarray:
    """Derivative of ``kind`` expressed through its output (and pre-activation for relu)."""
    if kind == "sigmoid":
        return output * (1.0 - output)
    if kind == "tanh":
        return 1.0 - output * output
    if kind == "relu":
        return (pre_activation > 0.0).astype(DTYPE)
    raise ValueError(f"unknown activation '{kind}'")


def softmax(logits: np.ndarray) -> np.ndarray:
    """Softmax over the last axis with max subtraction."""
    z = np.asarray(logits, dtype=DTYPE)
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=DTYPE)
    z = z - np.max(z, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def softmax_cross_entropy(logits: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Cross-entropy of a single 2-class logit vector against a class index.

    Args:
        logits: Vector of 2 finite logits.
        label: Class index, 0 or 1.

    Returns:
        ``(loss, probs)`` where ``loss = -log(probs[label]) >= 0``.
    """
    logits = np.asarray(logits, dtype=DTYPE).reshape(-1)
    if label not in (0, 1) or logits.shape[0] != 2:
        raise ValueError(f"expected 2 logits and label in {{0, 1}}, got {logits.shape[0]} and {label}")
    log_probs = log_softmax(logits)
    loss = max(float(-log_probs[label]), 0.0)
    return loss, softmax(logits)


def batch_cross_entropy(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-sample ``-log p[label]`` for a ``(B, 2)`` probability array."""
    picked = probs[np.arange(len(labels)), labels]
    return -np.log(np.maximum(picked, np.finfo(DTYPE).tiny))


def one_hot(labels: np.ndarray, num_classes: int = 2) -> np.ndarray:
    out = np.zeros((len(labels), num_classes), dtype=DTYPE)
    out[np.arange(len(labels)), labels] = 1.0
    return out


# ---------------------------------------------------------------------------
# Randomness
# ---------------------------------------------------------------------------

def make_rng(seed: int, *stream: object) -> np.random.Generator:
    """Return a PCG64 generator for ``seed``, optionally on a named sub-stream.

    Sub-streams are derived with ``numpy.random.SeedSequence``: each element
    of ``stream`` becomes a spawn-key word (strings via CRC-32, integers as is),
    so ``make_rng(7, "init")`` and ``make_rng(7, "shuffle")`` are independent
    yet both fully determined by the seed 7.
    """
    key = tuple(
        zlib.crc32(part.encode("utf-8")) if isinstance(part, str) else int(part)
        for part in stream
    )
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=int(seed), spawn_key=key)))


def derive_seed(seed: int, *stream: object) -> int:
    """A 63-bit integer seed for a named sub-stream of ``seed``."""
    return int(make_rng(seed, *stream).integers(0, 2**63 - 1))


def glorot_init(rows: int, cols: int, rng: np.random.Generator) -> Matrix:
    """Uniform Glorot initialization in ``±sqrt(6 / (rows + cols))``."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"glorot_init needs positive dimensions, got ({rows}, {cols})")
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols)).astype(DTYPE)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdamState:
    """Moment estimates for every parameter block plus the step counter."""

    first_moment: Params = field(default_factory=dict)
    second_moment: Params = field(default_factory=dict)
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: Params, beta1: float = 0.9, beta2: float = 0.999,
                   epsilon: float = 1e-8) -> "AdamState":
        return cls(
            first_moment={k: np.zeros_like(v) for k, v in params.items()},
            second_moment={k: np.zeros_like(v) for k, v in params.items()},
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        )


def adam_step(params: Params, grads: Params, state: AdamState, lr: float) -> tuple[Params, AdamState]:
    """One bias-corrected Adam update. Inputs are left untouched.

    Raises:
        ShapeError: if a gradient or moment block does not match its parameter.
    """
    if set(grads) != set(params) or set(state.first_moment) != set(params):
        raise ShapeError(
            f"parameter blocks {sorted(params)} do not match gradients {sorted(grads)}"
        )
    step = state.step_count + 1
    bias1 = 1.0 - state.beta1 ** step
    bias2 = 1.0 - state.beta2 ** step

    new_params: Params = {}
    new_m: Params = {}
    new_v: Params = {}
    for name, value in params.items():
        g = grads[name]
        if g.shape != value.shape or state.first_moment[name].shape != value.shape:
            raise ShapeError(f"block '{name}': parameter {value.shape}, gradient {g.shape}")
        m = state.beta1 * state.first_moment[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.second_moment[name] + (1.0 - state.beta2) * (g * g)
        m_hat = m / bias1
        v_hat = v / bias2
        new_params[name] = value - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
        new_m[name] = m
        new_v[name] = v

    new_state = AdamState(new_m, new_v, step, state.beta1, state.beta2, state.epsilon)
    return new_params, new_state


# ---------------------------------------------------------------------------
# Gradient oracle
# ---------------------------------------------------------------------------

def finite_difference_gradient(loss_fn: Callable[[Params], float], params: Params,
                               eps: float = 1e-5) -> Params:
    """Central-difference gradient of ``loss_fn`` for every scalar parameter."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    work = {k: np.array(v, dtype=DTYPE, copy=True) for k, v in params.items()}
    grads: Params = {}
    for name, block in work.items():
        grad = np.zeros_like(block)
        flat = block.reshape(-1)
        grad_flat = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            plus = loss_fn(work)
            flat[i] = original - eps
            minus = loss_fn(work)
            flat[i] = original
            grad_flat[i] = (plus - minus) / (2.0 * eps)
        grads[name] = grad
    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / max(||a|| + ||n||, 1e-12)``; zero when both are exactly zero."""
    diff = float(np.linalg.norm(analytic - numeric))
    scale = float(np.linalg.norm(analytic) + np.linalg.norm(numeric))
    if diff == 0.0:
        return 0.0
    return diff / max(scale, 1e-12)


def global_norm(grads: Params) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def all_finite(params: Params) -> bool:
    return all(bool(np.all(np.isfinite(v))) for v in params.values())
