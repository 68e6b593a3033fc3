"""Forward and backward passes of the building blocks shared by all networks.

All functions work on batched arrays: node features ``(B, N, F)``, operators
``(B, N, N)``, hidden states ``(B, N, H)``. Unbatched ``(N, F)`` inputs work too
because numpy's matmul broadcasts the leading axes.
"""

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from src.errors import ShapeError
from src.network.numerics import (
    DTYPE,
    Params,
    activation_derivative,
    apply_activation,
    matmul,
    relu,
    sigmoid,
    softmax,
)

GRU_BLOCKS = ("theta_r", "theta_u", "theta_c", "b_r", "b_u", "b_c")


def outer_sum(inputs: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Weight gradient ``sum over rows of inputs^T @ grad_out`` for shared weights."""
    return inputs.reshape(-1, inputs.shape[-1]).T @ grad_out.reshape(-1, grad_out.shape[-1])


def bias_sum(grad_out: np.ndarray) -> np.ndarray:
    return grad_out.reshape(-1, grad_out.shape[-1]).sum(axis=0)


# ---------------------------------------------------------------------------
# Two-layer GCN
# ---------------------------------------------------------------------------

@dataclass
class GcnCache:
    ax: np.ndarray
    p1: np.ndarray
    z1: np.ndarray
    az: np.ndarray
    p2: np.ndarray
    out: np.ndarray


def gcn_forward(x: np.ndarray, laplacian: np.ndarray, theta0: np.ndarray, theta1: np.ndarray,
                outer: Literal["sigmoid", "relu"] = "sigmoid") -> tuple[np.ndarray, GcnCache]:
    """``outer(Â · ReLU(Â · X · Θ0) · Θ1)``; no bias terms."""
    if laplacian.shape[-1] != x.shape[-2]:
        raise ShapeError(f"operator {laplacian.shape} does not match node features {x.shape}")
    ax = matmul(laplacian, x)
    p1 = matmul(ax, theta0)
    z1 = relu(p1)
    az = matmul(laplacian, z1)
    p2 = matmul(az, theta1)
    out = apply_activation(p2, outer)
    return out, GcnCache(ax, p1, z1, az, p2, out)


def gcn_backward(d_out: np.ndarray, laplacian: np.ndarray, cache: GcnCache, theta1: np.ndarray,
                 outer: Literal["sigmoid", "relu"] = "sigmoid") -> tuple[np.ndarray, np.ndarray]:
    """Gradients ``(dΘ0, dΘ1)`` given the gradient of the GCN output."""
    dp2 = d_out * activation_derivative(cache.out, cache.p2, outer)
    d_theta1 = outer_sum(cache.az, dp2)
    dz1 = np.matmul(np.swapaxes(laplacian, -1, -2), dp2 @ theta1.T)
    dp1 = dz1 * (cache.p1 > 0.0)
    d_theta0 = outer_sum(cache.ax, dp1)
    return d_theta0, d_theta1


# ---------------------------------------------------------------------------
# Graph GRU cell (per node, weights shared across nodes)
# ---------------------------------------------------------------------------

@dataclass
class GruCache:
    h_prev: np.ndarray
    gate_input: np.ndarray
    r: np.ndarray
    u: np.ndarray
    candidate_input: np.ndarray
    c: np.ndarray


def gru_forward(f: np.ndarray, h_prev: np.ndarray, params: Params) -> tuple[np.ndarray, GruCache]:
    """One step: reset/update gates, candidate state and the gated blend."""
    if f.shape[:-1] != h_prev.shape[:-1]:
        raise ShapeError(f"input {f.shape} and hidden state {h_prev.shape} disagree")
    gate_input = np.concatenate([f, h_prev], axis=-1)
    r = sigmoid(matmul(gate_input, params["theta_r"]) + params["b_r"])
    u = sigmoid(matmul(gate_input, params["theta_u"]) + params["b_u"])
    candidate_input = np.concatenate([f, r * h_prev], axis=-1)
    c = np.tanh(matmul(candidate_input, params["theta_c"]) + params["b_c"])
    h = u * h_prev + (1.0 - u) * c
    return h, GruCache(h_prev, gate_input, r, u, candidate_input, c)


def gru_backward(dh: np.ndarray, cache: GruCache, params: Params) -> tuple[np.ndarray, np.ndarray, Params]:
    """Returns ``(df, dh_prev, gate gradients)`` for one step."""
    width = cache.gate_input.shape[-1] - cache.h_prev.shape[-1]
    u, r, c, h_prev = cache.u, cache.r, cache.c, cache.h_prev

    dc = dh * (1.0 - u)
    du = dh * (h_prev - c)
    dh_prev = dh * u

    da_c = dc * (1.0 - c * c)
    d_candidate = da_c @ params["theta_c"].T
    df = d_candidate[..., :width]
    d_rh = d_candidate[..., width:]
    dh_prev = dh_prev + d_rh * r

    da_r = d_rh * h_prev * r * (1.0 - r)
    da_u = du * u * (1.0 - u)
    d_gate = da_r @ params["theta_r"].T + da_u @ params["theta_u"].T
    df = df + d_gate[..., :width]
    dh_prev = dh_prev + d_gate[..., width:]

    grads = {
        "theta_r": outer_sum(cache.gate_input, da_r),
        "theta_u": outer_sum(cache.gate_input, da_u),
        "theta_c": outer_sum(cache.candidate_input, da_c),
        "b_r": bias_sum(da_r),
        "b_u": bias_sum(da_u),
        "b_c": bias_sum(da_c),
    }
    return df, dh_prev, grads


# ---------------------------------------------------------------------------
# Global pooling over windows and the classifier head
# ---------------------------------------------------------------------------

def pool_forward(states: np.ndarray, mode: Literal["mean", "max"] = "mean") -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Pool ``(B, K, N, H)`` over the window axis. Max also returns arg-max indices."""
    if mode == "mean":
        return states.mean(axis=1), None
    index = np.argmax(states, axis=1)
    return np.take_along_axis(states, index[:, None], axis=1)[:, 0], index


def pool_backward(d_pooled: np.ndarray, num_windows: int, mode: Literal["mean", "max"] = "mean",
                  index: Optional[np.ndarray] = None) -> np.ndarray:
    """Distribute the pooled gradient back to ``(B, K, N, H)``."""
    if mode == "mean":
        return np.repeat(d_pooled[:, None] / num_windows, num_windows, axis=1)
    d_states = np.zeros((d_pooled.shape[0], num_windows) + d_pooled.shape[1:], dtype=DTYPE)
    np.put_along_axis(d_states, index[:, None], d_pooled[:, None], axis=1)
    return d_states


def head_forward(features: np.ndarray, w_out: np.ndarray, b_out: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flatten node-major, apply the linear layer and softmax. Returns (flat, logits, probs)."""
    flat = features.reshape(features.shape[0], -1)
    logits = matmul(flat, w_out) + b_out
    return flat, logits, softmax(logits)


def head_backward(d_logits: np.ndarray, flat: np.ndarray, w_out: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns ``(dw_out, db_out, d_flat)``."""
    return flat.T @ d_logits, d_logits.sum(axis=0), d_logits @ w_out.T
