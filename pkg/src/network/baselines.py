"""Ablation networks sharing the ST-GCN trainer, head and metric interfaces."""

from typing import Any, Literal

import numpy as np

from src.models import ModelConfig
from src.network.layers import (
    GRU_BLOCKS,
    bias_sum,
    gcn_backward,
    gcn_forward,
    gru_backward,
    gru_forward,
    head_backward,
    head_forward,
    outer_sum,
)
from src.network.numerics import DTYPE, Params, matmul, one_hot, relu
from src.network.stgcn import STGCN, ForwardTape, Network, _blank_tape

BaselineKind = Literal["fnn", "gcn_only", "gru_only"]


class FNN(Network):
    """Two ReLU hidden layers over the flattened sample (windows x nodes x features)."""

    kind = "fnn"

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        cfg = self.config
        width = cfg.num_windows * cfg.num_nodes * cfg.input_dim
        h = cfg.hidden_dim
        return {
            "w1": (width, h),
            "b1": (h,),
            "w2": (h, h),
            "b2": (h,),
            "w_out": (h, cfg.num_classes),
            "b_out": (cfg.num_classes,),
        }

    def forward_batch(self, windows: np.ndarray, laplacians: np.ndarray, params: Params) -> ForwardTape:
        self.check_inputs(windows, laplacians)
        tape = _blank_tape(windows, laplacians)
        x = windows.reshape(windows.shape[0], -1)
        p1 = matmul(x, params["w1"]) + params["b1"]
        z1 = relu(p1)
        p2 = matmul(z1, params["w2"]) + params["b2"]
        z2 = relu(p2)
        tape.flat, tape.logits, tape.probs = head_forward(z2, params["w_out"], params["b_out"])
        tape.extra.update(x=x, p1=p1, z1=z1, p2=p2)
        return tape

    def backward_batch(self, tape: ForwardTape, labels: np.ndarray, params: Params,
                       scale: float = 1.0) -> Params:
        d_logits = scale * (tape.probs - one_hot(labels, self.config.num_classes)) / labels.shape[0]
        dw_out, db_out, dz2 = head_backward(d_logits, tape.flat, params["w_out"])
        dp2 = dz2 * (tape.extra["p2"] > 0.0)
        dz1 = dp2 @ params["w2"].T
        dp1 = dz1 * (tape.extra["p1"] > 0.0)
        return {
            "w1": tape.extra["x"].T @ dp1,
            "b1": dp1.sum(axis=0),
            "w2": tape.extra["z1"].T @ dp2,
            "b2": dp2.sum(axis=0),
            "w_out": dw_out,
            "b_out": db_out,
        }


class GCNOnly(Network):
    """Per-window GCN features pooled over windows; no recurrence."""

    kind = "gcn_only"

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        f, h, n = self.config.input_dim, self.config.hidden_dim, self.config.num_nodes
        return {
            "theta0": (f, h),
            "theta1": (h, h),
            "w_out": (n * h, self.config.num_classes),
            "b_out": (self.config.num_classes,),
        }

    def forward_batch(self, windows: np.ndarray, laplacians: np.ndarray, params: Params) -> ForwardTape:
        self.check_inputs(windows, laplacians)
        outer = self.config.gcn_output_activation
        tape = _blank_tape(windows, laplacians)
        features = []
        for t in range(windows.shape[1]):
            f, cache = gcn_forward(windows[:, t], laplacians[:, t], params["theta0"], params["theta1"], outer)
            tape.gcn.append(cache)
            features.append(f)
        return self._pool_and_classify(tape, np.stack(features, axis=1), params)

    def backward_batch(self, tape: ForwardTape, labels: np.ndarray, params: Params,
                       scale: float = 1.0) -> Params:
        outer = self.config.gcn_output_activation
        grads, d_states = self._head_gradients(tape, labels, params, scale)
        grads["theta0"] = np.zeros_like(params["theta0"])
        grads["theta1"] = np.zeros_like(params["theta1"])
        for t in range(d_states.shape[1]):
            d_theta0, d_theta1 = gcn_backward(d_states[:, t], tape.laplacians[:, t], tape.gcn[t],
                                              params["theta1"], outer)
            grads["theta0"] += d_theta0
            grads["theta1"] += d_theta1
        return grads


class GRUOnly(Network):
    """A per-node linear map replaces the GCN; the GRU chain, pooling and head are ST-GCN's."""

    kind = "gru_only"

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        f, h = self.config.input_dim, self.config.hidden_dim
        shapes = {"w_in": (f, h), "b_in": (h,)}
        recurrent = STGCN(self.config).param_shapes()
        shapes.update({name: recurrent[name] for name in GRU_BLOCKS + ("w_out", "b_out")})
        return shapes

    def forward_batch(self, windows: np.ndarray, laplacians: np.ndarray, params: Params) -> ForwardTape:
        self.check_inputs(windows, laplacians)
        tape = _blank_tape(windows, laplacians)
        h = np.zeros(windows.shape[:1] + (self.config.num_nodes, self.config.hidden_dim), dtype=DTYPE)
        states = []
        for t in range(windows.shape[1]):
            f = matmul(windows[:, t], params["w_in"]) + params["b_in"]
            h, cache = gru_forward(f, h, params)
            tape.gru.append(cache)
            states.append(h)
        return self._pool_and_classify(tape, np.stack(states, axis=1), params)

    def backward_batch(self, tape: ForwardTape, labels: np.ndarray, params: Params,
                       scale: float = 1.0) -> Params:
        grads = {name: np.zeros_like(value) for name, value in params.items()}
        head, d_states = self._head_gradients(tape, labels, params, scale)
        grads.update(head)
        dh_next = np.zeros_like(d_states[:, 0])
        for t in reversed(range(d_states.shape[1])):
            df, dh_next, gate_grads = gru_backward(d_states[:, t] + dh_next, tape.gru[t], params)
            for name in GRU_BLOCKS:
                grads[name] += gate_grads[name]
            grads["w_in"] += outer_sum(tape.windows[:, t], df)
            grads["b_in"] += bias_sum(df)
        return grads


NETWORKS: dict[str, type[Network]] = {
    "stgcn": STGCN,
    "fnn": FNN,
    "gcn_only": GCNOnly,
    "gru_only": GRUOnly,
}


def build_network(kind: str, config: ModelConfig) -> Network:
    """Instantiate the network registered under ``kind``."""
    try:
        return NETWORKS[kind](config)
    except KeyError:
        raise ValueError(f"unknown model kind '{kind}', expected one of {sorted(NETWORKS)}") from None


def baseline_forward(kind: BaselineKind, sample: Any, params: Params, config: ModelConfig) -> np.ndarray:
    """Class probabilities of one sample under a baseline network."""
    probs, _ = build_network(kind, config).forward(sample, params)
    return probs
