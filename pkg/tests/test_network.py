import numpy as np
import pytest

from src.data.pipeline import Sample, segment_and_window
from src.errors import ShapeError
from src.models import ModelConfig, PipelineConfig
from src.network.gradcheck import check_gradients, run_suite
from src.network.layers import gcn_forward, gru_forward
from src.network.numerics import make_rng
from src.network.stgcn import STGCN, backward, forward, gcn, gru_cell, loss, predict
from tests.conftest import make_trace, random_sample


def _zero_params(config):
    return STGCN(config).zero_params()


def test_gcn_with_zero_weights(small_config):
    params = _zero_params(small_config)
    x = make_rng(0).normal(size=(3, small_config.input_dim))
    lap = np.eye(3)
    assert np.array_equal(gcn(x, lap, params, small_config), np.full((3, small_config.hidden_dim), 0.5))
    relu_cfg = small_config.model_copy(update={"gcn_output_activation": "relu"})
    assert np.array_equal(gcn(x, lap, params, relu_cfg), np.zeros((3, small_config.hidden_dim)))


def test_gcn_permutation_equivariance(small_config):
    rng = make_rng(1)
    params = STGCN(small_config).init_params()
    x = rng.normal(size=(3, small_config.input_dim))
    sample = random_sample(small_config, 1)
    lap = sample.laplacians[0]
    perm = np.eye(3)[[1, 2, 0]]
    left = gcn(perm @ x, perm @ lap @ perm.T, params, small_config)
    right = perm @ gcn(x, lap, params, small_config)
    assert np.allclose(left, right, atol=1e-9)


def test_gru_gate_extremes(small_config):
    h = small_config.hidden_dim
    rng = make_rng(2)
    f, h_prev = rng.normal(size=(3, h)), rng.normal(size=(3, h))
    params = _zero_params(small_config)

    params["b_u"] = np.full(h, 1e3)  # u saturates to exactly 1
    h_t, _ = gru_cell(f, h_prev, params)
    assert np.array_equal(h_t, h_prev)

    params["b_u"] = np.full(h, -1e3)  # u == 0
    params["theta_c"] = rng.normal(size=(2 * h, h))
    h_t, cache = gru_cell(f, h_prev, params)
    assert np.array_equal(h_t, cache.c)


def test_gru_all_zero(small_config):
    h = small_config.hidden_dim
    h_t, cache = gru_cell(np.zeros((3, h)), np.zeros((3, h)), _zero_params(small_config))
    assert np.all(cache.r == 0.5) and np.all(cache.u == 0.5)
    assert np.all(cache.c == 0.0) and np.all(h_t == 0.0)


def test_zero_weights_give_uniform_probs_and_low_label(small_config):
    sample = random_sample(small_config, 3)
    params = _zero_params(small_config)
    probs, _ = forward(sample, params, small_config)
    assert probs.tolist() == [0.5, 0.5]
    assert predict(sample, params, small_config) == (0, 0.5)


def test_probabilities_normalized(small_config):
    params = STGCN(small_config).init_params()
    for seed in range(5):
        probs, _ = forward(random_sample(small_config, seed), params, small_config)
        assert abs(probs.sum() - 1.0) <= 1e-12


def test_pooling_is_mean_of_hidden_states(small_config):
    sample = random_sample(small_config, 4)
    params = STGCN(small_config).init_params()
    _, tape = forward(sample, params, small_config)

    h = np.zeros((3, small_config.hidden_dim))
    states = []
    for t in range(small_config.num_windows):
        f, _ = gcn_forward(sample.windows[t], sample.laplacians[t], params["theta0"], params["theta1"])
        h, _ = gru_forward(f, h, params)
        states.append(h)
    assert np.allclose(tape.pooled[0], np.mean(states, axis=0), atol=1e-12)


def test_identical_windows_pool_to_chain_mean(small_config):
    base = random_sample(small_config, 5)
    k = small_config.num_windows
    sample = Sample(np.repeat(base.windows[:1], k, axis=0), (base.snapshots[0],) * k, 0, 0.0, "copies")
    params = STGCN(small_config).init_params()
    _, tape = forward(sample, params, small_config)
    assert np.allclose(tape.pooled[0], tape.states[0].mean(axis=0), atol=1e-12)


def test_pooling_over_all_windows_matters(small_config):
    sample = random_sample(small_config, 6)
    params = STGCN(small_config).init_params()
    probs, tape = forward(sample, params, small_config)
    first_only = tape.states[0, 0].reshape(1, -1) @ params["w_out"] + params["b_out"]
    assert not np.allclose(tape.logits[0], first_only[0])


def test_wrong_window_count(small_config):
    sample = random_sample(small_config.model_copy(update={"num_windows": 3}), 0)
    with pytest.raises(ShapeError):
        forward(sample, STGCN(small_config).init_params(), small_config)


def test_loss_matches_negative_log(small_config):
    assert loss(np.array([0.25, 0.75]), 1) == pytest.approx(-np.log(0.75), rel=1e-12)


def test_backward_at_zero_point():
    config = ModelConfig(input_dim=3, hidden_dim=4, num_windows=3, gcn_output_activation="relu")
    sample = Sample(np.zeros((3, 3, 3)), random_sample(config, 0).snapshots, 1, 0.0, "zero")
    params = STGCN(config).zero_params()
    _, tape = forward(sample, params, config)
    grads = backward(tape, 1, params, config)
    assert grads["b_out"].tolist() == [0.5, -0.5]
    assert not np.any(grads["theta0"]) and not np.any(grads["theta1"])


def test_scaled_loss_scales_gradients(small_config):
    sample = random_sample(small_config, 7, label=1)
    params = STGCN(small_config).init_params()
    _, tape = forward(sample, params, small_config)
    once = backward(tape, 1, params, small_config)
    twice = backward(tape, 1, params, small_config, scale=2.0)
    for name in params:
        assert np.allclose(twice[name], 2.0 * once[name], rtol=1e-12, atol=0.0)


@pytest.mark.parametrize("seed", range(5))
def test_stgcn_gradients_match_finite_differences(seed):
    result = check_gradients("stgcn", ModelConfig(hidden_dim=6, num_windows=4), seed)
    assert result.max_error < 1e-4, result.block_errors


def test_stgcn_gradients_with_max_pooling():
    config = ModelConfig(hidden_dim=5, num_windows=3, pooling="max")
    result = check_gradients("stgcn", config, 11)
    assert result.max_error < 1e-4, result.block_errors


def test_suite_covers_every_kind():
    results = run_suite([0], ModelConfig(hidden_dim=4, num_windows=3))
    assert {r.model_kind for r in results} == {"stgcn", "fnn", "gcn_only", "gru_only"}
    assert all(r.passed for r in results)


def test_prediction_invariant_to_translation_without_trajectory_features():
    cfg = PipelineConfig(features="fov_only")
    model_cfg = ModelConfig(input_dim=1, hidden_dim=6)
    params = STGCN(model_cfg).init_params()
    here = segment_and_window(make_trace(60), cfg)
    there = segment_and_window(make_trace(60, offset=(17.0, -4.0)), cfg)
    for a, b in zip(here, there):
        pa, pb = predict(a, params, model_cfg), predict(b, params, model_cfg)
        assert pa[0] == pb[0]
        assert pa[1] == pytest.approx(pb[1], abs=1e-9)
