import numpy as np
import pytest

from driftguard.data import EmbeddingDataset
from driftguard.errors import DataError, FormatError, TrainingError
from driftguard.projector import (
    Layer,
    OptimizerState,
    ProjectionNetwork,
    backward,
    forward,
    init_network,
    load_network,
    save_network,
    set_center,
    sgd_step,
    zero_gradients,
)
from helpers import fd_gradient, max_rel_err


def small_net(seed=0):
    return init_network(5, [7], 3, seed=seed)


# --- init

def test_no_hidden_dims_gives_single_affine():
    net = init_network(4, [], 2, seed=0)
    assert len(net.layers) == 1
    assert net.layers[0].activation == "identity"


def test_init_deterministic():
    a, b = small_net(3), small_net(3)
    for la, lb in zip(a.layers, b.layers):
        assert np.array_equal(la.weight, lb.weight)


def test_fan_in_variance_scaling():
    net = init_network(512, [512], 8, seed=1)
    w = net.layers[1].weight  # fan_in 512
    expected = 1.0 / (3.0 * 512)  # variance of U(-1/sqrt(fan_in), 1/sqrt(fan_in))
    assert abs(w.var() - expected) / expected < 0.2


def test_biases_start_zero_and_optional():
    net = small_net()
    assert np.all(net.layers[0].bias == 0)
    nb = init_network(5, [7], 3, seed=0, bias=False)
    assert nb.layers[0].bias is None


# --- forward

def test_zero_network_maps_to_zero():
    net = small_net()
    for l in net.layers:
        l.weight[:] = 0
    out = forward(net, np.ones((4, 5)))
    assert np.all(out == 0)


def test_identity_single_layer():
    net = ProjectionNetwork([Layer(np.eye(3), np.zeros(3), "identity")])
    x = np.random.default_rng(0).standard_normal((6, 3))
    assert np.allclose(forward(net, x), x)


def test_forward_matches_straightforward_recomputation():
    net = small_net(2)
    rng = np.random.default_rng(5)
    x = rng.standard_normal((9, 5))
    got = forward(net, x)
    h = np.tanh(x @ net.layers[0].weight.T + net.layers[0].bias)
    want = h @ net.layers[1].weight.T + net.layers[1].bias
    assert np.max(np.abs(got - want)) < 1e-12


def test_forward_shape_and_finite_checks():
    net = small_net()
    with pytest.raises(DataError):
        forward(net, np.ones((2, 4)))
    bad = np.ones((2, 5))
    bad[0, 0] = np.inf
    with pytest.raises(DataError):
        forward(net, bad)


def test_forward_bounded_inputs_no_overflow():
    net = small_net()
    for l in net.layers:
        l.weight[:] = 10.0
        l.bias[:] = 10.0
    out = forward(net, np.full((3, 5), 10.0))
    assert np.all(np.isfinite(out))


# --- backward

def test_zero_upstream_gives_zero_grads():
    net = small_net()
    x = np.ones((4, 5))
    _, cache = forward(net, x, want_cache=True)
    g = backward(net, cache, np.zeros((4, 3)))
    assert all(np.all(w == 0) for w in g.weights)


def test_bias_grad_of_sum_loss_single_affine():
    net = init_network(4, [], 2, seed=0)
    x = np.random.default_rng(1).standard_normal((6, 4))
    _, cache = forward(net, x, want_cache=True)
    g = backward(net, cache, np.ones((6, 2)))  # L = sum of outputs
    assert np.allclose(g.biases[0], 6.0)


def test_param_gradients_match_finite_differences():
    net = small_net(7)
    rng = np.random.default_rng(8)
    x = rng.standard_normal((4, 5))
    target = rng.standard_normal((4, 3))

    def loss_fn():
        out = forward(net, x)
        return float(np.sum((out - target) ** 2))

    out, cache = forward(net, x, want_cache=True)
    grads = backward(net, cache, 2.0 * (out - target))
    h = 1e-4
    for li, layer in enumerate(net.layers):
        for arr, got in ((layer.weight, grads.weights[li]), (layer.bias, grads.biases[li])):
            num = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = orig + h
                up = loss_fn()
                arr[idx] = orig - h
                dn = loss_fn()
                arr[idx] = orig
                num[idx] = (up - dn) / (2 * h)
            assert max_rel_err(got, num, floor=1e-6) < 1e-4


def test_stale_cache_rejected():
    net = small_net()
    x = np.ones((2, 5))
    _, cache = forward(net, x, want_cache=True)
    opt = OptimizerState(base_lr=0.1, total_steps=10)
    sgd_step(net, zero_gradients(net), opt)
    with pytest.raises(TrainingError):
        backward(net, cache, np.zeros((2, 3)))


# --- optimizer

def test_zero_grads_zero_decay_is_noop():
    net = small_net()
    before = [l.weight.copy() for l in net.layers]
    sgd_step(net, zero_gradients(net), OptimizerState(base_lr=0.5, total_steps=4))
    for b, l in zip(before, net.layers):
        assert np.array_equal(b, l.weight)


def test_single_step_delta_equals_minus_lr_grad():
    net = small_net()
    before = [l.weight.copy() for l in net.layers]
    grads = zero_gradients(net)
    grads.weights[0][:] = 2.0
    opt = OptimizerState(base_lr=0.25, total_steps=10)
    sgd_step(net, grads, opt)
    assert np.allclose(net.layers[0].weight, before[0] - 0.25 * 2.0)
    assert opt.step_count == 1


def test_cosine_schedule_endpoints_and_midpoint():
    opt = OptimizerState(base_lr=0.8, total_steps=100)
    assert opt.current_lr() == pytest.approx(0.8)
    opt.step_count = 50
    assert opt.current_lr() == pytest.approx(0.4)
    opt.step_count = 100
    assert abs(opt.current_lr()) < 1e-12


def test_weight_decay_applied():
    net = init_network(2, [], 2, seed=0)
    w0 = net.layers[0].weight.copy()
    sgd_step(net, zero_gradients(net), OptimizerState(base_lr=1.0, weight_decay=0.1, total_steps=2))
    assert np.allclose(net.layers[0].weight, w0 - 0.1 * w0)


def test_nonfinite_gradient_aborts():
    net = small_net()
    grads = zero_gradients(net)
    grads.weights[0][0, 0] = np.nan
    with pytest.raises(TrainingError):
        sgd_step(net, grads, OptimizerState(base_lr=0.1, total_steps=1))


# --- center

def test_center_single_row():
    net = small_net(4)
    ds = EmbeddingDataset(np.ones((1, 5), dtype=np.float32), [0], "source", [0])
    set_center(net, ds)
    assert np.allclose(net.center, forward(net, ds.features)[0])


def test_center_of_symmetric_pair_is_zero():
    net = ProjectionNetwork([Layer(np.eye(3), np.zeros(3), "identity")])
    v = np.array([[1.0, -2.0, 0.5]], dtype=np.float32)
    ds = EmbeddingDataset(np.concatenate([v, -v]), [0, 1], "source", [0, 0])
    set_center(net, ds)
    assert np.allclose(net.center, 0.0)


def test_center_matches_independent_mean():
    net = small_net(6)
    rng = np.random.default_rng(9)
    feats = rng.standard_normal((100, 5)).astype(np.float32)
    ds = EmbeddingDataset(feats, np.arange(100), "source", np.zeros(100, dtype=np.uint8))
    set_center(net, ds)
    outs = np.array([forward(net, feats[i : i + 1])[0] for i in range(100)])
    assert np.max(np.abs(net.center - outs.mean(axis=0))) < 1e-12


def test_center_requires_normal_only():
    net = small_net()
    ds = EmbeddingDataset(np.ones((2, 5), dtype=np.float32), [0, 1], "source", [0, 1])
    with pytest.raises(DataError):
        set_center(net, ds)


# --- checkpoints

def test_checkpoint_roundtrip(tmp_path):
    net = small_net(11)
    ds = EmbeddingDataset(np.random.default_rng(0).standard_normal((10, 5)).astype(np.float32),
                          np.arange(10), "source", np.zeros(10, dtype=np.uint8))
    set_center(net, ds)
    path = tmp_path / "net.ckpt"
    save_network(net, path, config_hash="abc123")
    back = load_network(path)
    for la, lb in zip(net.layers, back.layers):
        assert np.array_equal(la.weight.astype(np.float32), lb.weight.astype(np.float32))
        assert la.activation == lb.activation
    assert np.array_equal(net.center.astype(np.float32), back.center.astype(np.float32))
    x = np.random.default_rng(1).standard_normal((4, 5)).astype(np.float32)
    assert np.allclose(forward(net, x), forward(back, x), atol=1e-6)


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"XXXX" + b"\x00" * 10)
    with pytest.raises(FormatError):
        load_network(path)
