import numpy as np
import pytest

from sharedctl.errors import SpecMismatchError, TrainingError, WeightsFormatError
from sharedctl.neural import (
    AdamState,
    Dense,
    LSTMCell,
    Network,
    Reshape,
    Scale,
    Sigmoid,
    Softmax2D,
    Tanh,
    TransposedConv2D,
    adam_step,
    cross_entropy_map,
    load_weights,
    mse_loss,
    save_weights,
)

# ---------------------------------------------------------------------------
# Finite-difference oracle. Written before the analytic backward passes were
# trusted: every layer's backward must agree with central differences on the
# scalar projection loss f(w) = sum(proj * forward(w, x)).
# ---------------------------------------------------------------------------

H_STEP = 1e-5
REL_TOL = 1e-4


def _rel_err(analytic, numeric):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-5)
    return float(np.max(np.abs(analytic - numeric) / denom))


def numeric_weight_grads(net, weights, x, proj):
    grads = {}
    for name, arr in weights.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + H_STEP
            hi = float(np.sum(proj * net.predict(weights, x)))
            flat[idx] = orig - H_STEP
            lo = float(np.sum(proj * net.predict(weights, x)))
            flat[idx] = orig
            gflat[idx] = (hi - lo) / (2.0 * H_STEP)
        grads[name] = g
    return grads


def numeric_input_grad(net, weights, x, proj):
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + H_STEP
        hi = float(np.sum(proj * net.predict(weights, x)))
        flat[idx] = orig - H_STEP
        lo = float(np.sum(proj * net.predict(weights, x)))
        flat[idx] = orig
        gflat[idx] = (hi - lo) / (2.0 * H_STEP)
    return g


def check_gradients(net, x_shape, seed):
    rng = np.random.default_rng(seed)
    weights = net.init_weights(seed)
    x = rng.normal(0.0, 0.7, size=x_shape)
    out, caches = net.forward(weights, x)
    proj = rng.normal(size=out.shape)
    dx, grads = net.backward(weights, caches, proj)

    num_dx = numeric_input_grad(net, weights, x, proj)
    assert _rel_err(dx, num_dx) <= REL_TOL
    num_grads = numeric_weight_grads(net, weights, x, proj)
    for name in weights:
        assert _rel_err(grads[name], num_grads[name]) <= REL_TOL, name


# ---------------------------------------------------------------------------
# Per-layer gradient checks against the oracle.
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("activation", ["linear", "tanh", "sigmoid", "relu"])
@pytest.mark.parametrize("seed", [0, 1])
def test_dense_gradients(activation, seed):
    check_gradients(Network([Dense(3, 4, activation)]), (5, 3), seed)


@pytest.mark.parametrize("seed", [0, 1])
def test_lstm_gradients_length_8(seed):
    check_gradients(Network([LSTMCell(3, 4)]), (8, 3), seed)


@pytest.mark.parametrize("seed", [0, 1])
def test_tconv_gradients(seed):
    check_gradients(
        Network([TransposedConv2D(2, 3, kernel=4, stride=2, padding=1)]),
        (2, 2, 3, 3),
        seed,
    )


@pytest.mark.parametrize(
    "layer,shape",
    [
        (Softmax2D(), (2, 3, 3)),
        (Sigmoid(), (4, 3)),
        (Tanh(), (4, 3)),
        (Scale(0.4), (4, 3)),
        (Reshape((9,)), (2, 3, 3)),
    ],
)
def test_parameterless_layer_gradients(layer, shape):
    check_gradients(Network([layer]), shape, 0)


# Composed stacks mirroring the three downstream architectures, scaled down
# so the full finite-difference sweep stays fast.


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_heatmap_architecture_gradients(seed):
    net = Network(
        [
            LSTMCell(4, 6),
            Dense(6, 9),
            Reshape((1, 3, 3)),
            TransposedConv2D(1, 2),
            TransposedConv2D(2, 1),
            Reshape((12, 12)),
            Softmax2D(),
        ]
    )
    check_gradients(net, (5, 4), seed)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_velocity_architecture_gradients(seed):
    net = Network(
        [Dense(5, 8, "tanh"), Dense(8, 8, "tanh"), Dense(8, 2, "tanh"), Scale(0.4)]
    )
    check_gradients(net, (6, 5), seed)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_arbitration_architecture_gradients(seed):
    net = Network([LSTMCell(6, 5), Dense(5, 1, "sigmoid")])
    check_gradients(net, (7, 6), seed)


def test_loss_gradients_match_oracle():
    rng = np.random.default_rng(3)
    pred = rng.normal(size=(4, 3))
    target = rng.normal(size=(4, 3))
    _, grad = mse_loss(pred, target)
    num = np.zeros_like(pred)
    for idx in np.ndindex(pred.shape):
        p = pred.copy()
        p[idx] += H_STEP
        hi, _ = mse_loss(p, target)
        p[idx] -= 2 * H_STEP
        lo, _ = mse_loss(p, target)
        num[idx] = (hi - lo) / (2 * H_STEP)
    assert _rel_err(grad, num) <= REL_TOL

    prob = rng.uniform(0.05, 1.0, size=(2, 3, 3))
    prob /= prob.sum(axis=(1, 2), keepdims=True)
    tgt = rng.uniform(0.0, 1.0, size=(2, 3, 3))
    tgt /= tgt.sum(axis=(1, 2), keepdims=True)
    _, cgrad = cross_entropy_map(prob, tgt)
    cnum = np.zeros_like(prob)
    for idx in np.ndindex(prob.shape):
        p = prob.copy()
        p[idx] += H_STEP
        hi, _ = cross_entropy_map(p, tgt)
        p[idx] -= 2 * H_STEP
        lo, _ = cross_entropy_map(p, tgt)
        cnum[idx] = (hi - lo) / (2 * H_STEP)
    assert _rel_err(cgrad, cnum) <= REL_TOL


def test_masked_mse_ignores_masked_rows():
    pred = np.array([[1.0, 0.0], [5.0, 5.0]])
    target = np.zeros((2, 2))
    mask = np.array([True, False])
    loss, grad = mse_loss(pred, target, mask)
    assert loss == pytest.approx(0.5)
    assert np.all(grad[1] == 0.0)


# ---------------------------------------------------------------------------
# Forward-pass frozen values.
# ---------------------------------------------------------------------------


def test_dense_identity_passthrough():
    net = Network([Dense(2, 2)])
    weights = {"0.W": np.eye(2), "0.b": np.zeros(2)}
    out = net.predict(weights, np.array([[0.3, -0.2]]))
    assert out[0] == pytest.approx((0.3, -0.2))


def test_lstm_zero_everything_gives_zero_hidden():
    cell = LSTMCell(3, 4)
    params = {name: np.zeros(shape) for name, shape in cell.param_shapes().items()}
    hs, _ = cell.forward(params, np.zeros((5, 3)))
    assert np.all(hs == 0.0)


def test_softmax2d_normalizes():
    rng = np.random.default_rng(0)
    x = rng.normal(0, 10, size=(3, 4, 4))
    y, _ = Softmax2D().forward({}, x)
    assert np.all(y >= 0.0)
    assert y.sum(axis=(1, 2)) == pytest.approx(np.ones(3), abs=1e-12)


def test_zero_upstream_gradient_gives_zero_param_grads():
    net = Network([Dense(3, 4, "tanh"), Dense(4, 2)])
    weights = net.init_weights(0)
    out, caches = net.forward(weights, np.random.default_rng(1).normal(size=(5, 3)))
    dx, grads = net.backward(weights, caches, np.zeros_like(out))
    assert np.all(dx == 0.0)
    assert all(np.all(g == 0.0) for g in grads.values())


def test_shape_mismatch_rejected():
    net = Network([Dense(3, 4)])
    weights = net.init_weights(0)
    with pytest.raises(SpecMismatchError):
        net.forward(weights, np.zeros((5, 2)))
    with pytest.raises(SpecMismatchError):
        net.check_weights({"0.W": np.zeros((3, 4))})
    with pytest.raises(SpecMismatchError):
        net.check_weights({"0.W": np.zeros((4, 3)), "0.b": np.zeros(4)})


def test_incremental_lstm_matches_full_sequence():
    cell = LSTMCell(4, 8)
    params = cell.init_params(np.random.default_rng(2))
    x = np.random.default_rng(3).normal(size=(50, 4))
    full, _ = cell.forward(params, x)
    h, c = cell.zero_state()
    inc = np.empty_like(full)
    for t in range(50):
        h, c, _ = cell.step(params, x[t], h, c)
        inc[t] = h
    assert np.max(np.abs(full - inc)) <= 1e-12


def test_network_spec_roundtrip():
    net = Network(
        [
            LSTMCell(4, 64),
            Dense(64, 49),
            Reshape((1, 7, 7)),
            TransposedConv2D(1, 8),
            TransposedConv2D(8, 1),
            Reshape((28, 28)),
            Softmax2D(),
        ]
    )
    clone = Network.from_spec_dicts(net.spec_dicts())
    assert clone.spec_dicts() == net.spec_dicts()
    out = clone.predict(clone.init_weights(0), np.zeros((3, 4)))
    assert out.shape == (3, 28, 28)
    assert out.sum(axis=(1, 2)) == pytest.approx(np.ones(3), abs=1e-9)


# ---------------------------------------------------------------------------
# Adam.
# ---------------------------------------------------------------------------


def test_adam_zero_gradient_is_identity():
    w = {"p": np.array([1.0, -2.0])}
    new_w, state = adam_step(w, {"p": np.zeros(2)}, AdamState())
    assert np.all(new_w["p"] == w["p"])
    assert state.step_count == 1


def test_adam_first_step_unit_gradient():
    w = {"p": np.array([1.0])}
    new_w, _ = adam_step(w, {"p": np.array([1.0])}, AdamState(lr=1e-3))
    assert new_w["p"][0] == pytest.approx(1.0 - 1e-3, abs=1e-8)


def test_adam_rejects_nonfinite_gradient():
    w = {"good": np.ones(2), "bad": np.ones(2)}
    g = {"good": np.ones(2), "bad": np.array([1.0, float("nan")])}
    with pytest.raises(TrainingError, match="bad"):
        adam_step(w, g, AdamState())


def test_adam_is_pure():
    w = {"p": np.array([1.0])}
    state = AdamState()
    adam_step(w, {"p": np.array([0.5])}, state)
    assert w["p"][0] == 1.0
    assert state.step_count == 0 and state.m == {}


def test_training_determinism():
    def run():
        net = Network([Dense(3, 4, "tanh"), Dense(4, 1)])
        weights = net.init_weights(7)
        state = AdamState(lr=1e-2)
        rng = np.random.default_rng(11)
        x = rng.normal(size=(8, 3))
        y = rng.normal(size=(8, 1))
        for _ in range(50):
            out, caches = net.forward(weights, x)
            _, dy = mse_loss(out, y)
            _, grads = net.backward(weights, caches, dy)
            weights, state = adam_step(weights, grads, state)
        return weights

    a, b = run(), run()
    assert all(np.array_equal(a[k], b[k]) for k in a)


# ---------------------------------------------------------------------------
# Weight file round-trip.
# ---------------------------------------------------------------------------


def test_weights_roundtrip_exact(tmp_path):
    net = Network([Dense(3, 4, "tanh"), Dense(4, 2)])
    weights = net.init_weights(5)
    path = tmp_path / "w.json"
    save_weights(path, net.spec_dicts(), weights, meta={"note": "test"})
    spec, loaded, meta = load_weights(path)
    assert spec == net.spec_dicts()
    assert meta["note"] == "test"
    assert set(loaded) == set(weights)
    assert all(np.array_equal(loaded[k], weights[k]) for k in weights)


def test_weights_truncated_file_rejected(tmp_path):
    net = Network([Dense(3, 4)])
    path = tmp_path / "w.json"
    save_weights(path, net.spec_dicts(), net.init_weights(0), meta={})
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(WeightsFormatError):
        load_weights(path)


def test_weights_spec_mismatch_rejected(tmp_path):
    motion = Network([Dense(5, 2)])
    intent = Network([Dense(4, 49)])
    path = tmp_path / "w.json"
    save_weights(path, motion.spec_dicts(), motion.init_weights(0), meta={})
    with pytest.raises(WeightsFormatError):
        load_weights(path, expected_spec=intent.spec_dicts())


# ---------------------------------------------------------------------------
# Capacity: each downstream architecture memorizes 16 fixed samples.
# ---------------------------------------------------------------------------


def _train(net, weights, batches, lr, steps, threshold):
    """batches: list of (x, target, loss_fn); returns final mean loss."""
    state = AdamState(lr=lr)
    loss = float("inf")
    for _ in range(steps):
        total = 0.0
        grads_acc = None
        for x, target, loss_fn in batches:
            out, caches = net.forward(weights, x)
            value, dy = loss_fn(out, target)
            total += value
            _, grads = net.backward(weights, caches, dy)
            if grads_acc is None:
                grads_acc = grads
            else:
                grads_acc = {k: grads_acc[k] + grads[k] for k in grads}
        loss = total / len(batches)
        if loss < threshold:
            return loss
        weights, state = adam_step(weights, grads_acc, state)
    return loss


def test_velocity_net_memorizes_16_samples():
    net = Network(
        [Dense(5, 64, "tanh"), Dense(64, 64, "tanh"), Dense(64, 2, "tanh"), Scale(0.4)]
    )
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, size=(16, 5))
    y = rng.uniform(-0.25, 0.25, size=(16, 2))
    loss = _train(net, net.init_weights(0), [(x, y, mse_loss)], 3e-3, 2000, 1e-3)
    assert loss < 1e-3


def test_arbitration_net_memorizes_16_steps():
    net = Network([LSTMCell(12, 32), Dense(32, 1, "sigmoid")])
    rng = np.random.default_rng(1)
    x = rng.uniform(-0.4, 0.4, size=(16, 12))
    y = rng.uniform(0.1, 0.9, size=(16, 1))
    loss = _train(net, net.init_weights(1), [(x, y, mse_loss)], 1e-2, 2000, 1e-3)
    assert loss < 1e-3


def _blob(cell, size=28, sigma=1.5):
    rows, cols = np.mgrid[0:size, 0:size]
    g = np.exp(-((rows - cell[0]) ** 2 + (cols - cell[1]) ** 2) / (2 * sigma**2))
    return g / g.sum()


def test_heatmap_net_memorizes_16_steps():
    # loss floor for soft targets is the target entropy; train the gap to 0
    net = Network(
        [
            LSTMCell(4, 64),
            Dense(64, 49),
            Reshape((1, 7, 7)),
            TransposedConv2D(1, 8),
            TransposedConv2D(8, 1),
            Reshape((28, 28)),
            Softmax2D(),
        ]
    )
    rng = np.random.default_rng(2)
    x = rng.uniform(0, 1, size=(16, 4))
    cells = rng.integers(4, 24, size=(16, 2))
    target = np.stack([_blob(c) for c in cells])
    entropy = -np.sum(target * np.log(target)) / 16

    def kl(out, tgt):
        loss, dy = cross_entropy_map(out, tgt)
        return loss - entropy, dy

    loss = _train(net, net.init_weights(2), [(x, target, kl)], 5e-3, 2000, 1e-3)
    assert loss < 1e-3
