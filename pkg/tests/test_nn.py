import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rddlab.nn import (
    AdamState,
    DenseNet,
    DimensionError,
    Layer,
    NonFiniteGradientError,
    adam_step,
    backward_mse,
    forward,
)
from rddlab.rng import make_rng


def loop_forward(net, x):
    """Independent oracle: plain nested loops, no numpy matmul."""
    h = [float(v) for v in x]
    for layer in net.layers:
        w, b = layer.weight, layer.bias
        out = []
        for j in range(w.shape[1]):
            s = float(b[j])
            for i in range(w.shape[0]):
                s += h[i] * float(w[i, j])
            if layer.activation == "relu":
                s = max(s, 0.0)
            elif layer.activation == "tanh":
                s = float(np.tanh(s))
            out.append(s)
        h = out
    return np.array(h)


def finite_difference(net, x, target, h=1e-5):
    grads = []
    for p in net.params():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = np.sum((net.forward(x) - target) ** 2)
            p[idx] = old - h
            down = np.sum((net.forward(x) - target) ** 2)
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def test_identity_layer():
    net = DenseNet([Layer(np.eye(2), np.zeros(2), "identity")])
    np.testing.assert_array_equal(forward(net, [1.0, 2.0]), [1.0, 2.0])


def test_relu_clamps_negative():
    net = DenseNet([Layer([[-1.0]], [0.0], "relu")])
    np.testing.assert_array_equal(forward(net, [3.0]), [0.0])


def test_forward_matches_loop_oracle():
    net = DenseNet.init([5, 7, 3], seed=7, hidden_activation="tanh")
    x = np.linspace(-1, 1, 5)
    np.testing.assert_allclose(net.forward(x), loop_forward(net, x), rtol=0, atol=1e-12)


def test_forward_batch_rows_match_single():
    net = DenseNet.init([3, 8, 2], seed=1)
    xs = make_rng(2).standard_normal((4, 3))
    np.testing.assert_allclose(net.forward(xs), np.stack([net.forward(x) for x in xs]), atol=1e-14)


def test_dimension_mismatch_names_dims():
    net = DenseNet.init([3, 4, 2], seed=0)
    with pytest.raises(DimensionError, match="expected 3, got 2"):
        net.forward(np.zeros(2))
    with pytest.raises(DimensionError):
        backward_mse(net, np.zeros(3), np.zeros(5))


def test_layers_must_chain():
    with pytest.raises(DimensionError):
        DenseNet([Layer(np.zeros((2, 3)), np.zeros(3)), Layer(np.zeros((4, 1)), np.zeros(1))])


def test_mse_at_minimum_is_zero():
    net = DenseNet.init([3, 4, 2], seed=3)
    x = np.array([0.1, -0.2, 0.3])
    loss, grads = backward_mse(net, x, net.forward(x))
    assert loss == 0.0
    assert all(np.all(g == 0) for g in grads)


def test_mse_identity_scalar():
    net = DenseNet([Layer([[1.0]], [0.0], "identity")])
    loss, grads = backward_mse(net, [1.0], [0.0])
    assert loss == 1.0
    assert grads[0][0, 0] == 2.0


@pytest.mark.parametrize("act", ["relu", "tanh"])
def test_gradients_match_finite_differences(act):
    net = DenseNet.init([4, 6, 3], seed=11, hidden_activation=act)
    rng = make_rng(5)
    x, target = rng.standard_normal(4), rng.standard_normal(3)
    _, grads = backward_mse(net, x, target)
    for g, fd in zip(grads, finite_difference(net, x, target)):
        np.testing.assert_allclose(g, fd, rtol=1e-4, atol=1e-7)


def test_batch_backward_sums_rows():
    net = DenseNet.init([3, 5, 2], seed=4)
    rng = make_rng(9)
    xs, ts = rng.standard_normal((6, 3)), rng.standard_normal((6, 2))
    out, cache = net.forward_cached(xs)
    batch = net.backward(cache, 2 * (out - ts))
    singles = [backward_mse(net, x, t)[1] for x, t in zip(xs, ts)]
    for k, g in enumerate(batch):
        np.testing.assert_allclose(g, sum(s[k] for s in singles), atol=1e-12)


def test_adam_zero_grads_leave_params():
    net = DenseNet.init([3, 4, 2], seed=0)
    before = [p.copy() for p in net.params()]
    state = AdamState.for_net(net)
    adam_step(net, [np.zeros_like(p) for p in net.params()], state)
    assert state.step == 1
    for p, q in zip(net.params(), before):
        np.testing.assert_array_equal(p, q)


def test_adam_single_scalar_step():
    # bias-corrected first step is lr * g / (|g| + eps) = ~lr
    net = DenseNet([Layer([[0.0]], [0.0])])
    state = AdamState.for_net(net, lr=0.1)
    adam_step(net, [np.array([[1.0]]), np.array([0.0])], state)
    assert net.layers[0].weight[0, 0] == pytest.approx(-0.1, abs=1e-8)


def test_adam_decreases_convex_quadratic():
    net = DenseNet([Layer([[2.0]], [1.0])])
    state = AdamState.for_net(net, lr=0.05)
    x, t = np.array([1.0]), np.array([0.0])
    losses = []
    for _ in range(3):
        loss, grads = backward_mse(net, x, t)
        losses.append(loss)
        adam_step(net, grads, state)
    assert losses[2] < losses[1] < losses[0]


def test_adam_rejects_nonfinite_and_names_layer():
    net = DenseNet.init([2, 3, 1], seed=0)
    grads = [np.zeros_like(p) for p in net.params()]
    grads[2][0, 0] = np.nan
    with pytest.raises(NonFiniteGradientError, match="layer 1 weight"):
        adam_step(net, grads, AdamState.for_net(net))


def test_adam_accumulators_track_shapes():
    net = DenseNet.init([3, 5, 2], seed=0)
    state = AdamState.for_net(net)
    assert [m.shape for m in state.m] == [p.shape for p in net.params()]
    assert [v.shape for v in state.v] == [p.shape for p in net.params()]


def test_same_seed_same_init_and_trajectory():
    def train(seed):
        net = DenseNet.init([3, 8, 2], seed=seed)
        init = net.flat.tobytes()
        state = AdamState.for_net(net)
        rng = make_rng(123)
        for _ in range(20):
            _, g = backward_mse(net, rng.standard_normal(3), rng.standard_normal(2))
            adam_step(net, g, state)
        return init, net.flat.tobytes()

    assert train(42) == train(42)
    assert train(42)[0] != train(43)[0]


def test_doubling_final_weights_doubles_output():
    net = DenseNet.init([3, 4, 2], seed=8)
    x = np.array([0.5, -1.0, 2.0])
    before = net.forward(x)
    net.layers[-1].weight *= 2.0
    np.testing.assert_allclose(net.forward(x), 2.0 * before, rtol=1e-14)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), hidden=st.integers(1, 6), act=st.sampled_from(["relu", "tanh", "identity"]))
def test_gradient_check_property(seed, hidden, act):
    rng = make_rng(seed)
    in_dim, out_dim = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    net = DenseNet.init([in_dim, hidden, out_dim], seed=rng, hidden_activation=act)
    x, target = rng.standard_normal(in_dim), rng.standard_normal(out_dim)
    _, grads = backward_mse(net, x, target)
    for g, fd in zip(grads, finite_difference(net, x, target)):
        np.testing.assert_allclose(g, fd, rtol=1e-4, atol=1e-7)
