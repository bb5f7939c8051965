import numpy as np
import pytest

from icancel.errors import (
    BackwardBeforeForwardError,
    InvalidConfigError,
    NumericalFaultError,
    RunningStatsError,
    ShapeMismatchError,
)
from icancel.nncore import (
    LSTM,
    Adam,
    AdamState,
    BatchNorm1d,
    Conv1d,
    LstmState,
    ReLU,
    Sequential,
    SwapAxes,
    Tensor,
    adam_step,
    batchnorm1d_backward,
    batchnorm1d_forward,
    clip_grad_norm,
    conv1d_backward,
    conv1d_forward,
    lstm_backward,
    lstm_forward,
    mse_loss,
    relu_backward,
    relu_forward,
)

INSTANCES = 20


def numeric_grad(loss, x, eps=1e-6):
    """Central differences of the scalar `loss()` with respect to `x`."""
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + eps
        plus = loss()
        x[idx] = old - eps
        minus = loss()
        x[idx] = old
        grad[idx] = (plus - minus) / (2.0 * eps)
    return grad


def assert_grad(analytic, numeric):
    np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-6)


@pytest.mark.parametrize("instance", range(INSTANCES))
def test_conv1d_gradient(instance):
    rng = np.random.default_rng(instance)
    batch, channels, length = rng.integers(1, 3), rng.integers(1, 4), rng.integers(3, 9)
    out_ch, k = rng.integers(1, 4), (1, 3)[instance % 2]
    padding = ("same", "none")[(instance // 2) % 2]
    x = rng.standard_normal((batch, channels, length))
    w = rng.standard_normal((out_ch, channels, k))
    b = rng.standard_normal(out_ch)
    out, cache = conv1d_forward(x, w, b, padding)
    r = rng.standard_normal(out.shape)

    def loss():
        return np.sum(conv1d_forward(x, w, b, padding)[0] * r)

    grad_x, grad_w, grad_b = conv1d_backward(r, cache)
    assert_grad(grad_x, numeric_grad(loss, x))
    assert_grad(grad_w, numeric_grad(loss, w))
    assert_grad(grad_b, numeric_grad(loss, b))


def test_conv1d_matches_direct_sum():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 3, 7))
    w = rng.standard_normal((4, 3, 3))
    b = rng.standard_normal(4)
    out, _ = conv1d_forward(x, w, b, "same")
    x_pad = np.pad(x, ((0, 0), (0, 0), (1, 1)))
    expected = np.zeros((2, 4, 7))
    for n in range(2):
        for o in range(4):
            for t in range(7):
                expected[n, o, t] = b[o] + np.sum(w[o] * x_pad[n, :, t : t + 3])
    np.testing.assert_allclose(out, expected, rtol=1e-12, atol=1e-12)
    assert conv1d_forward(x, w, b, "none")[0].shape == (2, 4, 5)


def test_conv1d_errors():
    x = np.zeros((1, 2, 8))
    with pytest.raises(InvalidConfigError):
        conv1d_forward(x, np.zeros((1, 2, 3)), np.zeros(1), "valid")
    with pytest.raises(ShapeMismatchError):
        conv1d_forward(x, np.zeros((1, 3, 3)), np.zeros(1))
    with pytest.raises(ShapeMismatchError):
        conv1d_forward(x, np.zeros((1, 2, 2)), np.zeros(1), "same")
    with pytest.raises(ShapeMismatchError):
        conv1d_forward(np.zeros((1, 2, 2)), np.zeros((1, 2, 3)), np.zeros(1), "none")


@pytest.mark.parametrize("instance", range(INSTANCES))
def test_batchnorm_train_gradient(instance):
    rng = np.random.default_rng(100 + instance)
    batch, channels, length = rng.integers(1, 3), rng.integers(1, 4), rng.integers(2, 9)
    x = rng.standard_normal((batch, channels, length)) * 2.0 + 0.5
    gamma = rng.standard_normal(channels)
    beta = rng.standard_normal(channels)
    y, cache = batchnorm1d_forward(x, gamma, beta)
    r = rng.standard_normal(y.shape)

    def loss():
        return np.sum(batchnorm1d_forward(x, gamma, beta)[0] * r)

    grad_x, grad_gamma, grad_beta = batchnorm1d_backward(r, cache)
    assert_grad(grad_x, numeric_grad(loss, x))
    assert_grad(grad_gamma, numeric_grad(loss, gamma))
    assert_grad(grad_beta, numeric_grad(loss, beta))


@pytest.mark.parametrize("instance", range(INSTANCES))
def test_batchnorm_infer_gradient(instance):
    rng = np.random.default_rng(200 + instance)
    channels = rng.integers(1, 4)
    x = rng.standard_normal((2, channels, 5))
    gamma, beta = rng.standard_normal(channels), rng.standard_normal(channels)
    mean, var = rng.standard_normal(channels), rng.uniform(0.5, 2.0, channels)
    y, cache = batchnorm1d_forward(x, gamma, beta, mean, var, mode="infer")
    r = rng.standard_normal(y.shape)

    def loss():
        return np.sum(batchnorm1d_forward(x, gamma, beta, mean, var, mode="infer")[0] * r)

    grad_x, grad_gamma, grad_beta = batchnorm1d_backward(r, cache)
    assert_grad(grad_x, numeric_grad(loss, x))
    assert_grad(grad_gamma, numeric_grad(loss, gamma))
    assert_grad(grad_beta, numeric_grad(loss, beta))


def test_batchnorm_running_stats():
    x = np.arange(12, dtype=np.float64).reshape(2, 1, 6)
    mean, var = np.zeros(1), np.ones(1)
    batchnorm1d_forward(x, np.ones(1), np.zeros(1), mean, var)
    assert mean[0] == pytest.approx(0.1 * x.mean())
    assert var[0] == pytest.approx(0.9 + 0.1 * x.var(ddof=1))


def test_batchnorm_errors():
    x = np.zeros((1, 2, 4))
    with pytest.raises(RunningStatsError):
        batchnorm1d_forward(x, np.ones(2), np.zeros(2), mode="infer")
    with pytest.raises(InvalidConfigError):
        batchnorm1d_forward(x, np.ones(2), np.zeros(2), mode="eval")
    with pytest.raises(ShapeMismatchError):
        batchnorm1d_forward(x, np.ones(3), np.zeros(3))


@pytest.mark.parametrize("instance", range(INSTANCES))
def test_relu_gradient(instance):
    rng = np.random.default_rng(300 + instance)
    x = rng.standard_normal((2, 3, 6))
    # keep clear of the kink
    x = np.sign(x) * (np.abs(x) + 0.01)
    y, mask = relu_forward(x)
    r = rng.standard_normal(y.shape)
    assert_grad(relu_backward(r, mask), numeric_grad(lambda: np.sum(relu_forward(x)[0] * r), x))


def test_relu_subgradient_at_zero():
    y, mask = relu_forward(np.array([-1.0, 0.0, 2.0]))
    np.testing.assert_array_equal(y, [0.0, 0.0, 2.0])
    np.testing.assert_array_equal(relu_backward(np.ones(3), mask), [0.0, 0.0, 1.0])


@pytest.mark.parametrize("instance", range(INSTANCES))
def test_lstm_gradient(instance):
    rng = np.random.default_rng(400 + instance)
    batch, steps = rng.integers(1, 3), rng.integers(1, 7)
    features, hidden = rng.integers(1, 4), rng.integers(1, 4)
    x = rng.standard_normal((batch, steps, features))
    w_ih = rng.standard_normal((4 * hidden, features)) * 0.5
    w_hh = rng.standard_normal((4 * hidden, hidden)) * 0.5
    bias = rng.standard_normal(4 * hidden) * 0.5
    h_seq, cache = lstm_forward(x, w_ih, w_hh, bias)
    assert h_seq.dtype == np.float64
    r = rng.standard_normal(h_seq.shape)

    def loss():
        return np.sum(lstm_forward(x, w_ih, w_hh, bias)[0] * r)

    grad_x, grad_ih, grad_hh, grad_b = lstm_backward(r, cache)
    assert_grad(grad_x, numeric_grad(loss, x))
    assert_grad(grad_ih, numeric_grad(loss, w_ih))
    assert_grad(grad_hh, numeric_grad(loss, w_hh))
    assert_grad(grad_b, numeric_grad(loss, bias))


def test_lstm_single_step_by_hand():
    x = np.array([[[0.5]]])
    w_ih = np.array([[1.0], [2.0], [3.0], [4.0]])
    w_hh = np.zeros((4, 1))
    bias = np.zeros(4)
    h_seq, _ = lstm_forward(x, w_ih, w_hh, bias)
    sigmoid = lambda z: 1.0 / (1.0 + np.exp(-z))  # noqa: E731
    c = sigmoid(0.5) * np.tanh(1.5)
    assert h_seq[0, 0, 0] == pytest.approx(sigmoid(2.0) * np.tanh(c))


def test_lstm_errors():
    with pytest.raises(ShapeMismatchError):
        lstm_forward(np.zeros((1, 2, 3)), np.zeros((8, 2)), np.zeros((8, 2)), np.zeros(8))
    with pytest.raises(ShapeMismatchError):
        lstm_forward(np.zeros((2, 3)), np.zeros((8, 3)), np.zeros((8, 2)), np.zeros(8))
    with pytest.raises(ShapeMismatchError):
        LstmState(np.zeros((1, 2)), np.zeros((1, 3)))


@pytest.mark.parametrize("instance", range(INSTANCES))
def test_mse_gradient(instance):
    rng = np.random.default_rng(500 + instance)
    shape = tuple(rng.integers(1, 5, size=3))
    pred, target = rng.standard_normal(shape), rng.standard_normal(shape)
    loss, grad = mse_loss(pred, target)
    assert loss == pytest.approx(np.mean((pred - target) ** 2))
    assert_grad(grad, numeric_grad(lambda: mse_loss(pred, target)[0], pred))


def test_mse_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        mse_loss(np.zeros(3), np.zeros(4))


def test_adam_first_step_moves_by_learning_rate():
    params = [np.array([1.0, -2.0, 3.0])]
    grads = [np.array([0.5, -4.0, 0.01])]
    state = adam_step(params, grads, AdamState(), lr=0.1)
    assert state.step == 1
    np.testing.assert_allclose(params[0], [0.9, -1.9, 2.9], atol=1e-6)


def test_adam_minimizes_quadratic():
    p = Tensor(np.zeros(3), requires_grad=True)
    opt = Adam([p], lr=0.1)
    for _ in range(500):
        opt.zero_grad()
        p.accumulate(2.0 * (p.data - 3.0))
        opt.step()
    np.testing.assert_allclose(p.data, 3.0, atol=1e-2)


def test_adam_step_rejects_non_finite_update():
    p = Tensor(np.zeros(2), requires_grad=True)
    opt = Adam([p], lr=0.1)
    p.accumulate(np.array([1.0, np.inf]))
    with pytest.raises(NumericalFaultError):
        opt.step()


def test_adam_errors():
    with pytest.raises(ShapeMismatchError):
        adam_step([np.zeros(2)], [], AdamState(), lr=0.1)
    with pytest.raises(ShapeMismatchError):
        adam_step([np.zeros(2)], [np.zeros(3)], AdamState(), lr=0.1)


def test_clip_grad_norm():
    a, b = Tensor(np.zeros(1), True), Tensor(np.zeros(1), True)
    a.accumulate(np.array([6.0]))
    b.accumulate(np.array([8.0]))
    assert clip_grad_norm([a, b]) == pytest.approx(10.0)
    assert np.hypot(a.grad[0], b.grad[0]) == pytest.approx(5.0, rel=1e-5)

    c = Tensor(np.zeros(1), True)
    c.accumulate(np.array([3.0]))
    assert clip_grad_norm([c]) == pytest.approx(3.0)
    assert c.grad[0] == 3.0


def test_clip_grad_norm_non_finite():
    a = Tensor(np.zeros(1), True)
    a.accumulate(np.array([np.nan]))
    with pytest.raises(NumericalFaultError):
        clip_grad_norm([a])


def test_tensor():
    with pytest.raises(ShapeMismatchError):
        Tensor(np.zeros((0, 3)))
    with pytest.raises(ShapeMismatchError):
        Tensor(1.0)
    t = Tensor(np.zeros((2, 2)), True)
    assert t.data.dtype == np.float32
    t.accumulate(np.ones((2, 2)))
    t.accumulate(np.ones((2, 2)))
    np.testing.assert_array_equal(t.grad, 2.0)
    with pytest.raises(ShapeMismatchError):
        t.accumulate(np.ones(4))


@pytest.mark.parametrize(
    "module",
    [
        Conv1d(1, 2, 3, np.random.default_rng(0)),
        BatchNorm1d(2),
        ReLU(),
        LSTM(2, 3, np.random.default_rng(0)),
        SwapAxes(),
    ],
)
def test_backward_before_forward(module):
    with pytest.raises(BackwardBeforeForwardError):
        module.backward(np.zeros((1, 2, 4), dtype=np.float32))


def test_layer_rejects_non_finite_input():
    conv = Conv1d(1, 1, 3, np.random.default_rng(0))
    x = np.zeros((1, 1, 5), dtype=np.float32)
    x[0, 0, 2] = np.nan
    with pytest.raises(NumericalFaultError):
        conv(x)


def test_lstm_layer_forget_bias():
    lstm = LSTM(3, 4, np.random.default_rng(0))
    np.testing.assert_array_equal(lstm.bias.data[4:8], 1.0)
    np.testing.assert_array_equal(lstm.bias.data[:4], 0.0)
    assert lstm.w_ih.shape == (16, 3)
    assert lstm.w_hh.shape == (16, 4)


def test_sequential():
    rng = np.random.default_rng(1)
    net = Sequential(
        ("conv", Conv1d(1, 4, 3, rng)),
        ("bn", BatchNorm1d(4)),
        ("relu", ReLU()),
        ("swap", SwapAxes()),
        ("lstm", LSTM(4, 2, rng)),
    )
    names = [name for name, _ in net.named_parameters()]
    assert names == [
        "conv.weight",
        "conv.bias",
        "bn.gamma",
        "bn.beta",
        "lstm.w_ih",
        "lstm.w_hh",
        "lstm.bias",
    ]
    assert [name for name, _ in net.named_buffers()] == ["bn.running_mean", "bn.running_var"]

    x = rng.standard_normal((3, 1, 8)).astype(np.float32)
    y = net(x)
    assert y.shape == (3, 8, 2)
    grad = net.backward(np.ones_like(y))
    assert grad.shape == x.shape
    assert all(tensor.grad is not None for tensor in net.parameters())
    net.zero_grad()
    assert all(tensor.grad is None for tensor in net.parameters())

    net.eval()
    assert not any(module.training for _, module in net)
    net.train()
    assert all(module.training for _, module in net)
