"""Module: icancel.nncore

A small dense-tensor engine with hand-written reverse-mode gradients for
exactly the layers the canceller needs: 1-D convolution, batch
normalization, ReLU, LSTM, mean-squared-error loss and Adam.

The functional ``*_forward`` / ``*_backward`` pairs keep the dtype of their
inputs, so gradient checks can run them in float64. The layer classes
hold float32 parameters.
"""
__docformat__ = "restructuredtext en"

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from icancel.base import Module, check_finite
from icancel.errors import (
    InvalidConfigError,
    RunningStatsError,
    ShapeMismatchError,
)

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
GRAD_CLIP_NORM = 5.0
PADDINGS = ("same", "none")


class Tensor(object):
    """Dense row-major float32 array with an optional gradient buffer."""

    def __init__(self, data, requires_grad=False):
        self.data = np.array(data, dtype=np.float32)
        if self.data.ndim == 0 or 0 in self.data.shape:
            raise ShapeMismatchError("Tensors need a non-empty, positive shape.")
        self.requires_grad = requires_grad
        self.grad = None

    def __repr__(self):
        return "<Tensor(shape={0}, requires_grad={1})>".format(
            self.shape, self.requires_grad
        )

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def accumulate(self, grad):
        if grad.shape != self.shape:
            raise ShapeMismatchError(
                "Gradient shape {0} does not match tensor shape {1}.".format(
                    grad.shape, self.shape
                )
            )
        grad = grad.astype(np.float32)
        if self.grad is None:
            self.grad = grad
        else:
            self.grad = self.grad + grad

    def check_finite(self, what="tensor"):
        check_finite(self.data, what)
        if self.grad is not None:
            check_finite(self.grad, what + " gradient")
        return self


# -- convolution -----------------------------------------------------------


def conv1d_forward(x, weight, bias, padding="same"):
    """1-D cross-correlation with stride 1.

    ``out[b, o, t] = bias[o] + sum_{c, k} weight[o, c, k] * x_pad[b, c, t + k]``.
    Same-padding adds ``k // 2`` zeros on each side.

    :returns: ``(out, cache)``
    """
    if padding not in PADDINGS:
        raise InvalidConfigError("padding must be 'same' or 'none', not {0!r}.".format(padding))
    if x.ndim != 3 or weight.ndim != 3 or bias.shape != (weight.shape[0],):
        raise ShapeMismatchError("conv1d needs x[B,C,L], weight[O,C,K] and bias[O].")
    batch, channels, length = x.shape
    out_ch, in_ch, k = weight.shape
    if channels != in_ch:
        raise ShapeMismatchError(
            "conv1d input has {0} channels, weight expects {1}.".format(channels, in_ch)
        )
    pad = k // 2 if padding == "same" else 0
    if padding == "same" and k % 2 == 0:
        raise ShapeMismatchError("Same-padding needs an odd kernel size.")
    if length + 2 * pad < k:
        raise ShapeMismatchError("conv1d input is shorter than the kernel.")
    x_pad = np.pad(x, ((0, 0), (0, 0), (pad, pad))) if pad else x
    # cols[b, t, c, k] = x_pad[b, c, t + k]
    cols = sliding_window_view(x_pad, k, axis=2).transpose(0, 2, 1, 3)
    out_len = cols.shape[1]
    cols = cols.reshape(batch * out_len, in_ch * k)
    out = cols @ weight.reshape(out_ch, -1).T + bias
    out = out.reshape(batch, out_len, out_ch).transpose(0, 2, 1)
    cache = (cols, x.shape, weight, pad)
    return np.ascontiguousarray(out), cache


def conv1d_backward(grad_out, cache):
    """Adjoint of :func:`conv1d_forward`.

    :returns: ``(grad_x, grad_weight, grad_bias)``
    """
    cols, x_shape, weight, pad = cache
    batch, channels, length = x_shape
    out_ch, in_ch, k = weight.shape
    out_len = grad_out.shape[2]
    g = grad_out.transpose(0, 2, 1).reshape(batch * out_len, out_ch)
    grad_weight = (g.T @ cols).reshape(weight.shape)
    grad_bias = grad_out.sum(axis=(0, 2))
    grad_cols = (g @ weight.reshape(out_ch, -1)).reshape(batch, out_len, in_ch, k)
    grad_pad = np.zeros((batch, channels, length + 2 * pad), dtype=grad_out.dtype)
    for kk in range(k):
        grad_pad[:, :, kk : kk + out_len] += grad_cols[:, :, :, kk].transpose(0, 2, 1)
    grad_x = grad_pad[:, :, pad : pad + length] if pad else grad_pad
    return grad_x, grad_weight, grad_bias


# -- batch normalization ---------------------------------------------------


def batchnorm1d_forward(
    x, gamma, beta, running_mean=None, running_var=None, mode="train",
    momentum=BN_MOMENTUM, eps=BN_EPS,
):
    """Per-channel normalization over ``(batch, length)``.

    In ``train`` mode the batch statistics are used and the running
    statistics (when given) are updated in place with `momentum`. In
    ``infer`` mode the running statistics are used.

    :returns: ``(y, cache)``
    """
    if x.ndim != 3 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeMismatchError("batchnorm1d needs x[B,C,L] with gamma and beta of length C.")
    axes = (0, 2)
    if mode == "train":
        count = x.shape[0] * x.shape[2]
        mean = x.mean(axis=axes, dtype=np.float64)
        var = ((x - mean[None, :, None].astype(x.dtype)) ** 2).mean(axis=axes, dtype=np.float64)
        if running_mean is not None:
            unbiased = var * count / max(count - 1, 1)
            running_mean *= 1.0 - momentum
            running_mean += momentum * mean
            running_var *= 1.0 - momentum
            running_var += momentum * unbiased
    elif mode == "infer":
        if running_mean is None or running_var is None:
            raise RunningStatsError(
                "batchnorm1d inference needs running statistics from training."
            )
        mean, var = running_mean, running_var
    else:
        raise InvalidConfigError("mode must be 'train' or 'infer', not {0!r}.".format(mode))
    mean = np.asarray(mean, dtype=x.dtype)[None, :, None]
    inv_std = (1.0 / np.sqrt(np.asarray(var, dtype=np.float64) + eps)).astype(x.dtype)
    inv_std = inv_std[None, :, None]
    x_hat = (x - mean) * inv_std
    y = gamma[None, :, None] * x_hat + beta[None, :, None]
    return y, (x_hat, inv_std, gamma, mode)


def batchnorm1d_backward(grad_out, cache):
    """:returns: ``(grad_x, grad_gamma, grad_beta)``"""
    x_hat, inv_std, gamma, mode = cache
    axes = (0, 2)
    grad_gamma = (grad_out * x_hat).sum(axis=axes)
    grad_beta = grad_out.sum(axis=axes)
    grad_hat = grad_out * gamma[None, :, None]
    if mode == "infer":
        return grad_hat * inv_std, grad_gamma, grad_beta
    count = x_hat.shape[0] * x_hat.shape[2]
    grad_x = (
        inv_std
        / count
        * (
            count * grad_hat
            - grad_hat.sum(axis=axes, keepdims=True)
            - x_hat * (grad_hat * x_hat).sum(axis=axes, keepdims=True)
        )
    )
    return grad_x, grad_gamma, grad_beta


batchnorm1d = batchnorm1d_forward


# -- ReLU ------------------------------------------------------------------


def relu_forward(x):
    """``max(0, x)``; the subgradient at 0 is 0."""
    mask = x > 0
    return np.where(mask, x, np.zeros_like(x)), mask


def relu_backward(grad_out, mask):
    return np.where(mask, grad_out, np.zeros_like(grad_out))


relu = relu_forward


# -- LSTM ------------------------------------------------------------------


@dataclass
class LstmState(object):
    h: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        if self.h.shape != self.c.shape:
            raise ShapeMismatchError("LSTM hidden and cell state differ in shape.")

    @classmethod
    def zeros(cls, batch, hidden, dtype=np.float32):
        return cls(np.zeros((batch, hidden), dtype=dtype), np.zeros((batch, hidden), dtype=dtype))


def lstm_forward(x, w_ih, w_hh, bias, state=None):
    """Single-layer LSTM over ``x[batch, seq, in_features]``.

    Gate order in the packed parameters is input, forget, cell, output::

        i = sigmoid(W_i x + U_i h + b_i)    f = sigmoid(W_f x + U_f h + b_f)
        g = tanh(W_g x + U_g h + b_g)       o = sigmoid(W_o x + U_o h + b_o)
        c' = f * c + i * g                  h' = o * tanh(c')

    :returns: ``(h_seq[batch, seq, hidden], cache)``
    """
    if x.ndim != 3:
        raise ShapeMismatchError("lstm needs x[B,T,F].")
    batch, steps, features = x.shape
    hidden = w_hh.shape[1]
    if (
        w_ih.shape != (4 * hidden, features)
        or w_hh.shape != (4 * hidden, hidden)
        or bias.shape != (4 * hidden,)
    ):
        raise ShapeMismatchError(
            "LSTM parameters do not match in_features={0}, hidden={1}.".format(
                features, hidden
            )
        )
    if state is None:
        state = LstmState.zeros(batch, hidden, dtype=x.dtype)
    x_proj = x @ w_ih.T + bias
    gates = np.empty((batch, steps, 4 * hidden), dtype=x.dtype)
    h_seq = np.empty((batch, steps, hidden), dtype=x.dtype)
    c_seq = np.empty((batch, steps, hidden), dtype=x.dtype)
    h, c = state.h, state.c
    h_prev = np.empty_like(h_seq)
    c_prev = np.empty_like(c_seq)
    for t in range(steps):
        h_prev[:, t], c_prev[:, t] = h, c
        z = x_proj[:, t] + h @ w_hh.T
        i = expit(z[:, :hidden])
        f = expit(z[:, hidden : 2 * hidden])
        g = np.tanh(z[:, 2 * hidden : 3 * hidden])
        o = expit(z[:, 3 * hidden :])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[:, t] = np.concatenate([i, f, g, o], axis=1)
        h_seq[:, t], c_seq[:, t] = h, c
    cache = (x, w_ih, w_hh, gates, c_seq, h_prev, c_prev)
    return h_seq, cache


def lstm_backward(grad_h_seq, cache):
    """Backpropagation through time for :func:`lstm_forward`.

    :returns: ``(grad_x, grad_w_ih, grad_w_hh, grad_bias)``
    """
    x, w_ih, w_hh, gates, c_seq, h_prev, c_prev = cache
    batch, steps, hidden = grad_h_seq.shape
    grad_z = np.empty_like(gates)
    grad_h = np.zeros((batch, hidden), dtype=grad_h_seq.dtype)
    grad_c = np.zeros((batch, hidden), dtype=grad_h_seq.dtype)
    for t in reversed(range(steps)):
        i, f, g, o = np.split(gates[:, t], 4, axis=1)
        tanh_c = np.tanh(c_seq[:, t])
        grad_h = grad_h + grad_h_seq[:, t]
        grad_o = grad_h * tanh_c
        grad_c = grad_c + grad_h * o * (1.0 - tanh_c ** 2)
        grad_i = grad_c * g
        grad_g = grad_c * i
        grad_f = grad_c * c_prev[:, t]
        grad_z[:, t] = np.concatenate(
            [
                grad_i * i * (1.0 - i),
                grad_f * f * (1.0 - f),
                grad_g * (1.0 - g ** 2),
                grad_o * o * (1.0 - o),
            ],
            axis=1,
        )
        grad_c = grad_c * f
        grad_h = grad_z[:, t] @ w_hh
    flat_z = grad_z.reshape(batch * steps, 4 * hidden)
    grad_w_ih = flat_z.T @ x.reshape(batch * steps, -1)
    grad_w_hh = flat_z.T @ h_prev.reshape(batch * steps, hidden)
    grad_bias = flat_z.sum(axis=0)
    grad_x = grad_z @ w_ih
    return grad_x, grad_w_ih, grad_w_hh, grad_bias


# -- loss ------------------------------------------------------------------


def mse_loss(pred, target):
    """Mean squared error with mean reduction.

    :returns: ``(loss, grad_pred)`` where ``grad_pred = 2 (pred - target) / count``.
    """
    if pred.shape != target.shape:
        raise ShapeMismatchError(
            "Prediction shape {0} does not match target shape {1}.".format(
                pred.shape, target.shape
            )
        )
    diff = pred - target
    loss = float(np.sum(np.square(diff, dtype=np.float64)) / diff.size)
    return loss, (2.0 / diff.size) * diff


# -- optimizer -------------------------------------------------------------


@dataclass
class AdamState(object):
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, applied in place to `params`.

    :returns: the updated `state`.
    """
    if len(params) != len(grads):
        raise ShapeMismatchError("Adam got {0} parameters but {1} gradients.".format(
            len(params), len(grads)
        ))
    if not state.m:
        state.m = [np.zeros_like(p, dtype=np.float64) for p in params]
        state.v = [np.zeros_like(p, dtype=np.float64) for p in params]
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape or m.shape != p.shape:
            raise ShapeMismatchError(
                "Adam gradient shape {0} does not match parameter {1}.".format(
                    g.shape, p.shape
                )
            )
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g, dtype=np.float64)
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
        p -= update.astype(p.dtype)
    return state


class Adam(object):
    """Adam over a list of :class:`Tensor` parameters."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState()

    def step(self):
        grads = [
            p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params
        ]
        adam_step(
            [p.data for p in self.params],
            grads,
            self.state,
            self.lr,
            self.beta1,
            self.beta2,
            self.eps,
        )
        for p in self.params:
            p.check_finite("parameter")

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def clip_grad_norm(params, max_norm=GRAD_CLIP_NORM):
    """Scales gradients so their global L2 norm is at most `max_norm`.

    :returns: the norm before clipping.
    """
    grads = [p.grad for p in params if p.grad is not None]
    total = float(np.sqrt(sum(np.sum(np.square(g, dtype=np.float64)) for g in grads)))
    check_finite(np.array(total), "gradient norm")
    if total > max_norm:
        scale = np.float32(max_norm / (total + 1e-6))
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


# -- layers ----------------------------------------------------------------


def uniform_init(rng, shape, fan_in):
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv1d(Module):
    name = "Conv1d"

    def __init__(self, in_channels, out_channels, kernel_size, rng, padding="same"):
        Module.__init__(self)
        fan_in = in_channels * kernel_size
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.padding = padding
        self.weight = Tensor(
            uniform_init(rng, (out_channels, in_channels, kernel_size), fan_in), True
        )
        self.bias = Tensor(np.zeros(out_channels), True)

    def extra_repr(self):
        return "{0}, {1}, kernel_size={2}".format(
            self.in_channels, self.out_channels, self.kernel_size
        )

    def forward(self, x):
        out, self._cache = conv1d_forward(x, self.weight.data, self.bias.data, self.padding)
        return check_finite(out, "Conv1d output")

    def backward(self, grad):
        grad_x, grad_w, grad_b = conv1d_backward(grad, self._saved())
        self.weight.accumulate(grad_w)
        self.bias.accumulate(grad_b)
        return grad_x

    def named_parameters(self, prefix=""):
        yield prefix + "weight", self.weight
        yield prefix + "bias", self.bias


class BatchNorm1d(Module):
    """Batch normalization over ``(batch, length)`` per channel.

    Running statistics start at mean 0 and variance 1, so a freshly built
    layer can already run in inference mode.
    """

    name = "BatchNorm1d"

    def __init__(self, channels, momentum=BN_MOMENTUM, eps=BN_EPS):
        Module.__init__(self)
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = Tensor(np.ones(channels), True)
        self.beta = Tensor(np.zeros(channels), True)
        self.running_mean = np.zeros(channels, dtype=np.float32)
        self.running_var = np.ones(channels, dtype=np.float32)

    def extra_repr(self):
        return str(self.channels)

    def forward(self, x):
        y, self._cache = batchnorm1d_forward(
            x,
            self.gamma.data,
            self.beta.data,
            self.running_mean,
            self.running_var,
            "train" if self.training else "infer",
            self.momentum,
            self.eps,
        )
        return check_finite(y, "BatchNorm1d output")

    def backward(self, grad):
        grad_x, grad_gamma, grad_beta = batchnorm1d_backward(grad, self._saved())
        self.gamma.accumulate(grad_gamma)
        self.beta.accumulate(grad_beta)
        return grad_x

    def named_parameters(self, prefix=""):
        yield prefix + "gamma", self.gamma
        yield prefix + "beta", self.beta

    def named_buffers(self, prefix=""):
        yield prefix + "running_mean", self.running_mean
        yield prefix + "running_var", self.running_var


class ReLU(Module):
    name = "ReLU"

    def forward(self, x):
        y, self._cache = relu_forward(x)
        return y

    def backward(self, grad):
        return relu_backward(grad, self._saved())


class LSTM(Module):
    """Single-layer LSTM over ``[batch, seq, features]``.

    Forget-gate bias starts at 1.0, the other biases at 0.
    """

    name = "LSTM"

    def __init__(self, in_features, hidden, rng):
        Module.__init__(self)
        self.in_features = in_features
        self.hidden = hidden
        self.w_ih = Tensor(uniform_init(rng, (4 * hidden, in_features), in_features), True)
        self.w_hh = Tensor(uniform_init(rng, (4 * hidden, hidden), hidden), True)
        bias = np.zeros(4 * hidden)
        bias[hidden : 2 * hidden] = 1.0
        self.bias = Tensor(bias, True)

    def extra_repr(self):
        return "in_features={0}, hidden={1}".format(self.in_features, self.hidden)

    def forward(self, x):
        h_seq, self._cache = lstm_forward(x, self.w_ih.data, self.w_hh.data, self.bias.data)
        return check_finite(h_seq, "LSTM output")

    def backward(self, grad):
        grad_x, grad_ih, grad_hh, grad_b = lstm_backward(grad, self._saved())
        self.w_ih.accumulate(grad_ih)
        self.w_hh.accumulate(grad_hh)
        self.bias.accumulate(grad_b)
        return grad_x

    def named_parameters(self, prefix=""):
        yield prefix + "w_ih", self.w_ih
        yield prefix + "w_hh", self.w_hh
        yield prefix + "bias", self.bias


class SwapAxes(Module):
    """Exchanges the channel and sequence axes: ``[B, C, L] <-> [B, L, C]``."""

    name = "SwapAxes"

    def forward(self, x):
        self._cache = True
        return np.ascontiguousarray(x.transpose(0, 2, 1))

    def backward(self, grad):
        self._saved()
        return np.ascontiguousarray(grad.transpose(0, 2, 1))


class Sequential(Module):
    """Runs named sub-modules in order; backward walks them in reverse."""

    name = "Sequential"

    def __init__(self, *named_modules):
        Module.__init__(self)
        self.modules = list(named_modules)

    def __iter__(self):
        return iter(self.modules)

    def __len__(self):
        return len(self.modules)

    def extra_repr(self):
        return ", ".join(name for name, _ in self.modules)

    def forward(self, x):
        for _, module in self.modules:
            x = module.forward(x)
        return x

    def backward(self, grad):
        for _, module in reversed(self.modules):
            grad = module.backward(grad)
        return grad

    def named_parameters(self, prefix=""):
        for name, module in self.modules:
            for item in module.named_parameters(prefix + name + "."):
                yield item

    def named_buffers(self, prefix=""):
        for name, module in self.modules:
            for item in module.named_buffers(prefix + name + "."):
                yield item

    def train(self):
        Module.train(self)
        for _, module in self.modules:
            module.train()
        return self

    def eval(self):
        Module.eval(self)
        for _, module in self.modules:
            module.eval()
        return self
