"""icancel.base

"""

import numpy as np

from icancel.errors import BackwardBeforeForwardError, NumericalFaultError


def check_finite(array, what):
    """Raises NumericalFaultError when `array` holds NaN or Inf."""
    if not np.all(np.isfinite(array)):
        raise NumericalFaultError("Non-finite values in {0}.".format(what))
    return array


class Module(object):
    """Baseclass for all differentiable layers.

    Subclasses implement `forward` (recording whatever `backward` needs in
    `self._cache`) and `backward`, which takes the gradient of the loss
    with respect to the output, accumulates parameter gradients into the
    parameter tensors and returns the gradient with respect to the input.
    """

    name = ""

    def __init__(self):
        self.training = True
        self._cache = None

    def __repr__(self):
        return "<{0}({1})>".format(self.__class__.__name__, self.extra_repr())

    def __call__(self, x):
        return self.forward(x)

    def extra_repr(self):
        return ""

    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def _saved(self):
        if self._cache is None:
            raise BackwardBeforeForwardError(
                "{0}.backward called without a recorded forward pass.".format(
                    self.__class__.__name__
                )
            )
        return self._cache

    def named_parameters(self, prefix=""):
        """Yields ``(name, Tensor)`` pairs of trainable parameters."""
        return iter(())

    def named_buffers(self, prefix=""):
        """Yields ``(name, ndarray)`` pairs of non-trainable state."""
        return iter(())

    def parameters(self):
        return [tensor for _, tensor in self.named_parameters()]

    def zero_grad(self):
        for tensor in self.parameters():
            tensor.zero_grad()

    def train(self):
        """Sets training mode (batch statistics in batch normalization)."""
        self.training = True
        return self

    def eval(self):
        """Sets inference mode (running statistics in batch normalization)."""
        self.training = False
        return self
