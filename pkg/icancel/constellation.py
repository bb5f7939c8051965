"""Module: icancel.constellation

:Provided constellations: QPSK (4-QAM), 16-QAM, 64-QAM, 256-QAM, 1024-QAM

Square QAM with unit average energy. Each axis carries a Gray-coded PAM
level; the symbol index holds the I-axis label in its high bits and the
Q-axis label in its low bits.

Example::

    >>> from icancel.constellation import build_constellation, demap_hard
    >>> qam = build_constellation(16)
    >>> qam.bits_per_symbol
    4
    >>> int(demap_hard(qam.map(5), qam))
    5

"""
__docformat__ = "restructuredtext en"

import numpy as np
from scipy.special import erfc

from icancel.errors import (
    EmptyDatasetError,
    InvalidConfigError,
    ShapeMismatchError,
    SymbolRangeError,
)

SUPPORTED_ORDERS = (4, 16, 64, 256, 1024)

#: A symbol index, an integer in ``[0, order)``.
SymbolIndex = int


def gray_code(n):
    """Reflected binary code of `n` (works elementwise on arrays)."""
    return n ^ (n >> 1)


def inverse_gray_code(g):
    n = np.array(g, dtype=np.int64, copy=True)
    shift = np.array(g, dtype=np.int64) >> 1
    while np.any(shift):
        n ^= shift
        shift >>= 1
    return n


class QamConstellation(object):
    """Gray-coded square QAM constellation with unit average energy.

    :parameters:
        order : Integer
            Number of points, one of `SUPPORTED_ORDERS`.
    """

    def __init__(self, order):
        if order not in SUPPORTED_ORDERS:
            raise InvalidConfigError(
                "QAM order must be one of {0}, not {1!r}.".format(
                    ", ".join(str(o) for o in SUPPORTED_ORDERS), order
                )
            )
        self.order = int(order)
        self.bits_per_symbol = int(np.log2(order))
        self.levels_per_axis = int(round(np.sqrt(order)))
        self.bits_per_axis = self.bits_per_symbol // 2
        # E|p|^2 of the unnormalized odd-integer grid is 2(M-1)/3
        self.scale = float(np.sqrt(2.0 * (order - 1) / 3.0))

        labels = np.arange(order, dtype=np.int64)
        i_level = inverse_gray_code(labels >> self.bits_per_axis)
        q_level = inverse_gray_code(labels & (self.levels_per_axis - 1))
        points = (self._amplitude(i_level) + 1j * self._amplitude(q_level)) / self.scale
        points.setflags(write=False)
        self.points = points

        # level position -> Gray label, used by the per-axis slicer
        codes = gray_code(np.arange(self.levels_per_axis, dtype=np.int64))
        codes.setflags(write=False)
        self._axis_codes = codes

    def __repr__(self):
        return "<{0}({1})>".format(self.__class__.__name__, self.order)

    def _amplitude(self, level):
        return (2.0 * level - (self.levels_per_axis - 1)).astype(np.float64)

    def map(self, index):
        """Returns the point(s) for `index` (scalar or integer array)."""
        index = np.asarray(index)
        if index.size and (
            not np.issubdtype(index.dtype, np.integer)
            or index.min() < 0
            or index.max() >= self.order
        ):
            raise SymbolRangeError(
                "Symbol index must be an integer in [0, {0}).".format(self.order)
            )
        points = self.points[index]
        return complex(points) if points.ndim == 0 else points

    def _slice_axis(self, coordinate):
        t = (coordinate * self.scale + (self.levels_per_axis - 1)) / 2.0
        lower = np.floor(t)
        frac = t - lower
        lower = lower.astype(np.int64)
        upper = lower + 1
        top = self.levels_per_axis - 1
        lower_c = np.clip(lower, 0, top)
        upper_c = np.clip(upper, 0, top)
        # exact midpoints go to the level with the smaller label
        tie_pick = np.where(
            self._axis_codes[upper_c] < self._axis_codes[lower_c], upper_c, lower_c
        )
        level = np.where(frac > 0.5, upper_c, np.where(frac < 0.5, lower_c, tie_pick))
        return self._axis_codes[level]

    def demap(self, point):
        point = np.asarray(point, dtype=np.complex128)
        if not np.all(np.isfinite(point)):
            raise SymbolRangeError("Cannot take a decision on a non-finite point.")
        i_code = self._slice_axis(point.real)
        q_code = self._slice_axis(point.imag)
        index = (i_code << self.bits_per_axis) | q_code
        return int(index) if index.ndim == 0 else index


def build_constellation(order):
    """Builds the unit-energy Gray-coded square constellation of `order`.

    :raises InvalidConfigError: for non-square or out-of-range orders.
    """
    return QamConstellation(order)


def map(index, c):  # noqa: A001
    return c.map(index)


def demap_hard(point, c):
    """Maximum likelihood hard decision.

    Returns the index of the nearest constellation point. Exactly
    equidistant points resolve to the lowest index.

    :parameters:
        point : complex or complex array
        c : QamConstellation
    """
    return c.demap(point)


def symbol_error_rate(tx, rx):
    """Fraction of positions where `tx` and `rx` differ."""
    tx = np.asarray(tx)
    rx = np.asarray(rx)
    if tx.shape != rx.shape:
        raise ShapeMismatchError(
            "Symbol sequences differ in length: {0} vs {1}.".format(tx.size, rx.size)
        )
    if tx.size == 0:
        raise EmptyDatasetError("Cannot compute a SER over zero symbols.")
    return float(np.count_nonzero(tx != rx)) / tx.size


def q_function(x):
    """Gaussian tail probability."""
    return 0.5 * erfc(np.asarray(x) / np.sqrt(2.0))


def theoretical_ser(order, snr_db):
    """Closed-form SER of square QAM over AWGN at Es/N0 = `snr_db`."""
    if order not in SUPPORTED_ORDERS:
        raise InvalidConfigError("Unsupported QAM order {0!r}.".format(order))
    es_n0 = 10.0 ** (np.asarray(snr_db, dtype=np.float64) / 10.0)
    per_axis = 2.0 * (1.0 - 1.0 / np.sqrt(order)) * q_function(
        np.sqrt(3.0 * es_n0 / (order - 1))
    )
    return 1.0 - (1.0 - per_axis) ** 2
