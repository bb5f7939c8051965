"""Module: icancel.phy

Radio-frame resource grid and OFDM modulation between the grid and
time-domain samples. The channel between modulator and demodulator is
flat, so equalization is an identity and not modelled here.
"""
__docformat__ = "restructuredtext en"

from dataclasses import dataclass, field

import numpy as np

from icancel.errors import InvalidConfigError, ShapeMismatchError

SUBCARRIER_SPACING_HZ = 15000.0


@dataclass(frozen=True)
class GridDims(object):
    subframes: int = 11
    ofdm_symbols_per_subframe: int = 140
    subcarriers: int = 180

    def validate(self):
        for name in ("subframes", "ofdm_symbols_per_subframe", "subcarriers"):
            value = getattr(self, name)
            if int(value) != value or value <= 0:
                raise InvalidConfigError(
                    "Grid dimension {0} must be a positive integer, not {1!r}.".format(
                        name, value
                    )
                )
        return self

    @property
    def shape(self):
        return (self.subframes, self.ofdm_symbols_per_subframe, self.subcarriers)

    @property
    def ofdm_symbols(self):
        return self.subframes * self.ofdm_symbols_per_subframe

    @property
    def resource_elements(self):
        return self.ofdm_symbols * self.subcarriers


@dataclass
class ResourceGrid(object):
    """Complex symbols indexed ``(subframe, ofdm_symbol, subcarrier)``."""

    dims: GridDims
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.shape != self.dims.shape:
            if self.data.size != self.dims.resource_elements:
                raise ShapeMismatchError(
                    "Grid data holds {0} values, dims {1} need {2}.".format(
                        self.data.size, self.dims.shape, self.dims.resource_elements
                    )
                )
            self.data = self.data.reshape(self.dims.shape)
        if not np.all(np.isfinite(self.data)):
            raise ShapeMismatchError("Resource grid contains non-finite values.")

    @classmethod
    def zeros(cls, dims, dtype=np.complex128):
        return cls(dims, np.zeros(dims.shape, dtype=dtype))

    def flatten(self):
        """Resource elements in row-major (subframe, symbol, subcarrier) order."""
        return self.data.reshape(-1)

    def copy(self):
        return ResourceGrid(self.dims, self.data.copy())


@dataclass(frozen=True)
class OfdmConfig(object):
    fft_size: int = 256
    cp_length: int = 18
    active_subcarriers: int = 180
    subcarrier_spacing: float = SUBCARRIER_SPACING_HZ

    def validate(self):
        n = self.fft_size
        if n <= 0 or n & (n - 1):
            raise InvalidConfigError("fft_size must be a power of two, not {0}.".format(n))
        if self.active_subcarriers <= 0 or self.active_subcarriers % 2:
            raise InvalidConfigError(
                "active_subcarriers must be positive and even, not {0}.".format(
                    self.active_subcarriers
                )
            )
        if n < self.active_subcarriers + 1:
            raise InvalidConfigError(
                "fft_size {0} cannot hold {1} active subcarriers plus DC.".format(
                    n, self.active_subcarriers
                )
            )
        if not 0 <= self.cp_length < n:
            raise InvalidConfigError(
                "cp_length must be in [0, fft_size), not {0}.".format(self.cp_length)
            )
        if self.subcarrier_spacing != SUBCARRIER_SPACING_HZ:
            raise InvalidConfigError("Subcarrier spacing is fixed at 15 kHz.")
        return self

    @property
    def sample_rate(self):
        return self.fft_size * self.subcarrier_spacing

    @property
    def samples_per_symbol(self):
        return self.fft_size + self.cp_length

    def subcarrier_bins(self):
        """FFT bins of the active subcarriers, lowest frequency first.

        Half sit below DC and half above; DC itself stays empty.
        """
        half = self.active_subcarriers // 2
        offsets = np.concatenate([np.arange(-half, 0), np.arange(1, half + 1)])
        return offsets % self.fft_size


def ofdm_modulate(grid, cfg):
    """Turns a resource grid into a time-domain sample stream.

    Every OFDM symbol goes through a unitary inverse DFT and gets its last
    `cfg.cp_length` samples prepended as cyclic prefix.
    """
    cfg.validate()
    if grid.dims.subcarriers != cfg.active_subcarriers:
        raise ShapeMismatchError(
            "Grid has {0} subcarriers, OFDM config expects {1}.".format(
                grid.dims.subcarriers, cfg.active_subcarriers
            )
        )
    spectrum = np.zeros((grid.dims.ofdm_symbols, cfg.fft_size), dtype=np.complex128)
    spectrum[:, cfg.subcarrier_bins()] = grid.data.reshape(grid.dims.ofdm_symbols, -1)
    body = np.fft.ifft(spectrum, axis=1, norm="ortho")
    if cfg.cp_length:
        body = np.concatenate([body[:, -cfg.cp_length :], body], axis=1)
    return body.reshape(-1)


def ofdm_demodulate(samples, cfg, dims):
    """Inverse of :func:`ofdm_modulate`: drop the cyclic prefix, take a
    unitary DFT and read the active subcarriers.
    """
    cfg.validate()
    samples = np.asarray(samples)
    expected = dims.ofdm_symbols * cfg.samples_per_symbol
    if samples.size != expected:
        raise ShapeMismatchError(
            "Expected {0} samples for {1} OFDM symbols, got {2}.".format(
                expected, dims.ofdm_symbols, samples.size
            )
        )
    if dims.subcarriers != cfg.active_subcarriers:
        raise ShapeMismatchError(
            "Grid dims ask for {0} subcarriers, OFDM config carries {1}.".format(
                dims.subcarriers, cfg.active_subcarriers
            )
        )
    symbols = samples.reshape(dims.ofdm_symbols, cfg.samples_per_symbol)
    spectrum = np.fft.fft(symbols[:, cfg.cp_length :], axis=1, norm="ortho")
    return ResourceGrid(dims, spectrum[:, cfg.subcarrier_bins()].reshape(dims.shape))


def fill_grid_random(dims, c, seed):
    """Fills every resource element with an independent uniform symbol.

    :returns: ``(grid, indices)`` where `indices` is the ground truth in
        row-major order.
    """
    dims.validate()
    rng = np.random.default_rng(seed)
    indices = rng.integers(0, c.order, size=dims.resource_elements, dtype=np.int64)
    return grid_from_indices(dims, indices, c), indices


def grid_from_indices(dims, indices, c):
    return ResourceGrid(dims, c.map(np.asarray(indices)).reshape(dims.shape))
