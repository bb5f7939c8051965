"""Module: icancel.channel

Co-channel QAM interference and additive white Gaussian noise applied at
the resource-element level. With synchronized OFDM over a flat channel
this is identical, per RE, to modulating the interferer separately.
"""
__docformat__ = "restructuredtext en"

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from icancel.constellation import (
    SUPPORTED_ORDERS,
    build_constellation,
    demap_hard,
    symbol_error_rate,
)
from icancel.errors import CalibrationError, InvalidConfigError
from icancel.phy import GridDims, ResourceGrid, fill_grid_random
from icancel.presets.architecture import BLOCK_LENGTH

log = logging.getLogger("icancel.channel")

GAIN_SCOPES = ("per_dataset", "per_frame", "per_block")
SIR_BRACKET_DB = (-10.0, 50.0)
# per_frame calibration averages over this many frame phases
CALIBRATION_FRAMES = 64

# independent RNG streams keyed next to the seed
_STREAM_INTERFERER = 1
_STREAM_PHASE = 2
_STREAM_NOISE = 3


@dataclass(frozen=True)
class InterferenceConfig(object):
    """Co-channel interferer.

    `sir_db` of ``math.inf`` switches interference off. `interferer_order`
    of None means "same order as the victim" and is resolved with
    :meth:`for_victim`.
    """

    sir_db: float = math.inf
    interferer_order: int = None
    gain_scope: str = "per_dataset"
    seed: int = 0

    def validate(self):
        if math.isnan(self.sir_db) or self.sir_db == -math.inf:
            raise InvalidConfigError("sir_db must be finite or +inf (off).")
        if self.interferer_order is not None and self.interferer_order not in SUPPORTED_ORDERS:
            raise InvalidConfigError(
                "Interferer order {0!r} is not a supported QAM order.".format(
                    self.interferer_order
                )
            )
        if self.gain_scope not in GAIN_SCOPES:
            raise InvalidConfigError(
                "gain_scope must be one of {0}, not {1!r}.".format(
                    ", ".join(GAIN_SCOPES), self.gain_scope
                )
            )
        if self.seed < 0:
            raise InvalidConfigError("Seeds must be non-negative.")
        return self

    @property
    def enabled(self):
        return not math.isinf(self.sir_db)

    @property
    def amplitude(self):
        return 0.0 if not self.enabled else 10.0 ** (-self.sir_db / 20.0)

    def for_victim(self, order):
        if self.interferer_order is None:
            return replace(self, interferer_order=order)
        return self


@dataclass(frozen=True)
class NoiseConfig(object):
    """Receiver noise; `snr_db` of None switches it off."""

    snr_db: float = None

    def validate(self):
        if self.snr_db is not None and not math.isfinite(self.snr_db):
            raise InvalidConfigError("snr_db must be finite when noise is on.")
        return self

    @property
    def enabled(self):
        return self.snr_db is not None


def _phases(cfg, frame_id, count):
    if cfg.gain_scope == "per_dataset":
        rng = np.random.default_rng((cfg.seed, _STREAM_PHASE))
        return np.full(count, rng.uniform(0.0, 2.0 * np.pi))
    rng = np.random.default_rng((cfg.seed ^ frame_id, _STREAM_PHASE))
    if cfg.gain_scope == "per_frame":
        return np.full(count, rng.uniform(0.0, 2.0 * np.pi))
    n_blocks = -(-count // BLOCK_LENGTH)
    return np.repeat(rng.uniform(0.0, 2.0 * np.pi, size=n_blocks), BLOCK_LENGTH)[:count]


def apply_interference(grid, cfg, frame_id=0):
    """Adds ``g * i`` to every resource element.

    ``i`` is an independent uniform point of the interferer constellation
    and ``g = A * exp(j*phi)`` with ``A = 10**(-sir_db/20)``. The phase is
    drawn once per `cfg.gain_scope` unit.

    :returns: ``(corrupted, interferer_truth)`` with
        ``corrupted.data - grid.data == interferer_truth.data``.
    """
    cfg.validate()
    if not cfg.enabled:
        return grid.copy(), ResourceGrid.zeros(grid.dims, dtype=grid.data.dtype)
    if cfg.interferer_order is None:
        raise InvalidConfigError("Interferer order is unresolved, call for_victim().")

    count = grid.dims.resource_elements
    interferer = build_constellation(cfg.interferer_order)
    rng = np.random.default_rng((cfg.seed ^ frame_id, _STREAM_INTERFERER))
    symbols = interferer.points[rng.integers(0, interferer.order, size=count)]
    gain = cfg.amplitude * np.exp(1j * _phases(cfg, frame_id, count))

    clean = grid.flatten()
    corrupted = clean + gain * symbols
    truth = corrupted - clean
    return (
        ResourceGrid(grid.dims, corrupted.reshape(grid.dims.shape)),
        ResourceGrid(grid.dims, truth.reshape(grid.dims.shape)),
    )


def apply_awgn(grid, cfg, seed):
    """Adds circularly-symmetric complex Gaussian noise of per-RE variance
    ``10**(-snr_db/10)``, assuming unit signal energy.
    """
    cfg.validate()
    if not cfg.enabled:
        return grid.copy()
    variance = 10.0 ** (-cfg.snr_db / 10.0)
    rng = np.random.default_rng((seed, _STREAM_NOISE))
    noise = rng.standard_normal((2,) + grid.dims.shape) * math.sqrt(variance / 2.0)
    return ResourceGrid(grid.dims, grid.data + noise[0] + 1j * noise[1])


def measure_ser(grid, clean_indices, c):
    return symbol_error_rate(clean_indices, demap_hard(grid.flatten(), c))


def calibrate_sir(target_ser, c, template, trials=100000, tolerance=0.01):
    """Finds the SIR at which hard decisions on corrupted symbols reach
    `target_ser` within `tolerance`.

    Bisection over `SIR_BRACKET_DB` with a fixed Monte-Carlo draw, so every
    candidate SIR sees the same symbols and interferers. A ``per_frame``
    template spreads the draw over `CALIBRATION_FRAMES` frame phases.

    With a single phase (``per_dataset``) and no noise the SER is a step
    function of the SIR, so some targets fall between two steps.

    :returns: sir_db
    :raises CalibrationError: if the bracket does not contain the target
        or no SIR gets within `tolerance` of it.
    """
    if not 0.0 < target_ser < 1.0:
        raise CalibrationError(
            "Target SER must lie strictly between 0 and 1, not {0!r}.".format(target_ser)
        )
    if not tolerance > 0.0:
        raise CalibrationError(
            "Calibration tolerance must be positive, not {0!r}.".format(tolerance)
        )
    template = template.for_victim(c.order)
    frames = CALIBRATION_FRAMES if template.gain_scope == "per_frame" else 1
    dims = GridDims(1, 1, max(1, int(trials) // frames))
    draws = [fill_grid_random(dims, c, template.seed ^ k) for k in range(frames)]

    def ser_at(sir_db):
        cfg = replace(template, sir_db=sir_db)
        return float(
            np.mean(
                [
                    measure_ser(apply_interference(grid, cfg, frame_id)[0], truth, c)
                    for frame_id, (grid, truth) in enumerate(draws)
                ]
            )
        )

    low, high = SIR_BRACKET_DB
    ser_low, ser_high = ser_at(low), ser_at(high)
    if not ser_high <= target_ser <= ser_low:
        raise CalibrationError(
            "Target SER {0} is outside [{1:.5f}, {2:.5f}] reachable within "
            "{3} to {4} dB.".format(target_ser, ser_high, ser_low, low, high)
        )

    best_sir, best_ser = low, ser_low
    for _ in range(60):
        mid = 0.5 * (low + high)
        ser = ser_at(mid)
        err = abs(ser - target_ser)
        if err < abs(best_ser - target_ser):
            best_sir, best_ser = mid, ser
        if err <= tolerance / 4.0 or high - low < 1e-4:
            break
        if ser > target_ser:
            low = mid
        else:
            high = mid

    if abs(best_ser - target_ser) > tolerance:
        raise CalibrationError(
            "No SIR reaches SER {0} within {1}: the closest is SER {2:.5f} at {3:.4f} dB. "
            "Use another target, a per_block gain scope or noise.".format(
                target_ser, tolerance, best_ser, best_sir
            )
        )
    log.info(
        "Calibrated SIR %.4f dB for target SER %.4f (measured %.4f).",
        best_sir, target_ser, best_ser,
    )
    return best_sir
