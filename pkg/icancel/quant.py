"""Module: icancel.quant

Post-training fixed-point quantization of a trained canceller,
fake-quantized inference, bit-width sweeps and the latency arithmetic of
a hardware implementation.

Quantization is symmetric and per tensor: ``q = clip(round(w / s))`` with
``s = max|w| / (2**(b-1) - 1)``; inference consumes ``s * q``.
"""
__docformat__ = "restructuredtext en"

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from icancel.canceller import (
    INFERENCE_CHUNK,
    Canceller,
    ModelCheckpoint,
    as_blocks,
    check_iq_mode,
    evaluate,
    from_network_output,
    to_network_input,
)
from icancel.dataset import worker_count
from icancel.errors import (
    EmptyDatasetError,
    InvalidConfigError,
    ShapeMismatchError,
    UncalibratedError,
)
from icancel.presets import recipes
from icancel.presets.architecture import BLOCK_LENGTH

log = logging.getLogger("icancel.quant")

MIN_BITS = 4
MAX_BITS = 32
SWEEP_HEADER = ("bits", "ser_after", "latency_s", "param_bytes")
POWER_PROVENANCE = "reported FPGA estimate, not modelled"
INPUT = "input"


def check_bits(bits, what="bit width"):
    if int(bits) != bits or not MIN_BITS <= bits <= MAX_BITS:
        raise InvalidConfigError(
            "{0} must be an integer in [{1}, {2}], not {3!r}.".format(
                what, MIN_BITS, MAX_BITS, bits
            )
        )
    return int(bits)


@dataclass(frozen=True)
class QuantScheme(object):
    """Symmetric per-tensor fixed-point format for weights and activations."""

    weight_bits: int = 8
    activation_bits: int = 8

    def validate(self):
        check_bits(self.weight_bits, "weight_bits")
        check_bits(self.activation_bits, "activation_bits")
        return self

    @classmethod
    def uniform(cls, bits):
        return cls(bits, bits).validate()


def qmax(bits):
    return 2 ** (check_bits(bits) - 1) - 1


def tensor_scale(values, bits):
    """Max-abs scale; an all-zero tensor gets scale 1."""
    peak = float(np.max(np.abs(values))) if np.size(values) else 0.0
    return peak / qmax(bits) if peak > 0.0 else 1.0


def quantize_tensor(values, bits, scale=None):
    """:returns: ``(q, scale)`` with integer `q` in ``[-2**(b-1), 2**(b-1)-1]``."""
    if scale is None:
        scale = tensor_scale(values, bits)
    if not scale > 0.0:
        raise InvalidConfigError("Quantization scales must be positive.")
    top = qmax(bits)
    q = np.clip(np.rint(np.asarray(values, dtype=np.float64) / scale), -top - 1, top)
    return q.astype(np.int64), scale


def dequantize(q, scale):
    return q.astype(np.float64) * scale


def fake_quantize(values, bits, scale=None):
    """Quantize then dequantize; returns float32 like the network tensors."""
    q, scale = quantize_tensor(values, bits, scale)
    return dequantize(q, scale).astype(np.float32)


class QuantizedCanceller(object):
    """A canceller whose weights are replaced by their fixed-point values
    and whose layer outputs are fake-quantized once activation scales have
    been calibrated.
    """

    def __init__(self, model, scheme):
        self.scheme = scheme.validate()
        self.iq_mode = model.iq_mode
        self.model = Canceller(model.iq_mode, model.seed).load_state_dict(
            model.state_dict()
        ).eval()
        self.weight_scales = {}
        for name, tensor in self.model.network.named_parameters():
            values, scale = _fake_quantize_with_scale(tensor.data, scheme.weight_bits)
            tensor.data[...] = values
            self.weight_scales[name] = scale
            log.debug("Weight %s: scale %.6g at %d bits.", name, scale, scheme.weight_bits)
        self.activation_scales = None

    def __repr__(self):
        return "<QuantizedCanceller(weights={0}b, activations={1}b)>".format(
            self.scheme.weight_bits, self.scheme.activation_bits
        )

    def __call__(self, blocks):
        return self.predict(blocks)

    @property
    def calibrated(self):
        return self.activation_scales is not None

    def parameter_count(self):
        return self.model.parameter_count()

    def calibrate(self, blocks):
        """Sets per-layer activation scales from the max-abs value each
        layer emits on `blocks`.
        """
        blocks = as_blocks(blocks)
        if blocks.shape[0] == 0:
            raise EmptyDatasetError("Calibration needs at least one block.")
        x = to_network_input(blocks, self.iq_mode)
        bits = self.scheme.activation_bits
        scales = {INPUT: tensor_scale(x, bits)}
        for name, module in self.model.network:
            x = module.forward(x)
            scales[name] = tensor_scale(x, bits)
            log.debug("Activation %s: scale %.6g at %d bits.", name, scales[name], bits)
        self.activation_scales = scales
        return self

    def predict(self, blocks):
        if not self.calibrated:
            raise UncalibratedError("Activation scales are not calibrated yet.")
        blocks = as_blocks(blocks)
        out = np.empty(blocks.shape, dtype=np.complex64)
        for start in range(0, blocks.shape[0], INFERENCE_CHUNK):
            chunk = blocks[start : start + INFERENCE_CHUNK]
            out[start : start + chunk.shape[0]] = self._predict_chunk(chunk)
        return out

    def _predict_chunk(self, blocks):
        bits = self.scheme.activation_bits
        scales = self.activation_scales
        x = fake_quantize(to_network_input(blocks, self.iq_mode), bits, scales[INPUT])
        for name, module in self.model.network:
            x = fake_quantize(module.forward(x), bits, scales[name])
        return from_network_output(x)


def _fake_quantize_with_scale(values, bits):
    q, scale = quantize_tensor(values, bits)
    return dequantize(q, scale).astype(np.float32), scale


def quantize_checkpoint(model, scheme, calibration_blocks=None):
    """Quantizes every weight tensor of `model` (a Canceller or a
    ModelCheckpoint) and, when `calibration_blocks` are given, calibrates
    the activation scales on at most 256 of them.

    :rtype: QuantizedCanceller
    """
    if isinstance(model, ModelCheckpoint):
        model = model.to_model()
    quantized = QuantizedCanceller(model, scheme)
    if calibration_blocks is not None:
        quantized.calibrate(as_blocks(calibration_blocks)[: recipes.CALIBRATION_BLOCKS])
    return quantized


def quantized_forward(block, quantized):
    """Recovers one block through the fake-quantized network."""
    block = np.asarray(block)
    if block.shape != (BLOCK_LENGTH,):
        raise ShapeMismatchError(
            "A block holds {0} symbols, got shape {1}.".format(BLOCK_LENGTH, block.shape)
        )
    return quantized.predict(block)[0]


@dataclass(frozen=True)
class HardwareModel(object):
    """Clock and pipeline figures of an FPGA implementation.

    `power_estimate_watts` is a reported figure carried into the output,
    never derived from the other fields.
    """

    clock_hz: float = 200e6
    nn_extra_cycles: int = 200
    power_estimate_watts: float = 1.0
    target_latency_s: float = 1e-3

    def validate(self):
        if not self.clock_hz > 0:
            raise InvalidConfigError("clock_hz must be positive.")
        if self.nn_extra_cycles < 0:
            raise InvalidConfigError("nn_extra_cycles must not be negative.")
        if not self.power_estimate_watts > 0:
            raise InvalidConfigError("power_estimate_watts must be positive.")
        if not self.target_latency_s > 0:
            raise InvalidConfigError("target_latency_s must be positive.")
        return self

    def latency_budget_share(self):
        """Fraction of the end-to-end latency target spent in the network."""
        return latency_estimate(self) / self.target_latency_s


def latency_estimate(hw):
    hw.validate()
    return hw.nn_extra_cycles / hw.clock_hz


def latency_microseconds(hw):
    hw.validate()
    return hw.nn_extra_cycles * 1e6 / hw.clock_hz


@dataclass(frozen=True)
class SweepRow(object):
    bits: int
    ser_after: float
    latency_s: float
    param_bytes: int


def param_bytes(count, bits):
    return -(-count * bits // 8)


def sweep_report(model, test_arrays, c, bits=recipes.SWEEP_BITS, hw=None, calibration=None):
    """SER after cancellation for each bit width in `bits`.

    Weights and activations share the bit width of a row. Activation
    scales come from the first 256 blocks of `calibration` (the test split
    when omitted). Bit widths are evaluated in parallel.

    :rtype: list of SweepRow
    """
    bits = [check_bits(b) for b in bits]
    if not bits:
        raise InvalidConfigError("The sweep needs at least one bit width.")
    hw = (hw or HardwareModel()).validate()
    if isinstance(model, ModelCheckpoint):
        model = model.to_model()
    check_iq_mode(model.iq_mode)
    blocks = (calibration if calibration is not None else test_arrays).corrupted
    latency = latency_estimate(hw)
    count = model.parameter_count()

    def row(b):
        quantized = quantize_checkpoint(model, QuantScheme.uniform(b), blocks)
        ser = evaluate(quantized, test_arrays, c).ser_after
        log.info("%d bits: SER after cancellation %.6g.", b, ser)
        return SweepRow(b, ser, latency, param_bytes(count, b))

    with ThreadPoolExecutor(max_workers=min(worker_count(), len(bits))) as pool:
        return list(pool.map(row, bits))


def write_sweep_csv(rows, filename):
    with open(filename, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SWEEP_HEADER)
        for r in rows:
            writer.writerow(
                (
                    r.bits,
                    "{0:.9g}".format(r.ser_after),
                    "{0:.9g}".format(r.latency_s),
                    r.param_bytes,
                )
            )
    return filename
