"""Module: icancel.canceller

The convolutional LSTM autoencoder that removes co-channel interference
from 64-symbol blocks, its training loop, the ``DICM`` checkpoint format
and the SER evaluation.

:Provided models:

    - Canceller (``split_iq`` and ``stacked_iq``)
    - IdentityCanceller (diagnostic, passes blocks through unchanged)

Example::

    >>> from icancel.canceller import Canceller
    >>> Canceller("split_iq", seed=0).parameter_count()
    78785

"""
__docformat__ = "restructuredtext en"

import csv
import logging
import math
import struct
import zlib
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from icancel.constellation import demap_hard, symbol_error_rate
from icancel.errors import (
    CheckpointFormatError,
    EmptyDatasetError,
    InvalidConfigError,
    NumericalFaultError,
    ShapeMismatchError,
    VersionMismatchError,
)
from icancel.nncore import (
    GRAD_CLIP_NORM,
    LSTM,
    Adam,
    BatchNorm1d,
    Conv1d,
    ReLU,
    Sequential,
    SwapAxes,
    clip_grad_norm,
    mse_loss,
)
from icancel.presets import architecture, recipes
from icancel.presets.architecture import BLOCK_LENGTH

log = logging.getLogger("icancel.canceller")

IQ_MODES = tuple(architecture.IQ_CHANNELS)
LR_SCHEDULES = ("constant", "cosine")
INFERENCE_CHUNK = 256

CHECKPOINT_MAGIC = b"DICM"
CHECKPOINT_VERSION = 1
# magic, version, iq_mode, epochs_run, val_loss, learning_rate, batch_size,
# seed, record count
CHECKPOINT_HEADER = struct.Struct("<4sHBqddqqq")
CHECKPOINT_FOOTER = struct.Struct("<I")
_INT64 = struct.Struct("<q")

LOSS_CURVE_HEADER = ("epoch", "train_loss", "val_loss")
REPORT_HEADER = ("frame_id", "ser_before", "ser_after")
HISTOGRAM_HEADER = ("bin_low", "bin_high", "count_before", "count_after")
CONSTELLATION_HEADER = (
    "corrupted_i",
    "corrupted_q",
    "recovered_i",
    "recovered_q",
    "clean_i",
    "clean_q",
)
HISTOGRAM_BINS = 20


def _fmt(value):
    return "{0:.9g}".format(value)


def check_iq_mode(iq_mode):
    if iq_mode not in IQ_MODES:
        raise InvalidConfigError(
            "iq_mode must be one of {0}, not {1!r}.".format(", ".join(IQ_MODES), iq_mode)
        )
    return iq_mode


def as_blocks(blocks):
    """Returns `blocks` as a ``[B, 64]`` complex array; one block may be
    passed as a flat sequence of 64 values.
    """
    blocks = np.asarray(blocks)
    if blocks.ndim == 1:
        blocks = blocks[None, :]
    if blocks.ndim != 2 or blocks.shape[1] != BLOCK_LENGTH:
        raise ShapeMismatchError(
            "Expected blocks of {0} symbols, got shape {1}.".format(
                BLOCK_LENGTH, blocks.shape
            )
        )
    return blocks


def to_network_input(blocks, iq_mode):
    """Complex blocks ``[B, 64]`` to the real network layout.

    ``split_iq`` gives ``[2B, 1, 64]``, the I row of each block followed by
    its Q row, so both parts run through the same single-channel network.
    ``stacked_iq`` gives ``[B, 2, 64]``.
    """
    blocks = as_blocks(blocks)
    iq = np.stack([blocks.real, blocks.imag], axis=1).astype(np.float32)
    if iq_mode == "split_iq":
        return iq.reshape(-1, 1, BLOCK_LENGTH)
    return iq


def from_network_output(y):
    """Inverse of :func:`to_network_input` for either layout."""
    iq = np.asarray(y).reshape(-1, 2, BLOCK_LENGTH)
    return (iq[:, 0] + 1j * iq[:, 1]).astype(np.complex64)


def conv_stage(stage, channels, rng):
    for n, (c_in, c_out) in enumerate(channels):
        yield "{0}.conv{1}".format(stage, n), Conv1d(
            c_in, c_out, architecture.KERNEL_SIZE, rng
        )
        yield "{0}.bn{1}".format(stage, n), BatchNorm1d(c_out)
        yield "{0}.relu{1}".format(stage, n), ReLU()


def build_network(iq_mode, rng):
    """Builds the layer chain described in :mod:`icancel.presets.architecture`.

    ``stacked_iq`` widens the first convolution's input and the head's
    output to two channels.
    """
    io_channels = architecture.IQ_CHANNELS[check_iq_mode(iq_mode)]
    modules = []
    for stage, channels in architecture.ENCODER:
        if stage == architecture.ENCODER[0][0]:
            channels = ((io_channels, channels[0][1]),) + tuple(channels[1:])
        modules.extend(conv_stage(stage, channels, rng))
    modules.append(("to_sequence", SwapAxes()))
    for name, in_features, hidden in architecture.LSTMS:
        modules.append((name, LSTM(in_features, hidden, rng)))
    modules.append(("to_channels", SwapAxes()))
    for stage, channels in architecture.DECODER:
        modules.extend(conv_stage(stage, channels, rng))
    name, c_in, _, kernel = architecture.HEAD
    modules.append((name, Conv1d(c_in, io_channels, kernel, rng)))
    network = Sequential(*modules)
    check_chain(network, io_channels)
    return network


def check_chain(network, io_channels):
    """Raises ShapeMismatchError unless every layer consumes exactly the
    feature count its predecessor emits and the chain maps `io_channels`
    sequences of length 64 back onto themselves.
    """
    width = io_channels
    for name, module in network:
        if isinstance(module, BatchNorm1d):
            expected = emitted = module.channels
        elif isinstance(module, Conv1d):
            if module.padding != "same":
                raise ShapeMismatchError("{0} would change the block length.".format(name))
            expected, emitted = module.in_channels, module.out_channels
        elif isinstance(module, LSTM):
            expected, emitted = module.in_features, module.hidden
        else:
            continue
        if expected != width:
            raise ShapeMismatchError(
                "{0} expects {1} features but receives {2}.".format(name, expected, width)
            )
        width = emitted
    if width != io_channels:
        raise ShapeMismatchError(
            "Network emits {0} channels instead of {1}.".format(width, io_channels)
        )


class Canceller(object):
    """Convolutional LSTM autoencoder over 64-symbol blocks.

    :parameters:
        iq_mode : String
            ``split_iq`` (default) or ``stacked_iq``.
        seed : Integer
            Seeds the weight initialization.
    """

    name = "Convolutional LSTM autoencoder"

    def __init__(self, iq_mode="split_iq", seed=0):
        self.iq_mode = check_iq_mode(iq_mode)
        self.seed = seed
        self.network = build_network(iq_mode, np.random.default_rng(seed))

    def __repr__(self):
        return "<Canceller(iq_mode={0!r}, parameters={1})>".format(
            self.iq_mode, self.parameter_count()
        )

    def __call__(self, blocks):
        return self.predict(blocks)

    def named_tensors(self):
        """Yields ``(name, ndarray)`` for every parameter and running
        statistic, layer by layer. The arrays are live, not copies.
        """
        for name, module in self.network:
            for key, tensor in module.named_parameters(name + "."):
                yield key, tensor.data
            for key, buffer in module.named_buffers(name + "."):
                yield key, buffer

    def parameters(self):
        return self.network.parameters()

    def parameter_count(self):
        return int(sum(array.size for _, array in self.named_tensors()))

    def state_dict(self):
        return OrderedDict((name, array.copy()) for name, array in self.named_tensors())

    def load_state_dict(self, tensors):
        live = OrderedDict(self.named_tensors())
        if set(live) != set(tensors):
            missing = sorted(set(live) - set(tensors))
            unknown = sorted(set(tensors) - set(live))
            raise ShapeMismatchError(
                "Tensor names do not match the architecture (missing {0}, unknown {1}).".format(
                    missing, unknown
                )
            )
        for name, array in live.items():
            value = np.asarray(tensors[name])
            if value.shape != array.shape:
                raise ShapeMismatchError(
                    "{0} has shape {1}, the architecture needs {2}.".format(
                        name, value.shape, array.shape
                    )
                )
            array[...] = value
        return self

    def train(self):
        self.network.train()
        return self

    def eval(self):
        self.network.eval()
        return self

    def predict(self, blocks):
        """Runs complex blocks through the network in inference mode.

        :parameters:
            blocks : complex array ``[B, 64]`` or a single block of 64

        :returns: recovered blocks
        :rtype: complex64 array ``[B, 64]``
        """
        blocks = as_blocks(blocks)
        self.eval()
        out = np.empty(blocks.shape, dtype=np.complex64)
        for start in range(0, blocks.shape[0], INFERENCE_CHUNK):
            chunk = blocks[start : start + INFERENCE_CHUNK]
            y = self.network.forward(to_network_input(chunk, self.iq_mode))
            out[start : start + chunk.shape[0]] = from_network_output(y)
        return out

    def checkpoint(self, **metadata):
        return ModelCheckpoint(self.iq_mode, self.state_dict(), **metadata)

    @classmethod
    def from_checkpoint(cls, checkpoint):
        model = cls(checkpoint.iq_mode, checkpoint.seed)
        return model.load_state_dict(checkpoint.tensors).eval()


class IdentityCanceller(object):
    """Diagnostic stand-in that returns its input unchanged."""

    name = "Identity"

    def __init__(self, iq_mode="split_iq"):
        self.iq_mode = check_iq_mode(iq_mode)

    def __repr__(self):
        return "<IdentityCanceller()>"

    def __call__(self, blocks):
        return self.predict(blocks)

    def parameter_count(self):
        return 0

    def predict(self, blocks):
        return as_blocks(blocks).astype(np.complex64)


def forward(block, model, iq_mode):
    """Recovers one block of 64 complex symbols.

    :raises InvalidConfigError: when `iq_mode` is not the one `model` was
        built for.
    """
    if check_iq_mode(iq_mode) != model.iq_mode:
        raise InvalidConfigError(
            "Model was built for {0}, not {1}.".format(model.iq_mode, iq_mode)
        )
    block = np.asarray(block)
    if block.shape != (BLOCK_LENGTH,):
        raise ShapeMismatchError(
            "A block holds {0} symbols, got shape {1}.".format(BLOCK_LENGTH, block.shape)
        )
    return model.predict(block)[0]


def parameter_count(model):
    return model.parameter_count()


# -- checkpoints -----------------------------------------------------------


@dataclass
class ModelCheckpoint(object):
    """Trained weights, running statistics and training metadata."""

    iq_mode: str
    tensors: OrderedDict
    epochs_run: int = 0
    val_loss: float = math.nan
    learning_rate: float = math.nan
    batch_size: int = 0
    seed: int = 0

    def to_model(self):
        return Canceller.from_checkpoint(self)


def checkpoint_bytes(checkpoint):
    header = CHECKPOINT_HEADER.pack(
        CHECKPOINT_MAGIC,
        CHECKPOINT_VERSION,
        IQ_MODES.index(check_iq_mode(checkpoint.iq_mode)),
        checkpoint.epochs_run,
        checkpoint.val_loss,
        checkpoint.learning_rate,
        checkpoint.batch_size,
        checkpoint.seed,
        len(checkpoint.tensors),
    )
    parts = [header]
    for name, array in checkpoint.tensors.items():
        encoded = name.encode("utf-8")
        array = np.asarray(array, dtype="<f4")
        parts.append(_INT64.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_INT64.pack(array.ndim))
        parts.extend(_INT64.pack(dim) for dim in array.shape)
        parts.append(array.tobytes())
    body = b"".join(parts)
    return body + CHECKPOINT_FOOTER.pack(zlib.crc32(body) & 0xFFFFFFFF)


def save_checkpoint(checkpoint, filename):
    """Writes `checkpoint` in ``DICM`` format.

    :returns: The full filename.
    :rtype: String
    """
    with open(filename, "wb") as f:
        f.write(checkpoint_bytes(checkpoint))
    log.info("Checkpoint saved as %s.", filename)
    return filename


class _Cursor(object):
    def __init__(self, raw, offset, filename):
        self.raw = raw
        self.offset = offset
        self.filename = filename

    def take(self, size):
        if size < 0 or self.offset + size > len(self.raw):
            raise CheckpointFormatError(
                "Checkpoint {0} ends inside a tensor record.".format(self.filename)
            )
        chunk = self.raw[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def int64(self):
        return _INT64.unpack(self.take(_INT64.size))[0]


def parse_checkpoint(raw, filename="<bytes>"):
    minimum = CHECKPOINT_HEADER.size + CHECKPOINT_FOOTER.size
    if len(raw) < minimum:
        raise CheckpointFormatError("Checkpoint {0} is truncated.".format(filename))
    if raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError("{0} is not a DICM checkpoint.".format(filename))
    fields = CHECKPOINT_HEADER.unpack_from(raw)
    if fields[1] != CHECKPOINT_VERSION:
        raise VersionMismatchError(
            "Checkpoint {0} has version {1}, expected {2}.".format(
                filename, fields[1], CHECKPOINT_VERSION
            )
        )
    body, footer = raw[: -CHECKPOINT_FOOTER.size], raw[-CHECKPOINT_FOOTER.size :]
    if zlib.crc32(body) & 0xFFFFFFFF != CHECKPOINT_FOOTER.unpack(footer)[0]:
        raise CheckpointFormatError("Checkpoint {0} fails its CRC check.".format(filename))
    _, _, mode, epochs_run, val_loss, lr, batch_size, seed, count = fields
    if mode >= len(IQ_MODES):
        raise CheckpointFormatError("Unknown iq_mode code {0} in {1}.".format(mode, filename))
    cursor = _Cursor(body, CHECKPOINT_HEADER.size, filename)
    tensors = OrderedDict()
    for _ in range(count):
        try:
            name = cursor.take(cursor.int64()).decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointFormatError("Bad tensor name in {0}.".format(filename))
        rank = cursor.int64()
        if not 0 < rank <= 8:
            raise CheckpointFormatError("Tensor {0} has rank {1}.".format(name, rank))
        shape = tuple(cursor.int64() for _ in range(rank))
        if min(shape) < 1:
            raise CheckpointFormatError("Tensor {0} has shape {1}.".format(name, shape))
        size = int(np.prod(shape))
        payload = cursor.take(4 * size)
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)
    if cursor.offset != len(body):
        raise CheckpointFormatError("Trailing bytes after the records in {0}.".format(filename))
    return ModelCheckpoint(
        IQ_MODES[mode], tensors, epochs_run, val_loss, lr, batch_size, seed
    )


def load_checkpoint(filename):
    """Reads a ``DICM`` checkpoint and checks it against the architecture.

    :raises CheckpointFormatError: on truncation, corruption or tensors
        that do not fit the layer chain.
    :raises VersionMismatchError: on an unknown format version.
    """
    with open(filename, "rb") as f:
        raw = f.read()
    checkpoint = parse_checkpoint(raw, filename)
    try:
        checkpoint.to_model()
    except ShapeMismatchError as e:
        raise CheckpointFormatError("Checkpoint {0} does not fit: {1}".format(filename, e))
    return checkpoint


# -- training --------------------------------------------------------------


@dataclass
class TrainConfig(object):
    epochs: int = recipes.TRAINING["epochs"]
    batch_size: int = recipes.TRAINING["batch_size"]
    learning_rate: float = recipes.TRAINING["learning_rate"]
    seed: int = 0
    patience: int = recipes.TRAINING["patience"]
    iq_mode: str = recipes.TRAINING["iq_mode"]
    grad_clip: float = GRAD_CLIP_NORM
    lr_schedule: str = recipes.TRAINING["lr_schedule"]

    def validate(self):
        if self.epochs < 0:
            raise InvalidConfigError("epochs must not be negative.")
        if self.batch_size < 1:
            raise InvalidConfigError("batch_size must be positive.")
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise InvalidConfigError("learning_rate must be a positive number.")
        if self.seed < 0:
            raise InvalidConfigError("Seeds must be non-negative.")
        if self.patience < 1:
            raise InvalidConfigError("patience must be positive.")
        if not (math.isfinite(self.grad_clip) and self.grad_clip > 0):
            raise InvalidConfigError("grad_clip must be a positive number.")
        if self.lr_schedule not in LR_SCHEDULES:
            raise InvalidConfigError(
                "lr_schedule must be one of {0}, not {1!r}.".format(
                    ", ".join(LR_SCHEDULES), self.lr_schedule
                )
            )
        check_iq_mode(self.iq_mode)
        return self

    def epoch_learning_rate(self, epoch):
        """Adam step size for `epoch` (1-based); ``cosine`` decays from
        `learning_rate` towards zero over `epochs`."""
        if self.lr_schedule == "constant":
            return self.learning_rate
        return 0.5 * self.learning_rate * (1.0 + math.cos(math.pi * (epoch - 1) / self.epochs))


@dataclass
class TrainResult(object):
    model: Canceller
    checkpoint: ModelCheckpoint
    loss_curve: list = field(default_factory=list)
    best_epoch: int = 0

    @property
    def final_val_loss(self):
        return self.checkpoint.val_loss


def block_loss(model, arrays):
    """Inference-mode MSE over the real components of `arrays`."""
    recovered = model.predict(arrays.corrupted)
    return mse_loss(
        to_network_input(recovered, "stacked_iq"),
        to_network_input(arrays.clean, "stacked_iq"),
    )[0]


def _train_epoch(model, arrays, cfg, optimizer, rng, epoch):
    model.train()
    params = model.parameters()
    order = rng.permutation(len(arrays))
    total = 0.0
    for start in range(0, order.size, cfg.batch_size):
        idx = order[start : start + cfg.batch_size]
        x = to_network_input(arrays.corrupted[idx], model.iq_mode)
        target = to_network_input(arrays.clean[idx], model.iq_mode)
        optimizer.zero_grad()
        y = model.network.forward(x)
        loss, grad = mse_loss(y, target)
        if not math.isfinite(loss):
            raise NumericalFaultError(
                "Loss became {0} in epoch {1} at block offset {2}.".format(loss, epoch, start)
            )
        model.network.backward(grad)
        clip_grad_norm(params, cfg.grad_clip)
        optimizer.step()
        total += loss * idx.size
    return total / order.size


def train(train_arrays, val_arrays, cfg=None):
    """Trains a fresh :class:`Canceller` on `train_arrays` with Adam and
    keeps the weights of the epoch with the lowest validation loss.

    Epoch 0 of the loss curve holds the losses of the untrained model.
    Training stops early after `cfg.patience` epochs without improvement.

    :parameters:
        train_arrays, val_arrays : icancel.dataset.SplitArrays
        cfg : TrainConfig

    :returns: the trained model, its checkpoint and the loss curve
    :rtype: TrainResult
    """
    cfg = (cfg or TrainConfig()).validate()
    for arrays in (train_arrays, val_arrays):
        if len(arrays) == 0:
            raise EmptyDatasetError("Training needs non-empty train and val splits.")
    model = Canceller(cfg.iq_mode, cfg.seed)
    optimizer = Adam(model.parameters(), lr=cfg.learning_rate)
    rng = np.random.default_rng((cfg.seed, 1))

    best_val = block_loss(model, val_arrays)
    curve = [(0, block_loss(model, train_arrays), best_val)]
    best_state, best_epoch, stale = model.state_dict(), 0, 0
    log.info("Untrained: train loss %.6g, val loss %.6g.", curve[0][1], best_val)
    if cfg.epochs == 0:
        log.warning("Zero epochs requested; the checkpoint holds the initialization.")

    for epoch in range(1, cfg.epochs + 1):
        optimizer.lr = cfg.epoch_learning_rate(epoch)
        train_loss = _train_epoch(model, train_arrays, cfg, optimizer, rng, epoch)
        val_loss = block_loss(model, val_arrays)
        curve.append((epoch, train_loss, val_loss))
        log.info("Epoch %d: train loss %.6g, val loss %.6g.", epoch, train_loss, val_loss)
        if val_loss < best_val:
            best_val, best_state, best_epoch, stale = val_loss, model.state_dict(), epoch, 0
        else:
            stale += 1
            if stale >= cfg.patience:
                log.info("No improvement for %d epochs, stopping at epoch %d.", stale, epoch)
                break

    model.load_state_dict(best_state).eval()
    log.info("Keeping epoch %d with val loss %.6g.", best_epoch, best_val)
    checkpoint = model.checkpoint(
        epochs_run=len(curve) - 1,
        val_loss=best_val,
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        seed=cfg.seed,
    )
    return TrainResult(model, checkpoint, curve, best_epoch)


def write_loss_curve(curve, filename):
    with open(filename, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(LOSS_CURVE_HEADER)
        for epoch, train_loss, val_loss in curve:
            writer.writerow((epoch, _fmt(train_loss), _fmt(val_loss)))
    return filename


# -- evaluation ------------------------------------------------------------


@dataclass
class EvaluationReport(object):
    ser_before: float
    ser_after: float
    frame_ids: np.ndarray
    frame_ser_before: np.ndarray
    frame_ser_after: np.ndarray

    def __len__(self):
        return self.frame_ids.size


def evaluate(model, test_arrays, c):
    """Hard-decision SER of the corrupted and the recovered symbols.

    :parameters:
        model : Canceller, IdentityCanceller or any object with ``predict``
        test_arrays : icancel.dataset.SplitArrays
        c : icancel.constellation.QamConstellation

    :rtype: EvaluationReport
    """
    if len(test_arrays) == 0:
        raise EmptyDatasetError("Cannot evaluate an empty split.")
    recovered = model.predict(test_arrays.corrupted)
    sent = demap_hard(test_arrays.clean, c)
    before = demap_hard(test_arrays.corrupted, c)
    after = demap_hard(recovered, c)

    frame_ids, starts = np.unique(test_arrays.frame_ids, return_index=True)
    frame_ids = frame_ids[np.argsort(starts)]
    per_before, per_after = [], []
    for frame_id in frame_ids:
        mask = test_arrays.frame_ids == frame_id
        per_before.append(symbol_error_rate(sent[mask], before[mask]))
        per_after.append(symbol_error_rate(sent[mask], after[mask]))
    report = EvaluationReport(
        symbol_error_rate(sent, before),
        symbol_error_rate(sent, after),
        frame_ids,
        np.array(per_before),
        np.array(per_after),
    )
    log.info("SER %.6g before and %.6g after cancellation.", report.ser_before, report.ser_after)
    return report


def ser_histogram(report, bins=HISTOGRAM_BINS):
    """Per-frame SER distributions over ``[0, 1]``.

    :returns: rows ``(bin_low, bin_high, count_before, count_after)``
    """
    before, edges = np.histogram(report.frame_ser_before, bins=bins, range=(0.0, 1.0))
    after, _ = np.histogram(report.frame_ser_after, bins=bins, range=(0.0, 1.0))
    return [
        (float(edges[k]), float(edges[k + 1]), int(before[k]), int(after[k]))
        for k in range(bins)
    ]


def write_report(report, filename, config=None):
    """Writes the per-frame SER table, preceded by ``# key=value`` lines
    with the summary and the resolved run configuration.
    """
    with open(filename, "w", newline="", encoding="utf-8") as f:
        f.write("# ser_before={0}\n".format(_fmt(report.ser_before)))
        f.write("# ser_after={0}\n".format(_fmt(report.ser_after)))
        for key, value in sorted((config or {}).items()):
            f.write("# {0}={1}\n".format(key, value))
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for frame_id, before, after in zip(
            report.frame_ids, report.frame_ser_before, report.frame_ser_after
        ):
            writer.writerow((int(frame_id), _fmt(before), _fmt(after)))
    return filename


def write_histogram_csv(rows, filename):
    with open(filename, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(HISTOGRAM_HEADER)
        for low, high, before, after in rows:
            writer.writerow((_fmt(low), _fmt(high), before, after))
    return filename


def constellation_samples(model, arrays, n_blocks):
    """First `n_blocks` blocks as flat ``(corrupted, recovered, clean)``."""
    if n_blocks < 1:
        raise InvalidConfigError("n_blocks must be positive.")
    if len(arrays) == 0:
        raise EmptyDatasetError("No blocks to dump.")
    subset = arrays.subset(n_blocks)
    recovered = model.predict(subset.corrupted)
    return subset.corrupted.ravel(), recovered.ravel(), subset.clean.ravel()


def dump_constellation(model, arrays, n_blocks, filename):
    """Writes aligned corrupted, recovered and clean points of the first
    `n_blocks` blocks, 64 rows per block.

    :returns: number of rows written
    """
    corrupted, recovered, clean = constellation_samples(model, arrays, n_blocks)
    with open(filename, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CONSTELLATION_HEADER)
        for a, b, x in zip(corrupted, recovered, clean):
            writer.writerow(
                (_fmt(a.real), _fmt(a.imag), _fmt(b.real), _fmt(b.imag), _fmt(x.real), _fmt(x.imag))
            )
    return corrupted.size
