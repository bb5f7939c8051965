"""Module: icancel.dataset

Generates the frame corpus, cuts it into 64-symbol blocks and reads and
writes the ``DIC1`` split files.

File layout (all little-endian)::

    magic "DIC1" | version u16 | 16 x int64 header fields | 2 x float64
    per frame: corrupted grid, clean grid; each RE as float32 I, float32 Q
    CRC-32 (u32) over everything before it

One file per split (``train.dic``, ``val.dic``, ``test.dic``) plus the
plain-text ``manifest.txt`` sidecar.
"""
__docformat__ = "restructuredtext en"

import logging
import math
import os
import struct
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from icancel.channel import (
    GAIN_SCOPES,
    InterferenceConfig,
    NoiseConfig,
    apply_awgn,
    apply_interference,
)
from icancel.constellation import SUPPORTED_ORDERS, build_constellation
from icancel.errors import (
    CorruptPayloadError,
    EmptyDatasetError,
    InvalidConfigError,
    ShapeMismatchError,
    VersionMismatchError,
)
from icancel.phy import GridDims, ResourceGrid, fill_grid_random
from icancel.presets.architecture import BLOCK_LENGTH

log = logging.getLogger("icancel.dataset")

MAGIC = b"DIC1"
FORMAT_VERSION = 1
SPLITS = ("train", "val", "test")
MANIFEST_NAME = "manifest.txt"
THREADS_ENV = "DIC_THREADS"

HEADER = struct.Struct("<4sH16q2d")
FOOTER = struct.Struct("<I")
_CHUNK = 1 << 20


def worker_count():
    """Worker parallelism, capped by the ``DIC_THREADS`` environment variable."""
    default = os.cpu_count() or 1
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        raise InvalidConfigError(
            "{0} must be a positive integer, not {1!r}.".format(THREADS_ENV, raw)
        )
    if value < 1:
        raise InvalidConfigError("{0} must be at least 1.".format(THREADS_ENV))
    return min(value, default)


@dataclass(frozen=True)
class SymbolBlock(object):
    corrupted: np.ndarray
    clean: np.ndarray
    frame_id: int = 0
    block_id: int = 0

    def __post_init__(self):
        if self.corrupted.shape != (BLOCK_LENGTH,) or self.clean.shape != (BLOCK_LENGTH,):
            raise ShapeMismatchError(
                "Symbol blocks hold exactly {0} symbols.".format(BLOCK_LENGTH)
            )


@dataclass(frozen=True)
class DatasetManifest(object):
    total_frames: int = 1000
    train_frames: int = 500
    val_frames: int = 100
    test_frames: int = 400
    dims: GridDims = field(default_factory=GridDims)
    qam_order: int = 256
    interference: InterferenceConfig = field(default_factory=InterferenceConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    seed: int = 0
    version: int = FORMAT_VERSION

    def validate(self):
        if self.train_frames + self.val_frames + self.test_frames != self.total_frames:
            raise InvalidConfigError(
                "Split sizes {0}/{1}/{2} do not add up to {3} frames.".format(
                    self.train_frames, self.val_frames, self.test_frames, self.total_frames
                )
            )
        if min(self.train_frames, self.val_frames, self.test_frames) < 0:
            raise InvalidConfigError("Split sizes must be non-negative.")
        if self.total_frames < 1:
            raise InvalidConfigError("A dataset needs at least one frame.")
        if self.qam_order not in SUPPORTED_ORDERS:
            raise InvalidConfigError("Unsupported QAM order {0!r}.".format(self.qam_order))
        if self.seed < 0:
            raise InvalidConfigError("Seeds must be non-negative.")
        if self.version != FORMAT_VERSION:
            raise InvalidConfigError("Unknown format version {0}.".format(self.version))
        self.dims.validate()
        self.interference.validate()
        self.noise.validate()
        return self

    @property
    def resolved_interference(self):
        return self.interference.for_victim(self.qam_order)

    def split_range(self, split):
        """Frame ids of `split`; frames are assigned in index order."""
        if split not in SPLITS:
            raise InvalidConfigError(
                "Split must be one of {0}, not {1!r}.".format(", ".join(SPLITS), split)
            )
        bounds = {
            "train": (0, self.train_frames),
            "val": (self.train_frames, self.train_frames + self.val_frames),
            "test": (self.train_frames + self.val_frames, self.total_frames),
        }
        return range(*bounds[split])

    def to_options(self):
        interference = self.resolved_interference
        return {
            "total_frames": self.total_frames,
            "train_frames": self.train_frames,
            "val_frames": self.val_frames,
            "test_frames": self.test_frames,
            "subframes": self.dims.subframes,
            "ofdm_symbols_per_subframe": self.dims.ofdm_symbols_per_subframe,
            "subcarriers": self.dims.subcarriers,
            "qam_order": self.qam_order,
            "interferer_order": interference.interferer_order,
            "sir_db": interference.sir_db,
            "gain_scope": interference.gain_scope,
            "interference_seed": interference.seed,
            "snr_db": "off" if self.noise.snr_db is None else self.noise.snr_db,
            "seed": self.seed,
            "version": self.version,
        }

    @classmethod
    def from_options(cls, options):
        """Builds a manifest from `to_options`-style values (strings allowed)."""
        snr = options.get("snr_db", "off")
        return cls(
            total_frames=int(options["total_frames"]),
            train_frames=int(options["train_frames"]),
            val_frames=int(options["val_frames"]),
            test_frames=int(options["test_frames"]),
            dims=GridDims(
                int(options["subframes"]),
                int(options["ofdm_symbols_per_subframe"]),
                int(options["subcarriers"]),
            ),
            qam_order=int(options["qam_order"]),
            interference=InterferenceConfig(
                sir_db=float(options["sir_db"]),
                interferer_order=int(options["interferer_order"]),
                gain_scope=str(options["gain_scope"]),
                seed=int(options["interference_seed"]),
            ),
            noise=NoiseConfig(None if str(snr) == "off" else float(snr)),
            seed=int(options["seed"]),
            version=int(options.get("version", FORMAT_VERSION)),
        )


def write_manifest(manifest, path):
    with open(path, "w", encoding="utf-8") as f:
        for key, value in manifest.to_options().items():
            f.write("{0}={1}\n".format(key, value))


def read_manifest(path):
    options = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line and not line.startswith("#"):
                key, _, value = line.partition("=")
                options[key.strip()] = value.strip()
    try:
        return DatasetManifest.from_options(options).validate()
    except (KeyError, ValueError) as e:
        raise CorruptPayloadError("Manifest {0} is unreadable: {1}".format(path, e))


def generate_frame(manifest, frame_id):
    """Returns ``(corrupted, clean)`` complex64 grids of one frame."""
    c = build_constellation(manifest.qam_order)
    frame_seed = manifest.seed ^ frame_id
    clean, _ = fill_grid_random(manifest.dims, c, frame_seed)
    corrupted, _ = apply_interference(clean, manifest.resolved_interference, frame_id)
    if manifest.noise.enabled:
        corrupted = apply_awgn(corrupted, manifest.noise, frame_seed)
    return corrupted.data.astype(np.complex64), clean.data.astype(np.complex64)


def _grid_bytes(grid):
    iq = np.empty(grid.shape + (2,), dtype="<f4")
    iq[..., 0] = grid.real
    iq[..., 1] = grid.imag
    return iq.tobytes()


def _frame_bytes(manifest, frame_id):
    corrupted, clean = generate_frame(manifest, frame_id)
    log.debug("Generated frame %d", frame_id)
    return _grid_bytes(corrupted) + _grid_bytes(clean)


def _pack_header(manifest, split, frames):
    interference = manifest.resolved_interference
    snr = math.nan if manifest.noise.snr_db is None else manifest.noise.snr_db
    return HEADER.pack(
        MAGIC,
        manifest.version,
        SPLITS.index(split),
        frames.start,
        len(frames),
        manifest.total_frames,
        manifest.train_frames,
        manifest.val_frames,
        manifest.test_frames,
        manifest.dims.subframes,
        manifest.dims.ofdm_symbols_per_subframe,
        manifest.dims.subcarriers,
        manifest.qam_order,
        interference.interferer_order,
        GAIN_SCOPES.index(interference.gain_scope),
        interference.seed,
        manifest.seed,
        int(manifest.noise.enabled),
        interference.sir_db,
        snr,
    )


def split_path(path, split):
    return os.path.join(path, "{0}.dic".format(split))


def generate_dataset(manifest, output):
    """Simulates every frame of `manifest` and writes the split files.

    Frames are produced in parallel (see :func:`worker_count`) and written
    in frame order, so identical manifests give byte-identical files.

    :returns: Dict mapping split name to the written filename.
    """
    manifest.validate()
    os.makedirs(output, exist_ok=True)
    written = {}
    workers = worker_count()
    # bounds the number of generated frames held in memory
    window = 2 * workers
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for split in SPLITS:
            frames = manifest.split_range(split)
            filename = split_path(output, split)
            header = _pack_header(manifest, split, frames)
            crc = zlib.crc32(header)
            with open(filename, "wb") as f:
                f.write(header)
                for start in range(0, len(frames), window):
                    batch = frames[start : start + window]
                    for payload in pool.map(lambda i: _frame_bytes(manifest, i), batch):
                        crc = zlib.crc32(payload, crc)
                        f.write(payload)
                f.write(FOOTER.pack(crc & 0xFFFFFFFF))
            log.info("Wrote %d %s frames to %s", len(frames), split, filename)
            written[split] = filename
    write_manifest(manifest, os.path.join(output, MANIFEST_NAME))
    return written


def _unpack_header(raw, filename):
    if len(raw) < HEADER.size:
        raise CorruptPayloadError("{0} is truncated inside its header.".format(filename))
    fields = HEADER.unpack(raw)
    if fields[0] != MAGIC:
        raise CorruptPayloadError("{0} is not a DIC1 dataset file.".format(filename))
    if fields[1] != FORMAT_VERSION:
        raise VersionMismatchError(
            "{0} has format version {1}, this reader understands {2}.".format(
                filename, fields[1], FORMAT_VERSION
            )
        )
    (
        split_code,
        first_frame,
        frame_count,
        total,
        train,
        val,
        test,
        subframes,
        symbols,
        subcarriers,
        order,
        interferer_order,
        scope,
        interference_seed,
        seed,
        noise_on,
    ) = fields[2:18]
    sir_db, snr_db = fields[18:]
    if not 0 <= split_code < len(SPLITS) or not 0 <= scope < len(GAIN_SCOPES):
        raise CorruptPayloadError("{0} has an invalid header.".format(filename))
    try:
        manifest = DatasetManifest(
            total_frames=total,
            train_frames=train,
            val_frames=val,
            test_frames=test,
            dims=GridDims(subframes, symbols, subcarriers),
            qam_order=order,
            interference=InterferenceConfig(
                sir_db=sir_db,
                interferer_order=interferer_order,
                gain_scope=GAIN_SCOPES[scope],
                seed=interference_seed,
            ),
            noise=NoiseConfig(snr_db if noise_on else None),
            seed=seed,
        ).validate()
    except InvalidConfigError as e:
        raise CorruptPayloadError("{0} has an invalid header: {1}".format(filename, e))
    return manifest, SPLITS[split_code], first_frame, frame_count


class SplitReader(object):
    """Validated reader for one ``DIC1`` split file.

    Opening checks magic, version, length and CRC before any frame is
    handed out.
    """

    def __init__(self, filename):
        self.filename = filename
        if not os.path.exists(filename):
            raise FileNotFoundError("Dataset file {0} does not exist.".format(filename))
        with open(filename, "rb") as f:
            header = f.read(HEADER.size)
            self.manifest, self.split, self.first_frame, self.frame_count = _unpack_header(
                header, filename
            )
            self.frame_bytes = 2 * self.manifest.dims.resource_elements * 8
            expected = HEADER.size + self.frame_count * self.frame_bytes + FOOTER.size
            size = os.fstat(f.fileno()).st_size
            if size != expected:
                raise CorruptPayloadError(
                    "{0} holds {1} bytes, its header promises {2}.".format(
                        filename, size, expected
                    )
                )
            crc = zlib.crc32(header)
            remaining = size - HEADER.size - FOOTER.size
            while remaining:
                chunk = f.read(min(_CHUNK, remaining))
                crc = zlib.crc32(chunk, crc)
                remaining -= len(chunk)
            (stored,) = FOOTER.unpack(f.read(FOOTER.size))
        if stored != crc & 0xFFFFFFFF:
            raise CorruptPayloadError("{0} failed its checksum.".format(filename))

    def frames(self):
        """Yields ``(frame_id, corrupted, clean)`` with complex64 grids."""
        shape = self.manifest.dims.shape
        half = self.frame_bytes // 2
        with open(self.filename, "rb") as f:
            f.seek(HEADER.size)
            for n in range(self.frame_count):
                raw = f.read(self.frame_bytes)
                grids = []
                for part in (raw[:half], raw[half:]):
                    iq = np.frombuffer(part, dtype="<f4").reshape(shape + (2,))
                    grids.append((iq[..., 0] + 1j * iq[..., 1]).astype(np.complex64))
                yield self.first_frame + n, grids[0], grids[1]


def blockify(corrupted, clean, frame_id=0):
    """Cuts a frame into consecutive 64-symbol blocks.

    Resource elements are read row-major; a trailing remainder shorter
    than 64 symbols is dropped.
    """
    if isinstance(corrupted, ResourceGrid):
        corrupted = corrupted.data
    if isinstance(clean, ResourceGrid):
        clean = clean.data
    corrupted = np.asarray(corrupted)
    clean = np.asarray(clean)
    if corrupted.shape != clean.shape:
        raise ShapeMismatchError("Corrupted and clean grids differ in shape.")
    rows_c, rows_x = block_rows(corrupted), block_rows(clean)
    return [
        SymbolBlock(rows_c[k], rows_x[k], frame_id, k) for k in range(rows_c.shape[0])
    ]


def block_rows(grid):
    flat = np.asarray(grid).reshape(-1)
    n_blocks = flat.size // BLOCK_LENGTH
    return flat[: n_blocks * BLOCK_LENGTH].reshape(n_blocks, BLOCK_LENGTH)


def open_split(path, split):
    if split not in SPLITS:
        raise InvalidConfigError(
            "Split must be one of {0}, not {1!r}.".format(", ".join(SPLITS), split)
        )
    return SplitReader(split_path(path, split))


def load_dataset(path, split):
    """Yields the :class:`SymbolBlock` objects of `split` in file order."""
    reader = open_split(path, split)
    for frame_id, corrupted, clean in reader.frames():
        for block in blockify(corrupted, clean, frame_id):
            yield block


@dataclass
class SplitArrays(object):
    """All blocks of one split stacked into arrays."""

    corrupted: np.ndarray
    clean: np.ndarray
    frame_ids: np.ndarray
    manifest: DatasetManifest

    def __len__(self):
        return self.corrupted.shape[0]

    def subset(self, count):
        return replace(
            self,
            corrupted=self.corrupted[:count],
            clean=self.clean[:count],
            frame_ids=self.frame_ids[:count],
        )


def load_split_arrays(path, split):
    reader = open_split(path, split)
    corrupted, clean, frame_ids = [], [], []
    for frame_id, c_grid, x_grid in reader.frames():
        rows = block_rows(c_grid)
        corrupted.append(rows)
        clean.append(block_rows(x_grid))
        frame_ids.append(np.full(rows.shape[0], frame_id, dtype=np.int64))
    if not corrupted or not sum(r.shape[0] for r in corrupted):
        raise EmptyDatasetError("Split {0!r} under {1} holds no blocks.".format(split, path))
    return SplitArrays(
        np.concatenate(corrupted),
        np.concatenate(clean),
        np.concatenate(frame_ids),
        reader.manifest,
    )
