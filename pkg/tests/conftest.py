from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from icancel.canceller import TrainConfig, train
from icancel.channel import InterferenceConfig, _phases
from icancel.dataset import DatasetManifest, SplitArrays, block_rows, generate_frame
from icancel.phy import GridDims


def spread_interference(margin=1.25):
    """QPSK interferer on a QPSK victim with one fixed phase 20..70 degrees
    off the I/Q axes.

    The amplitude pushes the larger I or Q offset `margin` times past the
    decision boundary and keeps the smaller one inside, so the baseline SER
    is 1/2 while the sixteen received points stay well apart.
    """
    for seed in range(64):
        cfg = InterferenceConfig(interferer_order=4, gain_scope="per_dataset", seed=seed)
        phi = _phases(cfg, 0, 1)[0] % (np.pi / 2.0)
        if 0.35 < phi < 1.22:
            amplitude = margin / (np.cos(phi) + np.sin(phi))
            return replace(cfg, sir_db=-20.0 * np.log10(amplitude))
    raise AssertionError("no interferer seed with a spread phase")


def interfered_arrays(frames, interference, qam=4, first_frame=0):
    """Blocks of `frames` frames of 128 resource elements each."""
    manifest = DatasetManifest(
        total_frames=first_frame + frames,
        train_frames=first_frame + frames,
        val_frames=0,
        test_frames=0,
        dims=GridDims(1, 2, 64),
        qam_order=qam,
        interference=interference,
    )
    corrupted, clean, frame_ids = [], [], []
    for frame_id in range(first_frame, first_frame + frames):
        c_grid, x_grid = generate_frame(manifest, frame_id)
        corrupted.append(block_rows(c_grid))
        clean.append(block_rows(x_grid))
        frame_ids.append(np.full(2, frame_id))
    return SplitArrays(
        np.concatenate(corrupted), np.concatenate(clean), np.concatenate(frame_ids), manifest
    )


@pytest.fixture(scope="session")
def trained():
    """Canceller fitted to 32 fixed blocks, with fresh frames for testing."""
    interference = spread_interference()
    train_arrays = interfered_arrays(16, interference)
    test_arrays = interfered_arrays(16, interference, first_frame=16)
    cfg = TrainConfig(
        epochs=250,
        batch_size=8,
        learning_rate=3e-3,
        patience=250,
        seed=1,
        iq_mode="stacked_iq",
        lr_schedule="cosine",
    )
    result = train(train_arrays, train_arrays, cfg)
    return SimpleNamespace(result=result, train=train_arrays, test=test_arrays)
