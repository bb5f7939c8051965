# Experiment recipes. Keys follow the command-line option names; each
# subcommand picks the keys it knows.

TRAINING = {
    "epochs": 30,
    "batch_size": 128,
    "learning_rate": 1e-3,
    "patience": 5,
    "iq_mode": "split_iq",
    "lr_schedule": "constant",
}

FULL = dict(
    TRAINING,
    frames=1000,
    train_frames=500,
    val_frames=100,
    test_frames=400,
    subframes=11,
    symbols_per_subframe=140,
    subcarriers=180,
    qam=256,
    calibrate_ser=0.376,
)

# Reduced run for a desk machine. One interferer phase makes the baseline
# SER move in steps; calibration accepts any step within 0.2..0.45.
DESK = {
    "frames": 30,
    "train_frames": 15,
    "val_frames": 5,
    "test_frames": 10,
    "subframes": 2,
    "symbols_per_subframe": 20,
    "subcarriers": 64,
    "qam": 16,
    "calibrate_ser": 0.325,
    "calibrate_tolerance": 0.125,
    "epochs": 300,
    "batch_size": 16,
    "learning_rate": 2e-3,
    "patience": 100,
    "iq_mode": "stacked_iq",
    "lr_schedule": "cosine",
}

# proportional split used when only a frame total is given
SPLIT_PERCENT = {"train_frames": 50, "val_frames": 10, "test_frames": 40}

CALIBRATION_BLOCKS = 256
SWEEP_BITS = (8, 12, 16, 32)

RECIPES = {"full": FULL, "desk": DESK}
