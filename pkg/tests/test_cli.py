import csv
import logging
import os

import pytest

from icancel.canceller import load_checkpoint
from icancel.dataset import MANIFEST_NAME, read_manifest
from icancel.pyicancel import main, split_sizes

SMALL = [
    "--frames",
    "10",
    "--qam",
    "16",
    "--subframes",
    "1",
    "--symbols-per-subframe",
    "2",
    "--subcarriers",
    "64",
]


def generate(tmp_path, *extra):
    out = str(tmp_path / "data")
    assert main(["gen", "--out", out, "--sir-db", "4"] + SMALL + list(extra)) == 0
    return out


def manifest_of(path):
    return read_manifest(os.path.join(path, MANIFEST_NAME))


def read_rows(filename):
    with open(filename, newline="") as f:
        return [row for row in csv.reader(f) if not row[0].startswith("#")]


def write_config(tmp_path, text):
    filename = tmp_path / "run.cfg"
    filename.write_text(text)
    return str(filename)


def test_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    assert "256qam" in out
    assert "split_iq" in out
    assert "bits,ser_after,latency_s,param_bytes" in out


def test_version():
    with pytest.raises(SystemExit) as e:
        main(["--version"])
    assert e.value.code == 0


def test_no_action():
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code == 2


def test_generate(tmp_path, capsys):
    out = generate(tmp_path, "--seed", "7")
    manifest = manifest_of(out)
    assert manifest.total_frames == 10
    assert (manifest.train_frames, manifest.val_frames, manifest.test_frames) == (5, 1, 4)
    assert manifest.qam_order == 16
    assert manifest.interference.sir_db == 4.0
    assert manifest.seed == 7
    assert manifest.interference.seed == 7
    assert "Train split saved as" in capsys.readouterr().out
    for split in ("train", "val", "test"):
        assert os.path.exists(os.path.join(out, split + ".dic"))


def test_generate_explicit_splits(tmp_path):
    out = str(tmp_path / "data")
    splits = ["--train-frames", "2", "--val-frames", "2", "--test-frames", "3"]
    assert main(["gen", "--out", out, "--sir-db", "4"] + SMALL[2:] + splits) == 0
    manifest = manifest_of(out)
    assert manifest.total_frames == 7
    assert manifest.test_frames == 3
    # a matching total is accepted
    out = generate(tmp_path, "--train-frames", "5", "--val-frames", "2", "--test-frames", "3")
    assert manifest_of(out).total_frames == 10


def test_generate_split_total_mismatch(tmp_path, capsys):
    out = str(tmp_path / "data")
    splits = ["--train-frames", "2", "--val-frames", "2", "--test-frames", "3"]
    with pytest.raises(SystemExit) as e:
        main(["gen", "--out", out, "--sir-db", "4"] + SMALL + splits)
    assert e.value.code == 2
    assert "--frames 10 does not match" in capsys.readouterr().err
    assert not os.path.exists(out)


@pytest.mark.parametrize(
    "argv",
    [
        ["--qam", "7"],
        ["--sir-db", "3", "--calibrate-ser", "0.3"],
        ["--gain-scope", "per_symbol", "--sir-db", "3"],
        ["--frames", "many", "--sir-db", "3"],
        ["--sir-db", "3", "--train-frames", "3"],
    ],
)
def test_generate_usage_errors(tmp_path, argv, capsys):
    with pytest.raises(SystemExit) as e:
        main(["gen", "--out", str(tmp_path)] + argv)
    assert e.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_generate_needs_out_and_interference(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["gen", "--sir-db", "3"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["gen", "--out", str(tmp_path)])
    assert e.value.code == 2


def test_invalid_values_are_usage_errors(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["gen", "--out", str(tmp_path), "--sir-db", "3", "--subframes", "0"])
    assert e.value.code == 2


def test_calibrated_generation(tmp_path, capsys):
    out = str(tmp_path / "data")
    argv = ["gen", "--out", out, "--calibrate-ser", "0.3", "--gain-scope", "per_block"]
    assert main(argv + SMALL) == 0
    assert "Calibrated SIR:" in capsys.readouterr().out
    sir_db = manifest_of(out).interference.sir_db
    assert -10.0 < sir_db < 50.0


def test_calibration_miss_is_an_error(tmp_path, capsys):
    out = str(tmp_path / "data")
    argv = ["gen", "--out", out, "--calibrate-ser", "0.3", "--gain-scope", "per_dataset"]
    assert main(argv + SMALL) == 1
    err = capsys.readouterr().err
    assert "ERROR:" in err and "closest is SER" in err
    assert not os.path.exists(out)
    # the same target with a wider tolerance lands on a neighbouring step
    assert main(argv + SMALL + ["--calibrate-tolerance", "0.125"]) == 0
    assert "Calibrated SIR:" in capsys.readouterr().out


def test_config_file_and_flags(tmp_path):
    config = write_config(
        tmp_path,
        "# small run\nqam=16\nseed=1\nsir_db=3\nframes=10\nsubframes=1\n"
        "symbols_per_subframe=2\nsubcarriers=64\n",
    )
    out = str(tmp_path / "data")
    assert main(["gen", "--config", config, "--out", out, "--seed", "5"]) == 0
    manifest = manifest_of(out)
    assert manifest.seed == 5
    assert manifest.qam_order == 16
    assert manifest.interference.sir_db == 3.0


def test_recipe_values_yield_to_flags(tmp_path):
    out = str(tmp_path / "data")
    argv = ["gen", "--recipe", "desk", "--out", out, "--sir-db", "5", "--frames", "4"]
    argv += ["--symbols-per-subframe", "1"]
    assert main(argv) == 0
    manifest = manifest_of(out)
    assert manifest.total_frames == 4
    assert manifest.qam_order == 16
    assert manifest.dims.subcarriers == 64
    assert manifest.interference.sir_db == 5.0


def test_config_file_unknown_key(tmp_path):
    config = write_config(tmp_path, "qam=16\ncolour=blue\n")
    with pytest.raises(SystemExit) as e:
        main(["gen", "--config", config, "--out", str(tmp_path), "--sir-db", "3"])
    assert e.value.code == 2


def test_config_file_without_equals(tmp_path):
    config = write_config(tmp_path, "qam 16\n")
    with pytest.raises(SystemExit) as e:
        main(["gen", "--config", config, "--out", str(tmp_path), "--sir-db", "3"])
    assert e.value.code == 2


def train(tmp_path, data, *extra):
    checkpoint = str(tmp_path / "model.dicm")
    argv = ["train", "--data", data, "--out", checkpoint, "--batch-size", "4"]
    assert main(argv + list(extra)) == 0
    return checkpoint


def test_train_zero_epochs(tmp_path, capsys, caplog):
    data = generate(tmp_path)
    with caplog.at_level(logging.WARNING):
        checkpoint = train(tmp_path, data, "--epochs", "0")
    assert "Zero epochs" in caplog.text
    assert os.path.exists(checkpoint)
    rows = read_rows(str(tmp_path / "model_loss.csv"))
    assert rows[0] == ["epoch", "train_loss", "val_loss"]
    assert len(rows) == 2
    out = capsys.readouterr().out
    assert "(epoch 0)" in out
    assert "New checkpoint saved as" in out


def test_train_is_reproducible(tmp_path, capsys):
    data = generate(tmp_path)
    capsys.readouterr()
    train(tmp_path, data, "--epochs", "1", "--seed", "3")
    first = capsys.readouterr().out.splitlines()[0]
    train(tmp_path, data, "--epochs", "1", "--seed", "3")
    second = capsys.readouterr().out.splitlines()[0]
    assert first.startswith("Final validation loss:")
    assert first == second


def test_train_recipe(tmp_path):
    data = generate(tmp_path)
    checkpoint = load_checkpoint(train(tmp_path, data, "--recipe", "desk", "--epochs", "1"))
    assert checkpoint.iq_mode == "stacked_iq"
    assert checkpoint.learning_rate == 2e-3
    assert checkpoint.batch_size == 4
    assert checkpoint.epochs_run == 1


def test_train_missing_data(tmp_path, capsys):
    argv = ["train", "--data", str(tmp_path / "nowhere"), "--out", str(tmp_path / "m.dicm")]
    assert main(argv) == 1
    assert "ERROR:" in capsys.readouterr().err


def test_eval_identity(tmp_path, capsys):
    data = generate(tmp_path)
    out = str(tmp_path / "results")
    assert main(["eval", "--data", data, "--identity", "--out", out]) == 0
    printed = capsys.readouterr().out
    before = [line for line in printed.splitlines() if line.startswith("SER before")][0]
    after = [line for line in printed.splitlines() if line.startswith("SER after")][0]
    assert before.split(":")[1] == after.split(":")[1]

    with open(os.path.join(out, "report.csv")) as f:
        head = f.read().splitlines()
    assert head[0].split("=")[1] == head[1].split("=")[1]
    assert "# model=identity" in head

    histogram = read_rows(os.path.join(out, "ser_histogram.csv"))
    assert len(histogram) == 21
    assert sum(int(row[2]) for row in histogram[1:]) == 4
    assert sum(int(row[3]) for row in histogram[1:]) == 4

    # 4 test frames of 2 blocks
    assert len(read_rows(os.path.join(out, "constellation.csv"))) == 1 + 8 * 64
    for name in ("constellation_corrupted", "constellation_recovered", "ser_histogram"):
        assert os.path.exists(os.path.join(out, name + ".svg"))


def test_eval_checkpoint_compressed(tmp_path):
    data = generate(tmp_path)
    checkpoint = train(tmp_path, data, "--epochs", "1")
    out = str(tmp_path / "results")
    argv = ["eval", "--data", data, "--checkpoint", checkpoint, "--out", out, "-c"]
    assert main(argv + ["--blocks", "2"]) == 0
    assert len(read_rows(os.path.join(out, "constellation.csv"))) == 1 + 2 * 64
    assert os.path.exists(os.path.join(out, "ser_histogram.svgz"))


def test_eval_needs_one_model(tmp_path):
    data = generate(tmp_path)
    with pytest.raises(SystemExit) as e:
        main(["eval", "--data", data, "--out", str(tmp_path / "r")])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["eval", "--data", data, "--out", str(tmp_path / "r"), "--identity",
              "--checkpoint", "model.dicm"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["eval", "--data", data, "--out", str(tmp_path / "r"), "--identity",
              "--format", "webp"])
    assert e.value.code == 2


def test_eval_corrupt_checkpoint(tmp_path, capsys):
    data = generate(tmp_path)
    checkpoint = tmp_path / "broken.dicm"
    checkpoint.write_bytes(b"DICM" + b"\x00" * 10)
    argv = ["eval", "--data", data, "--checkpoint", str(checkpoint), "--out", str(tmp_path)]
    assert main(argv) == 1
    assert "ERROR:" in capsys.readouterr().err


def test_quant(tmp_path, capsys):
    data = generate(tmp_path)
    checkpoint = train(tmp_path, data, "--epochs", "1")
    capsys.readouterr()
    sweep = str(tmp_path / "sweep.csv")
    argv = ["quant", "--data", data, "--checkpoint", checkpoint, "--out", sweep]
    assert main(argv + ["--bits", "8,16,32"]) == 0
    out = capsys.readouterr().out
    assert "Latency: 1.000 us" in out
    assert "not modelled" in out
    rows = read_rows(sweep)
    assert rows[0] == ["bits", "ser_after", "latency_s", "param_bytes"]
    assert [row[0] for row in rows[1:]] == ["8", "16", "32"]
    assert rows[1][3] == "78785"


@pytest.mark.parametrize("bits", ["8,x", "", "2"])
def test_quant_bad_bits(tmp_path, bits):
    data = generate(tmp_path)
    argv = ["quant", "--data", data, "--checkpoint", "m.dicm", "--out", str(tmp_path / "s.csv")]
    with pytest.raises(SystemExit) as e:
        main(argv + ["--bits", bits])
    assert e.value.code == 2


def test_proportional_split():
    options = {"frames": None, "train_frames": None, "val_frames": None, "test_frames": None}
    assert split_sizes(options, None) == [500, 100, 400]
    assert options["frames"] == 1000
    options["frames"] = 30
    assert split_sizes(options, None) == [15, 3, 12]
