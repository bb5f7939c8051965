import logging
import math
import os
import sys
from argparse import ArgumentParser, ArgumentTypeError
from dataclasses import replace

import icancel
from icancel import version
from icancel.canceller import (
    CONSTELLATION_HEADER,
    HISTOGRAM_HEADER,
    IQ_MODES,
    LOSS_CURVE_HEADER,
    LR_SCHEDULES,
    REPORT_HEADER,
    IdentityCanceller,
    TrainConfig,
    constellation_samples,
    dump_constellation,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    ser_histogram,
    train,
    write_histogram_csv,
    write_loss_curve,
    write_report,
)
from icancel.channel import GAIN_SCOPES, InterferenceConfig, NoiseConfig, calibrate_sir
from icancel.constellation import SUPPORTED_ORDERS, build_constellation
from icancel.dataset import (
    DatasetManifest,
    generate_dataset,
    load_split_arrays,
)
from icancel.errors import IcancelError, InvalidConfigError
from icancel.phy import GridDims
from icancel.presets import recipes
from icancel.quant import (
    POWER_PROVENANCE,
    SWEEP_HEADER,
    HardwareModel,
    check_bits,
    latency_microseconds,
    sweep_report,
    write_sweep_csv,
)
from icancel.writer import (
    ImageWriter,
    constellation_plots,
    get_writer,
    histogram_plot,
    save_plot,
)

FILETYPES = ("SVG", "PNG", "BMP", "GIF", "JPEG", "TIFF")
DEFAULT_FRAMES = 1000

GEN_DEFAULTS = {
    "recipe": None,
    "out": None,
    "frames": None,
    "train_frames": None,
    "val_frames": None,
    "test_frames": None,
    "subframes": 11,
    "symbols_per_subframe": 140,
    "subcarriers": 180,
    "qam": 256,
    "interferer_qam": None,
    "sir_db": None,
    "calibrate_ser": None,
    "calibrate_tolerance": 0.01,
    "gain_scope": "per_dataset",
    "snr_db": None,
    "seed": 0,
    "interference_seed": None,
}
TRAIN_DEFAULTS = dict(
    recipes.TRAINING, recipe=None, data=None, out=None, loss_curve=None, seed=0
)
EVAL_DEFAULTS = {
    "data": None,
    "checkpoint": None,
    "identity": False,
    "out": None,
    "blocks": 16,
    "bins": 20,
    "format": "svg",
    "compress": False,
}
QUANT_DEFAULTS = {
    "data": None,
    "checkpoint": None,
    "out": None,
    "bits": list(recipes.SWEEP_BITS),
    "clock_hz": HardwareModel.clock_hz,
    "extra_cycles": HardwareModel.nn_extra_cycles,
    "power_watts": HardwareModel.power_estimate_watts,
    "target_latency": HardwareModel.target_latency_s,
}
BOOLEAN_OPTIONS = ("identity", "compress")
EXCLUSIVE_OPTIONS = (("sir_db", "calibrate_ser"),)
SPLIT_OPTIONS = ("train_frames", "val_frames", "test_frames")


def bit_list(value):
    try:
        bits = [int(part) for part in value.split(",") if part.strip()]
    except ValueError:
        raise ArgumentTypeError("expected comma separated integers, got {0!r}".format(value))
    if not bits:
        raise ArgumentTypeError("expected at least one bit width")
    return bits


def read_config(filename):
    """Reads a flat ``key=value`` file; ``#`` starts a comment line."""
    options = {}
    with open(filename, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise InvalidConfigError(
                    "{0}:{1}: expected key=value, got {2!r}.".format(filename, number, line)
                )
            options[key.strip()] = value.strip()
    return options


def config_tokens(options):
    tokens = []
    for key, value in options.items():
        flag = "--" + key.replace("_", "-")
        if key in BOOLEAN_OPTIONS:
            if value.lower() in ("1", "true", "yes", "on"):
                tokens.append(flag)
        else:
            tokens.extend([flag, value])
    return tokens


def given_options(namespace, defaults):
    given = {}
    for key in defaults:
        value = getattr(namespace, key, None)
        if value is None or (key in BOOLEAN_OPTIONS and value is False):
            continue
        given[key] = value
    return given


def resolve_options(args, defaults):
    """Merges defaults, recipe, config file and flags, later ones winning.

    Config file values are parsed by the same subparser as the flags, so
    they get the same type checks and unknown keys are a usage error.
    """
    flags = given_options(args, defaults)
    from_file = {}
    if args.config:
        parsed = args.subparser.parse_args(config_tokens(read_config(args.config)))
        from_file = given_options(parsed, defaults)
    recipe_name = flags.get("recipe", from_file.get("recipe"))
    recipe = recipes.RECIPES[recipe_name] if recipe_name else {}
    recipe = {k: v for k, v in recipe.items() if k in defaults}
    for pair in EXCLUSIVE_OPTIONS:
        if any(k in flags for k in pair):
            for k in pair:
                from_file.pop(k, None)
        if any(k in flags or k in from_file for k in pair):
            for k in pair:
                recipe.pop(k, None)
    if any(k in flags or k in from_file for k in SPLIT_OPTIONS + ("frames",)):
        for k in SPLIT_OPTIONS + ("frames",):
            recipe.pop(k, None)
    options = dict(defaults)
    options.update(recipe)
    options.update(from_file)
    options.update(flags)
    return options


def split_sizes(options, parser):
    """Train, val and test frame counts; fills in ``options["frames"]``."""
    given = [options[k] for k in SPLIT_OPTIONS]
    if all(v is not None for v in given):
        if options["frames"] is not None and options["frames"] != sum(given):
            parser.error(
                "--frames {0} does not match --train-frames, --val-frames and "
                "--test-frames, which add up to {1}.".format(options["frames"], sum(given))
            )
        options["frames"] = sum(given)
        return given
    if any(v is not None for v in given):
        parser.error("Give all of --train-frames, --val-frames and --test-frames or none.")
    if options["frames"] is None:
        options["frames"] = DEFAULT_FRAMES
    total = options["frames"]
    train_frames = total * recipes.SPLIT_PERCENT["train_frames"] // 100
    val_frames = total * recipes.SPLIT_PERCENT["val_frames"] // 100
    return [train_frames, val_frames, total - train_frames - val_frames]


def list_types(args, parser=None):
    print("\npython-icancel available constellations:")
    print(", ".join(icancel.PROVIDED_CONSTELLATIONS))
    print("QAM orders:", ", ".join(str(m) for m in SUPPORTED_ORDERS))
    print("IQ modes:", ", ".join(IQ_MODES))
    print("Recipes:", ", ".join(sorted(recipes.RECIPES)))
    print("\n")
    print("Available plot filetypes")
    print("Standard: svg")
    if ImageWriter is not None:
        print("Pillow:", ", ".join(FILETYPES[1:]))
    else:
        print("Pillow: disabled")
    print("\n")
    print("CSV headers")
    for name, header in (
        ("loss curve", LOSS_CURVE_HEADER),
        ("report", REPORT_HEADER),
        ("histogram", HISTOGRAM_HEADER),
        ("constellation", CONSTELLATION_HEADER),
        ("sweep", SWEEP_HEADER),
    ):
        print("{0}: {1}".format(name, ",".join(header)))
    return 0


def require(options, parser, *keys):
    for key in keys:
        if options[key] is None:
            parser.error("the following option is required: --{0}".format(key.replace("_", "-")))


def create_dataset(args, parser):
    options = resolve_options(args, GEN_DEFAULTS)
    require(options, parser, "out")
    if options["sir_db"] is None and options["calibrate_ser"] is None:
        parser.error("one of --sir-db or --calibrate-ser is required.")
    if options["sir_db"] is not None and options["calibrate_ser"] is not None:
        parser.error("--sir-db and --calibrate-ser exclude each other.")
    train_frames, val_frames, test_frames = split_sizes(options, parser)
    interference_seed = options["interference_seed"]
    interference = InterferenceConfig(
        sir_db=math.inf if options["sir_db"] is None else options["sir_db"],
        interferer_order=options["interferer_qam"],
        gain_scope=options["gain_scope"],
        seed=options["seed"] if interference_seed is None else interference_seed,
    )
    manifest = DatasetManifest(
        total_frames=options["frames"],
        train_frames=train_frames,
        val_frames=val_frames,
        test_frames=test_frames,
        dims=GridDims(
            options["subframes"], options["symbols_per_subframe"], options["subcarriers"]
        ),
        qam_order=options["qam"],
        interference=interference,
        noise=NoiseConfig(options["snr_db"]),
        seed=options["seed"],
    )
    manifest.validate()
    if options["calibrate_ser"] is not None:
        sir_db = calibrate_sir(
            options["calibrate_ser"],
            build_constellation(manifest.qam_order),
            manifest.resolved_interference,
            tolerance=options["calibrate_tolerance"],
        )
        print("Calibrated SIR: {0:.4f} dB for baseline SER {1}.".format(
            sir_db, options["calibrate_ser"]
        ))
        manifest = replace(manifest, interference=replace(interference, sir_db=sir_db))
    out = os.path.normpath(os.path.abspath(options["out"]))
    written = generate_dataset(manifest, out)
    for split, filename in written.items():
        print("{0} split saved as {1}.".format(split.capitalize(), filename))
    return 0


def train_model(args, parser):
    options = resolve_options(args, TRAIN_DEFAULTS)
    require(options, parser, "data", "out")
    cfg = TrainConfig(
        epochs=options["epochs"],
        batch_size=options["batch_size"],
        learning_rate=options["learning_rate"],
        seed=options["seed"],
        patience=options["patience"],
        iq_mode=options["iq_mode"],
        lr_schedule=options["lr_schedule"],
    ).validate()
    train_arrays = load_split_arrays(options["data"], "train")
    val_arrays = load_split_arrays(options["data"], "val")
    result = train(train_arrays, val_arrays, cfg)
    out = os.path.normpath(os.path.abspath(options["out"]))
    loss_curve = options["loss_curve"] or os.path.splitext(out)[0] + "_loss.csv"
    print("Final validation loss: {0:.9g} (epoch {1}).".format(
        result.final_val_loss, result.best_epoch
    ))
    print("New checkpoint saved as {0}.".format(save_checkpoint(result.checkpoint, out)))
    print("Loss curve saved as {0}.".format(write_loss_curve(result.loss_curve, loss_curve)))
    return 0


def evaluate_model(args, parser):
    options = resolve_options(args, EVAL_DEFAULTS)
    require(options, parser, "data", "out")
    if options["identity"] == bool(options["checkpoint"]):
        parser.error("give exactly one of --checkpoint or --identity.")
    file_type = options["format"].upper()
    if file_type not in FILETYPES:
        parser.error(
            "Unknown type {0}. Try list action for available types.".format(file_type)
        )
    if file_type != "SVG" and ImageWriter is None:
        parser.error("Image output needs Pillow, only svg is available.")

    test = load_split_arrays(options["data"], "test")
    if options["identity"]:
        model = IdentityCanceller()
    else:
        model = load_checkpoint(options["checkpoint"]).to_model()
    c = build_constellation(test.manifest.qam_order)
    report = evaluate(model, test, c)

    out = os.path.normpath(os.path.abspath(options["out"]))
    os.makedirs(out, exist_ok=True)
    config = dict(
        test.manifest.to_options(),
        model="identity" if options["identity"] else os.path.basename(options["checkpoint"]),
        blocks=options["blocks"],
        bins=options["bins"],
    )
    rows = ser_histogram(report, options["bins"])
    saved = [
        write_report(report, os.path.join(out, "report.csv"), config),
        write_histogram_csv(rows, os.path.join(out, "ser_histogram.csv")),
    ]
    dump = os.path.join(out, "constellation.csv")
    dump_constellation(model, test, options["blocks"], dump)
    saved.append(dump)

    corrupted, recovered, clean = constellation_samples(model, test, options["blocks"])
    panels = constellation_plots(corrupted, recovered, clean) + (
        histogram_plot("Per-frame SER", rows),
    )
    for name, plot in zip(
        ("constellation_corrupted", "constellation_recovered", "ser_histogram"), panels
    ):
        writer = get_writer(file_type, options["compress"])
        saved.append(save_plot(plot, os.path.join(out, name), writer))

    print("SER before cancellation: {0:.6g}".format(report.ser_before))
    print("SER after cancellation: {0:.6g}".format(report.ser_after))
    for filename in saved:
        print("Saved {0}.".format(filename))
    return 0


def quantize_model(args, parser):
    options = resolve_options(args, QUANT_DEFAULTS)
    require(options, parser, "data", "checkpoint", "out")
    hw = HardwareModel(
        clock_hz=options["clock_hz"],
        nn_extra_cycles=options["extra_cycles"],
        power_estimate_watts=options["power_watts"],
        target_latency_s=options["target_latency"],
    ).validate()
    bits = [check_bits(b) for b in options["bits"]]
    model = load_checkpoint(options["checkpoint"]).to_model()
    test = load_split_arrays(options["data"], "test")
    val = load_split_arrays(options["data"], "val")
    c = build_constellation(test.manifest.qam_order)
    rows = sweep_report(model, test, c, bits, hw, calibration=val)
    float_ser = evaluate(model, test, c).ser_after
    out = os.path.normpath(os.path.abspath(options["out"]))

    print("Float SER after cancellation: {0:.6g}".format(float_ser))
    for row in rows:
        print("{0:>2} bits: SER {1:.6g}, {2} parameter bytes".format(
            row.bits, row.ser_after, row.param_bytes
        ))
    print("Latency: {0:.3f} us ({1:.4%} of the {2:g} ms target)".format(
        latency_microseconds(hw), hw.latency_budget_share(), hw.target_latency_s * 1e3
    ))
    print("Power: {0:g} W ({1})".format(hw.power_estimate_watts, POWER_PROVENANCE))
    print("Sweep saved as {0}.".format(write_sweep_csv(rows, out)))
    return 0


def add_config(subparser):
    subparser.add_argument(
        "--config",
        help="Flat key=value file with option defaults; keys are option "
        "names without dashes (sir_db=3.5). Flags override the file.",
    )


def build_parser():
    msg = []
    if ImageWriter is None:
        msg.append("Image output disabled (Pillow not found), only svg plots.")
    else:
        msg.append("Image output enabled, use --format to pick png, jpeg, ...")
    msg.append("DIC_THREADS caps worker threads.")

    parser = ArgumentParser(
        prog="python-icancel",
        description="Simulate, train and evaluate blind co-channel interference "
        "cancellation via cli.",
        epilog=" ".join(msg),
    )
    parser.add_argument("--version", action="version", version="%(prog)s " + version)
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="More logging (-vv for debug)."
    )

    subparsers = parser.add_subparsers(title="Actions")

    list_parser = subparsers.add_parser(
        "list", help="List constellations, iq modes, plot types and CSV headers."
    )
    list_parser.set_defaults(func=list_types, subparser=list_parser, config=None)

    gen = subparsers.add_parser("gen", help="Generate a corrupted frame dataset.")
    add_config(gen)
    gen.add_argument("--out", help="Output directory for the split files.")
    gen.add_argument("--recipe", choices=sorted(recipes.RECIPES), help="Preset sizes.")
    gen.add_argument("--frames", type=int, help="Total frames [default: 1000].")
    gen.add_argument("--train-frames", type=int, help="Frames in the train split.")
    gen.add_argument("--val-frames", type=int, help="Frames in the val split.")
    gen.add_argument("--test-frames", type=int, help="Frames in the test split.")
    gen.add_argument("--subframes", type=int, help="Subframes per frame [default: 11].")
    gen.add_argument(
        "--symbols-per-subframe", type=int, help="OFDM symbols per subframe [default: 140]."
    )
    gen.add_argument("--subcarriers", type=int, help="Active subcarriers [default: 180].")
    gen.add_argument("--qam", type=int, choices=SUPPORTED_ORDERS, help="QAM order [default: 256].")
    gen.add_argument(
        "--interferer-qam", type=int, choices=SUPPORTED_ORDERS, help="Interferer QAM order."
    )
    interference = gen.add_mutually_exclusive_group()
    interference.add_argument("--sir-db", type=float, help="SIR in dB (inf disables).")
    interference.add_argument(
        "--calibrate-ser", type=float, help="Pick the SIR that gives this baseline SER."
    )
    gen.add_argument(
        "--calibrate-tolerance",
        type=float,
        help="Accepted baseline SER miss when calibrating [default: 0.01].",
    )
    gen.add_argument("--gain-scope", choices=GAIN_SCOPES, help="Interferer phase scope.")
    gen.add_argument("--snr-db", type=float, help="Add AWGN at this SNR.")
    gen.add_argument("--seed", type=int, help="Dataset seed [default: 0].")
    gen.add_argument("--interference-seed", type=int, help="Interferer seed [default: seed].")
    gen.set_defaults(func=create_dataset, subparser=gen)

    tr = subparsers.add_parser("train", help="Train the canceller on a dataset.")
    add_config(tr)
    tr.add_argument("--data", help="Dataset directory.")
    tr.add_argument("--out", help="Checkpoint filename.")
    tr.add_argument("--loss-curve", help="Loss curve CSV [default: <out>_loss.csv].")
    tr.add_argument("--recipe", choices=sorted(recipes.RECIPES), help="Preset training options.")
    tr.add_argument("--epochs", type=int, help="Epochs [default: 30].")
    tr.add_argument("--batch-size", type=int, help="Blocks per batch [default: 128].")
    tr.add_argument("--learning-rate", type=float, help="Adam step size [default: 1e-3].")
    tr.add_argument("--patience", type=int, help="Early-stop patience [default: 5].")
    tr.add_argument("--iq-mode", choices=IQ_MODES, help="I/Q handling [default: split_iq].")
    tr.add_argument(
        "--lr-schedule", choices=LR_SCHEDULES, help="Step size schedule [default: constant]."
    )
    tr.add_argument("--seed", type=int, help="Training seed [default: 0].")
    tr.set_defaults(func=train_model, subparser=tr)

    ev = subparsers.add_parser("eval", help="Evaluate SER before and after cancellation.")
    add_config(ev)
    ev.add_argument("--data", help="Dataset directory.")
    ev.add_argument("--checkpoint", help="Checkpoint filename.")
    ev.add_argument(
        "--identity", action="store_true", help="Bypass the network (diagnostic)."
    )
    ev.add_argument("--out", help="Output directory.")
    ev.add_argument("--blocks", type=int, help="Blocks in the constellation dump [default: 16].")
    ev.add_argument("--bins", type=int, help="Histogram bins [default: 20].")
    ev.add_argument("--format", help="Plot file type [default: svg].")
    ev.add_argument(
        "-c", "--compress", action="store_true", help="Compress svg plots (svgz)."
    )
    ev.set_defaults(func=evaluate_model, subparser=ev)

    qu = subparsers.add_parser("quant", help="Fixed-point bit-width sweep and latency.")
    add_config(qu)
    qu.add_argument("--data", help="Dataset directory.")
    qu.add_argument("--checkpoint", help="Checkpoint filename.")
    qu.add_argument("--out", help="Sweep CSV filename.")
    qu.add_argument("--bits", type=bit_list, help="Bit widths [default: 8,12,16,32].")
    qu.add_argument("--clock-hz", type=float, help="FPGA clock [default: 200e6].")
    qu.add_argument("--extra-cycles", type=int, help="Pipeline cycles [default: 200].")
    qu.add_argument("--power-watts", type=float, help="Reported power [default: 1.0].")
    qu.add_argument(
        "--target-latency", type=float, help="Latency target in s [default: 1e-3]."
    )
    qu.set_defaults(func=quantize_model, subparser=qu)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        func = args.func
    except AttributeError:
        parser.error("You need to tell me what to do.")

    try:
        return func(args, args.subparser)
    except InvalidConfigError as e:
        args.subparser.error(str(e))
    except (IcancelError, OSError) as e:
        print("ERROR: {0}".format(e), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
