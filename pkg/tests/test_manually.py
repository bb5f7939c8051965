"""Generates constellation and histogram plots for visually inspecting the
results."""

import codecs
import os

import numpy as np

from icancel import get_constellation, version
from icancel.canceller import IdentityCanceller, constellation_samples, evaluate, ser_histogram
from icancel.channel import InterferenceConfig
from icancel.dataset import DatasetManifest, SplitArrays, block_rows, generate_frame
from icancel.phy import GridDims
from icancel.writer import ImageWriter, constellation_plots, histogram_plot, save_plot

PATH = os.path.dirname(os.path.abspath(__file__))
TESTPATH = os.path.join(PATH, "test_outputs")
HTMLFILE = os.path.join(TESTPATH, "index.html")

HTML = """<!DOCTYPE html>
<html>
    <head>
        <meta charset="utf-8">
        <title>python-icancel {version} Test</title>
    </head>
    <body>
        <h1>python-icancel {version} Tests</h1>
        {body}
    </body>
</html>
"""

OBJECTS = "<p><h2>{name}</h2><br>\n" '<img src="{filename}" alt="SVG {name}">\n'

IMAGES = "<h3>As PNG-Image</h3><br>\n" '<img src="{filename}" alt="PNG {name}"></p>\n'

NO_PIL = "<h3>Pillow was not found. No PNG-Image created.</h3></p>\n"

# (constellation, SIR in dB)
TESTCASES = (
    ("qpsk", 6.0),
    ("16qam", 12.0),
    ("64qam", 20.0),
)


def frames(name, sir_db, count=4):
    manifest = DatasetManifest(
        total_frames=count,
        train_frames=0,
        val_frames=0,
        test_frames=count,
        dims=GridDims(1, 4, 64),
        qam_order=get_constellation(name).order,
        interference=InterferenceConfig(sir_db=sir_db, gain_scope="per_frame"),
    )
    corrupted, clean, frame_ids = [], [], []
    for frame_id in range(count):
        c_grid, x_grid = generate_frame(manifest, frame_id)
        rows = block_rows(c_grid)
        corrupted.append(rows)
        clean.append(block_rows(x_grid))
        frame_ids.append(np.full(rows.shape[0], frame_id, dtype=np.int64))
    return SplitArrays(
        np.concatenate(corrupted), np.concatenate(clean), np.concatenate(frame_ids), manifest
    )


def test_generating_plots():
    os.makedirs(TESTPATH, exist_ok=True)

    objects = []

    def append(x, y):
        objects.append(OBJECTS.format(filename=x, name=y))

    def append_img(x, y):
        objects.append(IMAGES.format(filename=x, name=y))

    model = IdentityCanceller()
    options = {"point_radius": 0.4}
    for name, sir_db in TESTCASES:
        c = get_constellation(name)
        arrays = frames(name, sir_db)
        report = evaluate(model, arrays, c)
        corrupted, recovered, clean = constellation_samples(model, arrays, 8)
        panels = constellation_plots(corrupted, recovered, clean) + (
            histogram_plot("Per-frame SER", ser_histogram(report)),
        )
        print(
            "Constellation: {0}, SIR: {1} dB, SER: {2:.4f}".format(
                name, sir_db, report.ser_before
            )
        )
        for suffix, plot in zip(("corrupted", "recovered", "histogram"), panels):
            stem = os.path.join(TESTPATH, "{0}_{1}".format(name, suffix))
            filename = save_plot(plot, stem, options=options)
            append(os.path.basename(filename), "{0} {1}".format(name, suffix))
            if ImageWriter is not None:
                filename = save_plot(plot, stem, ImageWriter(), {"dpi": 96})
                append_img(os.path.basename(filename), "{0} {1}".format(name, suffix))
            else:
                objects.append(NO_PIL)
    # Save htmlfile with all objects
    with codecs.open(HTMLFILE, "w", encoding="utf-8") as f:
        obj = "\n".join(objects)
        f.write(HTML.format(version=version, body=obj))

    print("\nNow open {htmlfile} in your browser.".format(htmlfile=HTMLFILE))
