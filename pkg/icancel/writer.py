import gzip
import xml.dom
from dataclasses import dataclass, field

import numpy as np

from icancel import version

try:
    from PIL import Image, ImageDraw, ImageFont

except ImportError:
    import logging

    log = logging.getLogger("icancel.writer")
    log.info("Pillow not found. Image output disabled")
    Image = ImageDraw = ImageFont = None  # lint:ok


def mm2px(mm, dpi=300):
    return (mm * dpi) / 25.4


def pt2mm(pt):
    return pt * 0.352777778


def _set_attributes(element, **attributes):
    for key, value in attributes.items():
        element.setAttribute(key, value)


def create_svg_object():
    imp = xml.dom.getDOMImplementation()
    doctype = imp.createDocumentType(
        "svg",
        "-//W3C//DTD SVG 1.1//EN",
        "http://www.w3.org/Graphics/SVG/1.1/DTD/svg11.dtd",
    )
    document = imp.createDocument(None, "svg", doctype)
    _set_attributes(
        document.documentElement, version="1.1", xmlns="http://www.w3.org/2000/svg"
    )
    return document


SIZE = "{0:.3f}mm"
COMMENT = "Autogenerated with python-icancel {0}".format(version)

CORRUPTED_COLOR = "#d62728"
RECOVERED_COLOR = "#1f77b4"
CLEAN_COLOR = "black"


@dataclass
class Plot(object):
    """Data-space description of one panel.

    `points` holds ``(x, y, color)`` markers, `bars` holds
    ``(x_low, x_high, height, color)`` rectangles standing on ``y = 0``.
    """

    title: str
    x_range: tuple
    y_range: tuple
    points: list = field(default_factory=list)
    bars: list = field(default_factory=list)


def scatter_plot(title, series, limit=None):
    """Scatter panel of complex samples.

    :parameters:
        series : List
            ``(samples, color)`` pairs; later series are painted on top.
        limit : Float
            Half-width of the square axes; derived from the data if None.
    """
    series = [(np.ravel(samples), color) for samples, color in series]
    if limit is None:
        peak = max(
            (max(np.max(np.abs(s.real)), np.max(np.abs(s.imag))) for s, _ in series if s.size),
            default=1.0,
        )
        limit = 1.1 * float(peak)
    points = []
    for samples, color in series:
        points.extend((float(z.real), float(z.imag), color) for z in samples)
    return Plot(title, (-limit, limit), (-limit, limit), points=points)


def histogram_plot(title, rows):
    """Side-by-side per-frame SER histograms from ``ser_histogram`` rows."""
    top = max([max(before, after) for _, _, before, after in rows] + [1])
    bars = []
    for low, high, before, after in rows:
        mid = 0.5 * (low + high)
        bars.append((low, mid, before, CORRUPTED_COLOR))
        bars.append((mid, high, after, RECOVERED_COLOR))
    return Plot(title, (0.0, 1.0), (0.0, 1.1 * top), bars=bars)


class BaseWriter(object):
    """Baseclass for all writers.

    Initializes the basic writer options. Childclasses can add more
    attributes and can set them directly or using
    `self.set_options(option=value)`.

    :parameters:
        initialize : Function
            Callback for initializing the inheriting writer.
            Is called: `callback_initialize(plot)`
        paint_point : Function
            Callback for painting one scatter marker.
            Is called: `callback_paint_point(xpos, ypos, color)`
        paint_bar : Function
            Callback for painting one histogram bar.
            Is called: `callback_paint_bar(xpos, ypos, width, height, color)`
        paint_text : Function
            Callback for painting the title above the plot area.
            Is called: `callback_paint_text(xpos, ypos)` using `self.text`
            as text.
        finish : Function
            Callback for doing something with the completely rendered
            output.
            Is called: `return callback_finish()` and must return the
            rendered output.
    """

    def __init__(
        self, initialize=None, paint_point=None, paint_bar=None, paint_text=None, finish=None
    ):
        self._callbacks = {
            "initialize": initialize,
            "paint_point": paint_point,
            "paint_bar": paint_bar,
            "paint_text": paint_text,
            "finish": finish,
        }
        self.plot_width = 80.0
        self.plot_height = 80.0
        self.margin = 8.0
        self.point_radius = 0.25
        self.font_size = 10
        self.text_distance = 3.0
        self.background = "white"
        self.foreground = "black"
        self.text = ""
        self.supported_file_types = []
        self._file_type = None

    @property
    def file_type(self):
        return self._file_type

    @file_type.setter
    def file_type(self, file_type):
        if file_type in self.supported_file_types:
            self._file_type = file_type
        else:
            raise ValueError(
                f"file_type '{file_type}' not supported by {self.__class__.__name__}"
            )

    def calculate_size(self, dpi=300):
        """Calculates the size of the plot in pixel.

        :parameters:
            dpi : Integer
                DPI to calculate.

        :returns: Width and height of the plot in pixel.
        :rtype: Tuple
        """
        width = 2 * self.margin + self.plot_width
        height = 2 * self.margin + self.plot_height
        if self.font_size and self.text:
            height += pt2mm(self.font_size) + self.text_distance
        return int(mm2px(width, dpi)), int(mm2px(height, dpi))

    def save(self, filename, output):
        """Saves the rendered output to `filename`.

        :parameters:
            filename : String
                Filename without extension.
            output : String
                The rendered output.

        :returns: The full filename with extension.
        :rtype: String
        """
        raise NotImplementedError

    def register_callback(self, action, callback):
        """Register one of the callbacks if not given at instance creation.

        :parameters:
            action : String
                One of 'initialize', 'paint_point', 'paint_bar',
                'paint_text', 'finish'.
            callback : Function
                The callback function for the given action.
        """
        self._callbacks[action] = callback

    def set_options(self, options):
        """Sets the given options as instance attributes (only
        if they are known).

        :parameters:
            options : Dict
                All known instance attributes and more if the childclass
                has defined them before this call.

        :rtype: None
        """
        for key, val in options.items():
            key = key.lstrip("_")
            if hasattr(self, key):
                setattr(self, key, val)

    def _top(self):
        if self.font_size and self.text:
            return self.margin + pt2mm(self.font_size) + self.text_distance
        return self.margin

    def to_page(self, plot, x, y):
        """Maps data coordinates to millimetres on the page."""
        (x0, x1), (y0, y1) = plot.x_range, plot.y_range
        xpos = self.margin + (x - x0) / (x1 - x0) * self.plot_width
        ypos = self._top() + (y1 - y) / (y1 - y0) * self.plot_height
        return xpos, ypos

    def render(self, plot):
        """Renders the plot to whatever the inheriting writer provides,
        using the registered callbacks.

        :parameters:
            plot : Plot
                Panel in data coordinates.
        """
        self.text = plot.title
        if self._callbacks["initialize"] is not None:
            self._callbacks["initialize"](plot)
        for low, high, height, color in plot.bars:
            if height <= 0:
                continue
            xpos, ypos = self.to_page(plot, low, height)
            xend, base = self.to_page(plot, high, 0.0)
            self._callbacks["paint_bar"](xpos, ypos, xend - xpos, base - ypos, color)
        for x, y, color in plot.points:
            xpos, ypos = self.to_page(plot, x, y)
            self._callbacks["paint_point"](xpos, ypos, color)
        if self.text and self._callbacks["paint_text"] is not None:
            xpos = self.margin + self.plot_width / 2.0
            ypos = self.margin + pt2mm(self.font_size)
            self._callbacks["paint_text"](xpos, ypos)
        return self._callbacks["finish"]()


class SVGWriter(BaseWriter):
    def __init__(self):
        BaseWriter.__init__(
            self,
            self._init,
            self._create_point,
            self._create_bar,
            self._create_text,
            self._finish,
        )
        self.compress = False
        self.dpi = 25.4
        self._document = None
        self._root = None
        self._group = None
        self.supported_file_types = ["SVG"]
        self.file_type = "SVG"

    def _init(self, plot):
        width, height = self.calculate_size(self.dpi)
        self._document = create_svg_object()
        self._root = self._document.documentElement
        attributes = {"width": SIZE.format(width), "height": SIZE.format(height)}
        _set_attributes(self._root, **attributes)
        self._root.appendChild(self._document.createComment(COMMENT))
        group = self._document.createElement("g")
        _set_attributes(group, id="plot_group")
        self._group = self._root.appendChild(group)
        background = self._document.createElement("rect")
        attributes = {
            "width": "100%",
            "height": "100%",
            "style": "fill:{0}".format(self.background),
        }
        _set_attributes(background, **attributes)
        self._group.appendChild(background)
        frame = self._document.createElement("rect")
        attributes = {
            "x": SIZE.format(self.margin),
            "y": SIZE.format(self._top()),
            "width": SIZE.format(self.plot_width),
            "height": SIZE.format(self.plot_height),
            "style": "fill:none;stroke:{0};stroke-width:0.2mm;".format(self.foreground),
        }
        _set_attributes(frame, **attributes)
        self._group.appendChild(frame)

    def _create_point(self, xpos, ypos, color):
        element = self._document.createElement("circle")
        attributes = {
            "cx": SIZE.format(xpos),
            "cy": SIZE.format(ypos),
            "r": SIZE.format(self.point_radius),
            "style": "fill:{0};".format(color),
        }
        _set_attributes(element, **attributes)
        self._group.appendChild(element)

    def _create_bar(self, xpos, ypos, width, height, color):
        element = self._document.createElement("rect")
        attributes = {
            "x": SIZE.format(xpos),
            "y": SIZE.format(ypos),
            "width": SIZE.format(width),
            "height": SIZE.format(height),
            "style": "fill:{0};".format(color),
        }
        _set_attributes(element, **attributes)
        self._group.appendChild(element)

    def _create_text(self, xpos, ypos):
        element = self._document.createElement("text")
        attributes = {
            "x": SIZE.format(xpos),
            "y": SIZE.format(ypos),
            "style": "fill:{0};font-size:{1}pt;text-anchor:middle;".format(
                self.foreground, self.font_size
            ),
        }
        _set_attributes(element, **attributes)
        element.appendChild(self._document.createTextNode(self.text))
        self._group.appendChild(element)

    def _finish(self):
        if self.compress:
            return self._document.toxml(encoding="UTF-8")
        else:
            return self._document.toprettyxml(indent=4 * " ", newl="\n", encoding="UTF-8")

    def save(self, filename, output):
        if self.compress:
            _filename = "{0}.svgz".format(filename)
            # mtime=0 keeps the gzip header reproducible
            with open(_filename, "wb") as raw:
                with gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as f:
                    f.write(output)
        else:
            _filename = "{0}.svg".format(filename)
            with open(_filename, "wb") as f:
                f.write(output)
        return _filename


if Image is None:
    ImageWriter = None
else:

    class ImageWriter(BaseWriter):
        def __init__(self, file_type="PNG"):
            BaseWriter.__init__(
                self,
                self._init,
                self._paint_point,
                self._paint_bar,
                self._paint_text,
                self._finish,
            )
            self.dpi = 300
            self._image = None
            self._draw = None
            self.supported_file_types = ["PNG", "BMP", "GIF", "JPEG", "TIFF"]
            self.file_type = file_type

        def _init(self, plot):
            size = self.calculate_size(self.dpi)
            self._image = Image.new("RGB", size, self.background)
            self._draw = ImageDraw.Draw(self._image)
            box = [
                (mm2px(self.margin, self.dpi), mm2px(self._top(), self.dpi)),
                (
                    mm2px(self.margin + self.plot_width, self.dpi),
                    mm2px(self._top() + self.plot_height, self.dpi),
                ),
            ]
            self._draw.rectangle(box, outline=self.foreground)

        def _paint_point(self, xpos, ypos, color):
            r = self.point_radius
            box = [
                (mm2px(xpos - r, self.dpi), mm2px(ypos - r, self.dpi)),
                (mm2px(xpos + r, self.dpi), mm2px(ypos + r, self.dpi)),
            ]
            self._draw.ellipse(box, fill=color)

        def _paint_bar(self, xpos, ypos, width, height, color):
            box = [
                (mm2px(xpos, self.dpi), mm2px(ypos, self.dpi)),
                (mm2px(xpos + width, self.dpi), mm2px(ypos + height, self.dpi)),
            ]
            self._draw.rectangle(box, outline=color, fill=color)

        def _paint_text(self, xpos, ypos):
            font = ImageFont.load_default()
            width = self._draw.textlength(self.text, font=font)
            pos = (mm2px(xpos, self.dpi) - width // 2, mm2px(ypos, self.dpi))
            self._draw.text(pos, self.text, font=font, fill=self.foreground)

        def _finish(self):
            return self._image

        def save(self, filename, output):
            filename = "{0}.{1}".format(filename, self.file_type.lower())
            output.save(filename, self.file_type.upper())
            return filename


def get_writer(file_type="svg", compress=False):
    """SVGWriter for ``svg``, otherwise an ImageWriter when Pillow is
    available.
    """
    file_type = file_type.upper()
    if file_type == "SVG":
        writer = SVGWriter()
        writer.compress = compress
        return writer
    if ImageWriter is None:
        raise ValueError("Image output needs Pillow, only svg is available.")
    return ImageWriter(file_type=file_type)


def save_plot(plot, filename, writer=None, options=None):
    """Renders `plot` and saves it; `filename` has no extension.

    :returns: The full filename with extension.
    :rtype: String
    """
    writer = writer or SVGWriter()
    writer.set_options(options or {})
    return writer.save(filename, writer.render(plot))


def constellation_plots(corrupted, recovered, clean):
    """The two scatter panels of a constellation dump: corrupted points
    and recovered points, each over the clean lattice, on shared axes.
    """
    lattice = np.unique(np.asarray(clean))
    limit = 1.1 * float(
        max(np.max(np.abs(corrupted.real)), np.max(np.abs(corrupted.imag)), 1.0)
    )
    return (
        scatter_plot(
            "Corrupted symbols",
            [(np.asarray(corrupted), CORRUPTED_COLOR), (lattice, CLEAN_COLOR)],
            limit,
        ),
        scatter_plot(
            "Recovered symbols",
            [(np.asarray(recovered), RECOVERED_COLOR), (lattice, CLEAN_COLOR)],
            limit,
        ),
    )
