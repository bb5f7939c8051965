"""

icancel
=======

Blind cancellation of co-channel QAM interference on OFDM resource grids
with a convolutional LSTM autoencoder. The package simulates the corrupted
downlink, trains the canceller from scratch on plain numpy, measures the
symbol error rate before and after cancellation and studies fixed-point
quantization of the trained network. Plots are written as SVG; if Pillow is
installed they can also be rendered as images.
"""

from icancel.constellation import SUPPORTED_ORDERS, build_constellation
from icancel.errors import ConstellationNotFoundError

try:
    from icancel.version import version
except ImportError:  # source tree without scm metadata
    version = "0.0.0"

__CONSTELLATION_MAP = {
    "qpsk": 4,
    "4qam": 4,
    "16qam": 16,
    "64qam": 64,
    "256qam": 256,
    "1024qam": 1024,
}

PROVIDED_CONSTELLATIONS = list(__CONSTELLATION_MAP)
PROVIDED_CONSTELLATIONS.sort()


def get(name):
    """Helper method for getting a constellation by name.

    :param str name: A name such as ``qpsk`` or ``256qam``, or the order
        itself as a string (``"256"``).
    :returns: the matching :class:`~icancel.constellation.QamConstellation`
    """
    key = str(name).lower().replace("-", "")
    if key.isdigit() and int(key) in SUPPORTED_ORDERS:
        return build_constellation(int(key))
    try:
        order = __CONSTELLATION_MAP[key]
    except KeyError:
        raise ConstellationNotFoundError(
            "The constellation {0!r} you requested is not known.".format(name)
        )
    return build_constellation(order)


get_constellation = get
