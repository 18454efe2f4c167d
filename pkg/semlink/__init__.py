# Licensed under a 3-clause BSD style license - see LICENSE.rst

"""
A desk-scale, end-to-end differentiable link-level simulator for multimodal
semantic communication over hybrid-beamforming massive MIMO-OFDM uplinks.
"""

# Affiliated packages may add whatever they like to this file, but
# should keep this content at the top.
# ----------------------------------------------------------------------------
from ._astropy_init import *
# ----------------------------------------------------------------------------

# Enforce Python version check during package import.
# This is the same check as the one at the top of setup.py
import sys

from astropy import config as _config

__minimum_python_version__ = "3.8"


class UnsupportedPythonError(Exception):
    pass


if sys.version_info < tuple((int(val) for val in __minimum_python_version__.split('.'))):
    raise UnsupportedPythonError("semlink does not support Python < {}"
                                 .format(__minimum_python_version__))


class Conf(_config.ConfigNamespace):
    """
    Configuration parameters for `semlink`.
    """
    n_threads = _config.ConfigItem(
        0,
        "Worker threads for dataset and channel synthesis. 0 means one per "
        "CPU. The SEMLINK_THREADS environment variable takes precedence.",
        cfgtype='integer')
    check_finite = _config.ConfigItem(
        True,
        "Raise when a differentiable op produces NaN or Inf.",
        cfgtype='boolean')


conf = Conf()

from .config import *  # noqa
from .channel import *  # noqa
from .phynet import *  # noqa
from .semnet import *  # noqa
from .baselines import *  # noqa
from .pipeline import *  # noqa
from .trainer import *  # noqa
