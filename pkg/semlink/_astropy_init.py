# Licensed under a 3-clause BSD style license - see LICENSE.rst
"""Version, self-test runner and the per-user configuration file."""

import os
from warnings import warn

from astropy.config.configuration import (update_default_config,
                                          ConfigurationDefaultMissingError,
                                          ConfigurationDefaultMissingWarning)
from astropy.tests.runner import TestRunner

__all__ = ['__version__', 'test']

try:
    from .version import version as __version__
except ImportError:
    __version__ = ''

_PACKAGE_DIR = os.path.dirname(__file__)

test = TestRunner.make_test_runner_in(_PACKAGE_DIR)
test.__test__ = False


def _install_config():
    """Copy ``semlink.cfg`` into the astropy config directory so the
    runtime settings in `semlink.conf` can be edited there."""
    if os.environ.get('ASTROPY_SKIP_CONFIG_UPDATE'):
        return
    if not os.path.isfile(os.path.join(_PACKAGE_DIR, 'semlink.cfg')):
        return
    try:
        update_default_config('semlink', _PACKAGE_DIR, version=__version__)
    except ConfigurationDefaultMissingError as e:
        warn(ConfigurationDefaultMissingWarning(
            e.args[0] + " Cannot install the default semlink.cfg; this is "
            "expected when importing from a source checkout."))


_install_config()
