"""Multi-robot navigation: simulator, DRL trainer, A* baseline."""
import os as _os

# A wheel carries its own copy of the bundled worlds.
_here = _os.path.join(_os.path.dirname(__file__), "worlds")
if _os.path.isdir(_here) and not _os.environ.get("MRNAV_WORLDS_DIR"):
    _os.environ["MRNAV_WORLDS_DIR"] = _here

from ._mrnav import *  # noqa: E402,F401,F403
from ._mrnav import __doc__  # noqa: E402,F401

__version__ = code_version()  # noqa: F405
