"""Special flows over Liouville rotations of the 4-torus."""
__version__ = "0.1.0"

from .errors import *  # noqa: E402,F401,F403
from .arithmetic import *  # noqa: E402,F401,F403
from .ceiling import *  # noqa: E402,F401,F403
from .flow import *  # noqa: E402,F401,F403
from .stretch import *  # noqa: E402,F401,F403
from .correlation import *  # noqa: E402,F401,F403
from ._batch import BatchEngine  # noqa: E402,F401
