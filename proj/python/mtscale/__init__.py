"""Multiple time-scale recurrent networks (MTRNN and MTGRU)."""

from ._mtscale import *  # noqa: F401,F403
from ._mtscale import __doc__  # noqa: F401
