"""masslab: desk-scale numerics for mass functionals on asymptotically flat
half- and quarter-spaces with non-smooth interfaces."""

__version__ = "0.1.0"

from . import domains, metrics, geometry  # noqa: F401
