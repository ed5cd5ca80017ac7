"""viscid: hybrid particle/grid viscous fluid simulation toolkit.

Submodules are imported explicitly (``viscid.grid``, ``viscid.sim``, ...)
to keep startup light; see the README for an overview.
"""

__version__ = "0.1.0"
