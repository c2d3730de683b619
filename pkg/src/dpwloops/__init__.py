"""Loop-group factorizations and the DPW construction of harmonic maps into
inner symmetric spaces of SU(n) and SU(p, q).

Submodules
----------
loopalg
    Laurent-polynomial matrix loops, twisting and reality conditions.
factor
    Birkhoff and Iwasawa splittings.
dpw
    Potentials, Picard integration and extended frames on grids.
uniton
    Cartan embedding, extended solutions, uniton numbers, dressing, duality, monodromy.
verify
    Independent oracles and residual reports.
cli
    Command line interface and batch runner.
"""
from .errors import *  # noqa: F401,F403
from .loopalg import *  # noqa: F401,F403
from .factor import *  # noqa: F401,F403
from .dpw import *  # noqa: F401,F403
from .uniton import *  # noqa: F401,F403
from .verify import *  # noqa: F401,F403

__version__ = "0.1.0"
