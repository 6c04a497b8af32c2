"""convexlab: a numerical laboratory for packing bounds on moment bodies of
log-concave measures.

Subsystems: ``bodies`` (gauges and supports), ``measures`` (seeded samplers
and scalar functionals), ``centroid`` (moment bodies and their polars),
``packing`` (witnessed lower bounds and exact small oracles), ``quermass``
(Steiner/Kubota machinery), ``dimred`` (random projections and coordinate
combinatorics), and ``harness`` (experiment catalog, CLI, reports).
"""

__version__ = "0.1.0"

from . import bodies, centroid, dimred, measures, packing, quermass  # noqa: F401
from .errors import (  # noqa: F401
    BudgetError,
    ConstructionError,
    ConvexLabError,
    DomainError,
    UnsupportedOperationError,
    UsageError,
)
