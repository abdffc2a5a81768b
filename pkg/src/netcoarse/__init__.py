"""Equation-free coarse-graining of a stochastic network-evolution chain.

Subpackages:
    graphs        graph type and static statistics
    evolution     the stochastic model, trajectories, ensembles
    liftrestrict  degree distributions, percentile curves, lifting
    cpi           coarse projective integration
    fixpoint      matrix-free Newton-GMRES coarse fixed points
    theory        closed-form reference dynamics
    analysis      rate fits, PCA of distribution decay, shape matching
    cli           command-line front end
"""

__version__ = "0.1.0"

from .graphs import Graph, build_graph  # noqa: F401
from .evolution import ModelParams  # noqa: F401
from .liftrestrict import DegreeDistribution, PercentileCurve  # noqa: F401
