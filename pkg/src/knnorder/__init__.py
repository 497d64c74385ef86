"""k-nearest-neighbor classification under Poisson and Binomial sample-size models.

Gaussian population pairs, marked-point training samples, an exact kd-tree
k-NN rule, quadrature and Monte Carlo error rates, bootstrap choice of k and
the boundary constants of the regret expansion C1/k + C2 (k/nu)^(4/d).
"""

from .densities import GaussianSpec, PopulationPair, Region, limit_rho, posterior_psi, weighted_lambda
from .kselect import BootstrapPlan, SelectionResult, choose_k
from .knn import NeighborIndex, build_index, classify_knn, k_nearest
from .risk import bayes_risk, error_rate_mc, grid_kopt
from .sampling import BINOMIAL, POISSON, TrainingSet, draw_training, split_stream
from .theory import ExpansionReport, expansion_constants, find_boundary, regret_expansion, theoretical_kopt

__version__ = "0.1.0"

__all__ = [
    "GaussianSpec", "PopulationPair", "Region", "limit_rho", "posterior_psi", "weighted_lambda",
    "BootstrapPlan", "SelectionResult", "choose_k",
    "NeighborIndex", "build_index", "classify_knn", "k_nearest",
    "bayes_risk", "error_rate_mc", "grid_kopt",
    "BINOMIAL", "POISSON", "TrainingSet", "draw_training", "split_stream",
    "ExpansionReport", "expansion_constants", "find_boundary", "regret_expansion", "theoretical_kopt",
]
