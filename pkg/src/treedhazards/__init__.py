"""Bayesian treed hazards models.

A binary tree partitions the covariate space; each leaf carries its own
hazard, modeled as an exponentiated Ornstein-Uhlenbeck Gaussian process on a
grid of time bins and integrated out by a Laplace approximation.  Trees are
sampled by reversible-jump MCMC with parallel tempering.
"""

from .data import BinGrid, NodeStats, SurvivalDataset, load_csv, node_stats, normalize_times, write_csv
from .errors import (ConfigError, DataError, InvalidTreeError, NumericalError,
                     TreedHazardsError)
from .node_model import LeafFit, OUKernel, empirical_bayes, laplace_log_marginal
from .posterior import (KMEstimate, SurvivalCurve, kaplan_meier, leaf_survival, map_sample,
                        map_tree, predict)
from .sampler import MoveConfig, SamplerConfig, TemperatureLadder, build_ladder, run
from .simgen import SimSpec, gen_biomarker, gen_cox_ph, gen_tree_nonph, simulate
from .tree import Tree, TreePriorParams, log_prior

__version__ = "0.1.0"

__all__ = [
    "BinGrid", "NodeStats", "SurvivalDataset", "load_csv", "node_stats", "normalize_times",
    "write_csv", "ConfigError", "DataError", "InvalidTreeError", "NumericalError",
    "TreedHazardsError", "LeafFit", "OUKernel", "empirical_bayes", "laplace_log_marginal",
    "KMEstimate", "SurvivalCurve", "kaplan_meier", "leaf_survival", "map_sample", "map_tree",
    "predict", "MoveConfig", "SamplerConfig", "TemperatureLadder", "build_ladder", "run",
    "SimSpec", "gen_biomarker", "gen_cox_ph", "gen_tree_nonph", "simulate", "Tree",
    "TreePriorParams", "log_prior",
]
