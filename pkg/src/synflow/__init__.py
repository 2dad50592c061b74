"""Redundancy and synergy of driver variables via unnormalized Granger causality."""

from .causality import (
    CausalityValue,
    ErrorCache,
    conditioned_gc,
    gc_significance,
    pairwise_gc,
    set_gc,
    unnormalized_gc,
)
from .data import TimeSeriesSet, as_timeseries, build_embedding, read_csv, standardize, write_csv
from .exceptions import ConfigError, InputError, SynflowError
from .network import CommunityAssignment, Dendrogram, best_cut, dendrogram, modularity
from .partition import Partition, best_partition, best_partition_exhaustive, best_partition_greedy, total_gc
from .regression import ModelSpec, PredictionError, fit_prediction_error, polynomial_features, select_regularization
from .synergy import SynergyMatrix, cumulant, cumulant_table, pca_targets, psi_matrix, psi_pair, psi_pvalues, split_psi

__version__ = "0.1.0"
