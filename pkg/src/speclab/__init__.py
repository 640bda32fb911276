"""Spectral contrastive learning on exact finite augmentation graphs."""

__version__ = "0.1.0"

from .graph import (
    AugmentationGraph,
    AugmentationKernel,
    NaturalDistribution,
    build_graph,
    graph_from_arrays,
    normalized_matrices,
    two_block_graph,
)
from .spectral import eigendecompose, mf_loss, best_rank_k_value, eckart_young_minimizer
from .contrastive import population_loss, loss_constant, empirical_loss
from .trainer import TrainConfig, train_nonparametric
from .probe import linear_probe_error, probe_error
from .partition import conductance, sparsest_m_partition, bayes_alpha
from .bounds import bound_B2, bound_D2
