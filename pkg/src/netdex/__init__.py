"""Optimal block designs for experiments on networks.

Build L-optimal treatment assignments under block and network-interference
models, detect blocks by spectral clustering, and quantify the efficiency
and misspecification bias of competing designs.
"""

from netdex.graph import Network, GraphError, load_edge_list, normalized_laplacian_rw, is_regular
from netdex.models import (
    BlockPartition,
    Design,
    DesignMatrixError,
    ExtendedDesignMatrix,
    InformationMatrix,
    Model,
    ModelSpec,
    build_design_matrix,
    information_matrix,
)
from netdex.optimality import (
    ContrastSet,
    CriterionEvaluator,
    CriterionResult,
    contrast_vector,
    l_criterion,
    phi1,
    phi2,
    relative_efficiency,
)
from netdex.search import SearchResult, count_balanced_designs, exhaustive_search, find_optimal_design, pen_search
from netdex.clustering import kmeans, modularity, select_blocks, spectral_embedding
from netdex.bias import average_bias, bias_matrix, bias_vs_edge_proportion
from netdex.study import cross_model_table, randomization_efficiency_study

__version__ = "0.1.0"

__all__ = [
    "BlockPartition",
    "ContrastSet",
    "CriterionEvaluator",
    "CriterionResult",
    "Design",
    "DesignMatrixError",
    "ExtendedDesignMatrix",
    "GraphError",
    "InformationMatrix",
    "Model",
    "ModelSpec",
    "Network",
    "SearchResult",
    "average_bias",
    "bias_matrix",
    "bias_vs_edge_proportion",
    "build_design_matrix",
    "contrast_vector",
    "count_balanced_designs",
    "cross_model_table",
    "exhaustive_search",
    "find_optimal_design",
    "information_matrix",
    "is_regular",
    "kmeans",
    "l_criterion",
    "load_edge_list",
    "modularity",
    "normalized_laplacian_rw",
    "pen_search",
    "phi1",
    "phi2",
    "randomization_efficiency_study",
    "relative_efficiency",
    "select_blocks",
    "spectral_embedding",
]
