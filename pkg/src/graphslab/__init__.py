"""Bayesian model selection with graph-structured sparsity.

Spike-and-slab priors on the edges of a base graph induce fused,
clustered, biclustered, or monotone piecewise-constant structure; models
are fitted by variational EM over a spike-variance solution path and
selected by an exact conjugate posterior score.
"""

__version__ = "1.0.0"

from .errors import (
    ConfigError,
    GraphError,
    GraphSlabError,
    NoValidCandidateError,
    NumericError,
)
from .graphs import (
    Graph,
    cartesian_product,
    chain,
    complete,
    complete_bipartite,
    contract,
    effective_resistances,
    from_edge_list,
    grid,
    incidence,
    kronecker_product,
    laplacian,
    spike_slab_weights,
    star,
    weighted_tree_logsum,
)
from .linalg import dlpa, logdet_w, wperp_basis
from .em import EMState, ModelSpec, PathPoint, SolutionPath, default_v0_grid, run_em, solution_path
from .selection import SelectionResult, log_posterior_score, metrics, point_estimate, select
from .cluster import (
    ClusterSelection,
    ClusterSpec,
    cluster_path,
    cluster_score,
    merge_centers,
    run_cluster_em,
    select_clustering,
)
from .bicluster import (
    BiclusterSelection,
    BiclusterState,
    ProductSpec,
    ProductState,
    bicluster_block_score,
    bicluster_path,
    bicluster_select,
    cartesian_resistances,
    kronecker_resistances,
    run_bicluster_em,
    run_product_em,
)
from .isotonic import IsoSpec, iso_path, iso_select, isotonic_qp, run_iso_em
from .simulate import (
    anchor_signal,
    chain_signal,
    checkerboard_signal,
    clustering_toy,
    grid_signal,
    simulate,
)
from .oracle import (
    enumerate_spanning_trees,
    exact_log_partition,
    pava,
    quadrature_marginal,
)
