"""Linear-complexity attention approximation kernels.

Queries are grouped by sign-random-projection hashing plus Hamming-space
K-Means; attention is computed once per cluster centroid and optionally
refined with exact dot products on each cluster's top-k keys. Includes a
quadratic full-attention oracle, bound-verification diagnostics, synthetic
task generators, and a scaling benchmark CLI.
"""

from .attention import (
    AttentionResult,
    TopKSet,
    clustered_attention,
    full_attention,
    improved_attention_matrix,
    improved_clustered_attention,
    oracle_top_attention,
    topk_per_cluster,
)
from .core import (
    SpectralNormEstimate,
    matmul,
    row_l1_distance,
    row_l2_distance,
    softmax_rows,
    spectral_norm,
)
from .diagnostics import (
    ApproxReport,
    ErrorSummary,
    check_l1_dominance,
    check_lipschitz_bound,
    error_summary,
)
from .hashing import (
    HashCodes,
    ProjectionSet,
    hamming_distance,
    hash_queries,
    make_planes,
)
from .kmeans import Clustering, cluster_queries, init_centroids, lloyd_step
from .tasks import (
    MaskedCopyInstance,
    generate_masked_copy,
    make_gaussian_qkv,
    validate_masked_copy,
)
from .tensorfile import TensorFileError, load_tensor, save_tensor

__version__ = "0.1.0"

__all__ = [
    "AttentionResult",
    "TopKSet",
    "clustered_attention",
    "full_attention",
    "improved_attention_matrix",
    "improved_clustered_attention",
    "oracle_top_attention",
    "topk_per_cluster",
    "SpectralNormEstimate",
    "matmul",
    "row_l1_distance",
    "row_l2_distance",
    "softmax_rows",
    "spectral_norm",
    "ApproxReport",
    "ErrorSummary",
    "check_l1_dominance",
    "check_lipschitz_bound",
    "error_summary",
    "HashCodes",
    "ProjectionSet",
    "hamming_distance",
    "hash_queries",
    "make_planes",
    "Clustering",
    "cluster_queries",
    "init_centroids",
    "lloyd_step",
    "MaskedCopyInstance",
    "generate_masked_copy",
    "make_gaussian_qkv",
    "validate_masked_copy",
    "TensorFileError",
    "load_tensor",
    "save_tensor",
]
