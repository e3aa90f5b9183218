"""Lloyd's K-Means over packed bit codes with the Hamming metric.

Produces a partition of the queries plus per-cluster Euclidean centroids
(the arithmetic mean of member queries). All tie-breaks are deterministic:
assignment ties go to the lowest cluster index, majority-vote bit ties go
to 0, and re-seeding picks the lowest query index among the farthest.
"""

from dataclasses import dataclass

import numpy as np

from .core import as_matrix
from .hashing import (
    HashCodes,
    hamming_distance_matrix,
    hash_queries,
    make_planes,
    pack_bits,
    unpack_bits,
)

DEFAULT_BITS = 63
DEFAULT_LLOYD_ITERS = 10


@dataclass(frozen=True)
class Clustering:
    """A partition of N queries into C non-empty clusters."""

    assignments: np.ndarray  # (N,) int64, values in [0, C)
    counts: np.ndarray  # (C,) int64, all >= 1
    centroids: np.ndarray  # (C, dk) float32, Euclidean means
    binary_centroids: np.ndarray  # (C,) uint64
    bits: int

    @property
    def n_queries(self) -> int:
        return len(self.assignments)

    @property
    def n_clusters(self) -> int:
        return len(self.counts)


def init_centroids(codes: HashCodes, c: int, seed: int):
    """Pick c starting centroids uniformly from the distinct codes.

    If fewer than c distinct codes exist the remainder is filled by
    resampling with replacement; the second return value flags that case.
    """
    n = len(codes)
    if not 1 <= c <= n:
        raise ValueError(f"cluster count must be in [1, {n}], got {c}")
    distinct = np.unique(codes.codes)
    rng = np.random.default_rng(seed)
    if len(distinct) >= c:
        picked = rng.choice(distinct, size=c, replace=False)
        duplicated = False
    else:
        extra = rng.choice(distinct, size=c - len(distinct), replace=True)
        picked = np.concatenate([distinct, extra])
        duplicated = True
    return picked.astype(np.uint64), duplicated


def _majority_vote(assign: np.ndarray, bit_rows: np.ndarray, c: int) -> np.ndarray:
    """Per-cluster per-bit majority; exact ties resolve to 0."""
    n, bits = bit_rows.shape
    member_counts = np.bincount(assign, minlength=c)
    flat = (assign[:, None] * bits + np.arange(bits)).ravel()
    ones = np.bincount(flat, weights=bit_rows.ravel(), minlength=c * bits)
    ones = ones.reshape(c, bits)
    maj = (2 * ones) > member_counts[:, None]
    return pack_bits(maj)


def _farthest_order(d_own: np.ndarray) -> np.ndarray:
    """Query indices by decreasing distance to own centroid, ties by index."""
    return np.lexsort((np.arange(len(d_own)), -d_own))


def lloyd_step(codes: HashCodes, centroids: np.ndarray):
    """One assign + recompute iteration of Lloyd's algorithm.

    Returns (assignments, new_centroids, objective) where the objective
    is the summed Hamming distance to the *input* centroids. Clusters
    left empty by the assignment are re-seeded with the code farthest
    from its own centroid (each empty cluster takes a different code).
    """
    if len(centroids) < 1:
        raise ValueError("need at least one centroid")
    code_arr = codes.codes
    n = len(code_arr)
    c = len(centroids)
    dist = hamming_distance_matrix(code_arr, centroids)
    assign = dist.argmin(axis=1)
    d_own = dist[np.arange(n), assign]
    objective = int(d_own.sum())

    bit_rows = unpack_bits(code_arr, codes.bits)
    new_centroids = _majority_vote(assign, bit_rows, c)

    member_counts = np.bincount(assign, minlength=c)
    empty = np.flatnonzero(member_counts == 0)
    if len(empty):
        order = _farthest_order(d_own)
        for slot, j in enumerate(empty):
            new_centroids[j] = code_arr[order[slot]]
    return assign.astype(np.int64), new_centroids, objective


def cluster_queries(
    q,
    c: int,
    bits: int = DEFAULT_BITS,
    lloyd_iters: int = DEFAULT_LLOYD_ITERS,
    seed: int = 0,
) -> Clustering:
    """Hash queries, run K-Means in Hamming space, return the partition.

    Pipeline: random projection planes -> packed sign codes -> centroid
    init -> `lloyd_iters` Lloyd steps -> final assignment against the
    final binary centroids. Empty clusters are repaired by moving the
    farthest query out of a cluster that still has at least two members,
    so the output never contains an empty cluster. Euclidean centroids
    are the means of member queries under the final assignment.
    """
    q = as_matrix(q, "q")
    n = q.shape[0]
    if not 1 <= c <= n:
        raise ValueError(f"cluster count must be in [1, {n}], got {c}")
    if lloyd_iters < 0:
        raise ValueError(f"lloyd_iters must be >= 0, got {lloyd_iters}")

    planes_seed, init_seed = np.random.SeedSequence(seed).generate_state(2)
    planes = make_planes(q.shape[1], bits, int(planes_seed))
    codes = hash_queries(q, planes)
    centroids, _ = init_centroids(codes, c, int(init_seed))
    for _ in range(lloyd_iters):
        _, centroids, _ = lloyd_step(codes, centroids)

    dist = hamming_distance_matrix(codes.codes, centroids)
    assign = dist.argmin(axis=1).astype(np.int64)
    counts = np.bincount(assign, minlength=c)
    d_own = dist[np.arange(n), assign]

    for j in np.flatnonzero(counts == 0):
        movable = counts[assign] >= 2
        order = _farthest_order(np.where(movable, d_own, -1))
        i = order[0]
        counts[assign[i]] -= 1
        assign[i] = j
        counts[j] = 1
        centroids[j] = codes.codes[i]
        d_own[i] = 0

    sums = np.zeros((c, q.shape[1]), dtype=np.float64)
    np.add.at(sums, assign, q.astype(np.float64))
    euclidean = (sums / counts[:, None]).astype(np.float32)

    return Clustering(
        assignments=assign,
        counts=counts.astype(np.int64),
        centroids=euclidean,
        binary_centroids=centroids,
        bits=bits,
    )
