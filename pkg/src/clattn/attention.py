"""Attention kernels: full (quadratic oracle), clustered, improved
clustered (top-k sparse refinement), and the oracle-top baseline.

The clustered kernels never materialize an N x N attention matrix unless
diagnostic retention is requested; their attention storage stays at
O(C*N + N*k).
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import as_matrix, matmul, softmax_rows
from .kmeans import Clustering

DEFAULT_TOPK = 32


@dataclass(frozen=True)
class TopKSet:
    """Per-cluster top-k key indices and the probability mass they carry."""

    k: int
    indices: np.ndarray  # (C, k) int64, each row sorted ascending
    masses: np.ndarray  # (C,) float64, each in [0, 1]


@dataclass(frozen=True)
class AttentionResult:
    values: np.ndarray  # (N, dv) float32
    attn: Optional[np.ndarray] = None  # retained only in diagnostic mode


def _check_qkv(q, k, v):
    q = as_matrix(q, "q")
    k = as_matrix(k, "k")
    v = as_matrix(v, "v")
    if q.shape[1] != k.shape[1]:
        raise ValueError(f"q dim {q.shape[1]} != k dim {k.shape[1]}")
    if k.shape[0] != v.shape[0]:
        raise ValueError(f"k rows {k.shape[0]} != v rows {v.shape[0]}")
    return q, k, v


def _scaled(logits: np.ndarray, dk: int, scale: bool) -> np.ndarray:
    if not scale:
        return logits
    return logits * np.float32(1.0 / np.sqrt(dk))


# Row-block budget for streaming full attention, sized to stay cache
# resident so wall time scales uniformly with N^2.
_BLOCK_BYTES = 8 << 20


def full_attention(q, k, v, scale: bool = True, keep_attn: bool = False) -> AttentionResult:
    """Exact softmax attention, O(N^2) time; the reference for every
    approximation.

    With keep_attn the dense N x N attention matrix is computed and
    retained. Otherwise queries are processed in row blocks: per-row
    results are identical, only peak memory changes.
    """
    q, k, v = _check_qkv(q, k, v)
    n, dk = q.shape
    if keep_attn:
        attn = softmax_rows(_scaled(matmul(q, k.T), dk, scale))
        return AttentionResult(values=matmul(attn, v), attn=attn)

    rows = max(1, _BLOCK_BYTES // (8 * k.shape[0]))
    if rows >= n:
        attn = softmax_rows(_scaled(matmul(q, k.T), dk, scale))
        return AttentionResult(values=matmul(attn, v))

    kt = np.ascontiguousarray(k.T)
    values = np.empty((n, v.shape[1]), dtype=np.float32)
    for start in range(0, n, rows):
        stop = min(start + rows, n)
        attn = softmax_rows(_scaled(matmul(q[start:stop], kt), dk, scale))
        values[start:stop] = matmul(attn, v)
    return AttentionResult(values=values)


def centroid_attention_rows(k, clustering: Clustering, scale: bool = True) -> np.ndarray:
    """Softmax attention rows of the cluster centroids over all keys, (C, N)."""
    k = as_matrix(k, "k")
    logits = _scaled(matmul(clustering.centroids, k.T), k.shape[1], scale)
    return softmax_rows(logits)


def clustered_attention(
    q, k, v, clustering: Clustering, scale: bool = True, keep_attn: bool = False
) -> AttentionResult:
    """Attention computed once per centroid and broadcast to cluster members."""
    q, k, v = _check_qkv(q, k, v)
    if clustering.n_queries != q.shape[0]:
        raise ValueError(
            f"clustering covers {clustering.n_queries} queries, got {q.shape[0]}"
        )
    ac = centroid_attention_rows(k, clustering, scale)
    vc = matmul(ac, v)
    values = vc[clustering.assignments]
    return AttentionResult(values=values, attn=ac if keep_attn else None)


def topk_per_cluster(ac, k: int) -> TopKSet:
    """The k highest-attention keys per centroid row, ties to the lowest index."""
    ac = as_matrix(ac, "ac")
    n = ac.shape[1]
    if not 1 <= k <= n:
        raise ValueError(f"topk must be in [1, {n}], got {k}")
    order = np.argsort(-ac, axis=1, kind="stable")[:, :k]
    indices = np.sort(order, axis=1).astype(np.int64)
    masses = np.take_along_axis(ac, indices, axis=1).astype(np.float64).sum(axis=1)
    return TopKSet(k=k, indices=indices, masses=masses)


def _cluster_member_groups(clustering: Clustering):
    """Yield (cluster index, member query indices) in cluster order."""
    order = np.argsort(clustering.assignments, kind="stable")
    bounds = np.concatenate([[0], np.cumsum(clustering.counts)])
    for j in range(clustering.n_clusters):
        yield j, order[bounds[j] : bounds[j + 1]]


def improved_clustered_attention(
    q, k, v, clustering: Clustering, topk: int = DEFAULT_TOPK,
    scale: bool = True, keep_attn: bool = False,
) -> AttentionResult:
    """Clustered attention refined with exact dot products on top-k keys.

    Per cluster, the k keys with the highest centroid attention are found
    and their mass is redistributed per member query: exact query/key dot
    products over just those k keys, softmaxed and rescaled by the
    cluster's top-k mass. The remaining keys keep their centroid weights,
    contributing a per-cluster value that is computed once and shared.
    """
    q, k, v = _check_qkv(q, k, v)
    if clustering.n_queries != q.shape[0]:
        raise ValueError(
            f"clustering covers {clustering.n_queries} queries, got {q.shape[0]}"
        )
    ac = centroid_attention_rows(k, clustering, scale)
    tks = topk_per_cluster(ac, topk)

    ac_rest = ac.copy()
    np.put_along_axis(ac_rest, tks.indices, np.float32(0.0), axis=1)

    # Group members contiguously and run the whole refinement in float64:
    # validation happened once at entry, so the per-cluster loop is a few
    # BLAS calls per cluster instead of going back through the public ops.
    order = np.argsort(clustering.assignments, kind="stable")
    bounds = np.concatenate([[0], np.cumsum(clustering.counts)])
    q64 = q[order].astype(np.float64)
    k64 = k.astype(np.float64)
    v64 = v.astype(np.float64)
    bottom = ac_rest.astype(np.float64) @ v64  # (C, dv), shared per cluster
    inv = 1.0 / np.sqrt(q.shape[1])

    out = np.empty((q.shape[0], v.shape[1]), dtype=np.float64)
    for j in range(clustering.n_clusters):
        s, e = bounds[j], bounds[j + 1]
        idx = tks.indices[j]
        w = q64[s:e] @ k64[idx].T
        if scale:
            w *= inv
        w -= w.max(axis=1, keepdims=True)
        np.exp(w, out=w)
        w *= tks.masses[j] / w.sum(axis=1, keepdims=True)
        out[s:e] = w @ v64[idx] + bottom[j]

    values = np.empty((q.shape[0], v.shape[1]), dtype=np.float32)
    values[order] = out.astype(np.float32)

    attn = None
    if keep_attn:
        attn = improved_attention_matrix(q, k, clustering, topk, scale)
    return AttentionResult(values=values, attn=attn)


def improved_attention_matrix(
    q, k, clustering: Clustering, topk: int = DEFAULT_TOPK, scale: bool = True
) -> np.ndarray:
    """Dense N x N improved attention matrix, for diagnostics and tests only.

    Each row carries the rescaled exact softmax on its cluster's top-k
    columns and the centroid row everywhere else; rows sum to 1.
    """
    q = as_matrix(q, "q")
    k = as_matrix(k, "k")
    if q.shape[1] != k.shape[1]:
        raise ValueError(f"q dim {q.shape[1]} != k dim {k.shape[1]}")
    if clustering.n_queries != q.shape[0]:
        raise ValueError(
            f"clustering covers {clustering.n_queries} queries, got {q.shape[0]}"
        )
    ac = centroid_attention_rows(k, clustering, scale)
    tks = topk_per_cluster(ac, topk)
    at = ac[clustering.assignments].copy()
    dk = q.shape[1]
    for j, members in _cluster_member_groups(clustering):
        idx = tks.indices[j]
        logits = _scaled(matmul(q[members], k[idx].T), dk, scale)
        at[members[:, None], idx[None, :]] = softmax_rows(logits) * np.float32(
            tks.masses[j]
        )
    return at


def oracle_top_attention(
    q, k, v, topk: int = DEFAULT_TOPK, scale: bool = True, keep_attn: bool = False
) -> AttentionResult:
    """Exact attention truncated to each query's top-k weights, renormalized.

    A diagnostic baseline: it still costs O(N^2) because the exact
    attention must be computed before truncation.
    """
    q, k, v = _check_qkv(q, k, v)
    n = k.shape[0]
    if not 1 <= topk <= n:
        raise ValueError(f"topk must be in [1, {n}], got {topk}")
    attn = softmax_rows(_scaled(matmul(q, k.T), q.shape[1], scale))
    order = np.argsort(-attn, axis=1, kind="stable")[:, :topk]
    kept = np.zeros_like(attn)
    np.put_along_axis(kept, order, np.take_along_axis(attn, order, axis=1), axis=1)
    sums = kept.astype(np.float64).sum(axis=1, keepdims=True)
    kept = (kept / sums).astype(np.float32)
    values = matmul(kept, v)
    return AttentionResult(values=values, attn=kept if keep_attn else None)
