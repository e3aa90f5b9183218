"""Quantitative verification of the approximation guarantees.

Two inequalities are checked per query: the Lipschitz-style L2 bound on
the softmax rows of nearby queries (distance to centroid times spectral
norm of the keys), and the L1 dominance of the top-k refined rows over
the plain clustered rows. Violations are reported as data, never raised.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .attention import (
    AttentionResult,
    centroid_attention_rows,
    improved_attention_matrix,
    topk_per_cluster,
)
from .core import as_matrix, matmul, softmax_rows, spectral_norm
from .kmeans import Clustering

# Tolerances sized for float32 kernels with float64 accumulation.
L2_BOUND_TOL = 1e-5
L1_DOMINANCE_TOL = 1e-6
MASS_IDENTITY_TOL = 1e-6


@dataclass
class ApproxReport:
    """Per-query error magnitudes, bound values, and any violations."""

    per_query_l1: np.ndarray
    per_query_l2: np.ndarray
    per_query_bound: np.ndarray
    violations: List[Tuple[int, float]] = field(default_factory=list)
    masses: Optional[np.ndarray] = None  # (N, 2): true mass, cluster mass

    @property
    def ok(self) -> bool:
        return not self.violations

    def max_slack(self) -> float:
        if not self.violations:
            return 0.0
        return max(s for _, s in self.violations)

    def to_dict(self) -> dict:
        out = {
            "queries": int(len(self.per_query_l1)),
            "violations": int(len(self.violations)),
            "max_slack": float(self.max_slack()),
            "mean_l1": float(self.per_query_l1.mean()),
            "max_l1": float(self.per_query_l1.max()),
            "mean_l2": float(self.per_query_l2.mean()),
            "max_l2": float(self.per_query_l2.max()),
        }
        if self.masses is not None:
            out["mean_topk_mass"] = float(self.masses[:, 0].mean())
        return out


def check_lipschitz_bound(
    q, k, clustering: Clustering, scaled: bool = False
) -> ApproxReport:
    """Check that softmax-row drift is bounded by centroid distance.

    For each query, the L2 distance between its softmax attention row and
    its centroid's row must not exceed the query-to-centroid distance
    times the spectral norm of K. The bound is stated for unscaled logits;
    `scaled=True` divides it by sqrt(dk) to match scaled attention.
    """
    q = as_matrix(q, "q")
    k = as_matrix(k, "k")
    a_full = softmax_rows(_maybe_scale(matmul(q, k.T), q.shape[1], scaled))
    a_cent = centroid_attention_rows(k, clustering, scale=scaled)
    diff = a_full.astype(np.float64) - a_cent[clustering.assignments].astype(np.float64)
    l1 = np.abs(diff).sum(axis=1)
    l2 = np.linalg.norm(diff, axis=1)

    eps = np.linalg.norm(
        q.astype(np.float64)
        - clustering.centroids[clustering.assignments].astype(np.float64),
        axis=1,
    )
    k_norm = spectral_norm(k).value
    bound = eps * k_norm
    if scaled:
        bound = bound / np.sqrt(q.shape[1])

    violations = [
        (int(i), float(l2[i] - bound[i]))
        for i in np.flatnonzero(l2 > bound + L2_BOUND_TOL)
    ]
    return ApproxReport(
        per_query_l1=l1, per_query_l2=l2, per_query_bound=bound, violations=violations
    )


def check_l1_dominance(
    q, k, clustering: Clustering, topk: int, scale: bool = True
) -> ApproxReport:
    """Check that the top-k refined rows beat the clustered rows in L1.

    Also verifies the identity behind that guarantee: on the top-k keys,
    the refined row's L1 error equals the absolute gap between the true
    and clustered top-k probability masses.
    """
    q = as_matrix(q, "q")
    k = as_matrix(k, "k")
    a_full = softmax_rows(_maybe_scale(matmul(q, k.T), q.shape[1], scale)).astype(
        np.float64
    )
    at = improved_attention_matrix(q, k, clustering, topk, scale).astype(np.float64)
    ac = centroid_attention_rows(k, clustering, scale)
    ac_rows = ac[clustering.assignments].astype(np.float64)

    diff_t = np.abs(at - a_full)
    l1_t = diff_t.sum(axis=1)
    l1_c = np.abs(ac_rows - a_full).sum(axis=1)
    l2_t = np.linalg.norm(at - a_full, axis=1)

    violations = [
        (int(i), float(l1_t[i] - l1_c[i]))
        for i in np.flatnonzero(l1_t > l1_c + L1_DOMINANCE_TOL)
    ]

    tks = topk_per_cluster(ac, topk)
    idx = tks.indices[clustering.assignments]  # (N, k)
    m_true = np.take_along_axis(a_full, idx, axis=1).sum(axis=1)
    m_cluster = tks.masses[clustering.assignments]
    topk_err = np.take_along_axis(diff_t, idx, axis=1).sum(axis=1)
    gap = np.abs(topk_err - np.abs(m_true - m_cluster))
    violations += [
        (int(i), float(gap[i])) for i in np.flatnonzero(gap > MASS_IDENTITY_TOL)
    ]

    return ApproxReport(
        per_query_l1=l1_t,
        per_query_l2=l2_t,
        per_query_bound=l1_c,
        violations=violations,
        masses=np.stack([m_true, m_cluster], axis=1),
    )


@dataclass
class ErrorSummary:
    mean_l1: float
    max_l1: float
    mean_l2: float
    max_l2: float

    def to_dict(self) -> dict:
        return {
            "mean_l1": self.mean_l1,
            "max_l1": self.max_l1,
            "mean_l2": self.mean_l2,
            "max_l2": self.max_l2,
        }


def error_summary(approx: AttentionResult, oracle: AttentionResult) -> ErrorSummary:
    """Row-wise L1/L2 error statistics between two value matrices."""
    if approx.values.shape != oracle.values.shape:
        raise ValueError(
            f"shape mismatch: {approx.values.shape} vs {oracle.values.shape}"
        )
    d = approx.values.astype(np.float64) - oracle.values.astype(np.float64)
    l1 = np.abs(d).sum(axis=1)
    l2 = np.linalg.norm(d, axis=1)
    return ErrorSummary(
        mean_l1=float(l1.mean()),
        max_l1=float(l1.max()),
        mean_l2=float(l2.mean()),
        max_l2=float(l2.max()),
    )


def _maybe_scale(logits: np.ndarray, dk: int, scaled: bool) -> np.ndarray:
    if not scaled:
        return logits
    return logits * np.float32(1.0 / np.sqrt(dk))
