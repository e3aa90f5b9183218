"""Dense matrix substrate: float32 storage, float64 accumulation.

All exported operations take and return row-major float32 arrays and
reject non-finite data. Reductions (dot products, softmax denominators,
norms) run at float64 before results are rounded back to float32.
"""

from typing import NamedTuple

import numpy as np

KERNEL_DTYPE = np.float32


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce x to a 2-D, C-contiguous float32 array and validate it."""
    m = np.ascontiguousarray(x, dtype=KERNEL_DTYPE)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={m.ndim}")
    if m.size == 0:
        raise ValueError(f"{name} must be nonempty")
    if not np.isfinite(m).all():
        raise ValueError(f"{name} contains non-finite entries")
    return m


def _finite_out(m: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(m).all():
        raise ValueError(f"{op} overflowed the float32 range")
    return m


def matmul(a, b) -> np.ndarray:
    """Matrix product with float64 accumulation, rounded to float32."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"matmul dimension mismatch: {a.shape[0]}x{a.shape[1]} @ {b.shape[0]}x{b.shape[1]}"
        )
    out = (a.astype(np.float64) @ b.astype(np.float64)).astype(KERNEL_DTYPE)
    return _finite_out(out, "matmul")


def softmax_rows(m) -> np.ndarray:
    """Row-wise softmax with per-row max subtraction for stability."""
    m = as_matrix(m, "m")
    z = m.astype(np.float64)
    z -= z.max(axis=1, keepdims=True)
    # In-place exp and divide: this runs on N x N buffers in the full
    # attention path, where extra temporaries are measurable.
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z.astype(KERNEL_DTYPE)


class SpectralNormEstimate(NamedTuple):
    value: float
    converged: bool
    iterations: int


# Fixed start vector seed keeps the estimate deterministic across calls.
_POWER_ITER_SEED = 0x5EED


def spectral_norm(m, tol: float = 1e-6, max_iters: int = 1000) -> SpectralNormEstimate:
    """Largest singular value via power iteration on m^T m.

    The returned value is a Rayleigh-quotient estimate, hence always a
    lower bound on the true norm. If successive estimates fail to settle
    within `tol` (relative) after `max_iters` rounds, the best estimate
    is returned with converged=False.
    """
    m = as_matrix(m, "m")
    a = m.astype(np.float64)
    rng = np.random.default_rng(_POWER_ITER_SEED)
    v = rng.standard_normal(a.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for it in range(1, max_iters + 1):
        w = a @ v
        sigma_new = float(np.linalg.norm(w))
        if sigma_new == 0.0:
            return SpectralNormEstimate(0.0, True, it)
        u = a.T @ w
        v = u / np.linalg.norm(u)
        if abs(sigma_new - sigma) <= tol * sigma_new:
            return SpectralNormEstimate(sigma_new, True, it)
        sigma = sigma_new
    return SpectralNormEstimate(sigma, False, max_iters)


def _row_pair(a, b, row_a: int, row_b: int):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"column mismatch: {a.shape[1]} vs {b.shape[1]}")
    if not 0 <= row_a < a.shape[0]:
        raise IndexError(f"row_a={row_a} out of range [0, {a.shape[0]})")
    if not 0 <= row_b < b.shape[0]:
        raise IndexError(f"row_b={row_b} out of range [0, {b.shape[0]})")
    return a[row_a].astype(np.float64), b[row_b].astype(np.float64)


def row_l1_distance(a, b, row_a: int, row_b: int) -> float:
    """L1 distance between row row_a of a and row row_b of b."""
    ra, rb = _row_pair(a, b, row_a, row_b)
    return float(np.abs(ra - rb).sum())


def row_l2_distance(a, b, row_a: int, row_b: int) -> float:
    """L2 distance between row row_a of a and row row_b of b."""
    ra, rb = _row_pair(a, b, row_a, row_b)
    return float(np.linalg.norm(ra - rb))
