"""Scaling benchmark: wall time and allocator-tracked peak memory per
sequence element for each attention method, plus log-log slope fitting.

Memory is the Python-allocator peak of one kernel call (tracemalloc), not
process RSS; timings are the median of repeated runs after warmup.
"""

import math
import time
import tracemalloc
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .attention import (
    clustered_attention,
    full_attention,
    improved_clustered_attention,
    oracle_top_attention,
)
from .kmeans import cluster_queries
from .tasks import make_gaussian_qkv

METHODS = ("full", "clustered", "improved", "oracle_top")

# Quadratic methods are skipped above this length unless overridden.
DEFAULT_FULL_CAP = 2**14

CSV_FIELDS = [
    "method",
    "seq_len",
    "clusters",
    "topk",
    "bits",
    "lloyd_iters",
    "wall_time_per_element",
    "peak_bytes_per_element",
    "seed",
]


@dataclass(frozen=True)
class BenchRecord:
    method: str
    seq_len: int
    clusters: int
    topk: int
    bits: int
    lloyd_iters: int
    wall_time_per_element: float
    peak_bytes_per_element: float
    seed: int

    def to_csv_row(self) -> str:
        return ",".join(
            [
                self.method,
                str(self.seq_len),
                str(self.clusters),
                str(self.topk),
                str(self.bits),
                str(self.lloyd_iters),
                repr(self.wall_time_per_element),
                repr(self.peak_bytes_per_element),
                str(self.seed),
            ]
        )


def make_kernel_call(
    method: str,
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    clusters: int,
    topk: int,
    bits: int,
    lloyd_iters: int,
    seed: int,
) -> Callable[[], object]:
    """Build a zero-argument closure running one forward pass of `method`.

    Clustered methods include the hashing and K-Means grouping in the
    measured call since grouping is part of their cost model.
    """
    if method == "full":
        return lambda: full_attention(q, k, v)
    if method == "oracle_top":
        return lambda: oracle_top_attention(q, k, v, topk)
    if method == "clustered":

        def run_clustered():
            clustering = cluster_queries(q, clusters, bits, lloyd_iters, seed)
            return clustered_attention(q, k, v, clustering)

        return run_clustered
    if method == "improved":

        def run_improved():
            clustering = cluster_queries(q, clusters, bits, lloyd_iters, seed)
            return improved_clustered_attention(q, k, v, clustering, topk)

        return run_improved
    raise ValueError(f"unknown method: {method}")


def measure_peak_bytes(fn: Callable[[], object]) -> int:
    """Allocator-accounted peak bytes of one call to fn."""
    was_tracing = tracemalloc.is_tracing()
    if not was_tracing:
        tracemalloc.start()
    tracemalloc.reset_peak()
    fn()
    _, peak = tracemalloc.get_traced_memory()
    if not was_tracing:
        tracemalloc.stop()
    return peak


def time_call(fn: Callable[[], object], repeats: int, warmup: int) -> float:
    """Median wall time of `repeats` calls after `warmup` untimed calls."""
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def run_bench(
    methods: Sequence[str],
    seq_lens: Sequence[int],
    dk: int = 64,
    dv: int = 64,
    clusters: int = 100,
    topk: int = 32,
    bits: int = 63,
    lloyd_iters: int = 10,
    repeats: int = 3,
    warmup: int = 1,
    seed: int = 0,
    full_cap: int = DEFAULT_FULL_CAP,
    measure_memory: bool = True,
) -> List[BenchRecord]:
    """One BenchRecord per (method, seq_len), quadratic methods capped."""
    for method in methods:
        if method not in METHODS:
            raise ValueError(f"unknown method: {method}")
    records = []
    for n in seq_lens:
        q, k, v = make_gaussian_qkv(n, dk, dv, num_modes=1, spread=1.0, seed=seed)
        for method in methods:
            if method in ("full", "oracle_top") and n > full_cap:
                continue
            eff_clusters = min(clusters, n)
            eff_topk = min(topk, n)
            fn = make_kernel_call(
                method, q, k, v, eff_clusters, eff_topk, bits, lloyd_iters, seed
            )
            wall = time_call(fn, repeats=repeats, warmup=warmup)
            peak = measure_peak_bytes(fn) if measure_memory else 0
            records.append(
                BenchRecord(
                    method=method,
                    seq_len=n,
                    clusters=eff_clusters,
                    topk=eff_topk,
                    bits=bits,
                    lloyd_iters=lloyd_iters,
                    wall_time_per_element=wall / n,
                    peak_bytes_per_element=peak / n,
                    seed=seed,
                )
            )
    return records


@dataclass(frozen=True)
class SlopeFit:
    method: str
    slope: float
    residual: float  # RMS residual of the log-log fit
    points: int


def fit_slopes(rows: Iterable[dict]) -> Dict[str, SlopeFit]:
    """Least-squares slope of log(total time) vs log(N) per method.

    Rows are dicts with at least method, seq_len, wall_time_per_element;
    total time is per-element time multiplied back by the length. Each
    method needs at least 3 distinct lengths.
    """
    by_method: Dict[str, List[Tuple[int, float]]] = {}
    for row in rows:
        n = int(row["seq_len"])
        total = float(row["wall_time_per_element"]) * n
        by_method.setdefault(str(row["method"]), []).append((n, total))

    fits = {}
    for method, pts in by_method.items():
        lens = {n for n, _ in pts}
        if len(lens) < 3:
            raise ValueError(
                f"method {method}: need >= 3 distinct seq_lens, got {len(lens)}"
            )
        x = np.log([n for n, _ in pts])
        y = np.log([t for _, t in pts])
        slope, intercept = np.polyfit(x, y, 1)
        resid = y - (slope * x + intercept)
        fits[method] = SlopeFit(
            method=method,
            slope=float(slope),
            residual=float(math.sqrt(np.mean(resid**2))),
            points=len(pts),
        )
    return fits
