"""Sign-random-projection hashing of query vectors into B-bit codes.

Each code is one machine word: bit b is set iff the query has positive
dot product with random hyperplane b. Codes compare with XOR + popcount.
"""

from dataclasses import dataclass

import numpy as np

from .core import as_matrix

# One uint64 word per code; the top bit is reserved so B <= 63.
MAX_BITS = 63


@dataclass(frozen=True)
class ProjectionSet:
    """B random hyperplane normals, one per hash bit."""

    planes: np.ndarray  # (bits, dk) float32
    seed: int

    @property
    def bits(self) -> int:
        return self.planes.shape[0]

    @property
    def dk(self) -> int:
        return self.planes.shape[1]


@dataclass(frozen=True)
class HashCodes:
    """One packed B-bit signature per query."""

    codes: np.ndarray  # (N,) uint64
    bits: int

    def __len__(self) -> int:
        return len(self.codes)


def make_planes(dk: int, bits: int, seed: int) -> ProjectionSet:
    """Draw `bits` i.i.d. standard-normal hyperplanes of dimension dk.

    Deterministic for a given (seed, bits, dk) triple.
    """
    if not 1 <= bits <= MAX_BITS:
        raise ValueError(f"bits must be in [1, {MAX_BITS}], got {bits}")
    if dk < 1:
        raise ValueError(f"dk must be >= 1, got {dk}")
    rng = np.random.default_rng(seed)
    planes = rng.standard_normal((bits, dk)).astype(np.float32)
    assert (np.abs(planes).sum(axis=1) > 0).all(), "degenerate all-zero plane"
    return ProjectionSet(planes=planes, seed=int(seed))


def hash_queries(q, planes: ProjectionSet) -> HashCodes:
    """Hash each query row to a packed code of sign bits.

    Bit b of code i is 1 iff dot(q[i], planes[b]) > 0; an exact zero
    projection maps to 0 so ties are deterministic.
    """
    q = as_matrix(q, "q")
    if q.shape[1] != planes.dk:
        raise ValueError(f"query dim {q.shape[1]} != plane dim {planes.dk}")
    proj = q.astype(np.float64) @ planes.planes.astype(np.float64).T
    bits = proj > 0.0
    weights = np.uint64(1) << np.arange(planes.bits, dtype=np.uint64)
    codes = (bits.astype(np.uint64) * weights).sum(axis=1, dtype=np.uint64)
    return HashCodes(codes=codes, bits=planes.bits)


def hamming_distance(a: int, b: int) -> int:
    """Number of differing bits between two packed codes."""
    return (int(a) ^ int(b)).bit_count()


def hamming_distance_matrix(codes: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """All-pairs Hamming distances, shape (len(codes), len(centroids))."""
    x = codes[:, None] ^ centroids[None, :]
    return np.bitwise_count(x).astype(np.int64)


def unpack_bits(codes: np.ndarray, bits: int) -> np.ndarray:
    """Expand packed codes to a (N, bits) 0/1 matrix, bit 0 first."""
    shifts = np.arange(bits, dtype=np.uint64)
    return ((codes[:, None] >> shifts) & np.uint64(1)).astype(np.int64)


def pack_bits(bit_rows: np.ndarray) -> np.ndarray:
    """Inverse of unpack_bits for 0/1 rows of width <= 63."""
    bits = bit_rows.shape[1]
    weights = np.uint64(1) << np.arange(bits, dtype=np.uint64)
    return (bit_rows.astype(np.uint64) * weights).sum(axis=1, dtype=np.uint64)
