"""Synthetic fixtures: the masked-copy sequence task and Gaussian Q/K/V.

A masked-copy instance is a token sequence of the form 0w0w (separator,
word, separator, word) where some symbols are masked in the input. Masked
offsets never repeat across the two halves, so every masked token can be
recovered from its twin in the other half.
"""

from dataclasses import dataclass

import numpy as np

SEPARATOR = 0


@dataclass(frozen=True)
class MaskedCopyInstance:
    input_tokens: np.ndarray  # (2L + 2,) int64
    target_tokens: np.ndarray  # (2L + 2,) int64
    mask_token: int
    separator: int = SEPARATOR

    @property
    def word_length(self) -> int:
        return (len(self.target_tokens) - 2) // 2


def generate_masked_copy(
    length: int, num_symbols: int, mask_rate: float, seed: int
) -> MaskedCopyInstance:
    """Sample a masked-copy instance with disjoint masks across halves.

    The word w is uniform over {1..num_symbols}^length; the target is
    0w0w. round(mask_rate * 2 * length) distinct offsets are masked, each
    in exactly one half, so mask_rate may not exceed 0.5. Separators are
    never masked. Deterministic per seed.
    """
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    if num_symbols < 1:
        raise ValueError(f"num_symbols must be >= 1, got {num_symbols}")
    if not 0.0 <= mask_rate <= 0.5:
        raise ValueError(f"mask_rate must be in [0, 0.5], got {mask_rate}")
    rng = np.random.default_rng(seed)
    w = rng.integers(1, num_symbols + 1, size=length, dtype=np.int64)
    target = np.concatenate([[SEPARATOR], w, [SEPARATOR], w])

    mask_token = num_symbols + 1
    n_mask = int(round(mask_rate * 2 * length))
    offsets = rng.choice(length, size=n_mask, replace=False)
    halves = rng.integers(0, 2, size=n_mask)
    positions = np.where(halves == 0, 1 + offsets, length + 2 + offsets)

    input_tokens = target.copy()
    input_tokens[positions] = mask_token
    return MaskedCopyInstance(
        input_tokens=input_tokens, target_tokens=target, mask_token=mask_token
    )


def validate_masked_copy(instance: MaskedCopyInstance) -> bool:
    """True iff the target is fully reconstructible from the input.

    Checks the 0w0w shape, that no offset is masked in both halves, and
    that substituting each masked token with its twin reproduces the
    target exactly.
    """
    t = instance.target_tokens
    x = instance.input_tokens
    if len(t) != len(x) or len(t) < 4 or len(t) % 2 != 0:
        return False
    length = (len(t) - 2) // 2
    sep = instance.separator
    if t[0] != sep or t[length + 1] != sep:
        return False
    if x[0] != sep or x[length + 1] != sep:
        return False
    if not np.array_equal(t[1 : length + 1], t[length + 2 :]):
        return False

    mask = instance.mask_token
    first = x[1 : length + 1]
    second = x[length + 2 :]
    if np.any((first == mask) & (second == mask)):
        return False
    recon_first = np.where(first == mask, second, first)
    recon_second = np.where(second == mask, first, second)
    recon = np.concatenate([[x[0]], recon_first, [x[length + 1]], recon_second])
    return bool(np.array_equal(recon, t))


def make_gaussian_qkv(
    n: int,
    dk: int,
    dv: int,
    num_modes: int = 1,
    spread: float = 1.0,
    seed: int = 0,
):
    """Structured Q plus i.i.d. normal K and V, all float32.

    Queries are drawn around num_modes unit-norm mode centers (query i
    uses mode i % num_modes) with per-mode standard deviation `spread`.
    """
    if min(n, dk, dv, num_modes) < 1:
        raise ValueError("all counts must be >= 1")
    if spread < 0:
        raise ValueError(f"spread must be >= 0, got {spread}")
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((num_modes, dk))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    labels = np.arange(n) % num_modes
    q = centers[labels] + spread * rng.standard_normal((n, dk))
    k = rng.standard_normal((n, dk))
    v = rng.standard_normal((n, dv))
    return (
        q.astype(np.float32),
        k.astype(np.float32),
        v.astype(np.float32),
    )
