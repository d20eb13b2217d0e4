"""Pure numpy implementation of the punishment-sampling kernels."""

from __future__ import annotations

import numpy as np

from ..crypto.prf import KIND_CODES, MASK64, ROUNDS, round_keys

_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _C1
    z = (z ^ (z >> np.uint64(27))) * _C2
    return z ^ (z >> np.uint64(31))


def prf_stream(kind: int, seed: int, nbits: int, x0: int, count: int) -> np.ndarray:
    """PRF outputs on inputs ``(x0 + k) mod 2**nbits`` for ``k < count``."""
    mask = (1 << nbits) - 1
    xs = (np.arange(count, dtype=np.uint64) + np.uint64(x0 & MASK64)) & np.uint64(mask)
    if kind == KIND_CODES["constant"]:
        return np.zeros(count, dtype=np.uint64)
    if kind == KIND_CODES["counter"]:
        return (xs + np.uint64(1)) & np.uint64(mask)
    keys = [np.uint64(k) for k in round_keys(seed, nbits)]
    s = xs
    with np.errstate(over="ignore"):
        for r in range(ROUNDS):
            s = _mix64(s ^ keys[r])
    return (s ^ keys[ROUNDS]) & np.uint64(mask)


def draw_outcomes(
    kind: int, seed: int, nbits: int, x0: int, count: int, cumulative: np.ndarray
) -> np.ndarray:
    """Inverse-CDF outcome indices driven by :func:`prf_stream`."""
    vals = prf_stream(kind, seed, nbits, x0, count).astype(np.int64)
    return np.searchsorted(np.asarray(cumulative, dtype=np.int64), vals, side="right")


__all__ = ["prf_stream", "draw_outcomes"]
