from __future__ import annotations

from ..equilibrium import DyadicDistribution
from ..game import Profile


def sample_from_dyadic(d: DyadicDistribution, bits: int | str) -> Profile:
    """Inverse-CDF lookup of an ``n``-bit value (int or big-endian bit string)."""
    if isinstance(bits, str):
        if len(bits) != d.precision:
            raise ValueError(f"expected {d.precision} bits, got {len(bits)}")
        bits = int(bits, 2)
    return d.outcomes[d.index_of(bits)]
