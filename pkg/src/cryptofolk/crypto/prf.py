"""Keyed function families mapping n-bit strings to n-bit strings.

``reference`` is an iterated keyed construction over the public 64-bit
splitmix finalizer permutation.  ``constant`` and ``counter`` are broken on
purpose and serve as negative controls.  None of this is secure at the sizes
used here.
"""

from __future__ import annotations

from dataclasses import dataclass

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MAX_BITS = 62
ROUNDS = 4

PRF_KINDS = ("reference", "constant", "counter")
KIND_CODES = {name: code for code, name in enumerate(PRF_KINDS)}


class PrfError(ValueError):
    pass


def mix64(z: int) -> int:
    """splitmix64 finalizer; a bijection on 64-bit words."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def round_keys(seed: int, nbits: int) -> tuple[int, ...]:
    base = (seed ^ (nbits << 56)) & MASK64
    return tuple(mix64(base + (r + 1) * GOLDEN) for r in range(ROUNDS + 1))


def reference_eval(seed: int, x: int, nbits: int) -> int:
    keys = round_keys(seed, nbits)
    s = x
    for r in range(ROUNDS):
        s = mix64(s ^ keys[r])
    return (s ^ keys[ROUNDS]) & ((1 << nbits) - 1)


@dataclass(frozen=True)
class PrfInstance:
    kind: str
    seed: int
    nbits: int

    def __post_init__(self) -> None:
        if self.kind not in KIND_CODES:
            raise PrfError(f"unknown PRF kind {self.kind!r}")
        if not 1 <= self.nbits <= MAX_BITS:
            raise PrfError(f"seed length must be in [1, {MAX_BITS}]")
        if not 0 <= self.seed < 1 << self.nbits:
            raise PrfError("seed does not fit in nbits")

    def __call__(self, x: int) -> int:
        return prf_eval(self, x)


def prf_eval(p: PrfInstance, x: int) -> int:
    """Evaluate ``p`` on an ``nbits``-bit input given as an integer."""
    if not 0 <= x < 1 << p.nbits:
        raise PrfError(f"input must be a {p.nbits}-bit string")
    if p.kind == "reference":
        return reference_eval(p.seed, x, p.nbits)
    if p.kind == "constant":
        return 0
    return (x + 1) & ((1 << p.nbits) - 1)


def int_to_bits(v: int, width: int) -> str:
    """Big-endian fixed-width bit string."""
    if not 0 <= v < 1 << width:
        raise ValueError(f"{v} does not fit in {width} bits")
    return format(v, f"0{width}b") if width else ""


def bits_to_int(bits: str) -> int:
    return int(bits, 2) if bits else 0
