"""Toy public-key encryption for n-bit seeds.

``reference`` is textbook ElGamal in the quadratic-residue subgroup of the
smallest safe prime whose subgroup order exceeds ``2**n``; messages are
encoded in the exponent and decrypted by table lookup.  ``identity`` leaves
the plaintext readable and exists only as a negative control.  Group sizes
are tiny: this checks the mechanism, never security.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

PKE_KINDS = ("reference", "identity")
MAX_SECURITY = 24


class DecodeError(ValueError):
    """Ciphertext is malformed or does not decrypt to an n-bit message."""


@dataclass(frozen=True)
class KeyPair:
    pk: int
    sk: int


def _is_prime(v: int) -> bool:
    if v < 2:
        return False
    if v % 2 == 0:
        return v == 2
    d = 3
    while d * d <= v:
        if v % d == 0:
            return False
        d += 2
    return True


@lru_cache(maxsize=None)
def group_for(n: int) -> tuple[int, int, int]:
    """``(p, q, g)``: safe prime ``p = 2q + 1`` with ``q > 2**n``, generator ``g = 4``."""
    if not 1 <= n <= MAX_SECURITY:
        raise ValueError(f"security parameter must be in [1, {MAX_SECURITY}]")
    q = (1 << n) + 1
    while not (_is_prime(q) and _is_prime(2 * q + 1)):
        q += 1
    return 2 * q + 1, q, 4


@lru_cache(maxsize=None)
def _dlog_table(n: int) -> dict[int, int]:
    p, _, g = group_for(n)
    return {pow(g, m, p): m for m in range(1 << n)}


class PublicKeyScheme:
    kind = "abstract"

    def keylen(self, n: int) -> int:
        raise NotImplementedError

    def ciphertext_length(self, n: int) -> int:
        raise NotImplementedError

    def keygen(self, n: int, rng: np.random.Generator) -> KeyPair:
        raise NotImplementedError

    def encrypt(self, pk: int, m: int, n: int, rng: np.random.Generator) -> int:
        raise NotImplementedError

    def decrypt(self, sk: int, ct: int, n: int) -> int:
        raise NotImplementedError

    def _check_message(self, m: int, n: int) -> None:
        if not 0 <= m < 1 << n:
            raise ValueError(f"message must be an {n}-bit string")


class ElGamalScheme(PublicKeyScheme):
    kind = "reference"

    def keylen(self, n: int) -> int:
        return group_for(n)[0].bit_length()

    def ciphertext_length(self, n: int) -> int:
        return 2 * self.keylen(n)

    def keygen(self, n: int, rng: np.random.Generator) -> KeyPair:
        p, q, g = group_for(n)
        x = int(rng.integers(1, q))
        return KeyPair(pow(g, x, p), x)

    def encrypt(self, pk: int, m: int, n: int, rng: np.random.Generator) -> int:
        self._check_message(m, n)
        p, q, g = group_for(n)
        k = int(rng.integers(1, q))
        c1 = pow(g, k, p)
        c2 = pow(g, m, p) * pow(pk, k, p) % p
        return (c1 << self.keylen(n)) | c2

    def decrypt(self, sk: int, ct: int, n: int) -> int:
        p, _, _ = group_for(n)
        width = self.keylen(n)
        if not 0 <= ct < 1 << (2 * width):
            raise DecodeError("ciphertext has the wrong length")
        c1, c2 = ct >> width, ct & ((1 << width) - 1)
        if not (0 < c1 < p and 0 < c2 < p):
            raise DecodeError("ciphertext components outside the group")
        gm = c2 * pow(c1, p - 1 - sk, p) % p
        try:
            return _dlog_table(n)[gm]
        except KeyError:
            raise DecodeError("ciphertext does not decrypt to an n-bit message") from None


class IdentityScheme(PublicKeyScheme):
    """``Enc(m) = m``: keys are random padding that nobody uses."""

    kind = "identity"

    def keylen(self, n: int) -> int:
        return n

    def ciphertext_length(self, n: int) -> int:
        return n

    def keygen(self, n: int, rng: np.random.Generator) -> KeyPair:
        return KeyPair(int(rng.integers(0, 1 << n)), 0)

    def encrypt(self, pk: int, m: int, n: int, rng: np.random.Generator) -> int:
        self._check_message(m, n)
        return m

    def decrypt(self, sk: int, ct: int, n: int) -> int:
        if not 0 <= ct < 1 << n:
            raise DecodeError("ciphertext has the wrong length")
        return ct


def scheme_for(kind: str) -> PublicKeyScheme:
    if kind == "reference":
        return ElGamalScheme()
    if kind == "identity":
        return IdentityScheme()
    raise ValueError(f"unknown encryption scheme {kind!r}")


def pke_keygen(scheme: PublicKeyScheme, n: int, rng: np.random.Generator) -> KeyPair:
    return scheme.keygen(n, rng)


def pke_encrypt(
    scheme: PublicKeyScheme, pk: int, m: int, n: int, rng: np.random.Generator
) -> int:
    return scheme.encrypt(pk, m, n, rng)


def pke_decrypt(scheme: PublicKeyScheme, sk: int, ct: int, n: int) -> int:
    return scheme.decrypt(sk, ct, n)
