from .pke import DecodeError, KeyPair, PublicKeyScheme, scheme_for
from .prf import PrfInstance, prf_eval
from .sampling import sample_from_dyadic

__all__ = [
    "DecodeError",
    "KeyPair",
    "PrfInstance",
    "PublicKeyScheme",
    "prf_eval",
    "sample_from_dyadic",
    "scheme_for",
]
