# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled punishment-sampling kernels; semantics match ``_fallback``."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

from ..crypto.prf import KIND_CODES, ROUNDS, round_keys

cnp.import_array()

cdef int KIND_CONSTANT = KIND_CODES["constant"]
cdef int KIND_COUNTER = KIND_CODES["counter"]


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t prf_one(int kind, uint64_t* keys, int rounds, uint64_t x, uint64_t mask) nogil:
    cdef int r
    cdef uint64_t s
    if kind == KIND_CONSTANT:
        return 0
    if kind == KIND_COUNTER:
        return (x + 1) & mask
    s = x
    for r in range(rounds):
        s = mix64(s ^ keys[r])
    return (s ^ keys[rounds]) & mask


def prf_stream(int kind, seed, int nbits, x0, Py_ssize_t count):
    cdef uint64_t mask = (1ULL << nbits) - 1
    cdef uint64_t start = (<uint64_t>(x0 & 0xFFFFFFFFFFFFFFFF))
    cdef uint64_t keys[8]
    cdef int r
    cdef Py_ssize_t k
    py_keys = round_keys(seed, nbits)
    for r in range(ROUNDS + 1):
        keys[r] = <uint64_t>py_keys[r]
    out = np.empty(count, dtype=np.uint64)
    cdef uint64_t[::1] view = out
    cdef int rounds = ROUNDS
    with nogil:
        for k in range(count):
            view[k] = prf_one(kind, keys, rounds, (start + <uint64_t>k) & mask, mask)
    return out


def draw_outcomes(int kind, seed, int nbits, x0, Py_ssize_t count, cumulative):
    cdef uint64_t mask = (1ULL << nbits) - 1
    cdef uint64_t start = (<uint64_t>(x0 & 0xFFFFFFFFFFFFFFFF))
    cdef uint64_t keys[8]
    cdef int r
    cdef Py_ssize_t k, lo, hi, mid, ncum
    cdef int64_t v
    py_keys = round_keys(seed, nbits)
    for r in range(ROUNDS + 1):
        keys[r] = <uint64_t>py_keys[r]
    cum_arr = np.ascontiguousarray(cumulative, dtype=np.int64)
    cdef int64_t[::1] cum = cum_arr
    ncum = cum.shape[0]
    out = np.empty(count, dtype=np.int64)
    cdef int64_t[::1] view = out
    cdef int rounds = ROUNDS
    with nogil:
        for k in range(count):
            v = <int64_t>prf_one(kind, keys, rounds, (start + <uint64_t>k) & mask, mask)
            # first index with cum[idx] > v
            lo = 0
            hi = ncum
            while lo < hi:
                mid = (lo + hi) >> 1
                if cum[mid] > v:
                    hi = mid
                else:
                    lo = mid + 1
            view[k] = lo
    return out
