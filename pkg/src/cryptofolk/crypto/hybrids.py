"""Executable multi-instance experiments and the hybrid chains between them.

Every trial draws its randomness from streams keyed by ``(seed, trial, role)``,
so an experiment and the hybrid that should coincide with it consume exactly
the same bits and can be compared byte for byte.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np

from .pke import PublicKeyScheme
from .prf import PrfInstance, prf_eval

Oracle = Callable[[int], int]

_ORACLE, _DISTINGUISHER, _KEYS, _ADVERSARY, _ENCRYPT = 1, 2, 3, 4, 5


def _stream(seed: int, trial: int, role: int, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, trial, role, index])))


def one_sided_radius(trials: int, beta: float) -> float:
    """Hoeffding radius of a mean of ``trials`` values in ``[0, 1]``."""
    return math.sqrt(math.log(2 / beta) / (2 * trials))


@dataclass(frozen=True)
class ExperimentResult:
    """Fraction of trials that output 1, plus a digest of every trial's full record."""

    mean: float
    radius: float
    trials: int
    digest: str


def _finish(outputs: list[int], records: list[bytes], beta: float) -> ExperimentResult:
    h = hashlib.sha256()
    for rec in records:
        h.update(len(rec).to_bytes(8, "big"))
        h.update(rec)
    return ExperimentResult(float(np.mean(outputs)), one_sided_radius(len(outputs), beta),
                            len(outputs), h.hexdigest())


# -- PRF family vs random functions ------------------------------------------------------


class Distinguisher(Protocol):
    def __call__(self, n: int, oracles: Sequence[Oracle], rng: np.random.Generator) -> int: ...


class _Recorder:
    def __init__(self) -> None:
        self.log: list[tuple[int, int, int]] = []

    def wrap(self, k: int, fn: Oracle) -> Oracle:
        def query(x: int) -> int:
            y = fn(x)
            self.log.append((k, x, y))
            return y
        return query

    def record(self, output: int) -> bytes:
        body = ";".join(f"{k},{x},{y}" for k, x, y in self.log)
        return f"{body}|{output}".encode()


def _prf_oracle(kind: str, n: int, rng: np.random.Generator) -> Oracle:
    inst = PrfInstance(kind, int(rng.integers(0, 1 << n)), n)
    return lambda x: prf_eval(inst, x)


def _random_oracle(n: int, rng: np.random.Generator) -> Oracle:
    table: dict[int, int] = {}

    def query(x: int) -> int:
        if not 0 <= x < 1 << n:
            raise ValueError(f"input must be an {n}-bit string")
        if x not in table:
            table[x] = int(rng.integers(0, 1 << n))
        return table[x]
    return query


def _run_prf_trial(
    kind: str, n: int, q: int, distinguisher: Distinguisher, seed: int, trial: int,
    random_prefix: int,
) -> tuple[int, bytes]:
    rec = _Recorder()
    oracles = []
    for k in range(q):
        rng = _stream(seed, trial, _ORACLE, k)
        fn = _random_oracle(n, rng) if k < random_prefix else _prf_oracle(kind, n, rng)
        oracles.append(rec.wrap(k, fn))
    out = int(distinguisher(n, oracles, _stream(seed, trial, _DISTINGUISHER)))
    return out, rec.record(out)


def prf_real_experiment(kind: str, n: int, q: int, distinguisher: Distinguisher,
                        trials: int, seed: int = 0, beta: float = 0.01) -> ExperimentResult:
    """``q`` independently keyed members of the family."""
    outs, recs = [], []
    for tr in range(trials):
        rec = _Recorder()
        oracles = [rec.wrap(k, _prf_oracle(kind, n, _stream(seed, tr, _ORACLE, k)))
                   for k in range(q)]
        out = int(distinguisher(n, oracles, _stream(seed, tr, _DISTINGUISHER)))
        outs.append(out)
        recs.append(rec.record(out))
    return _finish(outs, recs, beta)


def prf_ideal_experiment(n: int, q: int, distinguisher: Distinguisher,
                         trials: int, seed: int = 0, beta: float = 0.01) -> ExperimentResult:
    """``q`` independent truly random functions, sampled lazily."""
    outs, recs = [], []
    for tr in range(trials):
        rec = _Recorder()
        oracles = [rec.wrap(k, _random_oracle(n, _stream(seed, tr, _ORACLE, k)))
                   for k in range(q)]
        out = int(distinguisher(n, oracles, _stream(seed, tr, _DISTINGUISHER)))
        outs.append(out)
        recs.append(rec.record(out))
    return _finish(outs, recs, beta)


def prf_hybrid(kind: str, n: int, q: int, distinguisher: Distinguisher, i: int,
               trials: int, seed: int = 0, beta: float = 0.01) -> ExperimentResult:
    """Hybrid ``i`` in ``1..q+1``: oracles ``1..i-1`` truly random, the rest from the family."""
    if not 1 <= i <= q + 1:
        raise ValueError(f"hybrid index must lie in [1, {q + 1}]")
    outs, recs = [], []
    for tr in range(trials):
        out, rec = _run_prf_trial(kind, n, q, distinguisher, seed, tr, i - 1)
        outs.append(out)
        recs.append(rec)
    return _finish(outs, recs, beta)


@dataclass(frozen=True)
class AdvantageEstimate:
    advantage: float
    radius: float
    real: ExperimentResult
    ideal: ExperimentResult


def prf_multi_instance_game(kind: str, n: int, q: int, distinguisher: Distinguisher,
                            trials: int, seed: int = 0, beta: float = 0.01) -> AdvantageEstimate:
    """|P[D = 1 | family] - P[D = 1 | random]| with a radius valid at confidence ``1 - beta``."""
    if trials < 1:
        raise ValueError("need at least one trial")
    real = prf_real_experiment(kind, n, q, distinguisher, trials, seed, beta / 2)
    ideal = prf_ideal_experiment(n, q, distinguisher, trials, seed, beta / 2)
    return AdvantageEstimate(abs(real.mean - ideal.mean), real.radius + ideal.radius, real, ideal)


def ignoring_distinguisher(n: int, oracles: Sequence[Oracle], rng: np.random.Generator) -> int:
    """Outputs a coin flip without querying anything."""
    return int(rng.integers(0, 2))


def counter_distinguisher(n: int, oracles: Sequence[Oracle], rng: np.random.Generator) -> int:
    """Says 1 when every oracle maps ``x`` to ``x + 1`` on a random pair of neighbors."""
    for f in oracles:
        x = int(rng.integers(0, (1 << n) - 1))
        if (f(x + 1) - f(x)) % (1 << n) != 1:
            return 0
    return 1


# -- multi-message multi-key encryption --------------------------------------------------


class PkeAdversary(Protocol):
    def choose(self, n: int, pks: Sequence[int], count: int,
               rng: np.random.Generator) -> tuple[list[int], list[int], object]: ...

    def guess(self, ciphertexts: list[list[int]], state: object) -> int: ...


class ReadingAdversary:
    """Picks all-zero versus all-one messages and reads the first ciphertext as plaintext."""

    def choose(self, n, pks, count, rng):
        return [0] * count, [(1 << n) - 1] * count, n

    def guess(self, ciphertexts, state):
        return int(ciphertexts[0][0] == (1 << state) - 1)


class CoinAdversary:
    def choose(self, n, pks, count, rng):
        return [0] * count, [1] * count, int(rng.integers(0, 2))

    def guess(self, ciphertexts, state):
        return state


def _pke_trial(
    scheme: PublicKeyScheme, n: int, f: int, g: int, adversary: PkeAdversary,
    seed: int, trial: int, use_m1: Callable[[int, int], bool],
) -> tuple[int, bytes]:
    key_rng = _stream(seed, trial, _KEYS)
    keys = [scheme.keygen(n, key_rng) for _ in range(g)]
    m0, m1, state = adversary.choose(n, [kp.pk for kp in keys], f, _stream(seed, trial, _ADVERSARY))
    if len(m0) != f or len(m1) != f or any(not 0 <= m < 1 << n for m in (*m0, *m1)):
        raise ValueError(f"adversary must choose {f} pairs of {n}-bit messages")
    enc_rng = _stream(seed, trial, _ENCRYPT)
    matrix = []
    for jj in range(f):
        row = []
        for ii in range(g):
            msg = m1[jj] if use_m1(ii, jj) else m0[jj]
            row.append(scheme.encrypt(keys[ii].pk, msg, n, enc_rng))
        matrix.append(row)
    out = int(adversary.guess(matrix, state))
    body = (",".join(str(kp.pk) for kp in keys) + "|" + ",".join(map(str, m0)) + "|"
            + ",".join(map(str, m1)) + "|" + ";".join(",".join(map(str, r)) for r in matrix)
            + f"|{out}")
    return out, body.encode()


def ind_mult_experiment(scheme: PublicKeyScheme, n: int, f: int, g: int, adversary: PkeAdversary,
                        b: int, trials: int, seed: int = 0, beta: float = 0.01) -> ExperimentResult:
    """Every message ``m_b^j`` encrypted under every key."""
    if b not in (0, 1):
        raise ValueError("b must be 0 or 1")
    outs, recs = [], []
    for tr in range(trials):
        out, rec = _pke_trial(scheme, n, f, g, adversary, seed, tr, lambda ii, jj: b == 1)
        outs.append(out)
        recs.append(rec)
    return _finish(outs, recs, beta)


def pke_multi_hybrid_game(scheme: PublicKeyScheme, n: int, f: int, g: int,
                          adversary: PkeAdversary, hybrid: tuple[int, int], trials: int,
                          seed: int = 0, beta: float = 0.01) -> ExperimentResult:
    """Hybrid ``(i, j)``, 1-based: messages before ``j`` use ``m_0``; message ``j`` uses
    ``m_0`` under keys ``1..i-1`` and ``m_1`` from key ``i`` on; later messages use ``m_1``.

    ``(1, 1)`` is the all-``m_1`` experiment and ``(g + 1, f)`` the all-``m_0`` one.
    """
    i, j = hybrid
    if not (1 <= i <= g + 1 and 1 <= j <= f):
        raise ValueError(f"hybrid index must lie in [1, {g + 1}] x [1, {f}]")

    def use_m1(ii: int, jj: int) -> bool:
        return jj + 1 > j or (jj + 1 == j and ii + 1 >= i)

    outs, recs = [], []
    for tr in range(trials):
        out, rec = _pke_trial(scheme, n, f, g, adversary, seed, tr, use_m1)
        outs.append(out)
        recs.append(rec)
    return _finish(outs, recs, beta)
