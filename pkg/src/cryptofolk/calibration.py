"""Finite play sequences, discount calibration and exact discounted payoffs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .equilibrium import JointDistribution
from .game import Profile, StageGame


def _e_lower_bound(terms: int = 14) -> Fraction:
    return sum((Fraction(1, math.factorial(k)) for k in range(terms)), Fraction(0))


# Partial sums of sum(1/k!) undershoot e, so the reciprocal overshoots 1/e.
INV_E_UPPER = 1 / _e_lower_bound()


class EmptySequenceError(ValueError):
    pass


def ceil_int(x: Fraction | int) -> int:
    return -((-Fraction(x).numerator) // Fraction(x).denominator)


@dataclass(frozen=True)
class PlaySequence:
    profiles: tuple[Profile, ...]
    averages: tuple[Fraction, ...]

    def __len__(self) -> int:
        return len(self.profiles)


def sequence_length(r: Fraction | int, q_n: int, n: int, c: int) -> int:
    """``w(n) = ((a-b) q(n) + 1) n^c``, rounded up when ``a - b`` is fractional."""
    return ceil_int((Fraction(r) * q_n + 1) * n**c)


def discount_denominator(r: Fraction | int, w: int, q_n: int) -> int:
    """``f(n) = (a-b) w(n) q(n)``: any ``delta <= 1/f`` loses at most ``1/q`` to discounting."""
    return ceil_int(Fraction(r) * w * q_n)


def sequence_averages(g: StageGame, profiles: Sequence[Profile]) -> tuple[Fraction, ...]:
    if not profiles:
        raise EmptySequenceError("empty sequence")
    totals = [Fraction(0)] * g.num_players
    for a in profiles:
        for i, u in enumerate(g.utility(a)):
            totals[i] += u
    return tuple(t / len(profiles) for t in totals)


def build_sequence(g: StageGame, sigma: JointDistribution, w: int) -> PlaySequence:
    """Each profile ``a`` repeated ``floor(w * sigma(a))`` times, profiles in lexicographic order."""
    profiles: list[Profile] = []
    for a, p in sigma.probs.items():  # JointDistribution keeps its support sorted
        profiles.extend([a] * int(w * p))
    if not profiles:
        raise EmptySequenceError(f"w={w} is too small: every floor(w*sigma(a)) is 0")
    return PlaySequence(tuple(profiles), sequence_averages(g, profiles))


def _check_delta(delta: Fraction) -> Fraction:
    delta = Fraction(delta)
    if not 0 < delta < 1:
        raise ValueError("discount parameter delta must lie in (0, 1)")
    return delta


def discounted_sum(values: Sequence[int | Fraction], x: Fraction) -> Fraction:
    """Exact ``sum_t values[t] * x**t`` by binary splitting (fast for long integer runs)."""
    if hasattr(values, "tolist"):
        values = values.tolist()
    if len(values) == 0:
        return Fraction(0)
    x = Fraction(x)
    if all(type(v) is int for v in values):
        den, ints = 1, values
    else:
        den = math.lcm(*(Fraction(v).denominator for v in values))
        ints = [int(Fraction(v) * den) for v in values]
    p, q = x.numerator, x.denominator

    # N(lo, hi) = sum_{t in [lo,hi)} v_t p^(t-lo) q^(hi-1-t); returns (N, p^len, q^len).
    def rec(lo: int, hi: int) -> tuple[int, int, int]:
        if hi - lo == 1:
            return ints[lo], p, q
        if hi - lo <= 32:
            acc = 0
            for t in range(lo, hi):
                acc = acc * q + ints[t] * p ** (t - lo)
            return acc, p ** (hi - lo), q ** (hi - lo)
        mid = (lo + hi) // 2
        n1, p1, q1 = rec(lo, mid)
        n2, p2, q2 = rec(mid, hi)
        return n1 * q2 + p1 * n2, p1 * p2, q1 * q2

    num, _, qpow = rec(0, len(ints))
    return Fraction(num * q, qpow * den)


def discounted_payoff_eventually_periodic(
    prefix: Sequence[Profile], cycle: Sequence[Profile], delta: Fraction, g: StageGame
) -> tuple[Fraction, ...]:
    """Normalized discounted payoff of ``prefix`` followed by ``cycle`` repeated forever."""
    delta = _check_delta(delta)
    if not cycle:
        raise ValueError("cycle must be nonempty")
    x = 1 - delta
    head = x ** len(prefix)
    loop = 1 - x ** len(cycle)
    out = []
    for i in range(g.num_players):
        pre = discounted_sum([g.utility_of(i, a) for a in prefix], x)
        cyc = discounted_sum([g.utility_of(i, a) for a in cycle], x)
        out.append(delta * (pre + head * cyc / loop))
    return tuple(out)


def truncated_payoff(
    profiles: Sequence[Profile], delta: Fraction, g: StageGame
) -> tuple[Fraction, ...]:
    """Normalized discounted payoff of a finite play (rounds beyond it earn nothing)."""
    delta = _check_delta(delta)
    x = 1 - delta
    return tuple(
        delta * discounted_sum([g.utility_of(i, a) for a in profiles], x)
        for i in range(g.num_players)
    )


def truncation_horizon(g: StageGame, delta: Fraction) -> tuple[int, Fraction]:
    """``(ceil(n/delta), bound)`` where ``bound`` caps the payoff lost by stopping there.

    The tail after ``T`` rounds is ``(1-delta)^T`` times a payoff in ``[b, a]``
    and ``(1-delta)^T <= e^-n``; ``1/e`` is replaced by a rational upper bound.
    When ``b < -a`` the tail can be negative and larger in size than
    ``a e^-n``, so the bound uses ``max(a, -b)``.
    """
    delta = _check_delta(delta)
    n = g.size
    horizon = ceil_int(Fraction(n) / delta)
    return horizon, tail_bound(g, delta, horizon)


def tail_bound(g: StageGame, delta: Fraction, horizon: int) -> Fraction:
    """Sound cap on ``|p_i - truncated p_i|`` after ``horizon`` rounds."""
    scale = max(g.max_payoff, -g.min_payoff, Fraction(0))
    return scale * INV_E_UPPER ** int(Fraction(delta) * horizon)


@dataclass(frozen=True)
class CalibrationParams:
    variant: str
    n: int
    q_n: int
    a: Fraction
    b: Fraction
    phase2_length: int
    w: int
    f_prime: int
    f: int
    punish_length: int | None = None

    @property
    def r(self) -> Fraction:
        return self.a - self.b

    @property
    def delta(self) -> Fraction:
        return Fraction(1, self.f)

    @property
    def horizon(self) -> int:
        return ceil_int(Fraction(self.n) / self.delta)

    @property
    def epsilon(self) -> Fraction:
        return Fraction(1, self.q_n)


def calibrate_ne(g: StageGame, q_n: int, phase2_length: int) -> CalibrationParams:
    """Parameters of the stationary-punishment strategy.

    ``w = (3 r n q + 1) n^c``, ``f' = 3 r w q`` and ``f = max(3 q (m a + 1), f')``,
    each rounded up when the normalized payoffs are fractional.
    """
    n, c = g.size, g.num_players
    a, b = g.max_payoff, g.min_payoff
    r = a - b
    w = ceil_int((3 * r * n * q_n + 1) * n**c)
    f_prime = ceil_int(3 * r * w * q_n)
    f = max(ceil_int(3 * q_n * (phase2_length * a + 1)), f_prime)
    return CalibrationParams("NE", n, q_n, a, b, phase2_length, w, f_prime, f)


def calibrate_sp(g: StageGame, q_n: int, phase2_length: int) -> CalibrationParams:
    """Parameters of the bounded-punishment strategy.

    ``w = 4 (r n q + 1) n^c``, ``f' = 4 r w q``, ``l = n q (m a + 1)`` and
    ``f = max(3 r q (l + m), f')``.
    """
    n, c = g.size, g.num_players
    a, b = g.max_payoff, g.min_payoff
    r = a - b
    m = phase2_length
    w = ceil_int(4 * (r * n * q_n + 1) * n**c)
    f_prime = ceil_int(4 * r * w * q_n)
    ell = ceil_int(n * q_n * (m * a + 1))
    f = max(ceil_int(3 * r * q_n * (ell + m)), f_prime)
    return CalibrationParams("SP", n, q_n, a, b, m, w, f_prime, f, ell)
