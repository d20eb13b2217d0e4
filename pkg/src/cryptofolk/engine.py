"""Deterministic repeated-game simulation, exact discounted payoffs and gain estimates."""

from __future__ import annotations

import math
import sys
from contextlib import contextmanager
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .bundle import StrategyBundle
from .calibration import discounted_sum, tail_bound
from .machines import HonestMachine, Machine, PhaseState, StepContext, advance, block_end

TRANSCRIPT_TAG = "transcript v1"
REPORT_GRID = 10**9


@contextmanager
def long_integers():
    """Exact payoffs have denominators far beyond the default int/str conversion limit."""
    old = sys.get_int_max_str_digits()
    sys.set_int_max_str_digits(0)
    try:
        yield
    finally:
        sys.set_int_max_str_digits(old)


def exact_str(x: Fraction) -> str:
    with long_integers():
        return f"{x.numerator}/{x.denominator}"


def rounded_up(x: Fraction, grid: int = REPORT_GRID) -> Fraction:
    return Fraction(-((-x.numerator * grid) // x.denominator), grid)


@dataclass
class Transcript:
    """Rounds ``start .. start + len(actions) - 1`` of one match.

    Payoffs are normalized discounted sums counted from ``start``, so a
    resumed match reports the continuation payoff.
    """

    bundle: StrategyBundle
    start: int
    actions: np.ndarray
    phases: np.ndarray
    flags: np.ndarray
    seed: int
    snapshots: dict[int, tuple[bytes, ...]] = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return len(self.actions)

    @property
    def seed_independent(self) -> bool:
        """No punishment round was played, so no machine touched its randomness."""
        return bool((self.phases == 1).all())

    @cached_property
    def flat_profiles(self) -> np.ndarray:
        # integer matmul has no BLAS path; a column sum is several times faster
        flat = np.zeros(len(self.actions), dtype=np.int64)
        for k, stride in enumerate(self.bundle.strides.tolist()):
            flat += self.actions[:, k] * stride
        return flat

    @cached_property
    def scaled_utilities(self) -> np.ndarray:
        """Per-round utilities times the game's common denominator, ``[round, player]``."""
        return self.bundle.scaled_utilities[self.flat_profiles]

    def scaled_column(self, i: int) -> np.ndarray:
        if "scaled_utilities" in self.__dict__:
            return self.scaled_utilities[:, i]
        return self.bundle.scaled_utilities[self.flat_profiles, i]

    def utilities(self, k: int) -> tuple[Fraction, ...]:
        d = self.bundle.denominator
        return tuple(Fraction(int(u), d) for u in self.scaled_utilities[k])

    @cached_property
    def payoffs(self) -> tuple[Fraction, ...]:
        b = self.bundle
        x = 1 - b.delta
        scale = b.delta / b.denominator
        return tuple(
            scale * discounted_sum(self.scaled_utilities[:, i], x) for i in range(b.num_players)
        )

    @cached_property
    def truncation_bound(self) -> Fraction:
        return tail_bound(self.bundle.game, self.bundle.delta, self.horizon)

    def to_text(self) -> str:
        b = self.bundle
        lines = [
            TRANSCRIPT_TAG,
            f"variant {b.variant}",
            f"players {b.num_players}",
            f"delta {b.delta.numerator}/{b.delta.denominator}",
            f"m {b.m}",
            f"ell {'inf' if b.ell is None else b.ell}",
            f"start {self.start}",
            f"horizon {self.horizon}",
            f"seed {self.seed}",
        ]
        d = b.denominator
        fmt = (lambda u: str(u // d)) if d == 1 else (lambda u: _fmt(Fraction(u, d)))
        for k in range(self.horizon):
            acts = " ".join(map(str, self.actions[k].tolist()))
            utils = " ".join(fmt(int(u)) for u in self.scaled_utilities[k])
            tail = " flagged" if self.flags[k] else ""
            lines.append(
                f"round {self.start + k} phase {int(self.phases[k])} actions {acts} utils {utils}{tail}"
            )
        for i, p in enumerate(self.payoffs):
            lines.append(f"payoff {i} {exact_str(p)}")
        lines.append(f"truncation_bound {exact_str(self.truncation_bound)}")
        return "\n".join(lines) + "\n"


def _fmt(u: Fraction) -> str:
    return str(u.numerator) if u.denominator == 1 else f"{u.numerator}/{u.denominator}"


@dataclass(frozen=True)
class ParsedTranscript:
    start: int
    actions: np.ndarray
    phases: np.ndarray
    utilities: list[tuple[Fraction, ...]]
    payoffs: tuple[Fraction, ...]
    truncation_bound: Fraction
    delta: Fraction


def parse_transcript(text: str) -> ParsedTranscript:
    """Read back the text form (used to audit payoffs independently of the engine)."""
    with long_integers():
        return _parse_transcript(text)


def _parse_transcript(text: str) -> ParsedTranscript:
    rows = text.splitlines()
    if not rows or rows[0] != TRANSCRIPT_TAG:
        raise ValueError("not a transcript")
    header: dict[str, str] = {}
    actions, phases, utils, payoffs = [], [], [], []
    bound = None
    for line in rows[1:]:
        toks = line.split()
        if toks[0] == "round":
            ai, ui = toks.index("actions"), toks.index("utils")
            phases.append(int(toks[3]))
            actions.append([int(x) for x in toks[ai + 1:ui]])
            utils.append(tuple(Fraction(x) for x in toks[ui + 1:] if x != "flagged"))
        elif toks[0] == "payoff":
            payoffs.append(Fraction(toks[2]))
        elif toks[0] == "truncation_bound":
            bound = Fraction(toks[1])
        else:
            header[toks[0]] = toks[1]
    return ParsedTranscript(
        int(header["start"]), np.array(actions, dtype=np.int64), np.array(phases),
        utils, tuple(payoffs), bound, Fraction(header["delta"]),
    )


def _any_rows(mask: np.ndarray) -> np.ndarray:
    # column-wise OR beats ``mask.any(axis=1)`` on tall, narrow arrays
    out = mask[:, 0].copy()
    for k in range(1, mask.shape[1]):
        out |= mask[:, k]
    return out


def honest_machines(bundle: StrategyBundle, oracle: str = "deployed") -> list[HonestMachine]:
    return [HonestMachine(bundle, i, oracle) for i in range(bundle.num_players)]


def _segment_limit(state: PhaseState, t: int, bundle: StrategyBundle) -> float:
    if state.punished is None:
        return float("inf")
    k = t - state.start
    if k <= bundle.keylen:
        stop = state.start + bundle.keylen
    elif k <= bundle.m:
        stop = state.start + bundle.m
    else:
        stop = block_end(state, bundle.m, bundle.ell)
    return stop - t + 1


def _play(
    bundle: StrategyBundle,
    machines: Sequence[Machine],
    horizon: int | None,
    seed: int,
    history: np.ndarray | None,
    memories: Sequence[bytes | None] | None,
    white_box: bool,
    snapshot_rounds: Iterable[int],
    interventions: Iterable[tuple[int, int, bytes]],
) -> Transcript:
    c = bundle.num_players
    if len(machines) != c or any(m.player != i for i, m in enumerate(machines)):
        raise ValueError("need exactly one machine per player, in player order")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    horizon = bundle.params.horizon if horizon is None else int(horizon)
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    init = np.zeros((0, c), dtype=np.int64) if history is None else np.asarray(history, dtype=np.int64).reshape(-1, c)
    if ((init < 0) | (init >= np.array(bundle.game.actions))).any():
        raise ValueError("initial history contains an action outside its player's action set")
    start = len(init)
    end = start + horizon
    hist = np.empty((end, c), dtype=np.int64)
    hist[:start] = init
    phases = np.ones(horizon, dtype=np.int8)
    flags = np.zeros(horizon, dtype=bool)
    for i, m in enumerate(machines):
        m.reset(None if memories is None else memories[i])

    planned = list(interventions)
    for m in machines:
        planned.extend(getattr(m, "interventions", ()))
    tampers: dict[int, list[tuple[int, bytes]]] = {}
    for rnd, target, data in planned:
        tampers.setdefault(int(rnd), []).append((int(target), bytes(data)))
    snaps = {int(t) for t in snapshot_rounds if start <= t < end}
    sync = sorted(snaps | {t for t in tampers if start <= t < end})
    snapshots: dict[int, tuple[bytes, ...]] = {}
    peek = (lambda i: machines[i].memory()) if white_box else None
    upper = np.array(bundle.game.actions, dtype=np.int64)
    period = len(bundle.sequence)

    state = advance(PhaseState(), 0, init, bundle)
    t, si = start, 0
    while t < end:
        for target, data in tampers.get(t, ()):
            machines[target].reset(data)
        if t in snaps:
            snapshots[t] = tuple(m.memory() for m in machines)
        while si < len(sync) and sync[si] <= t:
            si += 1
        limit = min(_segment_limit(state, t, bundle), end - t)
        if si < len(sync):
            limit = min(limit, sync[si] - t)
        limit = int(limit)
        ctx = StepContext(bundle, t, state, hist[:t], seed, peek)
        plans = [np.asarray(m.plan(ctx, limit), dtype=np.int64).reshape(-1)[:limit] for m in machines]
        seg_flag = any(m.flagged for m in machines)
        size = min(len(p) for p in plans)
        if size == 0:
            plans = [p if len(p) else np.full(1, -1, dtype=np.int64) for p in plans]
            size = 1
        block = hist[t:t + size]
        for i, p in enumerate(plans):
            block[:, i] = p[:size]
        lo = t - start
        phases[lo:lo + size] = state.label(t, bundle.m)
        if seg_flag:
            flags[lo:lo + size] = True
        if state.punished is None:
            # rows that match sq are valid, so only a deviating row needs checking
            diff = block != bundle.seq_window(state.offset, size)
            hits = np.flatnonzero(_any_rows(diff))
            if hits.size:
                size = int(hits[0]) + 1
                row = block[size - 1]
                bad = (row < 0) | (row >= upper)
                if bad.any():
                    row[bad] = 0
                    flags[lo + size - 1] = True
                    diff = row != bundle.seq_window(state.offset + size - 1, 1)[0]
                    moved = np.flatnonzero(diff)
                else:
                    moved = np.flatnonzero(diff[size - 1])
                if moved.size:
                    state = PhaseState((state.offset + size - 1) % period, int(moved[0]), t + size - 1)
                else:
                    state = PhaseState((state.offset + size) % period)
            else:
                state = PhaseState((state.offset + size) % period)
        else:
            if (block.min(axis=0) < 0).any() or (block.max(axis=0) >= upper).any():
                bad = (block < 0) | (block >= upper)
                block[bad] = 0
                flags[lo:lo + size] |= _any_rows(bad)
            state = advance(state, t, block, bundle)
        t += size
    return Transcript(bundle, start, hist[start:], phases, flags, seed, snapshots)


def run_match(
    bundle: StrategyBundle,
    machines: Sequence[Machine] | None = None,
    horizon: int | None = None,
    seed: int = 0,
    *,
    white_box: bool = False,
    snapshot_rounds: Iterable[int] = (),
    interventions: Iterable[tuple[int, int, bytes]] = (),
) -> Transcript:
    """Play from the empty history; ``horizon`` defaults to ``ceil(n / delta)``."""
    machines = honest_machines(bundle) if machines is None else machines
    return _play(bundle, machines, horizon, seed, None, None, white_box,
                 snapshot_rounds, interventions)


def resume_match(
    bundle: StrategyBundle,
    machines: Sequence[Machine] | None,
    history,
    memories: Sequence[bytes | None] | None,
    horizon: int | None = None,
    seed: int = 0,
    *,
    white_box: bool = False,
    snapshot_rounds: Iterable[int] = (),
    interventions: Iterable[tuple[int, int, bytes]] = (),
) -> Transcript:
    """Continue from ``history`` with each machine's memory set to ``memories[i]``."""
    machines = honest_machines(bundle) if machines is None else machines
    return _play(bundle, machines, horizon, seed, history, memories, white_box,
                 snapshot_rounds, interventions)


# -- gain measurement -------------------------------------------------------------------


def hoeffding_radius(payoff_range: Fraction | float, beta: float, runs: int) -> float:
    return math.sqrt(float(payoff_range) ** 2 * math.log(2 / beta) / (2 * runs))


def run_seed(seed: int, r: int) -> int:
    """Seed of the ``r``-th paired run."""
    return int(np.random.SeedSequence([seed, r]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class GainEstimate:
    spec: str
    player: int
    runs: int
    gain: Fraction
    radius: float
    epsilon: Fraction

    @property
    def bound(self) -> float:
        return float(self.epsilon) + self.radius

    @property
    def passed(self) -> bool:
        return float(self.gain) <= self.bound

    def row(self) -> str:
        """``spec player gain radius bound verdict``; the gain is rounded up to a 1e-9 grid."""
        g = rounded_up(self.gain)
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{self.spec} {self.player} {g.numerator}/{g.denominator} "
                f"{self.radius:.9f} {self.bound:.9f} {verdict}")


def measure_gain(
    bundle: StrategyBundle,
    spec: str,
    player: int,
    runs: int = 100,
    beta: float = 0.01,
    seed: int = 0,
    *,
    horizon: int | None = None,
    history=None,
    memories: Sequence[bytes | None] | None = None,
    white_box: bool = False,
) -> GainEstimate:
    """Mean discounted payoff of ``player`` under ``spec`` minus the all-honest mean.

    Run ``r`` of both arms uses the same derived seed; the mean difference
    is exact.  The radius is Hoeffding's at confidence ``1 - beta``.
    """
    from .adversaries import build_adversary

    if runs < 1:
        raise ValueError("need at least one run")
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    total = None
    cached_base = None
    base_column = None
    for r in range(runs):
        s = run_seed(seed, r)
        machines = honest_machines(bundle)
        machines[player] = build_adversary(spec, bundle, player, white_box=white_box)
        dev = _play(bundle, machines, horizon, s, history, memories, white_box, (), ())
        if cached_base is None:
            base = _play(bundle, honest_machines(bundle), horizon, s, history, memories,
                         white_box, (), ())
            base_column = base.scaled_column(player)
            if base.seed_independent:
                cached_base = base
        diff = dev.scaled_column(player) - base_column
        total = diff if total is None else total + diff
    x = 1 - bundle.delta
    gain = bundle.delta * discounted_sum(total, x) / (bundle.denominator * runs)
    radius = hoeffding_radius(bundle.params.r, beta, runs)
    return GainEstimate(spec, player, runs, gain, radius, bundle.epsilon)
