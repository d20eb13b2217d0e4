"""Honest stateful strategy machines and phase arithmetic over public histories.

A machine plans a run of actions starting at the current round; the engine
plays a prefix of that plan (at least one round) and asks again.  Honest
machines derive phase and sequence offset from the public history and keep
only secrets (their secret key and the punishment seed) in memory.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from typing import Callable, Protocol, Sequence

import numpy as np

from . import _kernels
from .bundle import StrategyBundle
from .channel import decode_bits, encode_bits
from .crypto.pke import DecodeError, scheme_for
from .crypto.prf import bits_to_int, int_to_bits

PURPOSES = {"keygen": 1, "seed": 2, "encrypt": 3, "oracle-seed": 4, "oracle-function": 5}
ORACLES = ("deployed", "H1", "H2", "H3")


def derive_rng(master: int, *path: int) -> np.random.Generator:
    """Independent stream for ``(master seed, path...)``; all entries must be non-negative."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([master, *path])))


# -- memory ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MachineMemory:
    """What a machine carries between rounds.

    ``block`` is the deviation round that opened the punishment block the
    secrets belong to.  Phase, offset and punished player are bookkeeping
    only: honest machines recompute them from the history.
    """

    variant: str = "NE"
    phase: int = 1
    offset: int = 0
    punished: int | None = None
    block: int | None = None
    sk: int | None = None
    pk: int | None = None
    seed: int | None = None
    inbox: str | None = None
    coherent: bool = True

    _INT_FIELDS = ("phase", "offset")
    _OPT_INT_FIELDS = ("punished", "block", "sk", "pk", "seed")

    def to_bytes(self) -> bytes:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":")).encode()

    @classmethod
    def incoherent(cls) -> "MachineMemory":
        return cls(coherent=False)

    @classmethod
    def from_bytes(cls, data: bytes | None) -> "MachineMemory":
        """Total decoder: anything unreadable becomes the incoherent marker."""
        if data is None or len(data) == 0:
            return cls()
        try:
            raw = json.loads(data)
            if not isinstance(raw, dict) or set(raw) != set(cls.__dataclass_fields__):
                return cls.incoherent()
            for name in cls._INT_FIELDS:
                if type(raw[name]) is not int:
                    return cls.incoherent()
            for name in cls._OPT_INT_FIELDS:
                if raw[name] is not None and (type(raw[name]) is not int or raw[name] < 0):
                    return cls.incoherent()
            if raw["variant"] not in ("NE", "SP") or type(raw["coherent"]) is not bool:
                return cls.incoherent()
            if raw["inbox"] is not None and not (
                isinstance(raw["inbox"], str) and set(raw["inbox"]) <= {"0", "1"}
            ):
                return cls.incoherent()
            return cls(**raw)
        except (ValueError, TypeError, RecursionError):
            return cls.incoherent()

    def stripped(self) -> "MachineMemory":
        """Same bookkeeping with every secret removed."""
        return replace(self, sk=None, pk=None, seed=None, inbox=None)

    def secrets_for(self, block: int) -> "MachineMemory | None":
        return self if self.coherent and self.block == block else None


# -- phases ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PhaseState:
    """Public state at some round.

    ``offset`` is the ``sq`` index the next phase-1 round plays; while
    punishing it is the resume offset.  ``start`` is the deviation round.
    """

    offset: int = 0
    punished: int | None = None
    start: int | None = None

    @property
    def punishing(self) -> bool:
        return self.punished is not None

    def label(self, t: int, m: int) -> int:
        if self.punished is None:
            return 1
        return 2 if t - self.start <= m else 3


@dataclass(frozen=True)
class PhaseInfo:
    phase: int
    offset: int
    punished: int | None


def block_end(state: PhaseState, m: int, ell: int | None) -> float:
    """Last round of the current punishment block (inclusive)."""
    return float("inf") if ell is None else state.start + m + ell


def advance(
    state: PhaseState, t: int, block: np.ndarray, bundle: StrategyBundle
) -> PhaseState:
    """State at round ``t + len(block)`` after the rows of ``block`` are played from ``t``."""
    period = len(bundle.sequence)
    m, ell = bundle.m, bundle.ell
    i, total = 0, len(block)
    while i < total:
        if state.punished is None:
            expected = bundle.seq_window(state.offset, total - i)
            diff = block[i:] != expected
            rows = np.flatnonzero(diff.any(axis=1))
            if rows.size == 0:
                return PhaseState((state.offset + total - i) % period)
            d = int(rows[0])
            deviator = int(np.flatnonzero(diff[d])[0])
            state = PhaseState((state.offset + d) % period, deviator, t + i + d)
            i += d + 1
        else:
            end = block_end(state, m, ell)
            if t + total - 1 < end:
                return state
            i = int(end) - t + 1
            state = PhaseState(state.offset)
    return state


def scan_history(history: np.ndarray | Sequence[Sequence[int]], bundle: StrategyBundle) -> PhaseState:
    arr = np.asarray(history, dtype=np.int64).reshape(-1, bundle.num_players)
    return advance(PhaseState(), 0, arr, bundle)


def phase_of(history, bundle: StrategyBundle) -> PhaseInfo:
    """Phase of the next round, its offset, and whom the current block punishes.

    The offset is the ``sq`` index in phase 1 and the number of rounds since
    the deviation in phases 2 and 3.
    """
    arr = np.asarray(history, dtype=np.int64).reshape(-1, bundle.num_players)
    state = advance(PhaseState(), 0, arr, bundle)
    t = len(arr)
    if state.punished is None:
        return PhaseInfo(1, state.offset, None)
    return PhaseInfo(state.label(t, bundle.m), t - state.start, state.punished)


# -- machine interface ----------------------------------------------------------------


@dataclass
class StepContext:
    """What the engine shows every machine before it plans from round ``t``."""

    bundle: StrategyBundle
    t: int
    state: PhaseState
    history: np.ndarray
    seed: int
    peek: Callable[[int], bytes] | None = None

    @property
    def since(self) -> int:
        """Rounds since the deviation that opened the current block."""
        return self.t - self.state.start

    @property
    def phase(self) -> int:
        return self.state.label(self.t, self.bundle.m)


class Machine(Protocol):
    player: int

    def reset(self, memory: bytes | None) -> None: ...

    def plan(self, ctx: StepContext, limit: int) -> np.ndarray: ...

    def memory(self) -> bytes: ...

    @property
    def flagged(self) -> bool: ...


def _const(action: int, length: int) -> np.ndarray:
    return np.full(length, action, dtype=np.int64)


def read_bits(ctx: StepContext, player: int, first: int, count: int) -> str:
    """Bits broadcast by ``player`` in rounds ``first .. first+count-1``."""
    return decode_bits(ctx.bundle.split, player, ctx.history[first:first + count, player])


def read_public_key(ctx: StepContext, player: int) -> int:
    return bits_to_int(read_bits(ctx, player, ctx.state.start + 1, ctx.bundle.keylen))


def read_ciphertext(ctx: StepContext, recipient: int) -> int:
    sched = ctx.bundle.schedule(ctx.state.punished)
    slot = sched.slot(recipient)
    return bits_to_int(read_bits(ctx, sched.sender, ctx.state.start + 1 + slot.start, len(slot)))


def _tiled(one: np.ndarray, count: int) -> np.ndarray:
    return np.tile(one, -(-count // len(one)))[:count]


def phase3_actions(
    bundle: StrategyBundle, j: int, seed: int, x0: int, count: int, player: int,
    prf_code: int | None = None,
) -> np.ndarray:
    """Actions of ``player`` over ``count`` phase-3 rounds starting at PRF input ``x0``."""
    period = 1 << bundle.n
    idx = phase3_outcomes(bundle, j, seed, x0, min(count, period), prf_code)
    acts = bundle.table_actions[j][idx, player]
    return acts if count <= period else _tiled(acts, count)


def phase3_outcomes(
    bundle: StrategyBundle, j: int, seed: int, x0: int, count: int, prf_code: int | None = None
) -> np.ndarray:
    code = bundle.prf_code if prf_code is None else prf_code
    period = 1 << bundle.n
    # inputs wrap mod 2**n, so one period determines the whole stream
    one = _kernels.draw_outcomes(code, seed, bundle.n, x0, min(count, period),
                                 bundle.table_cumulative[j])
    return one if count <= period else _tiled(one, count)


class HonestMachine:
    """The prescribed strategy for one player, in either variant.

    ``oracle`` selects the punishment experiment: ``deployed``/``H3`` is the
    real protocol, ``H2`` replaces the transmitted seed by a shared random
    seed (the ciphertexts then carry zeros), ``H1`` additionally replaces the
    PRF by a shared truly random function.
    """

    def __init__(self, bundle: StrategyBundle, player: int, oracle: str = "deployed"):
        if oracle not in ORACLES:
            raise ValueError(f"unknown oracle configuration {oracle!r}")
        self.bundle = bundle
        self.player = player
        self.oracle = oracle
        self.scheme = scheme_for(bundle.pke)
        self._mem = MachineMemory(variant=bundle.variant)
        self._flag = False

    # -- memory --
    def reset(self, memory: bytes | None) -> None:
        self._mem = MachineMemory.from_bytes(memory) if memory is not None else MachineMemory(
            variant=self.bundle.variant)

    def memory(self) -> bytes:
        return self._mem.to_bytes()

    @property
    def flagged(self) -> bool:
        return self._flag

    def _note(self, ctx: StepContext) -> None:
        st = ctx.state
        mem = self._mem if self._mem.coherent else MachineMemory(variant=self.bundle.variant)
        phase = ctx.phase
        if (mem.phase, mem.offset, mem.punished) != (phase, st.offset, st.punished) or mem is not self._mem:
            mem = replace(mem, phase=phase, offset=st.offset, punished=st.punished)
        self._mem = mem

    # -- planning --
    def plan(self, ctx: StepContext, limit: int) -> np.ndarray:
        self._flag = False
        st = ctx.state
        if st.punished is None:
            self._note(ctx)
            return ctx.bundle.seq_window(st.offset, limit)[:, self.player]
        if st.punished == self.player:
            self._note(ctx)
            return _const(punished_reply(ctx), limit)
        k = ctx.since
        b = ctx.bundle
        if k <= b.m:
            out = self._phase2(ctx, k, limit)
        else:
            out = self._phase3(ctx, k, limit)
        self._note(ctx)
        return out

    def _fresh_secrets(self, ctx: StepContext) -> MachineMemory:
        t0, i = ctx.state.start, self.player
        keys = self.scheme.keygen(ctx.bundle.n, derive_rng(ctx.seed, i, t0, PURPOSES["keygen"]))
        seed = None
        if i == ctx.bundle.schedule(ctx.state.punished).sender:
            seed = int(derive_rng(ctx.seed, i, t0, PURPOSES["seed"]).integers(0, 1 << ctx.bundle.n))
        return MachineMemory(variant=ctx.bundle.variant, block=t0, sk=keys.sk, pk=keys.pk, seed=seed)

    def _secrets(self, ctx: StepContext, k: int) -> MachineMemory | None:
        """Secrets for the current block, creating them on its first round."""
        t0 = ctx.state.start
        have = self._mem.secrets_for(t0)
        if have is not None and have.pk is not None:
            return have
        if k == 1:
            self._mem = self._fresh_secrets(ctx)
            return self._mem
        if ctx.bundle.variant == "NE":
            # Our own randomness is replayable even when memory is not.
            self._flag = True
            self._mem = self._fresh_secrets(ctx)
            return self._mem
        return None

    def _fallback(self, ctx: StepContext, limit: int) -> np.ndarray:
        self._flag = True
        return _const(ctx.bundle.default_action(self.player), limit)

    def _phase2(self, ctx: StepContext, k: int, limit: int) -> np.ndarray:
        b, i = ctx.bundle, self.player
        sec = self._secrets(ctx, k)
        if sec is None:
            return self._fallback(ctx, limit)
        if k <= b.keylen:
            bits = int_to_bits(sec.pk % (1 << b.keylen), b.keylen)[k - 1:]
            return np.array(encode_bits(b.split, i, bits[:limit]), dtype=np.int64)
        sched = b.schedule(ctx.state.punished)
        off = k - 1
        if i != sched.sender:
            return _const(b.split.zero_action(i), min(limit, b.m - off))
        if sec.seed is None or sec.seed >= 1 << b.n:
            return self._fallback(ctx, limit)
        bits = []
        for r in sched.recipients:
            pk = read_public_key(ctx, r)
            msg = 0 if self.oracle == "H2" or self.oracle == "H1" else sec.seed
            rng = derive_rng(ctx.seed, i, ctx.state.start, PURPOSES["encrypt"], r)
            ct = self.scheme.encrypt(pk, msg, b.n, rng)
            bits.append(int_to_bits(ct % (1 << b.z), b.z))
        stream = "".join(bits)[off - b.keylen:]
        return np.array(encode_bits(b.split, i, stream[:limit]), dtype=np.int64)

    def _seed(self, ctx: StepContext) -> int | None:
        t0 = ctx.state.start
        if self.oracle in ("H1", "H2"):
            return int(derive_rng(ctx.seed, t0, PURPOSES["oracle-seed"]).integers(0, 1 << ctx.bundle.n))
        have = self._mem.secrets_for(t0)
        if have is not None and have.seed is not None:
            return have.seed if have.seed < 1 << ctx.bundle.n else None
        sec = self._secrets(ctx, ctx.since) if ctx.bundle.variant == "NE" else have
        if sec is None or sec.sk is None:
            return None
        if sec.seed is not None:
            return sec.seed if sec.seed < 1 << ctx.bundle.n else None
        ct = read_ciphertext(ctx, self.player)
        try:
            seed = self.scheme.decrypt(sec.sk, ct, ctx.bundle.n)
        except DecodeError:
            return None
        self._mem = replace(sec, seed=seed, inbox=int_to_bits(ct, ctx.bundle.z))
        return seed

    def _phase3(self, ctx: StepContext, k: int, limit: int) -> np.ndarray:
        b, j = ctx.bundle, ctx.state.punished
        x0 = k - b.m - 1
        if self.oracle == "H1":
            table = oracle_function(ctx.seed, ctx.state.start, b.n)
            vals = table[(x0 + np.arange(limit)) % (1 << b.n)]
            idx = np.searchsorted(b.table_cumulative[j], vals, side="right")
            return b.table_actions[j][idx, self.player]
        seed = self._seed(ctx)
        if seed is None:
            return self._fallback(ctx, limit)
        return phase3_actions(b, j, seed, x0, limit, self.player)


def oracle_function(master: int, block: int, n: int) -> np.ndarray:
    """A uniformly random function on ``n``-bit inputs shared by all punishers of a block."""
    rng = derive_rng(master, block, PURPOSES["oracle-function"])
    return rng.integers(0, 1 << n, size=1 << n, dtype=np.int64)


def punished_reply(ctx: StepContext, known: Sequence[int] | None = None) -> int:
    """The punished player's myopic reply for the current round.

    Phase 2: best reply to the broadcast, modelled as fair-coin bits unless
    the opponents' profile is ``known``.  Phase 3: best reply to the exact
    punishment strategy.
    """
    b, j = ctx.bundle, ctx.state.punished
    if known is not None:
        return b.myopic_reply(j, tuple(known))
    if ctx.since <= b.m:
        return b.br_phase2(j, ctx.since > b.keylen)
    return b.br_exact[j]


# -- one-round functional forms ---------------------------------------------------------


def _context(bundle: StrategyBundle, history, seed: int) -> StepContext:
    arr = np.asarray(history, dtype=np.int64).reshape(-1, bundle.num_players)
    state = advance(PhaseState(), 0, arr, bundle)
    return StepContext(bundle, len(arr), state, arr, seed)


def _honest_step(bundle, history, memory, randomness, player, variant) -> tuple[int, bytes]:
    if bundle.variant != variant:
        raise ValueError(f"this step function needs a {variant} bundle")
    ctx = _context(bundle, history, randomness)
    m = HonestMachine(bundle, player)
    m.reset(memory)
    action = int(m.plan(ctx, 1)[0])
    return action, m.memory()


def honest_step_ne(
    bundle: StrategyBundle, history, memory: bytes | None, randomness: int, *, player: int
) -> tuple[int, bytes]:
    """One round of the stationary-punishment strategy."""
    return _honest_step(bundle, history, memory, randomness, player, "NE")


def honest_step_sp(
    bundle: StrategyBundle, history, memory: bytes | None, randomness: int, *, player: int
) -> tuple[int, bytes]:
    """One round of the bounded-punishment strategy; total for any memory bytes."""
    return _honest_step(bundle, history, memory, randomness, player, "SP")


def punished_best_response_step(
    bundle: StrategyBundle, history, j: int, known: Sequence[int] | None = None
) -> int:
    ctx = _context(bundle, history, 0)
    if ctx.state.punished != j:
        raise ValueError(f"player {j} is not being punished at this history")
    return punished_reply(ctx, known)
