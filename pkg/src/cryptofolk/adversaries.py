"""Deviating machines, the punishment-phase hybrid experiments and their statistics.

Spec strings::

    never | once:<t> | phase1:<t> | tamper:<player>:<round>:<hex> | keythief
    | predictor:<prf-id> | eavesdrop:<pke-id>
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .bundle import StrategyBundle
from .crypto.pke import DecodeError, scheme_for
from .crypto.prf import KIND_CODES, PRF_KINDS
from .crypto.pke import PKE_KINDS
from .machines import (
    HonestMachine,
    MachineMemory,
    StepContext,
    phase3_outcomes,
    read_ciphertext,
)

KINDS = ("never", "once", "phase1", "tamper", "keythief", "predictor", "eavesdrop")


class AdversarySpecError(ValueError):
    pass


@dataclass(frozen=True)
class AdversarySpec:
    kind: str
    round: int = 0
    target: int = 0
    data: bytes = b""
    primitive: str = ""

    def __str__(self) -> str:
        if self.kind in ("never", "keythief"):
            return self.kind
        if self.kind in ("once", "phase1"):
            return f"{self.kind}:{self.round}"
        if self.kind == "tamper":
            return f"tamper:{self.target}:{self.round}:{self.data.hex()}"
        return f"{self.kind}:{self.primitive}"


def parse_spec(text: str) -> AdversarySpec:
    parts = text.strip().split(":")
    kind = parts[0]
    try:
        if kind in ("never", "keythief") and len(parts) == 1:
            return AdversarySpec(kind)
        if kind in ("once", "phase1") and len(parts) == 2:
            t = int(parts[1])
            if t < 0:
                raise AdversarySpecError("round must be non-negative")
            return AdversarySpec(kind, round=t)
        if kind == "tamper" and len(parts) == 4:
            target, rnd = int(parts[1]), int(parts[2])
            if target < 0 or rnd < 0:
                raise AdversarySpecError("tamper target and round must be non-negative")
            return AdversarySpec(kind, round=rnd, target=target, data=bytes.fromhex(parts[3]))
        if kind == "predictor" and len(parts) == 2:
            if parts[1] not in PRF_KINDS:
                raise AdversarySpecError(f"unknown PRF id {parts[1]!r}")
            return AdversarySpec(kind, primitive=parts[1])
        if kind == "eavesdrop" and len(parts) == 2:
            if parts[1] not in PKE_KINDS:
                raise AdversarySpecError(f"unknown encryption id {parts[1]!r}")
            return AdversarySpec(kind, primitive=parts[1])
    except ValueError as exc:
        if isinstance(exc, AdversarySpecError):
            raise
        raise AdversarySpecError(f"bad adversary spec {text!r}: {exc}") from None
    raise AdversarySpecError(f"bad adversary spec {text!r}")


class Adversary:
    """Honest play except where a subclass decides otherwise."""

    def __init__(self, bundle: StrategyBundle, player: int, spec: AdversarySpec):
        self.bundle = bundle
        self.player = player
        self.spec = spec
        self.honest = HonestMachine(bundle, player)
        self.interventions: list[tuple[int, int, bytes]] = []

    def reset(self, memory: bytes | None) -> None:
        self.honest.reset(memory)

    def memory(self) -> bytes:
        return self.honest.memory()

    @property
    def flagged(self) -> bool:
        return self.honest.flagged

    def plan(self, ctx: StepContext, limit: int) -> np.ndarray:
        return self.honest.plan(ctx, limit)

    # shared pieces
    def _lowest_other(self, ctx: StepContext) -> int:
        honest = int(ctx.bundle.seq_window(ctx.state.offset, 1)[0, self.player])
        return 1 if honest == 0 else 0

    def _best_deviation(self, ctx: StepContext) -> int:
        b, i = ctx.bundle, self.player
        row = b.seq_window(ctx.state.offset, 1)[0]
        best, best_u = None, None
        for a in range(b.game.actions[i]):
            if a == row[i]:
                continue
            prof = tuple(int(x) for x in row[:i]) + (a,) + tuple(int(x) for x in row[i + 1:])
            u = b.game.utility_of(i, prof)
            if best_u is None or u > best_u:
                best, best_u = a, u
        return best

    def _punished_plan(self, ctx: StepContext, limit: int) -> np.ndarray:
        b, j = ctx.bundle, self.player
        if ctx.since <= b.m:
            a = b.br_phase2(j, ctx.since > b.keylen)
        else:
            predicted = self._predict(ctx, limit)
            if predicted is not None:
                return b.br_outcome[j][predicted]
            a = b.br_dyadic[j]
        return np.full(limit, a, dtype=np.int64)

    def _predict(self, ctx: StepContext, limit: int) -> np.ndarray | None:
        return None


class OnceAdversary(Adversary):
    def plan(self, ctx: StepContext, limit: int) -> np.ndarray:
        st, t_dev = ctx.state, self.spec.round
        if st.punished is None:
            if ctx.t < t_dev:
                return self.honest.plan(ctx, min(limit, t_dev - ctx.t))
            if ctx.t == t_dev:
                return np.array([self._lowest_other(ctx)], dtype=np.int64)
            return self.honest.plan(ctx, limit)
        if st.punished == self.player:
            return self._punished_plan(ctx, limit)
        return self.honest.plan(ctx, limit)


class Phase1Adversary(Adversary):
    """Deviates at every phase-1 round from ``t_start`` on, with the best one-round deviation."""

    def plan(self, ctx: StepContext, limit: int) -> np.ndarray:
        st, t0 = ctx.state, self.spec.round
        if st.punished is None:
            if ctx.t < t0:
                return self.honest.plan(ctx, min(limit, t0 - ctx.t))
            return np.array([self._best_deviation(ctx)], dtype=np.int64)
        if st.punished == self.player:
            return self._punished_plan(ctx, limit)
        return self.honest.plan(ctx, limit)


class PredictorAdversary(Phase1Adversary):
    """Recomputes the punishers' draws when the PRF ignores its seed."""

    def _predict(self, ctx: StepContext, limit: int) -> np.ndarray | None:
        b = ctx.bundle
        if b.prf != self.spec.primitive or self.spec.primitive == "reference":
            return None
        x0 = ctx.since - b.m - 1
        return phase3_outcomes(b, self.player, 0, x0, limit, KIND_CODES[self.spec.primitive])


class EavesdropAdversary(Phase1Adversary):
    """Reads the seed off the channel when the encryption leaves it in the clear."""

    def _predict(self, ctx: StepContext, limit: int) -> np.ndarray | None:
        b = ctx.bundle
        if b.pke != self.spec.primitive or self.spec.primitive != "identity":
            return None
        sched = b.schedule(self.player)
        ct = read_ciphertext(ctx, sched.recipients[0])
        try:
            seed = scheme_for(b.pke).decrypt(0, ct, b.n)
        except DecodeError:
            return None
        return phase3_outcomes(b, self.player, seed, ctx.since - b.m - 1, limit)


class KeyThief(Adversary):
    """Honest, except that while punished it reads a punisher's seed through the test hook."""

    def plan(self, ctx: StepContext, limit: int) -> np.ndarray:
        if ctx.state.punished == self.player:
            return self._punished_plan(ctx, limit)
        return self.honest.plan(ctx, limit)

    def _predict(self, ctx: StepContext, limit: int) -> np.ndarray | None:
        if ctx.peek is None:
            return None
        b, t0 = ctx.bundle, ctx.state.start
        sched = b.schedule(self.player)
        for victim in (sched.sender, *sched.recipients):
            mem = MachineMemory.from_bytes(ctx.peek(victim)).secrets_for(t0)
            if mem is not None and mem.seed is not None and mem.seed < 1 << b.n:
                return phase3_outcomes(b, self.player, mem.seed, ctx.since - b.m - 1, limit)
        return None


class TamperAdversary(Adversary):
    """Plays honestly and overwrites ``target``'s memory before round ``round``."""

    def __init__(self, bundle: StrategyBundle, player: int, spec: AdversarySpec):
        super().__init__(bundle, player, spec)
        self.interventions = [(spec.round, spec.target, spec.data)]


_CLASSES = {
    "never": Adversary,
    "once": OnceAdversary,
    "phase1": Phase1Adversary,
    "tamper": TamperAdversary,
    "keythief": KeyThief,
    "predictor": PredictorAdversary,
    "eavesdrop": EavesdropAdversary,
}


def build_adversary(
    spec: str | AdversarySpec, bundle: StrategyBundle, player: int, *, white_box: bool = False
):
    if isinstance(spec, str):
        spec = parse_spec(spec)
    if not 0 <= player < bundle.num_players:
        raise AdversarySpecError(f"no player {player}")
    if spec.kind == "keythief":
        if not white_box:
            raise AdversarySpecError("keythief needs the white-box test hook")
        if bundle.variant != "SP":
            raise AdversarySpecError("keythief is only defined against SP bundles")
    if spec.kind == "tamper" and not 0 <= spec.target < bundle.num_players:
        raise AdversarySpecError(f"tamper target {spec.target} is not a player")
    if spec.kind == "never":
        return HonestMachine(bundle, player)
    return _CLASSES[spec.kind](bundle, player, spec)


def suite_specs(bundle: StrategyBundle, times: tuple[int, ...] | None = None) -> list[str]:
    """Default adversary list for verification, sorted canonically."""
    if times is None:
        period = len(bundle.sequence)
        times = tuple(sorted({0, 1, period // 2, period - 1, period + 3}))
    specs = ["never", *(f"once:{t}" for t in times), "phase1:0",
             f"predictor:{bundle.prf}", f"eavesdrop:{bundle.pke}"]
    return sorted(set(specs))


# -- hybrids ----------------------------------------------------------------------------


HYBRID_VARIANTS = ("H1", "H2", "H3", "deployed")


@dataclass(frozen=True)
class HybridEstimate:
    variant: str
    mean: Fraction
    radius: float
    runs: int
    slack: Fraction


def punishment_history(bundle: StrategyBundle, player: int) -> np.ndarray:
    """One round in which ``player`` leaves ``sq[0]``, opening a block against them."""
    row = bundle.seq_actions[0].copy()
    row[player] = 1 if row[player] == 0 else 0
    return row.reshape(1, -1)


def hybrid_transcript(
    bundle: StrategyBundle, variant: str, deviator: str, seed: int,
    player: int = 0, rounds: int | None = None,
):
    from .engine import resume_match

    if variant not in HYBRID_VARIANTS:
        raise ValueError(f"unknown hybrid {variant!r}")
    oracle = "deployed" if variant == "deployed" else variant
    machines = [HonestMachine(bundle, i, oracle) for i in range(bundle.num_players)]
    machines[player] = build_adversary(deviator, bundle, player)
    if rounds is None:
        rounds = bundle.ell if bundle.ell is not None else 8 << bundle.n
    return resume_match(bundle, machines, punishment_history(bundle, player), None,
                        bundle.m + rounds, seed)


def dyadic_slack(bundle: StrategyBundle, player: int) -> Fraction:
    t = bundle.tables[player]
    return Fraction(len(t.outcomes), 1 << bundle.n) * bundle.params.r


def hybrid_punishment_payoff(
    bundle: StrategyBundle, variant: str, deviator: str = "never", runs: int = 100,
    seed: int = 0, *, player: int = 0, rounds: int | None = None, beta: float = 0.01,
) -> HybridEstimate:
    """Mean per-round phase-3 payoff of the punished ``player`` under one oracle setting."""
    from .engine import hoeffding_radius, run_seed

    total = Fraction(0)
    for r in range(runs):
        tr = hybrid_transcript(bundle, variant, deviator, run_seed(seed, r), player, rounds)
        mask = tr.phases == 3
        vals = tr.scaled_utilities[mask, player]
        total += Fraction(int(vals.sum()), int(mask.sum()) * bundle.denominator)
    return HybridEstimate(variant, total / runs, hoeffding_radius(bundle.params.r, beta, runs),
                          runs, dyadic_slack(bundle, player))
