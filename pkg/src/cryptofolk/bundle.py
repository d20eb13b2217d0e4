"""The compiled strategy artifact, its text format and the parameter audit."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

from .calibration import (
    CalibrationParams,
    PlaySequence,
    build_sequence,
    calibrate_ne,
    calibrate_sp,
    sequence_averages,
)
from .channel import ChannelSplit, Phase2Schedule, phase2_schedule
from .crypto.pke import scheme_for
from .crypto.prf import KIND_CODES
from .equilibrium import (
    DyadicDistribution,
    JointDistribution,
    OpponentDistribution,
    best_response,
    ce_violations,
    discretize_dyadic,
    expected_action_value,
    minimax_values,
)
from .game import Polynomial, Profile, StageGame

FORMAT_TAG = "cryptofolk-bundle v1"
VARIANTS = ("NE", "SP")


class BundleFormatError(ValueError):
    pass


class BundleValidationError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class StrategyBundle:
    """Everything an honest machine needs, for every player.

    ``game`` is the normalized game (all minimax values 0) and ``minimax``
    the shifts that produced it.  ``punishments[j]`` is the exact correlated
    punishment against ``j``; ``tables[j]`` its dyadic rounding at precision
    ``n``, keyed by the opponents' sub-profile.
    """

    variant: str
    game: StageGame
    q: Polynomial
    params: CalibrationParams
    minimax: tuple[Fraction, ...]
    ce: JointDistribution
    sequence: PlaySequence
    punishments: tuple[OpponentDistribution, ...]
    tables: tuple[DyadicDistribution, ...]
    split: ChannelSplit
    prf: str
    pke: str
    keylen: int
    z: int
    default_actions: tuple[int, ...] | None = None
    _tile: list = field(default_factory=list, compare=False, repr=False)

    @property
    def num_players(self) -> int:
        return self.game.num_players

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def delta(self) -> Fraction:
        return self.params.delta

    @property
    def m(self) -> int:
        return self.params.phase2_length

    @property
    def ell(self) -> int | None:
        """Punishment length; ``None`` means phase 3 never ends."""
        return self.params.punish_length if self.variant == "SP" else None

    @property
    def epsilon(self) -> Fraction:
        return self.params.epsilon

    @property
    def prf_code(self) -> int:
        return KIND_CODES[self.prf]

    def schedule(self, punished: int) -> Phase2Schedule:
        return phase2_schedule(self.num_players, punished, self.keylen, self.z)

    def default_action(self, player: int) -> int:
        return self.default_actions[player] if self.default_actions else 0

    # -- arrays used on the hot path -------------------------------------------------

    @cached_property
    def seq_actions(self) -> np.ndarray:
        return np.array(self.sequence.profiles, dtype=np.int64).reshape(-1, self.num_players)

    def seq_window(self, offset: int, length: int) -> np.ndarray:
        """Rows ``offset, offset+1, ...`` of ``sq`` repeated cyclically (a read-only view)."""
        period = len(self.sequence)
        offset %= period
        need = offset + length
        if not self._tile or len(self._tile[0]) < need:
            reps = max(2, -(-2 * need // period))
            tiled = np.tile(self.seq_actions, (reps, 1))
            tiled.setflags(write=False)
            self._tile[:] = [tiled]
        return self._tile[0][offset:need]

    @cached_property
    def strides(self) -> np.ndarray:
        return np.array([self.game.index([1 if k == i else 0 for k in range(self.num_players)])
                         for i in range(self.num_players)], dtype=np.int64)

    @cached_property
    def scaled_utilities(self) -> np.ndarray:
        return self.game.scaled_utilities

    @cached_property
    def denominator(self) -> int:
        return self.game.common_denominator

    @cached_property
    def table_cumulative(self) -> tuple[np.ndarray, ...]:
        return tuple(np.array(t.cumulative, dtype=np.int64) for t in self.tables)

    @cached_property
    def table_actions(self) -> tuple[np.ndarray, ...]:
        """Per punished ``j``: full profiles (``j``'s column zero) for every table outcome."""
        out = []
        for j, t in enumerate(self.tables):
            rows = [StageGame.insert(j, 0, s) for s in t.outcomes]
            out.append(np.array(rows, dtype=np.int64).reshape(-1, self.num_players))
        return tuple(out)

    def _best_against(self, j: int, probs: dict[Profile, Fraction]) -> int:
        return best_response(self.game, j, OpponentDistribution(j, probs))[0]

    @cached_property
    def br_exact(self) -> tuple[int, ...]:
        return tuple(self._best_against(j, dict(p.probs)) for j, p in enumerate(self.punishments))

    @cached_property
    def br_dyadic(self) -> tuple[int, ...]:
        return tuple(self._best_against(j, t.as_dict()) for j, t in enumerate(self.tables))

    @cached_property
    def br_outcome(self) -> tuple[np.ndarray, ...]:
        """Per ``j``: best action against each table outcome played with certainty."""
        out = []
        for j, t in enumerate(self.tables):
            out.append(np.array([self._best_against(j, {s: Fraction(1)}) for s in t.outcomes],
                                dtype=np.int64))
        return tuple(out)

    def br_phase2(self, j: int, cipher: bool) -> int:
        """Myopic reply when each broadcasting punisher's bit looks like a fair coin."""
        return self._br_phase2[j][int(cipher)]

    @cached_property
    def _br_phase2(self) -> tuple[tuple[int, int], ...]:
        c = self.num_players
        out = []
        for j in range(c):
            sender = (j + 1) % c
            replies = []
            for cipher in (False, True):
                choices = []
                for i in range(c):
                    if i == j:
                        continue
                    zero, one = self.split.zero_action(i), self.split.one_action(i)
                    broadcasting = (i == sender) if cipher else True
                    choices.append((zero, one) if broadcasting else (zero,))
                probs: dict[Profile, Fraction] = {}
                for combo in itertools.product(*choices):
                    weight = Fraction(1)
                    for ch in choices:
                        weight /= len(ch)
                    probs[combo] = probs.get(combo, Fraction(0)) + weight
                replies.append(self._best_against(j, probs))
            out.append((replies[0], replies[1]))
        return tuple(out)

    def myopic_reply(self, j: int, others: Profile) -> int:
        return self._best_against(j, {tuple(others): Fraction(1)})


# -- serialization ----------------------------------------------------------------------


def _frac(x: Fraction) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def _profile_key(p: Profile) -> str:
    return ",".join(map(str, p)) if p else "-"


def serialize_bundle(b: StrategyBundle) -> str:
    g, p = b.game, b.params
    ell = "inf" if b.ell is None else str(b.ell)
    lines = [
        FORMAT_TAG,
        f"variant {b.variant}",
        f"players {g.num_players}",
        f"size {p.n}",
        f"a {_frac(p.a)}",
        f"b {_frac(p.b)}",
        f"delta {_frac(p.delta)}",
        f"m {p.phase2_length}",
        f"ell {ell}",
        f"w {p.w}",
        f"f_prime {p.f_prime}",
        f"f {p.f}",
        f"q {b.q}",
        f"q_n {p.q_n}",
        f"keylen {b.keylen}",
        f"z {b.z}",
        "actions " + " ".join(map(str, g.actions)),
        f"sq {len(b.sequence)} " + " ".join(str(g.index(a)) for a in b.sequence.profiles),
    ]
    for j, (exact, table) in enumerate(zip(b.punishments, b.tables)):
        lines.append(f"punish {j} {len(exact.probs)}")
        for s, prob in exact.probs.items():
            k = table.outcomes.index(s) if s in table.outcomes else None
            dy = "0" if k is None else str(table.numerators[k])
            lines.append(f"  {_profile_key(s)} {_frac(prob)} {dy}/2^{table.precision}")
    for i in range(g.num_players):
        lines.append(f"split {i} " + " ".join(map(str, sorted(b.split.zero_sets[i]))))
    lines.append(f"prf {b.prf}")
    lines.append(f"pke {b.pke}")
    if b.default_actions is None:
        lines.append("default none")
    else:
        lines.append("default " + " ".join(map(str, b.default_actions)))
    lines.append("minimax " + " ".join(_frac(v) for v in b.minimax))
    lines.append(f"ce {len(b.ce.probs)}")
    for a, prob in b.ce.probs.items():
        lines.append(f"  {g.index(a)} {_frac(prob)}")
    for k, vec in enumerate(g.payoffs):
        lines.append(f"payoff {k} " + " ".join(_frac(u) for u in vec))
    lines.append("end")
    return "\n".join(lines) + "\n"


class _Lines:
    def __init__(self, text: str):
        self.rows = [ln for ln in text.splitlines() if ln.strip()]
        self.pos = 0

    def take(self, keyword: str) -> list[str]:
        if self.pos >= len(self.rows):
            raise BundleFormatError(f"unexpected end of bundle, wanted {keyword!r}")
        toks = self.rows[self.pos].split()
        if toks[0] != keyword:
            raise BundleFormatError(f"line {self.pos + 1}: expected {keyword!r}, got {toks[0]!r}")
        self.pos += 1
        return toks[1:]

    def raw(self) -> list[str]:
        toks = self.rows[self.pos].split()
        self.pos += 1
        return toks


def parse_bundle(text: str | bytes) -> StrategyBundle:
    if isinstance(text, bytes):
        text = text.decode("ascii")
    rows = _Lines(text)
    try:
        if rows.rows[:1] != [FORMAT_TAG]:
            raise BundleFormatError("not a bundle file")
        rows.pos = 1
        variant = rows.take("variant")[0]
        if variant not in VARIANTS:
            raise BundleFormatError(f"unknown variant {variant!r}")
        c = int(rows.take("players")[0])
        n = int(rows.take("size")[0])
        a = Fraction(rows.take("a")[0])
        b = Fraction(rows.take("b")[0])
        delta = Fraction(rows.take("delta")[0])
        m = int(rows.take("m")[0])
        ell_tok = rows.take("ell")[0]
        w = int(rows.take("w")[0])
        f_prime = int(rows.take("f_prime")[0])
        f = int(rows.take("f")[0])
        q = Polynomial.parse("".join(rows.take("q")))
        q_n = int(rows.take("q_n")[0])
        keylen = int(rows.take("keylen")[0])
        z = int(rows.take("z")[0])
        actions = tuple(int(x) for x in rows.take("actions"))
        sq_toks = rows.take("sq")
        sq_flat = [int(x) for x in sq_toks[1:]]
        if len(sq_flat) != int(sq_toks[0]):
            raise BundleFormatError("sq length does not match its entries")
        exact_tables, dyadic_tables = [], []
        for j in range(c):
            head = rows.take("punish")
            if int(head[0]) != j:
                raise BundleFormatError(f"punishment tables out of order at player {j}")
            exact: dict[Profile, Fraction] = {}
            dyadic: list[tuple[Profile, int]] = []
            precision = None
            for _ in range(int(head[1])):
                key, prob, dy = rows.raw()
                s = () if key == "-" else tuple(int(x) for x in key.split(","))
                exact[s] = Fraction(prob)
                num, _, power = dy.partition("/2^")
                if power:
                    precision = int(power)
                if int(num):
                    dyadic.append((s, int(num)))
            exact_tables.append(OpponentDistribution(j, exact))
            dyadic_tables.append(DyadicDistribution(
                tuple(s for s, _ in dyadic), tuple(k for _, k in dyadic),
                precision if precision is not None else n,
            ))
        zero_sets = []
        for i in range(c):
            toks = rows.take("split")
            if int(toks[0]) != i:
                raise BundleFormatError("split lines out of order")
            zero_sets.append(frozenset(int(x) for x in toks[1:]))
        prf = rows.take("prf")[0]
        pke = rows.take("pke")[0]
        dtoks = rows.take("default")
        default = None if dtoks == ["none"] else tuple(int(x) for x in dtoks)
        minimax = tuple(Fraction(x) for x in rows.take("minimax"))
        ce_probs: dict[int, Fraction] = {}
        for _ in range(int(rows.take("ce")[0])):
            k, prob = rows.raw()
            ce_probs[int(k)] = Fraction(prob)
        payoffs = []
        for k in range(int(np.prod(actions))):
            toks = rows.take("payoff")
            if int(toks[0]) != k:
                raise BundleFormatError("payoff lines out of order")
            payoffs.append(tuple(Fraction(x) for x in toks[1:]))
        rows.take("end")
    except (IndexError, ValueError) as exc:
        if isinstance(exc, BundleFormatError):
            raise
        raise BundleFormatError(f"malformed bundle near line {rows.pos + 1}: {exc}") from None
    game = StageGame(actions, tuple(payoffs), "bundle")
    ell = None if ell_tok == "inf" else int(ell_tok)
    params = CalibrationParams(variant, n, q_n, a, b, m, w, f_prime, f, ell)
    if params.delta != delta:
        raise BundleFormatError("delta does not equal 1/f")
    profiles = tuple(game.profile_at(k) for k in sq_flat)
    sequence = PlaySequence(profiles, sequence_averages(game, profiles))
    ce = JointDistribution({game.profile_at(k): p for k, p in ce_probs.items()})
    return StrategyBundle(
        variant=variant, game=game, q=q, params=params, minimax=minimax, ce=ce,
        sequence=sequence, punishments=tuple(exact_tables), tables=tuple(dyadic_tables),
        split=ChannelSplit(actions, tuple(zero_sets)), prf=prf, pke=pke, keylen=keylen, z=z,
        default_actions=default,
    )


# -- audit ------------------------------------------------------------------------------


def validate_bundle(b: StrategyBundle, *, check_lp: bool = True) -> None:
    """Re-derive every parameter from the stored game and ``q``; raise on any mismatch."""
    problems: list[str] = []
    g = b.game
    c, n = g.num_players, g.size
    scheme = scheme_for(b.pke)
    if b.prf not in KIND_CODES:
        problems.append(f"unknown PRF {b.prf!r}")
    if b.keylen != scheme.keylen(n) or b.z != scheme.ciphertext_length(n):
        problems.append("keylen/z disagree with the encryption scheme")
    m = b.keylen + (c - 2) * b.z
    q_n = b.q(n)
    calib = calibrate_sp if b.variant == "SP" else calibrate_ne
    expect = calib(g, q_n, m)
    if expect != b.params:
        problems.append(f"calibration mismatch: stored {b.params}, derived {expect}")
    if b.delta > Fraction(1, expect.f):
        problems.append("delta exceeds 1/f")
    if ce_violations(g, b.ce):
        problems.append("stored correlated strategy is not an equilibrium")
    if b.sequence.profiles != build_sequence(g, b.ce, expect.w).profiles:
        problems.append("sq does not match the stored correlated strategy")
    if check_lp and any(v != 0 for v in minimax_values(g)):
        problems.append("stored game is not normalized to zero minimax")
    for j, (exact, table) in enumerate(zip(b.punishments, b.tables)):
        worst = max(expected_action_value(g, j, act, exact) for act in range(g.actions[j]))
        if worst != 0:
            problems.append(f"punishment against {j} holds them to {worst}, not 0")
        if table != discretize_dyadic(exact.probs, n):
            problems.append(f"table {j} is not the dyadic rounding of its punishment")
    if b.variant == "SP":
        if b.default_actions is None or len(b.default_actions) != c:
            problems.append("SP bundle needs one default action per player")
        elif any(not 0 <= d < k for d, k in zip(b.default_actions, g.actions)):
            problems.append("default action out of range")
    if problems:
        raise BundleValidationError(problems)
