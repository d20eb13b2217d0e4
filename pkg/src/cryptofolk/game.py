"""Stage games, graphical games and the small polynomial type used for schedules."""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np

Profile = tuple[int, ...]

# Explicit expansion of graphical games is only offered below this size.
MAX_EXPANDED_PROFILES = 10**6


class GameFormatError(ValueError):
    """Raised for malformed game files; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class MissingProfileError(GameFormatError):
    def __init__(self, profile: Profile):
        self.profile = profile
        super().__init__(f"missing payoff for profile {' '.join(map(str, profile))}")


class UnsupportedGameError(ValueError):
    pass


@dataclass(frozen=True)
class Polynomial:
    """Polynomial with natural coefficients, ``coeffs[k]`` multiplies ``n**k``."""

    coeffs: tuple[int, ...]

    def __post_init__(self) -> None:
        coeffs = tuple(int(c) for c in self.coeffs)
        if any(c < 0 for c in coeffs):
            raise ValueError("polynomial coefficients must be natural numbers")
        while len(coeffs) > 1 and coeffs[-1] == 0:
            coeffs = coeffs[:-1]
        object.__setattr__(self, "coeffs", coeffs or (0,))

    def __call__(self, n: int) -> int:
        return eval_polynomial(self, n)

    @classmethod
    def parse(cls, text: str) -> "Polynomial":
        """Parse ``"n^2+3n+1"``, ``"2*n"``, ``"n"`` or ``"5"`` (variable ``n``)."""
        cleaned = text.replace(" ", "").replace("**", "^").replace("*", "")
        if not cleaned:
            raise ValueError("empty polynomial")
        coeffs: dict[int, int] = {}
        for term in cleaned.split("+"):
            m = re.fullmatch(r"(\d*)(n(?:\^(\d+))?)?", term)
            if not m or not term:
                raise ValueError(f"cannot parse polynomial term {term!r}")
            digits, var, power = m.groups()
            if var is None:
                deg, coef = 0, int(digits)
            else:
                deg = int(power) if power else 1
                coef = int(digits) if digits else 1
            coeffs[deg] = coeffs.get(deg, 0) + coef
        top = max(coeffs)
        return cls(tuple(coeffs.get(k, 0) for k in range(top + 1)))

    def __str__(self) -> str:
        terms = []
        for k in range(len(self.coeffs) - 1, -1, -1):
            c = self.coeffs[k]
            if c == 0:
                continue
            if k == 0:
                terms.append(str(c))
            else:
                var = "n" if k == 1 else f"n^{k}"
                terms.append(var if c == 1 else f"{c}{var}")
        return "+".join(terms) if terms else "0"


def eval_polynomial(p: Polynomial, n: int) -> int:
    if n < 0:
        raise ValueError("polynomials are evaluated at natural numbers only")
    acc = 0
    for c in reversed(p.coeffs):
        acc = acc * n + c
    return acc


def _as_fraction(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


@dataclass(frozen=True)
class StageGame:
    """A finite normal-form game with exact payoffs.

    ``payoffs[k][i]`` is player ``i``'s utility at the profile with flat index
    ``k``; profiles are enumerated lexicographically with player 0 the most
    significant coordinate.  Parsed games carry integer payoffs; normalization
    may introduce rationals.
    """

    actions: tuple[int, ...]
    payoffs: tuple[tuple[Fraction, ...], ...]
    name: str = "game"

    def __post_init__(self) -> None:
        actions = tuple(int(a) for a in self.actions)
        if not actions:
            raise ValueError("a game needs at least one player")
        if any(a < 1 for a in actions):
            raise ValueError("every player needs at least one action")
        total = math.prod(actions)
        if len(self.payoffs) != total:
            raise ValueError(f"expected {total} payoff vectors, got {len(self.payoffs)}")
        payoffs = tuple(tuple(_as_fraction(u) for u in vec) for vec in self.payoffs)
        if any(len(vec) != len(actions) for vec in payoffs):
            raise ValueError("every payoff vector needs one entry per player")
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "payoffs", payoffs)

    @property
    def num_players(self) -> int:
        return len(self.actions)

    @property
    def size(self) -> int:
        """Game size ``n``: the largest action count of any player."""
        return max(self.actions)

    @cached_property
    def max_payoff(self) -> Fraction:
        return max(u for vec in self.payoffs for u in vec)

    @cached_property
    def min_payoff(self) -> Fraction:
        return min(u for vec in self.payoffs for u in vec)

    @property
    def payoff_range(self) -> Fraction:
        return self.max_payoff - self.min_payoff

    @property
    def num_profiles(self) -> int:
        return len(self.payoffs)

    def profiles(self) -> Iterator[Profile]:
        return itertools.product(*(range(n) for n in self.actions))

    @cached_property
    def _strides(self) -> tuple[int, ...]:
        strides = []
        acc = 1
        for n in reversed(self.actions):
            strides.append(acc)
            acc *= n
        return tuple(reversed(strides))

    def index(self, profile: Sequence[int]) -> int:
        return sum(a * s for a, s in zip(profile, self._strides))

    def profile_at(self, index: int) -> Profile:
        out = []
        for s, n in zip(self._strides, self.actions):
            out.append((index // s) % n)
        return tuple(out)

    def utility(self, profile: Sequence[int]) -> tuple[Fraction, ...]:
        return self.payoffs[self.index(profile)]

    def utility_of(self, player: int, profile: Sequence[int]) -> Fraction:
        return self.payoffs[self.index(profile)][player]

    def opponents_profiles(self, player: int) -> list[Profile]:
        """Sub-profiles of everybody but ``player``, lexicographic."""
        ranges = [range(n) for i, n in enumerate(self.actions) if i != player]
        return list(itertools.product(*ranges))

    @staticmethod
    def insert(player: int, action: int, others: Sequence[int]) -> Profile:
        return tuple(others[:player]) + (action,) + tuple(others[player:])

    @cached_property
    def common_denominator(self) -> int:
        return math.lcm(*(u.denominator for vec in self.payoffs for u in vec))

    @cached_property
    def scaled_utilities(self) -> np.ndarray:
        """Integer array ``[profile, player]`` equal to payoffs times :attr:`common_denominator`."""
        d = self.common_denominator
        return np.array(
            [[int(u * d) for u in vec] for vec in self.payoffs], dtype=np.int64
        ).reshape(self.num_profiles, self.num_players)

    def shifted(self, shifts: Sequence[Fraction]) -> "StageGame":
        payoffs = tuple(
            tuple(u - _as_fraction(s) for u, s in zip(vec, shifts)) for vec in self.payoffs
        )
        return StageGame(self.actions, payoffs, self.name)


def parse_stage_game(text: str | bytes) -> StageGame:
    """Parse the line-oriented ``game`` format.

    ::

        game <name>
        players <c>
        actions <n_1> ... <n_c>
        payoff <a_1> ... <a_c> : <u_1> ... <u_c>
        end
    """
    if isinstance(text, bytes):
        text = text.decode("ascii")
    name = None
    num_players = None
    actions: tuple[int, ...] | None = None
    table: dict[Profile, tuple[int, ...]] = {}
    ended = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ended:
            raise GameFormatError("content after 'end'", lineno)
        keyword, _, rest = line.partition(" ")
        rest = rest.strip()
        if keyword == "game":
            if name is not None:
                raise GameFormatError("duplicate 'game' header", lineno)
            name = rest or "game"
        elif keyword == "players":
            num_players = _parse_int(rest, lineno, "player count")
            if num_players < 1:
                raise GameFormatError("player count must be positive", lineno)
        elif keyword == "actions":
            if num_players is None:
                raise GameFormatError("'actions' before 'players'", lineno)
            actions = tuple(_parse_int(tok, lineno, "action count") for tok in rest.split())
            if len(actions) != num_players:
                raise GameFormatError(
                    f"expected {num_players} action counts, got {len(actions)}", lineno
                )
            if any(a < 1 for a in actions):
                raise GameFormatError("action counts must be positive", lineno)
        elif keyword == "payoff":
            if actions is None:
                raise GameFormatError("'payoff' before 'actions'", lineno)
            lhs, sep, rhs = rest.partition(":")
            if not sep:
                raise GameFormatError("payoff line needs ':'", lineno)
            profile = tuple(_parse_int(tok, lineno, "action index") for tok in lhs.split())
            utils = tuple(_parse_int(tok, lineno, "payoff", integral=True) for tok in rhs.split())
            if len(profile) != len(actions) or len(utils) != len(actions):
                raise GameFormatError("payoff line has the wrong arity", lineno)
            if any(not 0 <= a < n for a, n in zip(profile, actions)):
                raise GameFormatError("action index out of range", lineno)
            if profile in table:
                raise GameFormatError(f"duplicate profile {' '.join(map(str, profile))}", lineno)
            table[profile] = utils
        elif keyword == "end":
            ended = True
        else:
            raise GameFormatError(f"unknown keyword {keyword!r}", lineno)
    if name is None or actions is None:
        raise GameFormatError("incomplete game: need 'game', 'players' and 'actions'")
    if not ended:
        raise GameFormatError("missing 'end'")
    payoffs = []
    for profile in itertools.product(*(range(n) for n in actions)):
        if profile not in table:
            raise MissingProfileError(profile)
        payoffs.append(table[profile])
    return StageGame(actions, tuple(payoffs), name)


def _parse_int(tok: str, lineno: int, what: str, integral: bool = False) -> int:
    try:
        return int(tok)
    except ValueError:
        if integral:
            raise GameFormatError(f"non-integer payoff {tok!r}", lineno) from None
        raise GameFormatError(f"bad {what} {tok!r}", lineno) from None


def _fmt(u: Fraction) -> str:
    return str(u.numerator) if u.denominator == 1 else f"{u.numerator}/{u.denominator}"


def serialize_stage_game(g: StageGame) -> str:
    if any(u.denominator != 1 for vec in g.payoffs for u in vec):
        raise ValueError("the game file format only holds integer payoffs")
    lines = [
        f"game {g.name}",
        f"players {g.num_players}",
        "actions " + " ".join(map(str, g.actions)),
    ]
    for profile, vec in zip(g.profiles(), g.payoffs):
        lines.append(
            "payoff " + " ".join(map(str, profile)) + " : " + " ".join(map(_fmt, vec))
        )
    lines.append("end")
    return "\n".join(lines) + "\n"


def normalize_to_zero_minimax(g: StageGame, mm: Sequence[Fraction]) -> StageGame:
    """Shift each player's payoffs by minus their minimax value."""
    if all(_as_fraction(v) == 0 for v in mm):
        return g
    return g.shifted(mm)


@dataclass(frozen=True)
class GraphicalGame:
    """Graphical game: a player's utility depends on its own and its neighbors' actions.

    ``local[i]`` maps ``(own, nbr_1, ..., nbr_k)`` (neighbors in the order of
    ``neighbors[i]``) to an integer utility.
    """

    actions: tuple[int, ...]
    degree: int
    neighbors: tuple[tuple[int, ...], ...]
    local: tuple[dict[tuple[int, ...], int], ...] = field(hash=False, compare=True)
    name: str = "graphical"

    def __post_init__(self) -> None:
        m = len(self.actions)
        if len(self.neighbors) != m or len(self.local) != m:
            raise ValueError("need neighbor lists and local tables for every player")
        for i, nbrs in enumerate(self.neighbors):
            if len(nbrs) > self.degree:
                raise GameFormatError(
                    f"player {i} has {len(nbrs)} neighbors, degree bound is {self.degree}"
                )
            if len(set(nbrs)) != len(nbrs) or i in nbrs:
                raise GameFormatError(f"player {i} has a repeated or self neighbor")
            for j in nbrs:
                if not 0 <= j < m:
                    raise GameFormatError(f"player {i} has dangling neighbor {j}")
            expected = set(
                itertools.product(range(self.actions[i]), *(range(self.actions[j]) for j in nbrs))
            )
            if set(self.local[i]) != expected:
                missing = sorted(expected - set(self.local[i]))
                if missing:
                    raise GameFormatError(
                        f"local table of player {i} misses entry {' '.join(map(str, missing[0]))}"
                    )
                raise GameFormatError(f"local table of player {i} has out-of-range entries")

    @property
    def num_players(self) -> int:
        return len(self.actions)

    @property
    def size(self) -> int:
        return max(self.actions)

    @property
    def num_profiles(self) -> int:
        return math.prod(self.actions)

    def local_utility(self, player: int, profile: Sequence[int]) -> int:
        key = (profile[player],) + tuple(profile[j] for j in self.neighbors[player])
        return self.local[player][key]

    @cached_property
    def max_payoff(self) -> int:
        return max(max(t.values()) for t in self.local)

    @cached_property
    def min_payoff(self) -> int:
        return min(min(t.values()) for t in self.local)

    def to_stage_game(self) -> StageGame:
        if self.num_profiles > MAX_EXPANDED_PROFILES:
            raise UnsupportedGameError(
                f"explicit expansion limited to {MAX_EXPANDED_PROFILES} profiles"
            )
        payoffs = [
            tuple(self.local_utility(i, p) for i in range(self.num_players))
            for p in itertools.product(*(range(n) for n in self.actions))
        ]
        return StageGame(self.actions, tuple(payoffs), self.name)


def parse_graphical_game(text: str | bytes) -> GraphicalGame:
    """Parse the ``graphical`` format (see README for the grammar)."""
    if isinstance(text, bytes):
        text = text.decode("ascii")
    name = None
    m = None
    degree = None
    actions: tuple[int, ...] | None = None
    neighbors: dict[int, tuple[int, ...]] = {}
    local: dict[int, dict[tuple[int, ...], int]] = {}
    ended = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ended:
            raise GameFormatError("content after 'end'", lineno)
        keyword, _, rest = line.partition(" ")
        rest = rest.strip()
        if keyword == "graphical":
            name = rest or "graphical"
        elif keyword == "players":
            m = _parse_int(rest, lineno, "player count")
        elif keyword == "degree":
            degree = _parse_int(rest, lineno, "degree")
        elif keyword == "actions":
            actions = tuple(_parse_int(tok, lineno, "action count") for tok in rest.split())
            if m is None or len(actions) != m:
                raise GameFormatError("action counts do not match the player count", lineno)
        elif keyword == "neighbors":
            lhs, sep, rhs = rest.partition(":")
            if not sep:
                raise GameFormatError("neighbors line needs ':'", lineno)
            i = _parse_int(lhs.strip(), lineno, "player index")
            if m is None or not 0 <= i < m:
                raise GameFormatError(f"player index {i} out of range", lineno)
            if i in neighbors:
                raise GameFormatError(f"duplicate neighbor list for player {i}", lineno)
            nbrs = tuple(_parse_int(tok, lineno, "neighbor index") for tok in rhs.split())
            if degree is not None and len(nbrs) > degree:
                raise GameFormatError(
                    f"player {i} has {len(nbrs)} neighbors, degree bound is {degree}", lineno
                )
            for j in nbrs:
                if not 0 <= j < m:
                    raise GameFormatError(f"dangling neighbor {j}", lineno)
            neighbors[i] = nbrs
        elif keyword == "local":
            lhs, sep, rhs = rest.partition(":")
            if not sep:
                raise GameFormatError("local line needs ':'", lineno)
            toks = [_parse_int(tok, lineno, "index") for tok in lhs.split()]
            if not toks:
                raise GameFormatError("local line needs a player index", lineno)
            i, key = toks[0], tuple(toks[1:])
            if i not in neighbors:
                raise GameFormatError(f"local table for player {i} before its neighbors", lineno)
            table = local.setdefault(i, {})
            if key in table:
                raise GameFormatError("duplicate local entry", lineno)
            table[key] = _parse_int(rhs.strip(), lineno, "payoff", integral=True)
        elif keyword == "end":
            ended = True
        else:
            raise GameFormatError(f"unknown keyword {keyword!r}", lineno)
    if name is None or m is None or degree is None or actions is None:
        raise GameFormatError("incomplete graphical game header")
    if not ended:
        raise GameFormatError("missing 'end'")
    return GraphicalGame(
        actions=actions,
        degree=degree,
        neighbors=tuple(neighbors.get(i, ()) for i in range(m)),
        local=tuple(local.get(i, {}) for i in range(m)),
        name=name,
    )


def serialize_graphical_game(gg: GraphicalGame) -> str:
    lines = [
        f"graphical {gg.name}",
        f"players {gg.num_players}",
        f"degree {gg.degree}",
        "actions " + " ".join(map(str, gg.actions)),
    ]
    for i, nbrs in enumerate(gg.neighbors):
        lines.append(f"neighbors {i} : " + " ".join(map(str, nbrs)))
        for key in sorted(gg.local[i]):
            lines.append(f"local {i} " + " ".join(map(str, key)) + f" : {gg.local[i][key]}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def random_stage_game(
    rng: np.random.Generator, actions: Iterable[int], low: int, high: int, name: str = "random"
) -> StageGame:
    """Integer payoffs drawn uniformly from ``[low, high]``; extremes are forced to appear."""
    actions = tuple(actions)
    total = math.prod(actions)
    c = len(actions)
    table = rng.integers(low, high + 1, size=(total, c))
    if total * c >= 2 and low != high:
        cells = rng.choice(total * c, size=2, replace=False)
        table.flat[cells[0]] = high
        table.flat[cells[1]] = low
    return StageGame(actions, tuple(tuple(int(u) for u in row) for row in table), name)
