"""Exact correlated equilibria, correlated minimax punishment and dyadic rounding."""

from __future__ import annotations

import bisect
import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Protocol, Sequence

from .game import GraphicalGame, Profile, StageGame
from .lp import lex_objectives, solve_lp


class DistributionError(ValueError):
    pass


class PrecisionError(ValueError):
    pass


def _check_distribution(probs: Mapping[Profile, Fraction]) -> None:
    if any(p < 0 for p in probs.values()):
        raise DistributionError("negative probability")
    if sum(probs.values(), Fraction(0)) != 1:
        raise DistributionError("probabilities must sum to exactly 1")


@dataclass(frozen=True)
class JointDistribution:
    """Correlated strategy: exact probabilities over full action profiles (support only)."""

    probs: Mapping[Profile, Fraction]

    def __post_init__(self) -> None:
        clean = {tuple(k): Fraction(v) for k, v in self.probs.items() if v != 0}
        _check_distribution(clean)
        object.__setattr__(self, "probs", dict(sorted(clean.items())))

    def __getitem__(self, profile: Profile) -> Fraction:
        return self.probs.get(tuple(profile), Fraction(0))

    def expected_utility(self, g: StageGame, player: int) -> Fraction:
        return sum((p * g.utility_of(player, a) for a, p in self.probs.items()), Fraction(0))

    def expected_utilities(self, g: StageGame) -> tuple[Fraction, ...]:
        return tuple(self.expected_utility(g, i) for i in range(g.num_players))


@dataclass(frozen=True)
class OpponentDistribution:
    """Correlated play of everybody except ``target``, keyed by opponents' sub-profiles."""

    target: int
    probs: Mapping[Profile, Fraction]

    def __post_init__(self) -> None:
        clean = {tuple(k): Fraction(v) for k, v in self.probs.items() if v != 0}
        _check_distribution(clean)
        object.__setattr__(self, "probs", dict(sorted(clean.items())))

    @property
    def support(self) -> list[Profile]:
        return list(self.probs)

    def involved_players(self, num_players: int) -> set[int]:
        """Players whose action is not constant over the support."""
        others = [i for i in range(num_players) if i != self.target]
        out = set()
        for pos, player in enumerate(others):
            if len({s[pos] for s in self.probs}) > 1:
                out.add(player)
        return out


def expected_action_value(
    g: StageGame, player: int, action: int, d: OpponentDistribution
) -> Fraction:
    return sum(
        (p * g.utility_of(player, g.insert(player, action, s)) for s, p in d.probs.items()),
        Fraction(0),
    )


def best_response(g: StageGame, player: int, d: OpponentDistribution) -> tuple[int, Fraction]:
    """Best action against ``d`` (lowest index on ties) and its expected value."""
    if d.target != player:
        raise ValueError("distribution does not target this player")
    best_a, best_v = 0, None
    for a in range(g.actions[player]):
        v = expected_action_value(g, player, a, d)
        if best_v is None or v > best_v:
            best_a, best_v = a, v
    return best_a, best_v


def punishment_strategy(g: StageGame, player: int) -> tuple[OpponentDistribution, Fraction]:
    """Correlated minimax punishment against ``player`` and the minimax value.

    Solves ``min v`` s.t. ``E_s[u_j(a, s)] <= v`` for every action ``a`` of the
    target, over distributions ``s`` of the opponents; ties are broken by the
    lexicographically smallest optimal solution.
    """
    if not 0 <= player < g.num_players:
        raise ValueError(f"no player {player}")
    subs = g.opponents_profiles(player)
    return _punishment_over(
        lambda a: g.utility_of(player, a), player, g.actions[player], subs, g.min_payoff
    )


def _punishment_over(
    utility: Callable[[Profile], Fraction],
    player: int,
    num_actions: int,
    subs: Sequence[Profile],
    lo: Fraction,
) -> tuple[OpponentDistribution, Fraction]:
    k = len(subs)
    # Variables: p_s for each sub-profile, then v' = v - lo >= 0.
    a_ub, b_ub = [], []
    for a in range(num_actions):
        row = [utility(StageGame.insert(player, a, s)) for s in subs] + [-1]
        a_ub.append(row)
        b_ub.append(lo)
    a_eq = [[1] * k + [0]]
    primary = [0] * k + [1]
    objs = lex_objectives(primary, k + 1)[: k + 1]
    res = solve_lp(objs, a_ub, b_ub, a_eq, [1])
    probs = {s: p for s, p in zip(subs, res.x[:k]) if p}
    return OpponentDistribution(player, probs), res.x[k] + lo


def minimax_values(g: StageGame) -> tuple[Fraction, ...]:
    return tuple(punishment_strategy(g, j)[1] for j in range(g.num_players))


def ce_violations(g: StageGame, sigma: JointDistribution) -> list[tuple[int, int, int, Fraction]]:
    """Every violated incentive constraint ``(player, recommended, alternative, gain)``.

    Brute-force enumeration, kept independent of the LP formulation.
    """
    out = []
    for i in range(g.num_players):
        for rec in range(g.actions[i]):
            cond = [(a, p) for a, p in sigma.probs.items() if a[i] == rec]
            if not cond:
                continue
            base = sum((p * g.utility_of(i, a) for a, p in cond), Fraction(0))
            for alt in range(g.actions[i]):
                if alt == rec:
                    continue
                dev = sum(
                    (p * g.utility_of(i, a[:i] + (alt,) + a[i + 1 :]) for a, p in cond),
                    Fraction(0),
                )
                if dev > base:
                    out.append((i, rec, alt, dev - base))
    return out


def correlated_equilibrium(g: StageGame) -> JointDistribution:
    """Welfare-maximizing correlated equilibrium; lexicographically smallest on ties."""
    profiles = list(g.profiles())
    n = len(profiles)
    a_ub, b_ub = [], []
    for i in range(g.num_players):
        for rec in range(g.actions[i]):
            for alt in range(g.actions[i]):
                if alt == rec:
                    continue
                row = [Fraction(0)] * n
                for k, a in enumerate(profiles):
                    if a[i] == rec:
                        alt_prof = a[:i] + (alt,) + a[i + 1 :]
                        row[k] = g.utility_of(i, alt_prof) - g.utility_of(i, a)
                a_ub.append(row)
                b_ub.append(0)
    welfare = [-sum(g.payoffs[k]) for k in range(n)]
    res = solve_lp(lex_objectives(welfare, n), a_ub, b_ub, [[1] * n], [1])
    return JointDistribution({a: p for a, p in zip(profiles, res.x) if p})


class GraphicalCESolver(Protocol):
    """Pluggable correlated-equilibrium solver for graphical games."""

    def __call__(self, gg: GraphicalGame) -> JointDistribution: ...


def expansion_ce_solver(gg: GraphicalGame) -> JointDistribution:
    """Reference solver: explicit expansion followed by the exact CE LP."""
    return correlated_equilibrium(gg.to_stage_game())


def graphical_punishment_strategy(
    gg: GraphicalGame, player: int
) -> tuple[OpponentDistribution, Fraction]:
    """Punishment supported on the neighborhood; non-neighbors fixed at action 0.

    The target's utility ignores non-neighbors, so correlating them cannot
    lower the minimax value.
    """
    nbrs = set(gg.neighbors[player])
    others = [i for i in range(gg.num_players) if i != player]
    ranges = [range(gg.actions[i]) if i in nbrs else range(1) for i in others]
    subs = list(itertools.product(*ranges))
    lo = Fraction(min(gg.local[player].values()))
    return _punishment_over(
        lambda a: Fraction(gg.local_utility(player, a)), player, gg.actions[player], subs, lo
    )


@dataclass(frozen=True)
class DyadicDistribution:
    """Outcomes with probabilities ``numerators[k] / 2**precision`` (positive entries only)."""

    outcomes: tuple[Profile, ...]
    numerators: tuple[int, ...]
    precision: int

    def __post_init__(self) -> None:
        if len(self.outcomes) != len(self.numerators) or not self.outcomes:
            raise DistributionError("need one positive numerator per outcome")
        if any(m <= 0 for m in self.numerators):
            raise DistributionError("dyadic numerators must be positive")
        if sum(self.numerators) != 1 << self.precision:
            raise DistributionError("dyadic probabilities must sum to exactly 1")

    @property
    def cumulative(self) -> tuple[int, ...]:
        """Strictly increasing upper bounds; outcome ``k`` owns ``[cum[k-1], cum[k])``."""
        return tuple(itertools.accumulate(self.numerators))

    def prob(self, k: int) -> Fraction:
        return Fraction(self.numerators[k], 1 << self.precision)

    def as_dict(self) -> dict[Profile, Fraction]:
        return {o: self.prob(k) for k, o in enumerate(self.outcomes)}

    def index_of(self, v: int) -> int:
        if not 0 <= v < 1 << self.precision:
            raise ValueError("sample value out of range")
        return bisect.bisect_right(self.cumulative, v)


def discretize_dyadic(probs: Mapping[Profile, Fraction], precision: int) -> DyadicDistribution:
    """Round to multiples of ``2**-precision``: floor, then largest remainder.

    Residual mass goes to the outcomes with the largest remainders, ties to
    the lowest outcome (in sorted order).
    """
    if precision < 1:
        raise PrecisionError("precision must be at least 1")
    items = sorted((tuple(k), Fraction(v)) for k, v in probs.items() if v)
    if sum(p for _, p in items) != 1 or any(p < 0 for _, p in items):
        raise DistributionError("input is not a probability distribution")
    scale = 1 << precision
    if len(items) > scale:
        raise PrecisionError(f"support of {len(items)} outcomes exceeds 2^{precision}")
    floors = [int(p * scale) for _, p in items]  # p*scale >= 0 so int() floors
    residual = scale - sum(floors)
    rema = [p * scale - f for (_, p), f in zip(items, floors)]
    order = sorted(range(len(items)), key=lambda k: (-rema[k], k))
    for k in order[:residual]:
        floors[k] += 1
    keep = [(o, m) for (o, _), m in zip(items, floors) if m > 0]
    return DyadicDistribution(tuple(o for o, _ in keep), tuple(m for _, m in keep), precision)


def total_variation(p: Mapping[Profile, Fraction], q: Mapping[Profile, Fraction]) -> Fraction:
    keys = set(p) | set(q)
    return sum((abs(p.get(k, Fraction(0)) - q.get(k, Fraction(0))) for k in keys), Fraction(0)) / 2

