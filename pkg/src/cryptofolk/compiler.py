"""Game in, strategy bundle out."""

from __future__ import annotations

from typing import Callable

from .bundle import StrategyBundle
from .calibration import build_sequence, calibrate_ne, calibrate_sp
from .channel import ChannelSplit
from .crypto.pke import scheme_for
from .crypto.prf import KIND_CODES, PrfError
from .equilibrium import (
    GraphicalCESolver,
    OpponentDistribution,
    correlated_equilibrium,
    discretize_dyadic,
    expansion_ce_solver,
    graphical_punishment_strategy,
    punishment_strategy,
)
from .game import GraphicalGame, Polynomial, StageGame, UnsupportedGameError, normalize_to_zero_minimax


def _check_supported(actions: tuple[int, ...]) -> None:
    if len(actions) < 3:
        raise UnsupportedGameError("need at least three players: the seed travels through a third party")
    if any(a < 2 for a in actions):
        raise UnsupportedGameError("every player needs at least two actions to broadcast bits")


def _assemble(
    g: StageGame,
    q: Polynomial,
    variant: str,
    punish: Callable[[int], tuple[OpponentDistribution, object]],
    ce_of: Callable[[StageGame], object],
    prf: str,
    pke: str,
) -> StrategyBundle:
    _check_supported(g.actions)
    if prf not in KIND_CODES:
        raise PrfError(f"unknown PRF kind {prf!r}")
    scheme = scheme_for(pke)
    raw = [punish(j) for j in range(g.num_players)]
    mm = tuple(v for _, v in raw)
    norm = normalize_to_zero_minimax(g, mm)
    ce = ce_of(norm)
    n, c = norm.size, norm.num_players
    keylen, z = scheme.keylen(n), scheme.ciphertext_length(n)
    m = keylen + (c - 2) * z
    q_n = q(n)
    if q_n < 1:
        raise ValueError("q(n) must be positive")
    params = (calibrate_sp if variant == "SP" else calibrate_ne)(norm, q_n, m)
    sequence = build_sequence(norm, ce, params.w)
    exact = tuple(d for d, _ in raw)
    tables = tuple(discretize_dyadic(d.probs, n) for d in exact)
    default = tuple(0 for _ in range(c)) if variant == "SP" else None
    return StrategyBundle(
        variant=variant, game=norm, q=q, params=params, minimax=mm, ce=ce, sequence=sequence,
        punishments=exact, tables=tables, split=ChannelSplit.lowest_zero(norm.actions),
        prf=prf, pke=pke, keylen=keylen, z=z, default_actions=default,
    )


def compile_ne(g: StageGame, q: Polynomial, *, prf: str = "reference", pke: str = "reference") -> StrategyBundle:
    """Bundle for the strategy that punishes forever after the first deviation."""
    return _assemble(g, q, "NE", lambda j: punishment_strategy(g, j), correlated_equilibrium, prf, pke)


def compile_sp(g: StageGame, q: Polynomial, *, prf: str = "reference", pke: str = "reference") -> StrategyBundle:
    """Bundle for the strategy with punishment blocks of bounded length."""
    return _assemble(g, q, "SP", lambda j: punishment_strategy(g, j), correlated_equilibrium, prf, pke)


def compile_graphical(
    gg: GraphicalGame,
    q: Polynomial,
    *,
    subgame_perfect: bool = False,
    ce_solver: GraphicalCESolver = expansion_ce_solver,
    prf: str = "reference",
    pke: str = "reference",
) -> StrategyBundle:
    """Punishments come from the neighborhood LP; the CE from ``ce_solver``.

    The normalized stage game is still materialized in the bundle, so this is
    bounded by the expansion limit of :meth:`GraphicalGame.to_stage_game`.
    """
    _check_supported(gg.actions)
    g = gg.to_stage_game()
    variant = "SP" if subgame_perfect else "NE"
    # Shifting each player's payoffs by a constant keeps the set of correlated
    # equilibria, so the solver may work on the unnormalized graphical form.
    return _assemble(g, q, variant, lambda j: graphical_punishment_strategy(gg, j),
                     lambda _norm: ce_solver(gg), prf, pke)
