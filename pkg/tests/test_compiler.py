from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest

from conftest import Q_N, matching_pennies, parity_game, zero_game
from cryptofolk.bundle import (
    BundleFormatError,
    BundleValidationError,
    parse_bundle,
    serialize_bundle,
    validate_bundle,
)
from cryptofolk.compiler import compile_graphical, compile_ne, compile_sp
from cryptofolk.equilibrium import minimax_values
from cryptofolk.game import GraphicalGame, Polynomial, StageGame, UnsupportedGameError


def _random_graphical(rng, neighbors, low=-2, high=2) -> GraphicalGame:
    c = len(neighbors)
    local = []
    for i, nbrs in enumerate(neighbors):
        keys = itertools.product(range(2), repeat=1 + len(nbrs))
        local.append({k: int(rng.integers(low, high + 1)) for k in keys})
    return GraphicalGame((2,) * c, max(len(n) for n in neighbors), tuple(map(tuple, neighbors)),
                         tuple(local))


CYCLE5 = [[(i - 1) % 5, (i + 1) % 5] for i in range(5)]


def test_zero_game_bundle():
    b = compile_ne(zero_game(), Q_N)
    assert all(u == 0 for vec in b.game.payoffs for u in vec)
    assert b.minimax == (0, 0, 0)
    assert len(b.sequence) >= 1
    validate_bundle(b)


def test_ne_reference_parameters(ne_bundle):
    assert (ne_bundle.params.w, ne_bundle.params.f_prime) == (200, 2400)
    assert "w 200" in serialize_bundle(ne_bundle).splitlines()


def test_compile_is_deterministic():
    for compile_ in (compile_ne, compile_sp):
        a = serialize_bundle(compile_(parity_game(), Q_N))
        b = serialize_bundle(compile_(parity_game(), Q_N))
        assert a == b


def test_sp_header_echoes_block_length(sp_bundle):
    lines = serialize_bundle(sp_bundle).splitlines()
    assert f"m {sp_bundle.m}" in lines and f"ell {sp_bundle.ell}" in lines
    assert sp_bundle.ell == 2 * 2 * (sp_bundle.m * 1 + 1)


def test_sp_and_ne_differ_only_where_expected(ne_bundle, sp_bundle):
    ne = dict(enumerate(serialize_bundle(ne_bundle).splitlines()))
    sp = dict(enumerate(serialize_bundle(sp_bundle).splitlines()))
    changed = {ne[k].split()[0] for k in ne if ne[k] != sp.get(k)}
    assert changed <= {"variant", "delta", "ell", "w", "f_prime", "f", "sq", "default"}
    assert {"variant", "w", "f_prime", "f", "ell", "default"} <= changed


def test_bundle_round_trip(ne_bundle, sp_bundle, broken_prf_bundle):
    for b in (ne_bundle, sp_bundle, broken_prf_bundle):
        text = serialize_bundle(b)
        again = parse_bundle(text)
        assert serialize_bundle(again) == text
        assert again.params == b.params and again.sequence.profiles == b.sequence.profiles
        validate_bundle(again)


def test_validator_rejects_tampered_parameters(ne_bundle):
    text = serialize_bundle(ne_bundle).replace("\nf 2400\n", "\nf 2401\n").replace(
        "delta 1/2400", "delta 1/2401")
    with pytest.raises(BundleValidationError, match="calibration"):
        validate_bundle(parse_bundle(text))


def test_validator_rejects_bad_punishment(ne_bundle):
    lines = serialize_bundle(ne_bundle).splitlines()
    k = next(i for i, ln in enumerate(lines) if ln.startswith("payoff 0 "))
    lines[k] = "payoff 0 5 5 5"
    with pytest.raises(BundleValidationError):
        validate_bundle(parse_bundle("\n".join(lines) + "\n"))


@pytest.mark.parametrize("text", ["", "hello\n", "cryptofolk-bundle v1\nvariant XX\n"])
def test_malformed_bundle(text):
    with pytest.raises(BundleFormatError):
        parse_bundle(text)


def test_truncated_bundle(ne_bundle):
    text = serialize_bundle(ne_bundle)
    with pytest.raises(BundleFormatError):
        parse_bundle(text[: len(text) // 2])


def test_rejects_two_players_and_single_actions():
    with pytest.raises(UnsupportedGameError):
        compile_ne(matching_pennies(), Q_N)
    g = StageGame((1, 2, 2), tuple((0, 0, 0) for _ in range(4)))
    with pytest.raises(UnsupportedGameError):
        compile_ne(g, Q_N)


def test_random_bundles_validate():
    rng = np.random.default_rng(60)
    from cryptofolk.game import random_stage_game

    for k in range(6):
        g = random_stage_game(rng, (2, 2, 2), -2, 2)
        b = (compile_sp if k % 2 else compile_ne)(g, Polynomial.parse("n+1"))
        validate_bundle(b)
        assert b.minimax == minimax_values(g)


def test_graphical_cycle_locality():
    gg = _random_graphical(np.random.default_rng(61), CYCLE5)
    b = compile_graphical(gg, Q_N)
    validate_bundle(b)
    for j, d in enumerate(b.punishments):
        others = [i for i in range(5) if i != j]
        for s in d.probs:
            for pos, i in enumerate(others):
                if i not in gg.neighbors[j]:
                    assert s[pos] == 0
        assert len({s for s in b.tables[j].outcomes}) <= 4


def test_graphical_matches_explicit_minimax():
    rng = np.random.default_rng(62)
    for _ in range(3):
        gg = _random_graphical(rng, CYCLE5)
        graphical = compile_graphical(gg, Q_N)
        explicit = compile_ne(gg.to_stage_game(), Q_N)
        assert graphical.minimax == explicit.minimax


def test_single_edge_game():
    gg = _random_graphical(np.random.default_rng(63), [[1], [0], []])
    b = compile_graphical(gg, Q_N, subgame_perfect=True)
    validate_bundle(b)
    assert b.variant == "SP"
    assert set(b.punishments[2].probs) == {(0, 0)}


def test_q_must_be_positive():
    with pytest.raises(ValueError):
        compile_ne(parity_game(), Polynomial.parse("0"))


def test_bundle_epsilon(ne_bundle):
    assert ne_bundle.epsilon == Fraction(1, 2)
