from __future__ import annotations

import numpy as np
import pytest

from cryptofolk.compiler import compile_ne, compile_sp
from cryptofolk.game import Polynomial, StageGame, random_stage_game

Q_N = Polynomial.parse("n")


def zero_game(c: int = 3, k: int = 2) -> StageGame:
    total = k**c
    return StageGame((k,) * c, tuple((0,) * c for _ in range(total)), "zero")


def xor_game() -> StageGame:
    """Player 0 earns 1 when its bit equals the XOR of the other two bits."""
    payoffs = []
    for a in range(2):
        for b in range(2):
            for c in range(2):
                payoffs.append((int(a == b ^ c), 0, 0))
    return StageGame((2, 2, 2), tuple(payoffs), "xor")


def parity_game() -> StageGame:
    """Three-player parity game with payoffs in {-1, 1}."""
    payoffs = []
    for a in range(2):
        for b in range(2):
            for c in range(2):
                s = 1 if (a + b + c) % 2 == 0 else -1
                payoffs.append((s, -s, s))
    return StageGame((2, 2, 2), tuple(payoffs), "parity")


def matching_pennies() -> StageGame:
    return StageGame((2, 2), ((1, -1), (-1, 1), (-1, 1), (1, -1)), "pennies")


def small_games(count: int, seed: int, low: int = 0, high: int = 1) -> list[StageGame]:
    rng = np.random.default_rng(seed)
    return [random_stage_game(rng, (2, 2, 2), low, high, f"g{k}") for k in range(count)]


@pytest.fixture(scope="session")
def ne_bundle():
    return compile_ne(parity_game(), Q_N)


@pytest.fixture(scope="session")
def sp_bundle():
    return compile_sp(parity_game(), Q_N)


@pytest.fixture(scope="session")
def broken_prf_bundle():
    return compile_ne(parity_game(), Q_N, prf="constant")


@pytest.fixture(scope="session")
def identity_pke_bundle():
    return compile_ne(parity_game(), Q_N, pke="identity")


CRITERIA: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})"
    CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])
