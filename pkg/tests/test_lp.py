from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from scipy.optimize import linprog

from cryptofolk.lp import InfeasibleError, UnboundedError, lex_objectives, solve_lp


def test_small_known_optimum():
    # max x + y s.t. x + 2y <= 4, 3x + y <= 6
    res = solve_lp([[-1, -1]], [[1, 2], [3, 1]], [4, 6])
    assert res.x == (Fraction(8, 5), Fraction(6, 5))
    assert res.objectives[0] == Fraction(-14, 5)


def test_equality_constraints():
    res = solve_lp([[1, 2, 3]], a_eq=[[1, 1, 1]], b_eq=[1])
    assert res.x == (1, 0, 0)


def test_infeasible():
    with pytest.raises(InfeasibleError):
        solve_lp([[1, 1]], [[1, 1]], [-1])


def test_unbounded():
    with pytest.raises(UnboundedError):
        solve_lp([[-1, 0]], [[0, 1]], [1])


def test_lexicographic_tie_break():
    # every point of the simplex is optimal for the zero objective
    res = solve_lp(lex_objectives([0, 0, 0], 3), a_eq=[[1, 1, 1]], b_eq=[1])
    assert res.x == (0, 0, 1)


def test_matches_float_solver_on_random_programs():
    rng = np.random.default_rng(4)
    checked = 0
    for _ in range(60):
        nvar, nub = int(rng.integers(2, 6)), int(rng.integers(1, 6))
        a = rng.integers(-4, 5, size=(nub, nvar))
        b = rng.integers(0, 8, size=nub)
        c = rng.integers(-5, 5, size=nvar)
        ref = linprog(c, A_ub=a, b_ub=b, A_eq=[[1] * nvar], b_eq=[1], bounds=(0, None), method="highs")
        if ref.status != 0:
            with pytest.raises((InfeasibleError, UnboundedError)):
                solve_lp([c.tolist()], a.tolist(), b.tolist(), [[1] * nvar], [1])
            continue
        res = solve_lp([c.tolist()], a.tolist(), b.tolist(), [[1] * nvar], [1])
        assert abs(float(res.objectives[0]) - ref.fun) < 1e-9
        x = res.x
        assert sum(x) == 1 and all(v >= 0 for v in x)
        for row, rhs in zip(a.tolist(), b.tolist()):
            assert sum(Fraction(r) * v for r, v in zip(row, x)) <= rhs
        checked += 1
    assert checked > 30
