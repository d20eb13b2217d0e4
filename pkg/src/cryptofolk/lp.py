"""Exact rational simplex with lexicographic objectives.

Only what the equilibrium computations need: ``x >= 0``, ``<=`` and ``=``
rows, and a stack of objectives minimized in lexicographic order.  Bland's
rule keeps the method finite; all arithmetic is in :class:`fractions.Fraction`.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

Number = int | Fraction


class LPError(RuntimeError):
    pass


class InfeasibleError(LPError):
    pass


class UnboundedError(LPError):
    pass


@dataclass(frozen=True)
class LPResult:
    x: tuple[Fraction, ...]
    objectives: tuple[Fraction, ...]


class _Tableau:
    def __init__(self, rows: list[list[Fraction]], rhs: list[Fraction], basis: list[int]):
        self.rows = rows
        self.rhs = rhs
        self.basis = basis

    def pivot(self, r: int, col: int) -> None:
        row = self.rows[r]
        p = row[col]
        if p != 1:
            inv = 1 / p
            self.rows[r] = row = [v * inv for v in row]
            self.rhs[r] *= inv
        for i, other in enumerate(self.rows):
            if i == r:
                continue
            f = other[col]
            if f:
                self.rows[i] = [a - f * b if b else a for a, b in zip(other, row)]
                self.rhs[i] -= f * self.rhs[r]
        self.basis[r] = col

    def run(self, objs: list[list[Fraction]], allowed: int, max_iter: int = 100_000) -> None:
        for _ in range(max_iter):
            basic = set(self.basis)
            # Sparse view of each objective's basic costs: [(row, cost)].
            costs = []
            for c in objs:
                costs.append(
                    [(r, c[b]) for r, b in enumerate(self.basis) if b < len(c) and c[b]]
                )
            entering = None
            for j in range(allowed):
                if j in basic:
                    continue
                for c, pairs in zip(objs, costs):
                    red = c[j] - sum((cb * self.rows[r][j] for r, cb in pairs), Fraction(0))
                    if red:
                        if red < 0:
                            entering = j
                        break
                if entering is not None:
                    break
            if entering is None:
                return
            best = None
            for r, row in enumerate(self.rows):
                a = row[entering]
                if a > 0:
                    ratio = self.rhs[r] / a
                    if best is None or ratio < best[0] or (
                        ratio == best[0] and self.basis[r] < self.basis[best[1]]
                    ):
                        best = (ratio, r)
            if best is None:
                raise UnboundedError("objective unbounded below")
            self.pivot(best[1], entering)
        raise LPError("simplex iteration limit reached")


def solve_lp(
    objectives: Sequence[Sequence[Number]],
    a_ub: Sequence[Sequence[Number]] = (),
    b_ub: Sequence[Number] = (),
    a_eq: Sequence[Sequence[Number]] = (),
    b_eq: Sequence[Number] = (),
) -> LPResult:
    """Lexicographically minimize ``objectives[0] @ x``, then ``objectives[1] @ x``, ...

    subject to ``a_ub @ x <= b_ub``, ``a_eq @ x == b_eq`` and ``x >= 0``.
    """
    if not objectives:
        raise ValueError("need at least one objective")
    nvar = len(objectives[0])
    rows: list[list[Fraction]] = []
    rhs: list[Fraction] = []
    n_ub = len(a_ub)
    for k, (row, b) in enumerate(zip(a_ub, b_ub)):
        slack = [Fraction(0)] * n_ub
        slack[k] = Fraction(1)
        rows.append([Fraction(v) for v in row] + slack)
        rhs.append(Fraction(b))
    for row, b in zip(a_eq, b_eq):
        rows.append([Fraction(v) for v in row] + [Fraction(0)] * n_ub)
        rhs.append(Fraction(b))
    ncols = nvar + n_ub
    m = len(rows)
    for r in range(m):
        if rhs[r] < 0:
            rows[r] = [-v for v in rows[r]]
            rhs[r] = -rhs[r]
    # Phase 1: one artificial per row.
    for r in range(m):
        art = [Fraction(0)] * m
        art[r] = Fraction(1)
        rows[r] = rows[r] + art
    tab = _Tableau(rows, rhs, [ncols + r for r in range(m)])
    phase1 = [[Fraction(0)] * ncols + [Fraction(1)] * m]
    tab.run(phase1, ncols + m)
    infeas = sum(tab.rhs[r] for r in range(m) if tab.basis[r] >= ncols)
    if infeas > 0:
        raise InfeasibleError("constraints are infeasible")
    # Drive degenerate artificials out of the basis, dropping redundant rows.
    r = 0
    while r < len(tab.rows):
        if tab.basis[r] >= ncols:
            col = next((j for j in range(ncols) if tab.rows[r][j] != 0), None)
            if col is None:
                del tab.rows[r], tab.rhs[r], tab.basis[r]
                continue
            tab.pivot(r, col)
        r += 1
    tab.rows = [row[:ncols] for row in tab.rows]
    objs = [[Fraction(v) for v in c] + [Fraction(0)] * n_ub for c in objectives]
    tab.run(objs, ncols)
    x = [Fraction(0)] * ncols
    for r, b in enumerate(tab.basis):
        x[b] = tab.rhs[r]
    xs = tuple(x[:nvar])
    vals = tuple(sum((Fraction(c) * v for c, v in zip(obj, xs)), Fraction(0)) for obj in objectives)
    return LPResult(xs, vals)


def lex_objectives(primary: Sequence[Number], nvar: int) -> list[list[Number]]:
    """Primary objective followed by unit objectives ``x_0, x_1, ...`` for lex-min tie-breaking."""
    objs: list[list[Number]] = [list(primary)]
    for k in range(nvar):
        unit = [0] * nvar
        unit[k] = 1
        objs.append(unit)
    return objs
