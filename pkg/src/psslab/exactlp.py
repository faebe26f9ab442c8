"""Exact linear programming over the rationals.

A dense two-phase simplex on fractions.Fraction, plus exhaustive basic
feasible solution enumeration. Bland's rule is used throughout so the
method terminates under degeneracy. Intended for the small dense programs
arising from allocation problems (tens of variables), where exactness
matters more than speed: optimal values, optimal faces, degeneracy and
uniqueness questions are all decided without tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from itertools import combinations
from typing import Sequence

Rational = Fraction | int
ZERO = Fraction(0)
ONE = Fraction(1)


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LpResult:
    status: LpStatus
    value: Fraction | None
    x: tuple[Fraction, ...] | None


def _frac_matrix(rows: Sequence[Sequence[Rational]]) -> list[list[Fraction]]:
    return [[Fraction(v) for v in row] for row in rows]


def _frac_vector(row: Sequence[Rational]) -> list[Fraction]:
    return [Fraction(v) for v in row]


def solve_lp(
    c: Sequence[Rational],
    a_eq: Sequence[Sequence[Rational]] = (),
    b_eq: Sequence[Rational] = (),
    a_ub: Sequence[Sequence[Rational]] = (),
    b_ub: Sequence[Rational] = (),
    nonneg: Sequence[bool] | None = None,
) -> LpResult:
    """Minimize c.x subject to a_eq x = b_eq, a_ub x <= b_ub.

    Variables with nonneg[j] True (the default) are constrained to x_j >= 0,
    the rest are free. Returns exact optimum and one optimal point.
    """
    c = _frac_vector(c)
    a_eq = _frac_matrix(a_eq)
    b_eq = _frac_vector(b_eq)
    a_ub = _frac_matrix(a_ub)
    b_ub = _frac_vector(b_ub)
    n = len(c)
    signs = [True] * n if nonneg is None else list(nonneg)
    if len(signs) != n:
        raise ValueError("nonneg length must match c")
    for row in a_eq:
        if len(row) != n:
            raise ValueError("a_eq row length must match c")
    for row in a_ub:
        if len(row) != n:
            raise ValueError("a_ub row length must match c")

    # Standard form: split free variables, add slacks for inequality rows.
    col_of: list[tuple[int, int | None]] = []
    std_c: list[Fraction] = []
    for j in range(n):
        pos = len(std_c)
        std_c.append(c[j])
        neg = None
        if not signs[j]:
            neg = len(std_c)
            std_c.append(-c[j])
        col_of.append((pos, neg))

    def expand(row: list[Fraction]) -> list[Fraction]:
        out = [ZERO] * len(std_c)
        for j, v in enumerate(row):
            pos, neg = col_of[j]
            out[pos] = v
            if neg is not None:
                out[neg] = -v
        return out

    rows: list[list[Fraction]] = []
    rhs: list[Fraction] = []
    for row, b in zip(a_eq, b_eq):
        rows.append(expand(row))
        rhs.append(b)
    n_slack = len(a_ub)
    for p, (row, b) in enumerate(zip(a_ub, b_ub)):
        r = expand(row) + [ZERO] * n_slack
        r[len(std_c) + p] = ONE
        rows.append(r)
        rhs.append(b)
    for p in range(len(a_eq)):
        rows[p] = rows[p] + [ZERO] * n_slack
    std_c = std_c + [ZERO] * n_slack

    status, x_std, value = _simplex_standard(rows, rhs, std_c)
    if status is not LpStatus.OPTIMAL:
        return LpResult(status, None, None)
    x = []
    for pos, neg in col_of:
        v = x_std[pos]
        if neg is not None:
            v = v - x_std[neg]
        x.append(v)
    return LpResult(LpStatus.OPTIMAL, value, tuple(x))


def _simplex_standard(
    a: list[list[Fraction]], b: list[Fraction], c: list[Fraction]
) -> tuple[LpStatus, list[Fraction], Fraction | None]:
    """Two-phase simplex for min c.x, a x = b, x >= 0."""
    m = len(a)
    n = len(c)
    tab = [row[:] for row in a]
    rhs = b[:]
    for i in range(m):
        if rhs[i] < 0:
            tab[i] = [-v for v in tab[i]]
            rhs[i] = -rhs[i]

    # Phase 1: artificial identity basis, minimize the artificial sum.
    for i in range(m):
        ext = [ZERO] * m
        ext[i] = ONE
        tab[i] = tab[i] + ext
    basis = [n + i for i in range(m)]
    cost = [ZERO] * (n + m)
    for j in range(n):
        s = ZERO
        for i in range(m):
            s += tab[i][j]
        cost[j] = -s
    obj = -sum(rhs, ZERO)
    # Artificial columns never re-enter; once out they are dead.
    obj = _pivot_loop(tab, rhs, cost, basis, obj, limit=n)
    if obj is None or -obj != 0:
        return LpStatus.INFEASIBLE, [], None

    # Drive remaining artificials out of the basis, drop redundant rows.
    i = 0
    while i < len(tab):
        if basis[i] >= n:
            piv = next((j for j in range(n) if tab[i][j] != 0), None)
            if piv is None:
                del tab[i], rhs[i], basis[i]
                continue
            _pivot(tab, rhs, cost, i, piv)
            basis[i] = piv
        i += 1
    tab = [row[:n] for row in tab]

    # Phase 2.
    m = len(tab)
    cost = c[:]
    obj = ZERO
    for i in range(m):
        cb = cost[basis[i]]
        if cb != 0:
            for j in range(n):
                cost[j] -= cb * tab[i][j]
            obj -= cb * rhs[i]
    obj = _pivot_loop(tab, rhs, cost, basis, obj, limit=n)
    if obj is None:
        return LpStatus.UNBOUNDED, [], None
    x = [ZERO] * n
    for i in range(m):
        x[basis[i]] = rhs[i]
    return LpStatus.OPTIMAL, x, -obj


def _pivot_loop(
    tab: list[list[Fraction]],
    rhs: list[Fraction],
    cost: list[Fraction],
    basis: list[int],
    obj: Fraction,
    limit: int,
) -> Fraction | None:
    """Run Bland-rule pivots until optimal (returns obj) or unbounded (None)."""
    m = len(tab)
    while True:
        enter = next((j for j in range(limit) if cost[j] < 0), None)
        if enter is None:
            return obj
        leave = -1
        best: Fraction | None = None
        for i in range(m):
            coef = tab[i][enter]
            if coef > 0:
                ratio = rhs[i] / coef
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    best = ratio
                    leave = i
        if leave < 0:
            return None
        # obj tracks the negative objective; z moves by cost[enter] * ratio.
        obj -= cost[enter] * (rhs[leave] / tab[leave][enter])
        _pivot(tab, rhs, cost, leave, enter)
        basis[leave] = enter


def _pivot(
    tab: list[list[Fraction]],
    rhs: list[Fraction],
    cost: list[Fraction],
    row: int,
    col: int,
) -> None:
    piv = tab[row][col]
    inv = ONE / piv
    tab[row] = [v * inv for v in tab[row]]
    rhs[row] *= inv
    prow = tab[row]
    pb = rhs[row]
    for i in range(len(tab)):
        if i == row:
            continue
        f = tab[i][col]
        if f != 0:
            tab[i] = [v - f * w for v, w in zip(tab[i], prow)]
            rhs[i] -= f * pb
    f = cost[col]
    if f != 0:
        for j in range(len(cost)):
            cost[j] -= f * prow[j]


def solve_square(
    a: Sequence[Sequence[Fraction]], b: Sequence[Fraction]
) -> list[Fraction] | None:
    """Solve a square rational system exactly; None if singular."""
    n = len(b)
    mat = [list(row) + [bv] for row, bv in zip(a, b)]
    for col in range(n):
        piv = next((r for r in range(col, n) if mat[r][col] != 0), None)
        if piv is None:
            return None
        mat[col], mat[piv] = mat[piv], mat[col]
        inv = ONE / mat[col][col]
        mat[col] = [v * inv for v in mat[col]]
        for r in range(n):
            if r != col and mat[r][col] != 0:
                f = mat[r][col]
                mat[r] = [v - f * w for v, w in zip(mat[r], mat[col])]
    return [mat[r][n] for r in range(n)]


def enumerate_basic_feasible(
    a: Sequence[Sequence[Rational]], b: Sequence[Rational]
) -> list[tuple[Fraction, ...]]:
    """All basic feasible solutions of a x = b, x >= 0, i.e. the vertices
    of the polyhedron, each reported once, in lexicographic order.

    Requires the constraint matrix to have full row rank; exhaustive over
    column subsets, so only suitable for small systems.
    """
    a = _frac_matrix(a)
    b = _frac_vector(b)
    m = len(a)
    n = len(a[0]) if a else 0
    seen: set[tuple[Fraction, ...]] = set()
    cols_t = [[a[i][j] for i in range(m)] for j in range(n)]
    for subset in combinations(range(n), m):
        sub = [[cols_t[j][i] for j in subset] for i in range(m)]
        sol = solve_square(sub, b)
        if sol is None or any(v < 0 for v in sol):
            continue
        x = [ZERO] * n
        for j, v in zip(subset, sol):
            x[j] = v
        seen.add(tuple(x))
    return sorted(seen)
