"""Exact rounding of approximate Borsuk-Ulam solutions of linear circuits.

A linear circuit is piecewise affine.  Fixing the branch of every MAX, MIN and
capped subtraction at an anchor point p gives a polyhedral cell {Ax <= b} on
which g(x) = Cx + C'.  Minimising z subject to the cell, |Cx + C'| <= z
componentwise, the sign pattern of p and the linearised sphere constraint
gives an LP whose optimum is 0 whenever p was close enough to a solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .borsuk_ulam import BUInstance, antipodal_difference, l1
from .circuit import (
    ADD,
    CONST,
    DOUBLE_01,
    MAX,
    MIN,
    MUL_CONST,
    NONLINEAR_KINDS,
    SUB,
    SUB_01,
    Circuit,
)
from .errors import InfeasibleLP, NonlinearCircuit, PositiveOptimum
from .numerics import fmt_q

ZERO = Fraction(0)


class Affine:
    """coef . x + const over a fixed number of variables."""

    __slots__ = ("coef", "const")

    def __init__(self, coef, const=ZERO):
        self.coef = tuple(coef)
        self.const = Fraction(const)

    def __add__(self, o):
        return Affine([a + b for a, b in zip(self.coef, o.coef)], self.const + o.const)

    def __sub__(self, o):
        return Affine([a - b for a, b in zip(self.coef, o.coef)], self.const - o.const)

    def scale(self, k):
        k = Fraction(k)
        return Affine([a * k for a in self.coef], self.const * k)

    def at(self, x) -> Fraction:
        return sum((a * v for a, v in zip(self.coef, x)), self.const)


@dataclass
class LinearCell:
    """{x : A x <= b} on which the circuit equals C x + C'."""

    A: list[list[Fraction]]
    b: list[Fraction]
    C: list[list[Fraction]]
    C0: list[Fraction]
    anchor: tuple[Fraction, ...]

    def contains(self, x) -> bool:
        return all(sum((a * v for a, v in zip(row, x)), ZERO) <= rhs for row, rhs in zip(self.A, self.b))

    def value(self, x) -> list[Fraction]:
        return [sum((a * v for a, v in zip(row, x)), c) for row, c in zip(self.C, self.C0)]


def extract_cell(g: Circuit, p: Sequence, flip_ties: bool = False) -> LinearCell:
    """Branch-fixing inequalities and the affine map of ``g`` at ``p``.

    Ties go to the first input of MAX/MIN and to the difference branch of the
    capped subtraction, or to the other branch with ``flip_ties``; all
    inequalities are non-strict, so both choices give a cell containing ``p``.
    """
    bad = g.kinds() & NONLINEAR_KINDS
    if bad:
        raise NonlinearCircuit(f"gates {sorted(bad)} are not linear")
    p = [Fraction(v) for v in p]
    n = len(g.inputs)
    forms: dict[int, Affine] = {}
    vals: dict[int, Fraction] = {}
    for k, node in enumerate(g.inputs):
        forms[node] = Affine([Fraction(int(i == k)) for i in range(n)])
        vals[node] = p[k]
    A, b = [], []

    def require_le(lhs: Affine, rhs: Affine):
        # lhs <= rhs  ->  (lhs - rhs).coef x <= rhs.const - lhs.const
        d = lhs - rhs
        A.append(list(d.coef))
        b.append(-d.const)

    for gate in g.topo_gates():
        ins = [forms[i] for i in gate.inputs]
        iv = [vals[i] for i in gate.inputs]
        k = gate.kind
        if k == CONST:
            f = Affine([ZERO] * n, gate.zeta)
        elif k == ADD:
            f = ins[0] + ins[1]
        elif k == SUB:
            f = ins[0] - ins[1]
        elif k == MUL_CONST:
            f = ins[0].scale(gate.zeta)
        elif k == DOUBLE_01:
            f = ins[0].scale(2)
        elif k == MAX:
            if iv[0] > iv[1] or (iv[0] == iv[1] and not flip_ties):
                require_le(ins[1], ins[0])
                f = ins[0]
            else:
                require_le(ins[0], ins[1])
                f = ins[1]
        elif k == MIN:
            if iv[0] < iv[1] or (iv[0] == iv[1] and not flip_ties):
                require_le(ins[0], ins[1])
                f = ins[0]
            else:
                require_le(ins[1], ins[0])
                f = ins[1]
        elif k == SUB_01:
            if iv[0] > iv[1] or (iv[0] == iv[1] and not flip_ties):
                require_le(ins[1], ins[0])
                f = ins[0] - ins[1]
            else:
                require_le(ins[0], ins[1])
                f = Affine([ZERO] * n)
        else:
            raise NonlinearCircuit(k)
        forms[gate.output] = f
        vals[gate.output] = gate.apply(iv)
    C = [list(forms[o].coef) for o in g.outputs]
    C0 = [forms[o].const for o in g.outputs]
    return LinearCell(A, b, C, C0, tuple(p))


@dataclass
class RoundingBudget:
    m: int
    eps: Fraction
    height: int
    size: int

    def to_json(self) -> dict:
        return {"m": self.m, "epsilon": fmt_q(self.eps), "height": self.height, "system_size": self.size}


def compute_budget(g: Circuit) -> RoundingBudget:
    """Hadamard-style bound on the bit size of LP vertices over all cells.

    Every reachable affine form of a node has coefficients of magnitude <= M,
    constant <= K and denominators dividing D.  Scaling a constraint row by D
    makes it integral with entries <= H = (M + K) D.  A vertex solves a square
    system of size k = n + 1 (n sphere coordinates plus z), so by Cramer and
    Hadamard every coordinate is a ratio with denominator at most
    ceil(sqrt(k))^k H^k < 2^m.  A positive optimum is then at least 1/2^m,
    and eps = 1/2^(m+1) rules it out.
    """
    bad = g.kinds() & NONLINEAR_KINDS
    if bad:
        raise NonlinearCircuit(f"gates {sorted(bad)} are not linear")
    M: dict[int, Fraction] = {}
    K: dict[int, Fraction] = {}
    D: dict[int, int] = {}
    for node in g.inputs:
        M[node], K[node], D[node] = Fraction(1), ZERO, 1
    H = 1
    for gate in g.topo_gates():
        a = gate.inputs
        k = gate.kind
        if k == CONST:
            m_, k_, d_ = ZERO, abs(gate.zeta), gate.zeta.denominator
        elif k in (ADD, SUB, SUB_01):
            m_, k_, d_ = M[a[0]] + M[a[1]], K[a[0]] + K[a[1]], math.lcm(D[a[0]], D[a[1]])
        elif k in (MAX, MIN):
            m_, k_, d_ = max(M[a[0]], M[a[1]]), max(K[a[0]], K[a[1]]), math.lcm(D[a[0]], D[a[1]])
            # branch constraint rows are differences of the two inputs
            H = max(H, math.ceil((M[a[0]] + M[a[1]] + K[a[0]] + K[a[1]]) * d_))
        elif k == MUL_CONST:
            z = abs(gate.zeta)
            m_, k_, d_ = M[a[0]] * z, K[a[0]] * z, D[a[0]] * gate.zeta.denominator
        elif k == DOUBLE_01:
            m_, k_, d_ = 2 * M[a[0]], 2 * K[a[0]], D[a[0]]
        else:
            raise NonlinearCircuit(k)
        if k == SUB_01:
            H = max(H, math.ceil((m_ + k_) * d_))
        M[gate.output], K[gate.output], D[gate.output] = m_, k_, d_
        H = max(H, math.ceil((m_ + k_ + 1) * d_))
    size = len(g.inputs) + 1
    hd = math.isqrt(size - 1) + 1 if math.isqrt(size) ** 2 != size else math.isqrt(size)
    bound = hd**size * H**size
    m = bound.bit_length()
    return RoundingBudget(m, Fraction(1, 2 ** (m + 1)), H, size)


# exact simplex


@dataclass
class LPResult:
    x: list[Fraction]
    objective: Fraction
    pivots: int = 0


def simplex(c, A_ub=(), b_ub=(), A_eq=(), b_eq=()) -> LPResult:
    """min c.x subject to A_ub x <= b_ub, A_eq x = b_eq, x >= 0.

    Dense two-phase tableau over Fractions with Bland's rule.
    Raises InfeasibleLP; unbounded problems raise ValueError.
    """
    c = [Fraction(v) for v in c]
    nv = len(c)
    rows: list[list[Fraction]] = []
    rhs: list[Fraction] = []
    n_slack = len(A_ub)
    for i, (row, r) in enumerate(zip(A_ub, b_ub)):
        full = [Fraction(v) for v in row] + [Fraction(int(k == i)) for k in range(n_slack)]
        rows.append(full)
        rhs.append(Fraction(r))
    for row, r in zip(A_eq, b_eq):
        rows.append([Fraction(v) for v in row] + [ZERO] * n_slack)
        rhs.append(Fraction(r))
    m = len(rows)
    for i in range(m):
        if rhs[i] < 0:
            rows[i] = [-v for v in rows[i]]
            rhs[i] = -rhs[i]
    ncols = nv + n_slack
    # artificials for every row keep phase one simple
    T = [rows[i] + [Fraction(int(k == i)) for k in range(m)] + [rhs[i]] for i in range(m)]
    basis = [ncols + i for i in range(m)]
    total = ncols + m
    pivots = 0

    def pivot(r, col):
        nonlocal pivots
        pivots += 1
        pr = T[r]
        inv = 1 / pr[col]
        T[r] = pr = [v * inv for v in pr]
        for i in range(m):
            if i != r and T[i][col] != 0:
                f = T[i][col]
                Ti = T[i]
                T[i] = [a - f * b for a, b in zip(Ti, pr)]
        basis[r] = col

    def run(cost, allowed):
        while True:
            # reduced costs
            cb = [cost[j] for j in basis]
            entering = None
            for j in range(total):
                if j not in allowed or j in basis:
                    continue
                red = cost[j] - sum((cb[i] * T[i][j] for i in range(m)), ZERO)
                if red < 0:
                    entering = j
                    break
            if entering is None:
                return
            best = None
            for i in range(m):
                a = T[i][entering]
                if a > 0:
                    ratio = T[i][-1] / a
                    if best is None or ratio < best[0] or (ratio == best[0] and basis[i] < basis[best[1]]):
                        best = (ratio, i)
            if best is None:
                raise ValueError("LP is unbounded")
            pivot(best[1], entering)

    phase1 = [ZERO] * ncols + [Fraction(1)] * m
    run(phase1, set(range(total)))
    infeas = sum((T[i][-1] for i in range(m) if basis[i] >= ncols), ZERO)
    if infeas > 0:
        raise InfeasibleLP(f"phase one ended with infeasibility {infeas}")
    # drive remaining artificials out of the basis
    for i in range(m):
        if basis[i] >= ncols:
            for j in range(ncols):
                if T[i][j] != 0:
                    pivot(i, j)
                    break
    cost = c + [ZERO] * n_slack + [ZERO] * m
    run(cost, set(range(ncols)))
    x = [ZERO] * ncols
    for i, j in enumerate(basis):
        if j < ncols:
            x[j] = T[i][-1]
    obj = sum((a * b for a, b in zip(c, x[:nv])), ZERO)
    return LPResult(x[:nv], obj, pivots)


@dataclass
class RoundingLP:
    """min z over (y, z) with x_i = s_i y_i."""

    signs: list[int]
    c: list[Fraction]
    A_ub: list[list[Fraction]]
    b_ub: list[Fraction]
    A_eq: list[list[Fraction]]
    b_eq: list[Fraction]
    cell: LinearCell = field(repr=False)

    def to_lp_text(self) -> str:
        """CPLEX LP format for external cross-checking.

        Each row is scaled by the lcm of its denominators so that every
        coefficient is an integer and the text stays exact.
        """
        n = len(self.signs)
        names = [f"y{i}" for i in range(n)] + ["z"]

        def expr(row, rhs):
            k = math.lcm(*(v.denominator for v in row), rhs.denominator)
            parts = []
            for v, nm in zip(row, names):
                if v == 0:
                    continue
                sgn = "-" if v < 0 else "+"
                parts.append(f"{sgn} {abs(v * k)} {nm}")
            s = " ".join(parts) or "0 z"
            return (s[2:] if s.startswith("+ ") else s), rhs * k

        lines = ["\\ exact rounding LP over y = s * x with s the sign pattern of the anchor",
                 "Minimize", " obj: z", "Subject To"]
        for k, (row, r) in enumerate(zip(self.A_ub, self.b_ub)):
            e, rhs = expr(row, r)
            lines.append(f" c{k}: {e} <= {rhs}")
        for k, (row, r) in enumerate(zip(self.A_eq, self.b_eq)):
            e, rhs = expr(row, r)
            lines.append(f" e{k}: {e} = {rhs}")
        lines += ["End", ""]
        return "\n".join(lines)


def build_rounding_lp(g: Circuit, p: Sequence, flip_ties: bool = False) -> RoundingLP:
    p = [Fraction(v) for v in p]
    cell = extract_cell(g, p, flip_ties)
    n = len(p)
    s = [1 if v >= 0 else -1 for v in p]
    A_ub, b_ub = [], []
    for row, rhs in zip(cell.A, cell.b):
        A_ub.append([a * si for a, si in zip(row, s)] + [ZERO])
        b_ub.append(rhs)
    for row, c0 in zip(cell.C, cell.C0):
        r = [a * si for a, si in zip(row, s)]
        A_ub.append(r + [Fraction(-1)])
        b_ub.append(-c0)
        A_ub.append([-a for a in r] + [Fraction(-1)])
        b_ub.append(c0)
    A_eq = [[Fraction(1)] * n + [ZERO]]
    b_eq = [Fraction(1)]
    c = [ZERO] * n + [Fraction(1)]
    return RoundingLP(s, c, A_ub, b_ub, A_eq, b_eq, cell)


@dataclass
class RoundingResult:
    x: tuple[Fraction, ...]
    z: Fraction
    lp: RoundingLP = field(repr=False)


def solve_rounding_lp(lp: RoundingLP) -> RoundingResult:
    res = simplex(lp.c, lp.A_ub, lp.b_ub, lp.A_eq, lp.b_eq)
    n = len(lp.signs)
    x = tuple(si * y for si, y in zip(lp.signs, res.x[:n]))
    return RoundingResult(x, res.x[n], lp)


def round_to_exact(bu: BUInstance, p: Sequence, flip_ties: bool = False) -> RoundingResult:
    """Exact solution in the cell of ``p``; refuses when the optimum is positive."""
    g = antipodal_difference(bu)
    lp = build_rounding_lp(g, p, flip_ties)
    res = solve_rounding_lp(lp)
    if res.z > 0:
        raise PositiveOptimum(res.z, res.x)
    assert l1(res.x) == 1
    return res


def round_with_retries(bu: BUInstance, points: Sequence[Sequence], walk: int = 8) -> RoundingResult:
    """Try each anchor; on a positive optimum re-anchor at the LP optimum and
    try again, up to ``walk`` times per starting point.

    An LP optimum usually sits on a cell boundary, where the default tie rule
    rebuilds the same cell, so every anchor is tried with both tie rules.
    """
    last = None
    for p in points:
        q = p
        for _ in range(walk + 1):
            moved = None
            for flip in (False, True):
                try:
                    return round_to_exact(bu, q, flip)
                except PositiveOptimum as exc:
                    last = exc
                    if exc.x is not None and tuple(exc.x) != tuple(q) and moved is None:
                        moved = exc.x
            if moved is None:
                break
            q = moved
    if last is not None:
        raise last
    raise InfeasibleLP("no anchor points supplied")
