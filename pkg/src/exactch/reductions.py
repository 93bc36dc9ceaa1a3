"""Hardness pipelines as executable transformations.

* systems of polynomial equations to a single polynomial (sum of squares);
* root finding on [0, 1]^N to consensus halving with one cut fewer than
  agents, via normalized positive parts q1, q2 and an agent that is balanced
  exactly when the two parts agree;
* normal-form games to a circuit whose fixed points are the Nash equilibria,
  in an unscaled form and in a form whose nodes all stay in [0, 1].
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .chmodel import CHSolution
from .circuit import (
    MUL_CONST,
    Circuit,
    CircuitBuilder,
    Gate,
)
from .embed import (
    EmbeddedInstance,
    add_finis,
    build_gadgets,
    encode_values_to_cuts,
    window,
)
from .errors import NormalizationFailure, ParseError, ValuesDoNotSatisfyCircuit
from .lowering import certify, lower_to_special, renumber_with_certificate
from .numerics import fmt_q, parse_q

ONE = Fraction(1)
HALF = Fraction(1, 2)
UNIT = (Fraction(0), ONE)


# polynomials


@dataclass(frozen=True)
class Polynomial:
    """Sum of monomials coef * prod x_i^e_i with integer coefficients."""

    nvars: int
    terms: tuple[tuple[int, tuple[int, ...]], ...] = ()

    def __post_init__(self):
        acc: dict[tuple[int, ...], int] = {}
        for coef, exps in self.terms:
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.nvars or any(e < 0 for e in exps):
                raise ParseError(f"exponent vector {exps} does not fit {self.nvars} variables")
            if int(coef) != coef:
                raise ParseError(f"coefficient {coef} is not an integer")
            acc[exps] = acc.get(exps, 0) + int(coef)
        terms = tuple((c, e) for e, c in sorted(acc.items(), key=lambda kv: (-sum(kv[0]), [-x for x in kv[0]])) if c != 0)
        object.__setattr__(self, "terms", terms)

    @classmethod
    def variable(cls, nvars: int, i: int) -> "Polynomial":
        return cls(nvars, ((1, tuple(int(k == i) for k in range(nvars))),))

    @classmethod
    def constant(cls, nvars: int, c: int) -> "Polynomial":
        return cls(nvars, ((c, (0,) * nvars),))

    def __add__(self, o: "Polynomial") -> "Polynomial":
        return Polynomial(self.nvars, self.terms + o.terms)

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.nvars, tuple((-c, e) for c, e in self.terms))

    def __sub__(self, o: "Polynomial") -> "Polynomial":
        return self + (-o)

    def __mul__(self, o: "Polynomial") -> "Polynomial":
        out = []
        for c1, e1 in self.terms:
            for c2, e2 in o.terms:
                out.append((c1 * c2, tuple(a + b for a, b in zip(e1, e2))))
        return Polynomial(self.nvars, tuple(out))

    def __call__(self, x: Sequence) -> Fraction:
        x = [Fraction(v) for v in x]
        total = Fraction(0)
        for c, e in self.terms:
            m = Fraction(c)
            for v, k in zip(x, e):
                m *= v**k
            total += m
        return total

    def degree(self) -> int:
        return max((sum(e) for _, e in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def to_json(self) -> dict:
        return {"vars": self.nvars, "terms": [{"coef": c, "exps": list(e)} for c, e in self.terms]}

    @classmethod
    def from_json(cls, data: dict) -> "Polynomial":
        try:
            n = int(data["vars"])
            terms = tuple((t["coef"], tuple(t["exps"])) for t in data["terms"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad polynomial JSON: {exc}") from exc
        for c, _ in terms:
            if not isinstance(c, int) or isinstance(c, bool):
                raise ParseError(f"coefficient {c!r} is not an integer")
        return cls(n, terms)

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for c, e in self.terms:
            mono = "*".join(f"X{i + 1}" + (f"^{k}" if k > 1 else "") for i, k in enumerate(e) if k)
            parts.append(f"{c}" + (f"*{mono}" if mono else ""))
        return " + ".join(parts).replace("+ -", "- ")


def conjunction_to_feasible(ps: Sequence[Polynomial], nvars: int | None = None) -> Polynomial:
    """q = sum of p_k^2; on the reals its zeros are the common zeros."""
    if not ps:
        return Polynomial(nvars or 0)
    n = ps[0].nvars
    if any(p.nvars != n for p in ps):
        raise ParseError("polynomials must share the variable count")
    q = Polynomial(n)
    for p in ps:
        q = q + p * p
    return q


# root finding -> consensus halving


@dataclass
class NormalForm:
    """p / (l * C_max) = q1 - q2 with positive coefficients c_j <= 1/l."""

    nvars: int
    q1: list[tuple[Fraction, tuple[int, ...]]]
    q2: list[tuple[Fraction, tuple[int, ...]]]
    l: int
    c_max: int

    def evaluate(self, x) -> tuple[Fraction, Fraction]:
        def part(ts):
            total = Fraction(0)
            for c, e in ts:
                m = c
                for v, k in zip(x, e):
                    m *= Fraction(v) ** k
                total += m
            return total

        return part(self.q1), part(self.q2)

    def to_json(self) -> dict:
        def enc(ts):
            return [{"c": fmt_q(c), "exps": list(e)} for c, e in ts]

        return {"vars": self.nvars, "q1": enc(self.q1), "q2": enc(self.q2), "l": self.l, "c_max": self.c_max}


def normal_form(p: Polynomial) -> NormalForm:
    l = len(p.terms)
    if l == 0:
        return NormalForm(p.nvars, [], [], 0, 0)
    c_max = max(abs(c) for c, _ in p.terms)
    q1, q2 = [], []
    for c, e in p.terms:
        cj = Fraction(abs(c), l * c_max)
        (q1 if c > 0 else q2).append((cj, e))
    return NormalForm(p.nvars, q1, q2, l, c_max)


def _balanced_sum(b: CircuitBuilder, nodes: list[int]) -> int:
    while len(nodes) > 1:
        nxt = [b.add(nodes[k], nodes[k + 1]) for k in range(0, len(nodes) - 1, 2)]
        if len(nodes) % 2:
            nxt.append(nodes[-1])
        nodes = nxt
    return nodes[0]


def feasible_circuit(nf: NormalForm) -> Circuit:
    """General circuit X -> (q1(X), q2(X)) over {CONST, ADD, MUL_CONST, MUL}.

    Every partial sum stays below (number of terms) / l <= 1.  An empty part
    is the constant 0.
    """
    b = CircuitBuilder()
    xs = [b.input() for _ in range(nf.nvars)]
    powers: dict[tuple[int, int], int] = {}

    def power(i: int, k: int) -> int:
        if k == 1:
            return xs[i]
        if (i, k) not in powers:
            half = power(i, k // 2)
            sq = b.mul(half, half)
            powers[(i, k)] = b.mul(sq, xs[i]) if k % 2 else sq
        return powers[(i, k)]

    def part(ts) -> int:
        terms = []
        for c, e in ts:
            factors = [power(i, k) for i, k in enumerate(e) if k]
            if not factors:
                terms.append(b.const(c))
                continue
            m = factors[0]
            for f in factors[1:]:
                m = b.mul(m, f)
            terms.append(b.mul_const(m, c))
        if not terms:
            return b.const(0)
        return _balanced_sum(b, terms)

    o1 = part(nf.q1)
    o2 = part(nf.q2)
    return b.build([o1, o2])


def _detach_outputs(c: Circuit, cert, outs: Sequence[int]):
    """Give each output its own unused node via MUL_CONST 1 copies."""
    nxt = max(c.nodes) + 1
    gates = list(c.gates)
    known = dict(cert.ranges)
    new_outs = []
    for o in outs:
        gates.append(Gate(MUL_CONST, (o,), nxt, ONE))
        known[nxt] = known[o]
        new_outs.append(nxt)
        nxt += 1
    c2 = Circuit(tuple(gates), c.inputs, tuple(new_outs))
    cert2 = certify(c2, known=known)
    cert2.node_count_in = cert.node_count_in
    cert2.assumptions = cert.assumptions
    return c2, cert2


def _used(c: Circuit) -> set[int]:
    return {i for g in c.gates for i in g.inputs}


@dataclass
class FeasibleReduction:
    polynomial: Polynomial
    normal: NormalForm
    general: Circuit
    special: Circuit
    embedded: EmbeddedInstance

    def node_values(self, x: Sequence) -> list[Fraction]:
        vals = self.special.evaluate_all([Fraction(v) for v in x])
        return [vals[i] for i in range(self.embedded.r)]

    def encode_root(self, x: Sequence) -> CHSolution:
        """Cuts for a root; they balance every agent including the last."""
        z = self.node_values(x)
        if z[-2] != z[-1]:
            raise ValuesDoNotSatisfyCircuit(f"q1 = {z[-2]} differs from q2 = {z[-1]}: not a root")
        return encode_values_to_cuts(self.embedded, z)


def feasible_reduction(p: Polynomial) -> FeasibleReduction:
    nf = normal_form(p)
    gen = feasible_circuit(nf)
    low, cert = lower_to_special(gen)
    o1, o2 = low.outputs
    if o1 == o2 or {o1, o2} & (_used(low) | set(low.inputs)):
        low, cert = _detach_outputs(low, cert, (o1, o2))
    low, cert = renumber_with_certificate(low, cert, last=low.outputs)
    r = len(low.nodes)
    assert tuple(low.outputs) == (r - 2, r - 1), "q1 and q2 must be the last two nodes"
    emb = add_finis(build_gadgets(low, cert))
    return FeasibleReduction(p, nf, gen, low, emb)


def feasible_to_ch(p: Polynomial) -> EmbeddedInstance:
    """Consensus-halving instance with n = 4r + 1 agents that has an
    (n - 1)-cut solution iff p has a root in [0, 1]^N."""
    return feasible_reduction(p).embedded


def _window_grid(lo: Fraction, hi: Fraction, step: Fraction) -> list[Fraction]:
    k = int((hi - lo) / step)
    return [lo + step * m for m in range(1, k) if lo + step * m < hi]


@dataclass
class GridSearchResult:
    solutions: list[CHSolution]
    nodes_visited: int
    complete: bool


def window_grid_search(emb: EmbeddedInstance, step=Fraction(1, 32), limit: int = 1, max_nodes: int = 10**7) -> GridSearchResult:
    """Exhaustive search for (n-1)-cut solutions with one cut on every grid
    point strictly inside each agent's window, for both orientations.

    Cut k lives in the window of node agent k, so after it is placed every
    agent whose density ends before the next window is fully determined and
    its balance is checked exactly; the last (finis) agent is checked once
    all cuts are placed.
    """
    inst = emb.instance
    step = Fraction(step)
    k = emb.cut_budget
    wins = [window(i // 4, i % 4) for i in range(k)]
    grids = [_window_grid(lo, hi, step) for lo, hi in wins]
    # agent a is determined once cut d(a) is placed
    determined_after: dict[int, list[int]] = {}
    for a, dens in enumerate(emb.densities):
        support_hi = max(
            (dens.breakpoints[s + 1] for s, pc in enumerate(dens.pieces) if any(pc)), default=dens.lo
        )
        d = next((j for j in range(k) if support_hi <= wins[j][1]), k - 1)
        determined_after.setdefault(d, []).append(a)
    totals = [inst.total(a) for a in range(inst.n)]
    L = inst.domain_length
    found: list[CHSolution] = []
    visited = 0

    def positive_mass(a: int, cuts: list[Fraction], first_positive: bool) -> Fraction:
        plus = Fraction(0)
        prev = Fraction(0)
        pos = first_positive
        for t in cuts + [L]:
            if pos:
                plus += inst.F(a, t) - inst.F(a, prev)
            prev = t
            pos = not pos
        return plus

    def dfs(j: int, cuts: list[Fraction], first_positive: bool) -> bool:
        nonlocal visited
        if j == k:
            found.append(CHSolution(tuple(cuts), "+" if first_positive else "-"))
            return len(found) >= limit
        for t in grids[j]:
            visited += 1
            if visited > max_nodes:
                raise RuntimeError("grid search node limit exceeded")
            cuts.append(t)
            ok = all(2 * positive_mass(a, cuts, first_positive) == totals[a] for a in determined_after.get(j, ()))
            if ok and dfs(j + 1, cuts, first_positive):
                return True
            cuts.pop()
        return False

    for first_positive in (False, True):
        if dfs(0, [], first_positive):
            return GridSearchResult(found, visited, False)
    return GridSearchResult(found, visited, True)


# games


@dataclass
class GameInstance:
    """Normal-form game; payoffs[i] lists player i's payoff for every pure
    profile in lexicographic order of itertools.product."""

    counts: tuple[int, ...]
    payoffs: tuple[tuple[Fraction, ...], ...]

    def __post_init__(self):
        self.counts = tuple(int(c) for c in self.counts)
        self.payoffs = tuple(tuple(Fraction(v) for v in row) for row in self.payoffs)
        if len(self.counts) < 2 or any(c < 1 for c in self.counts):
            raise NormalizationFailure("need at least two players with at least one strategy each")
        size = math.prod(self.counts)
        if len(self.payoffs) != self.d or any(len(row) != size for row in self.payoffs):
            raise NormalizationFailure(f"payoff tables must have {size} entries per player")

    @property
    def d(self) -> int:
        return len(self.counts)

    @property
    def total_strategies(self) -> int:
        return sum(self.counts)

    def profiles(self):
        return itertools.product(*(range(c) for c in self.counts))

    def payoff(self, i: int, profile: Sequence[int]) -> Fraction:
        idx = 0
        for s, c in zip(profile, self.counts):
            idx = idx * c + s
        return self.payoffs[i][idx]

    def split(self, x: Sequence) -> list[list[Fraction]]:
        out, k = [], 0
        for c in self.counts:
            out.append([Fraction(v) for v in x[k : k + c]])
            k += c
        return out

    def expected(self, x: Sequence) -> list[list[Fraction]]:
        """v_ij(x): payoff of pure strategy j against the others' mix."""
        mix = self.split(x)
        v = [[Fraction(0)] * c for c in self.counts]
        for prof in self.profiles():
            for i in range(self.d):
                w = Fraction(1)
                for k, s in enumerate(prof):
                    if k != i:
                        w *= mix[k][s]
                if w:
                    v[i][prof[i]] += w * self.payoff(i, prof)
        return v

    def normalized(self) -> "GameInstance":
        """Per-player affine rescaling into [0, 1/N], N = total strategy count."""
        N = self.total_strategies
        rows = []
        for row in self.payoffs:
            lo, hi = min(row), max(row)
            if hi == lo:
                rows.append(tuple(Fraction(0) for _ in row))
            else:
                rows.append(tuple((u - lo) / ((hi - lo) * N) for u in row))
        return GameInstance(self.counts, tuple(rows))

    def to_json(self) -> dict:
        return {"strategies": list(self.counts), "payoffs": [[fmt_q(v) for v in row] for row in self.payoffs]}

    @classmethod
    def from_json(cls, data: dict) -> "GameInstance":
        try:
            return cls(tuple(data["strategies"]), tuple(tuple(parse_q(v) for v in row) for row in data["payoffs"]))
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad game JSON: {exc}") from exc


def regret(game: GameInstance, x: Sequence) -> Fraction:
    """Largest gain any player gets from a pure deviation."""
    v = game.expected(x)
    mix = game.split(x)
    return max(max(vi) - sum(p * u for p, u in zip(xi, vi)) for vi, xi in zip(v, mix))


def comparators(width: int) -> list[tuple[int, int]]:
    """Batcher odd-even merge sort; each pair (i, j), i < j, puts the larger
    value at i.  Widths that are not powers of two drop comparators touching
    the padding, which would hold values below everything else."""
    if width < 1:
        raise ValueError("width must be positive")
    size = 1 << (width - 1).bit_length()
    out: list[tuple[int, int]] = []

    def merge(lo: int, n: int, r: int):
        m = r * 2
        if m < n:
            merge(lo, n, m)
            merge(lo + r, n, m)
            for i in range(lo + r, lo + n - r, m):
                out.append((i, i + r))
        else:
            out.append((lo, lo + r))

    def sort(lo: int, n: int):
        if n > 1:
            m = n // 2
            sort(lo, m)
            sort(lo + m, m)
            merge(lo, n, 1)

    sort(0, size)
    return [(i, j) for i, j in out if j < width]


def sort_descending(b: CircuitBuilder, nodes: Sequence[int]) -> list[int]:
    wires = list(nodes)
    for i, j in comparators(len(wires)):
        wires[i], wires[j] = b.max(wires[i], wires[j]), b.min(wires[i], wires[j])
    return wires


def sorting_network(width: int) -> Circuit:
    b = CircuitBuilder()
    xs = [b.input() for _ in range(width)]
    return b.build(sort_descending(b, xs))


def _expected_nodes(b: CircuitBuilder, game: GameInstance, xs: list[list[int]], const_mul: bool):
    """Nodes for v_ij; ``const_mul`` multiplies by constants with MUL(CONST, .)."""
    v = []
    for i in range(game.d):
        row = []
        for j in range(game.counts[i]):
            terms = []
            others = [range(c) if k != i else [j] for k, c in enumerate(game.counts)]
            for prof in itertools.product(*others):
                u = game.payoff(i, prof)
                if u == 0:
                    continue
                factors = [xs[k][s] for k, s in enumerate(prof) if k != i]
                m = factors[0]
                for f in factors[1:]:
                    m = b.mul(m, f)
                terms.append(b.mul(b.const(u), m) if const_mul else b.mul_const(m, u))
            row.append(b.sum(terms) if terms else b.const(0))
        v.append(row)
    return v


def _player_inputs(b: CircuitBuilder, game: GameInstance) -> list[list[int]]:
    return [[b.input() for _ in range(c)] for c in game.counts]


def game_circuit_unscaled(game: GameInstance) -> Circuit:
    """x -> projection of x + v(x) onto each player's simplex:
    t_i = max_l (sum of the l largest y - 1) / l and x' = max(y - t_i, 0)."""
    g = game.normalized()
    b = CircuitBuilder()
    xs = _player_inputs(b, g)
    v = _expected_nodes(b, g, xs, const_mul=False)
    outs = []
    zero = b.const(0)
    one = b.const(1)
    for i in range(g.d):
        y = [b.add(x, vv) for x, vv in zip(xs[i], v[i])]
        z = sort_descending(b, y)
        ts = []
        acc = None
        for l, zl in enumerate(z, start=1):
            acc = zl if acc is None else b.add(acc, zl)
            ts.append(b.mul_const(b.sub(acc, one), Fraction(1, l)))
        t = ts[0]
        for tl in ts[1:]:
            t = b.max(t, tl)
        outs += [b.max(b.sub(yj, t), zero) for yj in y]
    return b.build(outs)


@dataclass
class ScaledGameCircuit:
    circuit: Circuit
    hints: dict[int, tuple[Fraction, Fraction]] = field(default_factory=dict)


def game_circuit_scaled(game: GameInstance) -> ScaledGameCircuit:
    """Same map with every node in [0, 1] on the product of simplices:

    p = x/2 + v/2, q = p sorted, t''_l = S_l / (2l) + 1/2 - 1/(4l),
    t' = 2 (max_l t''_l - 1/2) and x' = 2 max(p - t', 0).

    Prefix sums S_l, payoffs v_ij and the gaps p - t' carry range hints
    that hold on the product of simplices.
    """
    g = game.normalized()
    N = g.total_strategies
    b = CircuitBuilder()
    xs = _player_inputs(b, g)
    v = _expected_nodes(b, g, xs, const_mul=True)
    hints: dict[int, tuple[Fraction, Fraction]] = {}
    for row in v:
        for node in row:
            hints[node] = (Fraction(0), Fraction(1, N))
    half = b.const(HALF)
    outs = []
    for i in range(g.d):
        p = [b.add(b.mul(half, x), b.mul(half, vv)) for x, vv in zip(xs[i], v[i])]
        q = sort_descending(b, p)
        tts = []
        acc = None
        for l, ql in enumerate(q, start=1):
            acc = ql if acc is None else b.add(acc, ql)
            hints[acc] = UNIT
            scaled = b.mul(b.const(Fraction(1, 2 * l)), acc)
            tts.append(b.sub01(b.add(scaled, half), b.const(Fraction(1, 4 * l))))
        tt = tts[0]
        for t in tts[1:]:
            tt = b.max(tt, t)
        tp = b.double(b.sub01(tt, half))
        for pj in p:
            gap = b.sub01(pj, tp)
            # x'_ij = 2 gap is a coordinate of a simplex point
            hints[gap] = (Fraction(0), HALF)
            outs.append(b.double(gap))
    return ScaledGameCircuit(b.build(outs), hints)


def game_to_circuit(game: GameInstance) -> Circuit:
    return game_circuit_scaled(game).circuit


@dataclass
class CyclicGameCircuit:
    """Closed special circuit: the input of strategy (i, j) is the node that
    computes its update."""

    circuit: Circuit
    lowered: Circuit
    certificate: object
    strategy_nodes: list[int]

    def values_at(self, x: Sequence) -> list[Fraction]:
        """Node values of the closure at a fixed point x."""
        vals = self.lowered.evaluate_all([Fraction(v) for v in x])
        outs = self.lowered.evaluate([Fraction(v) for v in x])
        if [Fraction(v) for v in x] != outs:
            raise ValuesDoNotSatisfyCircuit("x is not a fixed point")
        rename = self._rename
        z = [Fraction(0)] * len(self.circuit.gates)
        for old, val in vals.items():
            z[rename[old]] = val
        return z

    _rename: dict = field(default_factory=dict, repr=False)


def lower_game(game: GameInstance):
    sg = game_circuit_scaled(game)
    return lower_to_special(sg.circuit, hints=sg.hints)


def cyclic_closure(game: GameInstance) -> CyclicGameCircuit:
    """Lower the scaled circuit and connect each output to its input."""
    low, cert = lower_game(game)
    low, cert = renumber_with_certificate(low, cert)
    if set(low.outputs) & set(low.inputs):
        raise NormalizationFailure("an output is an input; the closure would be degenerate")
    merge = dict(zip(low.inputs, low.outputs))
    gate_nodes = [g.output for g in low.gates]
    rename = {old: k for k, old in enumerate(gate_nodes)}
    for inp, out in merge.items():
        rename[inp] = rename[out]
    gates = tuple(Gate(g.kind, tuple(rename[i] for i in g.inputs), rename[g.output], g.zeta) for g in low.gates)
    closed = Circuit(gates, (), (), cyclic=True, merged=tuple((inp, out) for inp, out in merge.items()))
    ranges = {}
    for old, r in cert.ranges.items():
        k = rename[old]
        ranges[k] = r if k not in ranges else (min(ranges[k][0], r[0]), max(ranges[k][1], r[1]))
    ccert = certify(closed, known=ranges)
    ccert.node_count_in = cert.node_count_in
    ccert.assumptions = dict(cert.assumptions, closure="outputs identified with inputs")
    return CyclicGameCircuit(closed, low, ccert, [rename[o] for o in low.outputs], rename)


def embed_game(game: GameInstance) -> tuple[CyclicGameCircuit, EmbeddedInstance]:
    cyc = cyclic_closure(game)
    return cyc, build_gadgets(cyc.circuit, cyc.certificate)


def fixed_points(game: GameInstance, step=Fraction(1, 4)) -> list[tuple[Fraction, ...]]:
    """Grid profiles x with G(x) = x exactly, using the unscaled circuit."""
    c = game_circuit_unscaled(game)
    step = Fraction(step)
    per_player = []
    for n in game.counts:
        k = int(1 / step)
        mixes = [tuple(Fraction(a, k) for a in comp) for comp in _compositions(k, n)]
        per_player.append(mixes)
    out = []
    for combo in itertools.product(*per_player):
        x = [v for mix in combo for v in mix]
        if c.evaluate(x) == x:
            out.append(tuple(x))
    return out


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def matching_pennies() -> GameInstance:
    return GameInstance((2, 2), ((1, -1, -1, 1), (-1, 1, 1, -1)))
