"""Consensus halving as a Borsuk-Ulam instance, the reverse decoder, and an
approximate solver based on Tucker's lemma.

A point x of the L1 sphere S^n in R^(n+1) is read as an n-cut: |x_j| is the
width of piece j (scaled by the domain length) and the sign of x_j its label.
The map b(x)_i = F_i(A+) satisfies b(-x)_i = F_i(A-), so b(x) = b(-x) exactly
at consensus halving solutions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

from .chmodel import CHInstance, CHSolution, verify
from .circuit import Circuit, CircuitBuilder
from .embed import density_to_integral_circuit
from .errors import (
    DimensionTooLarge,
    NonCircuitValuation,
    NotABUSolution,
    NotOnSphere,
    ParseError,
)
from .numerics import PiecewisePoly, fmt_q, parse_q

SEARCH_LIMIT = 3


@dataclass(frozen=True)
class BUInstance:
    """Map f: R^(d+1) -> R^d given by a circuit, restricted to the L1 sphere."""

    d: int
    circuit: Circuit

    def __post_init__(self):
        if len(self.circuit.inputs) != self.d + 1 or len(self.circuit.outputs) != self.d:
            raise ValueError(f"circuit must have {self.d + 1} inputs and {self.d} outputs")

    @property
    def linear(self) -> bool:
        return self.circuit.is_linear()

    def f(self, x) -> list[Fraction]:
        return self.circuit.evaluate(list(x))

    def g(self, x) -> list[Fraction]:
        fx = self.f(x)
        fm = self.f([-v for v in x])
        return [a - b for a, b in zip(fx, fm)]

    def to_json(self) -> dict:
        return {"d": self.d, "linear": self.linear, "circuit": self.circuit.to_json()}

    @classmethod
    def from_json(cls, data: dict) -> "BUInstance":
        try:
            return cls(int(data["d"]), Circuit.from_json(data["circuit"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad BU instance JSON: {exc}") from exc


@dataclass(frozen=True)
class ApproxSolution:
    x: tuple[Fraction, ...]
    residual: Fraction

    def to_json(self) -> dict:
        return {"x": [fmt_q(v) for v in self.x], "residual": fmt_q(self.residual)}

    @classmethod
    def from_json(cls, data: dict) -> "ApproxSolution":
        try:
            return cls(tuple(parse_q(v) for v in data["x"]), parse_q(data.get("residual", "0/1")))
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad BU solution JSON: {exc}") from exc


@dataclass(frozen=True)
class LipschitzWitness:
    x: tuple[Fraction, ...]
    y: tuple[Fraction, ...]
    ratio: Fraction

    def to_json(self) -> dict:
        return {"x": [fmt_q(v) for v in self.x], "y": [fmt_q(v) for v in self.y], "ratio": fmt_q(self.ratio)}


def l1(x) -> Fraction:
    return sum((abs(Fraction(v)) for v in x), Fraction(0))


def linf(x) -> Fraction:
    return max((abs(Fraction(v)) for v in x), default=Fraction(0))


# CH -> BU


def agent_circuit(a) -> Circuit:
    """Integral circuit of an agent, converting piecewise data if needed."""
    if isinstance(a, Circuit):
        if len(a.inputs) != 1 or len(a.outputs) != 1:
            raise NonCircuitValuation("agent circuit must have one input and one output")
        return a
    if isinstance(a, PiecewisePoly):
        if a(a.lo) != 0 or a.lo != 0:
            raise NonCircuitValuation("integral must start at 0 with value 0")
        return density_to_integral_circuit(a.derivative(), general=True)
    raise NonCircuitValuation(f"unsupported valuation {type(a).__name__}")


def ch_to_bu(inst: CHInstance) -> BUInstance:
    """Borsuk-Ulam instance whose map sends x on S^n to the positive masses."""
    return BUInstance(inst.n, positive_mass_circuit(inst))


def positive_mass_circuit(inst: CHInstance, cuts: int | None = None) -> Circuit:
    """Circuit for b(x)_i = F_i(A+) with t_j = t_{j-1} + L|x_j|,
    p_j = max(x_j, 0) and q_j = F_i(t_{j-1} + L p_j) - F_i(t_{j-1}).

    It has ``cuts + 1`` inputs (default n + 1) and one output per agent.
    """
    n = inst.n if cuts is None else cuts
    F = [agent_circuit(a) for a in inst.agents]
    L = inst.domain_length
    b = CircuitBuilder()
    xs = [b.input() for _ in range(n + 1)]
    zero = b.const(0)
    t_prev = zero
    starts, pos = [], []
    for x in xs:
        p = b.max(x, zero)
        m = b.max(b.mul_const(x, -1), zero)
        width = b.add(p, m)
        if L != 1:
            width = b.mul_const(width, L)
            p = b.mul_const(p, L)
        starts.append(t_prev)
        pos.append(p)
        t_prev = b.add(t_prev, width)
    outs = []
    for Fi in F:
        at_start = {}
        qs = []
        for j in range(n + 1):
            s = starts[j]
            if s not in at_start:
                at_start[s] = b.inline(Fi, [s])[0]
            hi = b.inline(Fi, [b.add(s, pos[j])])[0]
            qs.append(b.sub(hi, at_start[s]))
        outs.append(b.sum(qs))
    return b.build(outs)


def antipodal_difference(bu: BUInstance) -> Circuit:
    """Circuit for g(x) = f(x) - f(-x)."""
    b = CircuitBuilder()
    xs = [b.input() for _ in range(bu.d + 1)]
    neg = [b.mul_const(x, -1) for x in xs]
    fx = b.inline(bu.circuit, xs)
    fm = b.inline(bu.circuit, neg)
    return b.build([b.sub(u, v) for u, v in zip(fx, fm)])


# BU -> CH


def decode_bu_solution(x: Sequence, inst: CHInstance, tol=0) -> CHSolution:
    """Alternating n-cut from a sphere point: zeros move to the right end,
    same-sign neighbours merge, and widths accumulate into cut positions."""
    x = [Fraction(v) for v in x]
    if l1(x) != 1:
        raise NotOnSphere(f"sum |x_j| = {l1(x)} != 1")
    sol = point_to_cuts(x, inst.domain_length)
    v = verify(inst, sol, tol)
    if not v.ok:
        raise NotABUSolution(f"decoded cuts do not balance all agents within {tol}: {v.reason}")
    return sol


def point_to_cuts(x: Sequence, domain_length=1) -> CHSolution:
    L = Fraction(domain_length)
    n = len(x) - 1
    runs: list[Fraction] = []
    for v in x:
        v = Fraction(v)
        if v == 0:
            continue
        if runs and (runs[-1] > 0) == (v > 0):
            runs[-1] += v
        else:
            runs.append(v)
    cuts = []
    acc = Fraction(0)
    for v in runs[:-1]:
        acc += abs(v) * L
        cuts.append(acc)
    cuts += [L] * (n - len(cuts))
    sign = "+" if runs and runs[0] > 0 else "-"
    return CHSolution(tuple(cuts), sign)


def decoder_circuit(n: int, domain_length=1) -> Circuit:
    """Comparison-gate circuit mapping x in S^n to (t_1..t_n, [x_1 > 0]).

    Stage one bubbles zero coordinates to the right end; stage two merges
    equal-sign neighbours, each merge followed by a bubbling pass.  A merge
    at position j is repeated until no equal-sign neighbour can remain, since
    a single merge only absorbs one coordinate.
    """
    L = Fraction(domain_length)
    b = CircuitBuilder()
    xs = [b.input() for _ in range(n + 1)]
    one = b.const(1)
    zero = b.const(0)

    def nonzero(v):
        return b.add(b.cmp_gt(v), b.cmp_gt(b.mul_const(v, -1)))

    def shift_pass(v):
        v = list(v)
        for j in range(n):
            keep = nonzero(v[j])
            drop = b.sub(one, keep)
            a = b.add(b.mul(keep, v[j]), b.mul(drop, v[j + 1]))
            c = b.add(b.mul(keep, v[j + 1]), b.mul(drop, v[j]))
            v[j], v[j + 1] = a, c
        return v

    v = xs
    for _ in range(n):
        v = shift_pass(v)
    for j in range(n):
        for _ in range(n - j):
            same = b.cmp_gt(b.mul(v[j], v[j + 1]))
            a = b.add(v[j], b.mul(same, v[j + 1]))
            c = b.mul(b.sub(one, same), v[j + 1])
            v = list(v)
            v[j], v[j + 1] = a, c
            v = shift_pass(v)
    outs = []
    t = zero
    for j in range(n):
        w = b.add(b.max(v[j], zero), b.max(b.mul_const(v[j], -1), zero))
        t = b.add(t, b.mul_const(w, L) if L != 1 else w)
        outs.append(t)
    outs.append(b.cmp_gt(v[0]))
    return b.build(outs)


def run_decoder_circuit(c: Circuit, x: Sequence) -> CHSolution:
    vals = c.evaluate([Fraction(v) for v in x])
    return CHSolution(tuple(vals[:-1]), "+" if vals[-1] == 1 else "-")


# verification


@dataclass
class BUVerdict:
    ok: bool
    on_sphere: bool
    residual: Fraction | None
    reason: str = ""

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "on_sphere": self.on_sphere,
            "residual": None if self.residual is None else fmt_q(self.residual),
            "reason": self.reason,
        }


def bu_verify(bu: BUInstance, x: Sequence, tol=0) -> BUVerdict:
    x = [Fraction(v) for v in x]
    if len(x) != bu.d + 1:
        return BUVerdict(False, False, None, f"expected {bu.d + 1} coordinates")
    if l1(x) != 1:
        return BUVerdict(False, False, None, "NotOnSphere")
    res = linf(bu.g(x))
    ok = res <= Fraction(tol)
    return BUVerdict(ok, True, res, "" if ok else f"residual {res} exceeds {tol}")


# Tucker search


def tucker_label(g: Sequence) -> int:
    """+-(i+1) for the coordinate of largest |g_i| (lowest index on ties),
    signed by g_i; a zero vector gets +1."""
    best = 0
    for i in range(1, len(g)):
        if abs(g[i]) > abs(g[best]):
            best = i
    return best + 1 if g[best] >= 0 else -(best + 1)


def mesh_size(eps, lam) -> int:
    """Number of subdivisions m, so adjacent vertices are 1/m <= eps/lam apart."""
    eps, lam = Fraction(eps), Fraction(lam)
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    if lam <= 0:
        return 1
    return max(1, math.ceil(lam / eps))


def edge_steps(d: int) -> list[tuple[int, ...]]:
    """Lattice steps of the triangulation edges in barycentric coordinates.

    Vertices of a facet are k >= 0 with sum(k) = m; in cumulative coordinates
    c_i = k_0 + ... + k_i (i < d) the facet is a Kuhn simplex and edges are
    steps by 0/1 vectors.  Translated back to k this gives the steps below.
    """
    steps = []
    for size in range(1, d + 1):
        for J in itertools.combinations(range(d), size):
            Js = set(J)
            dk = [(1 if i in Js else 0) - (1 if i - 1 in Js else 0) for i in range(d)]
            dk.append(-(1 if d - 1 in Js else 0))
            steps.append(tuple(dk))
    return steps


def _facet_lattice(d: int, m: int):
    import numpy as np

    grids = np.meshgrid(*[np.arange(m + 1)] * d, indexing="ij")
    C = np.stack([g.ravel() for g in grids], axis=1) if d else np.zeros((1, 0), dtype=int)
    ok = np.ones(len(C), dtype=bool)
    for i in range(1, d):
        ok &= C[:, i - 1] <= C[:, i]
    return C, ok


def _labels(bu: BUInstance, X):
    import numpy as np

    G = bu.circuit.evaluate_batch(X) - bu.circuit.evaluate_batch(-X)
    A = np.abs(G)
    idx = np.argmax(A, axis=1)
    val = G[np.arange(len(G)), idx]
    lab = np.where(val >= 0, idx + 1, -(idx + 1))
    return lab, A.max(axis=1)


def tucker_candidates(bu: BUInstance, eps, lam, max_dim: int = SEARCH_LIMIT) -> Iterator:
    """Certified outcomes from complementary edges, in scan order.

    Each yielded item is an :class:`ApproxSolution` (exactly checked residual
    <= eps) or a :class:`LipschitzWitness` (exactly checked ratio > lam).
    Labels are computed in floating point; every candidate edge is re-checked
    exactly, so a mislabelled edge is skipped rather than trusted.
    """
    import numpy as np

    d = bu.d
    if d > max_dim:
        raise DimensionTooLarge(f"dimension {d} exceeds the search limit {max_dim}; verify externally supplied solutions instead")
    eps, lam = Fraction(eps), Fraction(lam)
    m = mesh_size(eps, lam)
    C, valid = _facet_lattice(d, m)
    K = np.empty((len(C), d + 1), dtype=np.int64)
    prev = np.zeros(len(C), dtype=np.int64)
    for i in range(d):
        K[:, i] = C[:, i] - prev
        prev = C[:, i]
    K[:, d] = m - prev
    shape = (m + 1,) * d
    steps = edge_steps(d)
    # only facets with s_0 = +1: the others are antipodal images
    for tail in itertools.product((1, -1), repeat=d):
        s = np.array((1,) + tail)
        X = (K * s) / m
        lab = np.zeros(len(C), dtype=np.int64)
        lab[valid], amax = _labels(bu, X[valid])
        # a vertex with g = 0 breaks label oddness but is itself a solution
        for h in np.nonzero(valid)[0][amax == 0]:
            u = tuple(Fraction(int(s[i] * K[h, i]), m) for i in range(d + 1))
            if not any(bu.g(u)):
                yield ApproxSolution(u, Fraction(0))
        for dk in steps:
            dc = np.cumsum(dk[:-1]) if d else np.zeros(0, dtype=int)
            # neighbour of c is c + dc (dc is a 0/1 vector)
            nb = C + dc
            inside = valid & np.all(nb <= m, axis=1)
            if not inside.any():
                continue
            nb_flat = np.ravel_multi_index(tuple(np.clip(nb, 0, m).T), shape) if d else np.zeros(len(C), dtype=int)
            inside &= valid[nb_flat]
            hits = np.nonzero(inside & (lab == -lab[nb_flat]))[0]
            for h in hits:
                u = tuple(Fraction(int(s[i] * K[h, i]), m) for i in range(d + 1))
                j = nb_flat[h]
                v = tuple(Fraction(int(s[i] * K[j, i]), m) for i in range(d + 1))
                out = certify_edge(bu, u, v, eps, lam)
                if out is not None:
                    yield out


def certify_edge(bu: BUInstance, u, v, eps, lam):
    """Exact check of a candidate complementary edge."""
    gu, gv = bu.g(u), bu.g(v)
    lu, lv = tucker_label(gu), tucker_label(gv)
    nu, nv = linf(gu), linf(gv)
    if nu == 0:
        return ApproxSolution(tuple(u), Fraction(0))
    if nv == 0:
        return ApproxSolution(tuple(v), Fraction(0))
    if lu != -lv:
        return None
    best, nb = (u, nu) if nu <= nv else (v, nv)
    if nb <= eps:
        return ApproxSolution(tuple(best), nb)
    dist = linf([a - b for a, b in zip(u, v)])
    for p, q in ((u, v), ([-a for a in u], [-a for a in v])):
        ratio = linf([a - b for a, b in zip(bu.f(p), bu.f(q))]) / dist
        if ratio > lam:
            return LipschitzWitness(tuple(p), tuple(q), ratio)
    return None


def tucker_solve(bu: BUInstance, eps, lam, max_dim: int = SEARCH_LIMIT):
    """First certified outcome of the complementary-edge scan."""
    for out in tucker_candidates(bu, eps, lam, max_dim):
        return out
    raise NotABUSolution("no certified complementary edge found (floating-point labels disagreed everywhere)")
