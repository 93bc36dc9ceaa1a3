"""Lowering of general circuits to the special gate set with range certificates.

The special gate set is {CONST, ADD, MUL_CONST, SQUARE, SUB_01, DOUBLE_01}
with constants in (0, 1], every node value in [0, 1] and both inputs of every
adder in [0, 1/2].  Each original gate is rewritten with the identities

    a + b       = 2 (a/2 + b/2)
    a * b       = 2 [ (a/2 + b/2)^2 - ((a/2)^2 + (b/2)^2) ]
    max(a, b)   = (a + b)/2 + |a - b|/2
    min(a, b)   = (a + b)/2 - |a - b|/2,   |a - b|/2 = (a -0 b)/2 + (b -0 a)/2

where ``-0`` is the capped subtraction.  Each emitted node carries a range
that is the naive interval of its gate intersected with the range implied by
the identity it realises; both are sound, so the intersection is too.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .circuit import (
    ADD,
    CMP_GT,
    CONST,
    DOUBLE_01,
    MAX,
    MIN,
    MUL,
    MUL_CONST,
    SQUARE,
    SUB,
    SUB_01,
    Circuit,
    Gate,
    Interval,
    gate_interval,
    intersect,
    interval_ranges,
)
from .errors import ComparisonGateForbidden, RangeUnprovable
from .numerics import fmt_q

HALF = Fraction(1, 2)
ZERO = Fraction(0)
ONE = Fraction(1)
UNIT: Interval = (ZERO, ONE)


def _within(r: Interval, box: Interval) -> bool:
    return box[0] <= r[0] and r[1] <= box[1]


@dataclass
class SpecialCircuitCertificate:
    circuit_id: str
    ranges: dict[int, Interval]
    adder_inputs: list[tuple[int, Interval, Interval]]
    doubler_inputs: list[tuple[int, Interval]]
    node_count_in: int
    node_count_out: int
    assumptions: dict = field(default_factory=dict)

    @property
    def ratio(self) -> Fraction:
        return Fraction(self.node_count_out, max(self.node_count_in, 1))

    def is_valid(self) -> bool:
        return (
            all(_within(r, UNIT) for r in self.ranges.values())
            and all(_within(a, (ZERO, HALF)) and _within(b, (ZERO, HALF)) for _, a, b in self.adder_inputs)
            and all(_within(a, (ZERO, HALF)) for _, a in self.doubler_inputs)
        )

    def to_json(self) -> dict:
        return {
            "circuit_id": self.circuit_id,
            "ranges": {str(n): [fmt_q(lo), fmt_q(hi)] for n, (lo, hi) in sorted(self.ranges.items())},
            "adder_inputs": [
                {"gate": g, "in1": [fmt_q(a[0]), fmt_q(a[1])], "in2": [fmt_q(b[0]), fmt_q(b[1])]}
                for g, a, b in self.adder_inputs
            ],
            "doubler_inputs": [{"gate": g, "in": [fmt_q(a[0]), fmt_q(a[1])]} for g, a in self.doubler_inputs],
            "node_count_in": self.node_count_in,
            "node_count_out": self.node_count_out,
            "assumptions": self.assumptions,
        }


def certify(c: Circuit, input_ranges: Sequence[Interval] | None = None, hints=None, known=None) -> SpecialCircuitCertificate:
    """Check that ``c`` is a special circuit and build its certificate.

    ``known`` may supply tighter sound ranges (for instance from lowering);
    otherwise plain interval propagation is used.
    """
    from .circuit import validate

    viol = validate(c, special=True)
    if viol:
        raise RangeUnprovable("; ".join(map(str, viol)))
    rng = dict(known) if known is not None else interval_ranges(c, input_ranges, hints)
    adders, doublers = [], []
    for idx, g in enumerate(c.gates):
        if g.kind == ADD:
            a, b = rng[g.inputs[0]], rng[g.inputs[1]]
            if not (_within(a, (ZERO, HALF)) and _within(b, (ZERO, HALF))):
                raise RangeUnprovable(f"adder gate {idx} inputs {a}, {b} not within [0, 1/2]")
            adders.append((idx, a, b))
        elif g.kind == DOUBLE_01:
            a = rng[g.inputs[0]]
            if not _within(a, (ZERO, HALF)):
                raise RangeUnprovable(f"doubler gate {idx} input {a} not within [0, 1/2]")
            doublers.append((idx, a))
    for n, r in rng.items():
        if not _within(r, UNIT):
            raise RangeUnprovable(f"node {n} range [{r[0]}, {r[1]}] not within [0, 1]")
    return SpecialCircuitCertificate(c.ident(), rng, adders, doublers, len(c.nodes), len(c.nodes))


class _Emitter:
    """Builder that tracks a sound range for every emitted node and shares
    structurally identical gates."""

    def __init__(self):
        self.gates: list[Gate] = []
        self.inputs: list[int] = []
        self.ranges: dict[int, Interval] = {}
        self._memo: dict[tuple, int] = {}
        self._next = 0

    def input(self, r: Interval) -> int:
        n = self._next
        self._next += 1
        self.inputs.append(n)
        self.ranges[n] = r
        return n

    def emit(self, kind: str, *inputs: int, zeta=None, semantic: Interval | None = None) -> int:
        key = (kind, inputs, zeta)
        if key in self._memo:
            n = self._memo[key]
            if semantic is not None:
                self.ranges[n] = intersect(self.ranges[n], semantic)
            return n
        g = Gate(kind, inputs, self._next, zeta)
        r = gate_interval(g, [self.ranges[i] for i in inputs])
        if semantic is not None:
            r = intersect(r, semantic)
        self._next += 1
        self.gates.append(g)
        self.ranges[g.output] = r
        self._memo[key] = g.output
        return g.output

    # helpers
    def half(self, a: int) -> int:
        return self.emit(MUL_CONST, a, zeta=HALF)

    def zero(self) -> int:
        one = self.emit(CONST, zeta=ONE)
        return self.emit(SUB_01, one, one)

    def const(self, z: Fraction) -> int:
        if z == 0:
            return self.zero()
        if not (0 < z <= 1):
            raise RangeUnprovable(f"constant {z} outside [0, 1]")
        return self.emit(CONST, zeta=z)

    def add(self, a: int, b: int, out: Interval) -> int:
        s = self.emit(ADD, self.half(a), self.half(b), semantic=(out[0] / 2, out[1] / 2))
        return self.emit(DOUBLE_01, s, semantic=out)

    def mul_const(self, a: int, z: Fraction, out: Interval) -> int:
        if z == 0:
            return self.zero()
        if z < 0:
            raise RangeUnprovable(f"negative constant {z} in MUL_CONST")
        k = 0
        while z / 2**k > 1:
            k += 1
        node = self.emit(MUL_CONST, a, zeta=z / 2**k)
        for m in range(k, 0, -1):
            scale = Fraction(1, 2**m)
            self.ranges[node] = intersect(self.ranges[node], (out[0] * scale, out[1] * scale))
            node = self.emit(DOUBLE_01, node)
        self.ranges[node] = intersect(self.ranges[node], out)
        return node

    def abs_half(self, a: int, b: int) -> int:
        ra, rb = self.ranges[a], self.ranges[b]
        lo = max(ZERO, ra[0] - rb[1], rb[0] - ra[1])
        hi = max(ra[1] - rb[0], rb[1] - ra[0])
        d1 = self.half(self.emit(SUB_01, a, b))
        d2 = self.half(self.emit(SUB_01, b, a))
        return self.emit(ADD, d1, d2, semantic=(lo / 2, hi / 2))

    def mean(self, a: int, b: int) -> int:
        ra, rb = self.ranges[a], self.ranges[b]
        return self.emit(ADD, self.half(a), self.half(b), semantic=((ra[0] + rb[0]) / 2, (ra[1] + rb[1]) / 2))

    def max(self, a: int, b: int, out: Interval) -> int:
        s, e = self.mean(a, b), self.abs_half(a, b)
        inner = self.emit(ADD, self.half(s), self.half(e), semantic=(out[0] / 2, out[1] / 2))
        return self.emit(DOUBLE_01, inner, semantic=out)

    def min(self, a: int, b: int, out: Interval) -> int:
        s, e = self.mean(a, b), self.abs_half(a, b)
        return self.emit(SUB_01, s, e, semantic=out)

    def product(self, a: int, b: int, out: Interval) -> int:
        ra, rb = self.ranges[a], self.ranges[b]
        ha, hb = self.half(a), self.half(b)
        s = self.emit(SQUARE, self.emit(ADD, ha, hb))
        q = self.emit(ADD, self.emit(SQUARE, ha), self.emit(SQUARE, hb))
        d = self.emit(SUB_01, s, q, semantic=(ra[0] * rb[0] / 2, ra[1] * rb[1] / 2))
        return self.emit(DOUBLE_01, d, semantic=out)


def lower_to_special(
    c: Circuit,
    input_ranges: Sequence[Interval] | None = None,
    hints: Mapping[int, Interval] | None = None,
) -> tuple[Circuit, SpecialCircuitCertificate]:
    """Rewrite ``c`` over the special gate set.

    ``input_ranges`` defaults to [0, 1] for every input.  ``hints`` are
    asserted ranges of original nodes (recorded in the certificate as
    assumptions); they are needed when plain interval propagation is too
    coarse, for example on a simplex domain.
    """
    box = list(input_ranges) if input_ranges is not None else [UNIT] * len(c.inputs)
    orig = interval_ranges(c, box, hints)
    for n, r in orig.items():
        if not _within(r, UNIT):
            raise RangeUnprovable(f"original node {n} range [{r[0]}, {r[1]}] not provably within [0, 1]")
    prod = c.producer()
    em = _Emitter()
    new: dict[int, int] = {}
    for n in c.inputs:
        new[n] = em.input(orig[n])
    for idx, g in enumerate(c.topo_gates()):
        out = orig[g.output]
        ins = [new[i] for i in g.inputs]
        k = g.kind
        if k == CONST:
            node = em.const(g.zeta)
        elif k == ADD:
            node = em.add(ins[0], ins[1], out)
        elif k == SUB:
            if out[0] < 0:
                raise RangeUnprovable(f"cannot certify {g.inputs[0]} - {g.inputs[1]} >= 0 for exact subtraction")
            node = em.emit(SUB_01, ins[0], ins[1], semantic=out)
        elif k == MUL_CONST:
            node = em.mul_const(ins[0], g.zeta, out)
        elif k == MUL:
            a, b = g.inputs
            ca = prod.get(a)
            cb = prod.get(b)
            if a == b:
                node = em.emit(SQUARE, ins[0], semantic=out)
            elif ca is not None and ca.kind == CONST:
                node = em.mul_const(ins[1], ca.zeta, out)
            elif cb is not None and cb.kind == CONST:
                node = em.mul_const(ins[0], cb.zeta, out)
            else:
                node = em.product(ins[0], ins[1], out)
        elif k == MAX:
            node = em.max(ins[0], ins[1], out)
        elif k == MIN:
            node = em.min(ins[0], ins[1], out)
        elif k == SQUARE:
            node = em.emit(SQUARE, ins[0], semantic=out)
        elif k == SUB_01:
            node = em.emit(SUB_01, ins[0], ins[1], semantic=out)
        elif k == DOUBLE_01:
            if not _within(orig[g.inputs[0]], (ZERO, HALF)):
                raise RangeUnprovable(f"doubler input range {orig[g.inputs[0]]} not within [0, 1/2]")
            node = em.emit(DOUBLE_01, ins[0], semantic=out)
        elif k == CMP_GT:
            raise ComparisonGateForbidden("comparison gates cannot be lowered")
        else:
            raise RangeUnprovable(f"unsupported gate {k}")
        new[g.output] = node
    lowered = Circuit(tuple(em.gates), tuple(em.inputs), tuple(new[o] for o in c.outputs))
    cert = certify(lowered, known=em.ranges)
    cert.node_count_in = len(c.nodes)
    assumptions = {"input_ranges": [[fmt_q(lo), fmt_q(hi)] for lo, hi in box]}
    if hints:
        assumptions["asserted_ranges"] = {str(n): [fmt_q(lo), fmt_q(hi)] for n, (lo, hi) in sorted(hints.items())}
    cert.assumptions = assumptions
    return lowered, cert


def renumber_with_certificate(
    c: Circuit, cert: SpecialCircuitCertificate, last: Sequence[int] = ()
) -> tuple[Circuit, SpecialCircuitCertificate]:
    """Canonical numbering (inputs first, then topological) carrying the ranges along."""
    order = c.canonical_order(last)
    new = {old: k for k, old in enumerate(order)}
    rc = c.relabelled(new)
    ranges = {new[n]: r for n, r in cert.ranges.items()}
    out = certify(rc, known=ranges)
    out.node_count_in = cert.node_count_in
    out.assumptions = cert.assumptions
    return rc, out
