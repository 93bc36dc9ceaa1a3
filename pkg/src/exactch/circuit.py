"""Arithmetic circuit IR: gates, exact and float evaluation, validation,
interval ranges and Lipschitz bounds.

Nodes are integers.  Every non-input node is produced by exactly one gate.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .errors import (
    ArityMismatch,
    CyclicCircuit,
    NonlinearCircuit,
    ParseError,
)
from .numerics import fmt_q, parse_q

CONST = "CONST"
ADD = "ADD"
SUB = "SUB"
MUL_CONST = "MUL_CONST"
MUL = "MUL"
MAX = "MAX"
MIN = "MIN"
SQUARE = "SQUARE"
DOUBLE_01 = "DOUBLE_01"
SUB_01 = "SUB_01"
CMP_GT = "CMP_GT"

ARITY = {
    CONST: 0,
    ADD: 2,
    SUB: 2,
    MUL_CONST: 1,
    MUL: 2,
    MAX: 2,
    MIN: 2,
    SQUARE: 1,
    DOUBLE_01: 1,
    SUB_01: 2,
    CMP_GT: 1,
}
GENERAL_KINDS = frozenset({CONST, ADD, SUB, MUL_CONST, MUL, MAX, MIN})
SPECIAL_KINDS = frozenset({CONST, ADD, MUL_CONST, SQUARE, SUB_01, DOUBLE_01})
NONLINEAR_KINDS = frozenset({MUL, SQUARE, CMP_GT})


@dataclass(frozen=True)
class Gate:
    kind: str
    inputs: tuple[int, ...]
    output: int
    zeta: Fraction | None = None

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(int(i) for i in self.inputs))
        if self.zeta is not None:
            object.__setattr__(self, "zeta", Fraction(self.zeta))

    def apply(self, args):
        """Exact semantics of the gate."""
        k = self.kind
        if k == CONST:
            return self.zeta
        if k == ADD:
            return args[0] + args[1]
        if k == SUB:
            return args[0] - args[1]
        if k == MUL_CONST:
            return args[0] * self.zeta
        if k == MUL:
            return args[0] * args[1]
        if k == MAX:
            return max(args[0], args[1])
        if k == MIN:
            return min(args[0], args[1])
        if k == SQUARE:
            return args[0] * args[0]
        if k == DOUBLE_01:
            return 2 * args[0]
        if k == SUB_01:
            d = args[0] - args[1]
            return d if d > 0 else Fraction(0)
        if k == CMP_GT:
            return Fraction(1) if args[0] > 0 else Fraction(0)
        raise ValueError(f"unknown gate kind {k}")

    def apply_array(self, args, np):
        k = self.kind
        if k == CONST:
            return float(self.zeta)
        if k == ADD:
            return args[0] + args[1]
        if k == SUB:
            return args[0] - args[1]
        if k == MUL_CONST:
            return args[0] * float(self.zeta)
        if k == MUL:
            return args[0] * args[1]
        if k == MAX:
            return np.maximum(args[0], args[1])
        if k == MIN:
            return np.minimum(args[0], args[1])
        if k == SQUARE:
            return args[0] * args[0]
        if k == DOUBLE_01:
            return 2.0 * args[0]
        if k == SUB_01:
            return np.maximum(args[0] - args[1], 0.0)
        if k == CMP_GT:
            return (args[0] > 0).astype(float)
        raise ValueError(f"unknown gate kind {k}")

    def to_json(self) -> dict:
        d = {"kind": self.kind, "in": list(self.inputs), "out": self.output}
        if self.zeta is not None:
            d["zeta"] = fmt_q(self.zeta)
        return d


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    gate: int | None = None

    def __str__(self):
        where = f" (gate {self.gate})" if self.gate is not None else ""
        return f"{self.code}{where}: {self.message}"


@dataclass(frozen=True)
class Circuit:
    gates: tuple[Gate, ...]
    inputs: tuple[int, ...]
    outputs: tuple[int, ...]
    cyclic: bool = False
    merged: tuple[tuple[int, int], ...] = ()
    _order: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        object.__setattr__(self, "inputs", tuple(int(i) for i in self.inputs))
        object.__setattr__(self, "outputs", tuple(int(i) for i in self.outputs))
        object.__setattr__(self, "merged", tuple((int(a), int(b)) for a, b in self.merged))

    # structure
    @property
    def nodes(self) -> list[int]:
        seen = dict.fromkeys(self.inputs)
        for g in self.gates:
            seen.setdefault(g.output)
        return list(seen)

    def producer(self) -> dict[int, Gate]:
        return {g.output: g for g in self.gates}

    def topo_gates(self) -> tuple[Gate, ...]:
        """Gates in a dependency-respecting order; raises CyclicCircuit."""
        if self._order is not None:
            return self._order
        prod = self.producer()
        state: dict[int, int] = {}
        order: list[Gate] = []
        for root in [g.output for g in self.gates]:
            if state.get(root) == 2:
                continue
            stack = [(root, False)]
            while stack:
                node, done = stack.pop()
                if done:
                    state[node] = 2
                    order.append(prod[node])
                    continue
                st = state.get(node)
                if st == 2:
                    continue
                if st == 1:
                    raise CyclicCircuit(f"cycle through node {node}")
                if node not in prod:
                    continue
                state[node] = 1
                stack.append((node, True))
                for i in prod[node].inputs:
                    if i in prod and state.get(i) != 2:
                        if state.get(i) == 1:
                            raise CyclicCircuit(f"cycle through node {i}")
                        stack.append((i, False))
        result = tuple(order)
        object.__setattr__(self, "_order", result)
        return result

    def kinds(self) -> set[str]:
        return {g.kind for g in self.gates}

    def is_linear(self) -> bool:
        return not (self.kinds() & NONLINEAR_KINDS)

    # evaluation
    def evaluate_all(self, x: Sequence) -> dict[int, Fraction]:
        if self.cyclic:
            raise CyclicCircuit("cyclic circuits have no functional evaluation")
        if len(x) != len(self.inputs):
            raise ArityMismatch(f"expected {len(self.inputs)} inputs, got {len(x)}")
        vals = {n: Fraction(v) for n, v in zip(self.inputs, x)}
        for g in self.topo_gates():
            vals[g.output] = g.apply([vals[i] for i in g.inputs])
        return vals

    def evaluate(self, x: Sequence) -> list[Fraction]:
        vals = self.evaluate_all(x)
        return [vals[o] for o in self.outputs]

    def evaluate_batch(self, X):
        """Float evaluation of many points at once; rows of ``X`` are inputs."""
        import numpy as np

        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.inputs):
            raise ArityMismatch(f"expected shape (m, {len(self.inputs)}), got {X.shape}")
        vals = {n: X[:, k] for k, n in enumerate(self.inputs)}
        m = X.shape[0]
        for g in self.topo_gates():
            out = g.apply_array([vals[i] for i in g.inputs], np)
            if np.isscalar(out):
                out = np.full(m, out)
            vals[g.output] = out
        return np.stack([vals[o] for o in self.outputs], axis=1) if self.outputs else np.zeros((m, 0))

    def check_assignment(self, values: Mapping[int, Fraction]) -> list[int]:
        """Indices of gates whose equation fails under the assignment."""
        bad = []
        for idx, g in enumerate(self.gates):
            if g.output not in values or any(i not in values for i in g.inputs):
                bad.append(idx)
                continue
            if g.apply([values[i] for i in g.inputs]) != values[g.output]:
                bad.append(idx)
        return bad

    # serialisation
    def to_json(self) -> dict:
        d = {
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
            "gates": [g.to_json() for g in self.gates],
            "cyclic": self.cyclic,
        }
        if self.merged:
            d["merged"] = [list(p) for p in self.merged]
        return d

    @classmethod
    def from_json(cls, data: dict) -> "Circuit":
        try:
            gates = []
            for gd in data["gates"]:
                kind = gd["kind"]
                if kind not in ARITY:
                    raise ParseError(f"unknown gate kind {kind!r}")
                zeta = parse_q(gd["zeta"]) if gd.get("zeta") is not None else None
                gates.append(Gate(kind, tuple(int(i) for i in gd.get("in", [])), int(gd["out"]), zeta))
            return cls(
                tuple(gates),
                tuple(int(i) for i in data.get("inputs", [])),
                tuple(int(i) for i in data.get("outputs", [])),
                bool(data.get("cyclic", False)),
                tuple(tuple(p) for p in data.get("merged", [])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"bad circuit JSON: {exc}") from exc

    def ident(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def canonical_order(self, last: Sequence[int] = ()) -> list[int]:
        """Inputs first, then gate outputs in topological order (smallest id
        first among ready nodes), with ``last`` placed at the very end."""
        import heapq

        prod = self.producer()
        last = list(last)
        pending = {g.output: sum(1 for i in set(g.inputs) if i in prod) for g in self.gates}
        users: dict[int, list[int]] = {}
        for g in self.gates:
            for i in set(g.inputs):
                if i in prod:
                    users.setdefault(i, []).append(g.output)
        ready = [n for n, k in pending.items() if k == 0 and n not in last]
        heapq.heapify(ready)
        order = list(self.inputs)
        held = set(last)
        while ready:
            n = heapq.heappop(ready)
            order.append(n)
            for u in users.get(n, []):
                pending[u] -= 1
                if pending[u] == 0 and u not in held:
                    heapq.heappush(ready, u)
        for n in last:
            if n not in prod or pending[n] != 0 or users.get(n):
                raise ValueError(f"node {n} cannot be placed last")
            order.append(n)
        if len(order) != len(self.inputs) + len(self.gates):
            raise CyclicCircuit("gate dependencies contain a cycle")
        return order

    def is_canonical(self) -> bool:
        return self.canonical_order() == list(range(len(self.inputs) + len(self.gates)))

    def renumbered(self, last: Sequence[int] = ()) -> "Circuit":
        """Copy with nodes numbered 0..r-1 in :meth:`canonical_order`."""
        order = self.canonical_order(last)
        return self.relabelled({old: k for k, old in enumerate(order)})

    def relabelled(self, new: Mapping[int, int]) -> "Circuit":
        prod = self.producer()
        gates = tuple(
            Gate(prod[o].kind, tuple(new[i] for i in prod[o].inputs), new[o], prod[o].zeta)
            for o in sorted(prod, key=lambda n: new[n])
        )
        return Circuit(gates, tuple(new[i] for i in self.inputs), tuple(new[o] for o in self.outputs))


def validate(c: Circuit, *, role: str = "instance", special: bool = False) -> list[Violation]:
    """Structural checks; an empty list means the circuit is well formed.

    ``role`` is ``"instance"`` for instance-defining circuits (no comparison
    gates) or ``"decoder"``.  ``special`` additionally restricts the gate set
    and constant ranges of special circuits.
    """
    out: list[Violation] = []
    producers: dict[int, int] = {}
    inputs = set(c.inputs)
    if len(inputs) != len(c.inputs):
        out.append(Violation("DuplicateInput", "an input node is listed twice"))
    for idx, g in enumerate(c.gates):
        if g.kind not in ARITY:
            out.append(Violation("UnknownKind", f"unknown gate kind {g.kind!r}", idx))
            continue
        if len(g.inputs) != ARITY[g.kind]:
            out.append(Violation("ArityMismatch", f"{g.kind} takes {ARITY[g.kind]} inputs, got {len(g.inputs)}", idx))
        if g.output in producers:
            out.append(Violation("DuplicateProducer", f"node {g.output} produced by gates {producers[g.output]} and {idx}", idx))
        else:
            producers[g.output] = idx
        if g.output in inputs:
            out.append(Violation("InputProduced", f"input node {g.output} is produced by a gate", idx))
        if g.kind in (CONST, MUL_CONST):
            if g.zeta is None:
                out.append(Violation("MissingZeta", f"{g.kind} needs a constant", idx))
            elif special and not (0 < g.zeta <= 1):
                out.append(Violation("ZetaOutOfRange", f"constant {g.zeta} outside (0, 1]", idx))
        elif g.zeta is not None:
            out.append(Violation("UnexpectedZeta", f"{g.kind} carries no constant", idx))
        if g.kind == CMP_GT and role != "decoder":
            out.append(Violation("ComparisonGateForbidden", "comparison gates are legal only in decoder circuits", idx))
        if special and g.kind not in SPECIAL_KINDS:
            out.append(Violation("NonSpecialGate", f"{g.kind} is not a special gate", idx))
    known = inputs | set(producers)
    for idx, g in enumerate(c.gates):
        for i in g.inputs:
            if i not in known:
                out.append(Violation("UndefinedNode", f"node {i} is never produced", idx))
    for o in c.outputs:
        if o not in known:
            out.append(Violation("UndefinedOutput", f"output node {o} is never produced"))
    if c.cyclic:
        if c.inputs or c.outputs:
            out.append(Violation("CyclicWithPorts", "cyclic circuits have empty input and output lists"))
    else:
        try:
            c.topo_gates()
        except (CyclicCircuit, KeyError):
            out.append(Violation("CyclicDependency", "gate dependencies contain a cycle"))
    return out


# interval arithmetic

Interval = tuple[Fraction, Fraction]


def gate_interval(g: Gate, args: Sequence[Interval]) -> Interval:
    k = g.kind
    if k == CONST:
        return (g.zeta, g.zeta)
    if k == ADD:
        return (args[0][0] + args[1][0], args[0][1] + args[1][1])
    if k == SUB:
        return (args[0][0] - args[1][1], args[0][1] - args[1][0])
    if k == MUL_CONST:
        a, b = args[0][0] * g.zeta, args[0][1] * g.zeta
        return (min(a, b), max(a, b))
    if k == MUL:
        ps = [x * y for x in args[0] for y in args[1]]
        return (min(ps), max(ps))
    if k == MAX:
        return (max(args[0][0], args[1][0]), max(args[0][1], args[1][1]))
    if k == MIN:
        return (min(args[0][0], args[1][0]), min(args[0][1], args[1][1]))
    if k == SQUARE:
        lo, hi = args[0]
        if lo <= 0 <= hi:
            return (Fraction(0), max(lo * lo, hi * hi))
        return (min(lo * lo, hi * hi), max(lo * lo, hi * hi))
    if k == DOUBLE_01:
        return (2 * args[0][0], 2 * args[0][1])
    if k == SUB_01:
        return (max(args[0][0] - args[1][1], Fraction(0)), max(args[0][1] - args[1][0], Fraction(0)))
    if k == CMP_GT:
        lo, hi = args[0]
        return (Fraction(1) if lo > 0 else Fraction(0), Fraction(1) if hi > 0 else Fraction(0))
    raise ValueError(f"unknown gate kind {k}")


def intersect(a: Interval, b: Interval) -> Interval:
    lo, hi = max(a[0], b[0]), min(a[1], b[1])
    if lo > hi:
        raise ValueError(f"empty intersection of {a} and {b}")
    return (lo, hi)


def interval_ranges(
    c: Circuit,
    input_box: Sequence[Interval] | None = None,
    hints: Mapping[int, Interval] | None = None,
) -> dict[int, Interval]:
    """Sound per-node ranges by interval propagation.

    ``hints`` are asserted ranges (for example a simplex domain) that are
    intersected into the propagated ones; callers must record them as
    assumptions.
    """
    if input_box is None:
        input_box = [(Fraction(0), Fraction(1))] * len(c.inputs)
    hints = hints or {}
    rng: dict[int, Interval] = {}
    for n, box in zip(c.inputs, input_box):
        r = (Fraction(box[0]), Fraction(box[1]))
        rng[n] = intersect(r, hints[n]) if n in hints else r
    for g in c.topo_gates():
        r = gate_interval(g, [rng[i] for i in g.inputs])
        rng[g.output] = intersect(r, hints[g.output]) if g.output in hints else r
    return rng


def lipschitz_bound(c: Circuit) -> Fraction:
    """L-infinity Lipschitz bound composed gate by gate."""
    bad = c.kinds() & NONLINEAR_KINDS
    if bad:
        raise NonlinearCircuit(f"gates {sorted(bad)} are not linear")
    lam = {n: Fraction(1) for n in c.inputs}
    for g in c.topo_gates():
        a = [lam[i] for i in g.inputs]
        k = g.kind
        if k == CONST:
            v = Fraction(0)
        elif k in (ADD, SUB, SUB_01):
            v = a[0] + a[1]
        elif k == MUL_CONST:
            v = abs(g.zeta) * a[0]
        elif k in (MAX, MIN):
            v = max(a)
        elif k == DOUBLE_01:
            v = 2 * a[0]
        else:
            raise NonlinearCircuit(k)
        lam[g.output] = v
    return max((lam[o] for o in c.outputs), default=Fraction(0))


class CircuitBuilder:
    """Incremental construction with fresh node ids."""

    def __init__(self, start: int = 0):
        self.gates: list[Gate] = []
        self.inputs: list[int] = []
        self._next = start

    def fresh(self) -> int:
        n = self._next
        self._next += 1
        return n

    def input(self) -> int:
        n = self.fresh()
        self.inputs.append(n)
        return n

    def gate(self, kind: str, *inputs: int, zeta=None) -> int:
        out = self.fresh()
        self.gates.append(Gate(kind, tuple(inputs), out, None if zeta is None else Fraction(zeta)))
        return out

    def const(self, z):
        return self.gate(CONST, zeta=z)

    def add(self, a, b):
        return self.gate(ADD, a, b)

    def sub(self, a, b):
        return self.gate(SUB, a, b)

    def mul_const(self, a, z):
        return self.gate(MUL_CONST, a, zeta=z)

    def mul(self, a, b):
        return self.gate(MUL, a, b)

    def max(self, a, b):
        return self.gate(MAX, a, b)

    def min(self, a, b):
        return self.gate(MIN, a, b)

    def square(self, a):
        return self.gate(SQUARE, a)

    def double(self, a):
        return self.gate(DOUBLE_01, a)

    def sub01(self, a, b):
        return self.gate(SUB_01, a, b)

    def cmp_gt(self, a):
        return self.gate(CMP_GT, a)

    def sum(self, nodes: Sequence[int]) -> int:
        if not nodes:
            return self.const(0)
        acc = nodes[0]
        for n in nodes[1:]:
            acc = self.add(acc, n)
        return acc

    def inline(self, c: Circuit, input_nodes: Sequence[int]) -> list[int]:
        """Copy ``c`` into this builder, wiring its inputs to ``input_nodes``."""
        if len(input_nodes) != len(c.inputs):
            raise ArityMismatch("inline arity mismatch")
        mapping = dict(zip(c.inputs, input_nodes))
        for g in c.topo_gates():
            mapping[g.output] = self.gate(g.kind, *(mapping[i] for i in g.inputs), zeta=g.zeta)
        return [mapping[o] for o in c.outputs]

    def build(self, outputs: Iterable[int]) -> Circuit:
        return Circuit(tuple(self.gates), tuple(self.inputs), tuple(outputs))
