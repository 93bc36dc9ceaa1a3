"""Embedding of special circuits into consensus halving instances.

Every node i (numbered from 0, inputs first) owns the block [12i, 12i + 12]
and four agents.  Inside the block sit four unit value intervals

    v^a = [b+1, b+2]   v^m = [b+4, b+5]   v^- = [b+7, b+8]   v^+ = [b+10, b+11]

and each agent holds more than half of its mass in its own 3-unit window
([b, b+3], [b+3, b+6], [b+6, b+9], [b+9, b+12]), which forces exactly one
cut per agent.  In the orientation with the leftmost piece negative the four
cuts of a block are negative, positive, negative, positive, and node i's value
z_i is read off as the offset of its fourth cut inside v^+.

The gate agent (``ad``) carries guards of height 4 plus a gate-specific
profile that ties its cut to the cuts of the input nodes:

    CONST z      height 1 on [b+1/2+z, b+3/2+z], symmetric about v^a_l + z
    MUL_CONST z  height 1 on v_j^+, height 1/z on [b+1, b+1+z];
                 second guard moved to [b+1+z, b+2+z]
    ADD          height 1 on the left halves of v_j^+ and v_k^+, 1 on v^a
    SQUARE       ramp 2(t - v_j^+_l) on v_j^+, 1 on v^a
    DOUBLE_01    height 1 on the left half of v_j^+, 1/2 on v^a
    SUB_01       height 1 on v_j^+ and v_k^-, 1 on v^a, and 1 extra on the
                 first guard (height 5 there); a negative difference d pushes
                 the cut d/5 to the left of v^a
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .chmodel import CHInstance, CHSolution, verify
from .circuit import (
    ADD,
    CONST,
    DOUBLE_01,
    MUL_CONST,
    SQUARE,
    SUB_01,
    Circuit,
    CircuitBuilder,
)
from .errors import (
    CutOutsideExpectedInterval,
    MissingOutputPair,
    ParseError,
    SolutionDoesNotSatisfyAgents,
    UncertifiedCircuit,
    UnsupportedPieceKind,
    ValuesDoNotSatisfyCircuit,
)
from .lowering import SpecialCircuitCertificate, certify, renumber_with_certificate
from .numerics import PiecewisePoly, fmt_q, parse_q

BLOCK = 12
ROLES = ("ad", "mid", "cen", "ex")
HALF = Fraction(1, 2)


def block_base(i: int) -> Fraction:
    return Fraction(BLOCK * i)


def va(i):
    return block_base(i) + 1


def vm(i):
    return block_base(i) + 4


def vminus(i):
    return block_base(i) + 7


def vplus(i):
    return block_base(i) + 10


def window(i: int, role: int) -> tuple[Fraction, Fraction]:
    b = block_base(i) + 3 * role
    return (b, b + 3)


@dataclass(frozen=True)
class NodeGadget:
    index: int
    kind: str | None
    zeta: Fraction | None
    inputs: tuple[int, ...]
    ad: PiecewisePoly
    mid: PiecewisePoly
    cen: PiecewisePoly
    ex: PiecewisePoly

    @property
    def base(self) -> Fraction:
        return block_base(self.index)

    @property
    def densities(self) -> tuple[PiecewisePoly, ...]:
        return (self.ad, self.mid, self.cen, self.ex)


def _ad_segments(i: int, kind: str | None, zeta, inputs) -> list:
    b = block_base(i)
    segs = [(b, b + 1, (4,))]
    if kind == MUL_CONST:
        segs.append((b + 1 + zeta, b + 2 + zeta, (4,)))
    else:
        segs.append((b + 2, b + 3, (4,)))
    if kind is None:
        return segs
    if kind == CONST:
        c = va(i) + zeta
        segs.append((c - HALF, c + HALF, (1,)))
    elif kind == MUL_CONST:
        pj = vplus(inputs[0])
        segs += [(pj, pj + 1, (1,)), (va(i), va(i) + zeta, (1 / zeta,))]
    elif kind == ADD:
        for j in inputs:
            segs.append((vplus(j), vplus(j) + HALF, (1,)))
        segs.append((va(i), va(i) + 1, (1,)))
    elif kind == SQUARE:
        pj = vplus(inputs[0])
        segs += [(pj, pj + 1, (0, 2)), (va(i), va(i) + 1, (1,))]
    elif kind == DOUBLE_01:
        pj = vplus(inputs[0])
        segs += [(pj, pj + HALF, (1,)), (va(i), va(i) + 1, (HALF,))]
    elif kind == SUB_01:
        j, k = inputs
        segs += [
            (vplus(j), vplus(j) + 1, (1,)),
            (vminus(k), vminus(k) + 1, (1,)),
            (va(i), va(i) + 1, (1,)),
            (b, b + 1, (1,)),
        ]
    else:
        raise UncertifiedCircuit(f"gate kind {kind} is not special")
    return segs


def _relay_segments(i: int, role: int) -> list:
    """mid (role 1), cen (role 2), ex (role 3): guards of 4 around the
    window, 1 on the previous and on the own value interval."""
    b = block_base(i) + 3 * role
    own = b + 1
    prev = own - 3
    return [(b, b + 1, (4,)), (b + 2, b + 3, (4,)), (prev, prev + 1, (1,)), (own, own + 1, (1,))]


def _finis_density(r: int, length) -> PiecewisePoly:
    return PiecewisePoly.from_segments(
        0, length, [(vplus(r - 2), vplus(r - 2) + 1, (1,)), (vminus(r - 1), vminus(r - 1) + 1, (1,))]
    )


@dataclass
class EmbeddedInstance:
    circuit: Circuit
    certificate: SpecialCircuitCertificate
    gadgets: tuple[NodeGadget, ...]
    finis: bool = False
    instance: CHInstance = field(init=False)
    densities: tuple[PiecewisePoly, ...] = field(init=False)

    def __post_init__(self):
        dens = [d for g in self.gadgets for d in g.densities]
        if self.finis:
            dens.append(_finis_density(self.r, self.length))
        self.densities = tuple(dens)
        self.instance = CHInstance.from_densities(self.densities, self.length)

    @property
    def r(self) -> int:
        return len(self.gadgets)

    @property
    def n(self) -> int:
        return self.instance.n

    @property
    def length(self) -> Fraction:
        return Fraction(BLOCK * self.r)

    @property
    def cut_budget(self) -> int:
        return 4 * self.r

    def node_map(self) -> dict[int, list[int]]:
        return {g.index: [4 * g.index + k for k in range(4)] for g in self.gadgets}

    def with_finis(self) -> "EmbeddedInstance":
        return add_finis(self)

    def circuit_instance(self) -> CHInstance:
        """Circuit-backed copy of the instance (same internal domain)."""
        return CHInstance(tuple(integral_circuits(self)), self.length)

    def to_json(self) -> dict:
        data = self.instance.to_json()
        data.update(
            {
                "internal_length": fmt_q(self.length),
                "node_map": {str(k): v for k, v in self.node_map().items()},
                "source_circuit": self.circuit.to_json(),
                "source_circuit_id": self.circuit.ident(),
                "certificate": self.certificate.to_json(),
                "finis": self.finis,
            }
        )
        return data

    @classmethod
    def from_json(cls, data: dict) -> "EmbeddedInstance":
        """Rebuild from the source circuit and check the stored agents match."""
        try:
            c = Circuit.from_json(data["source_circuit"])
            ranges = {int(k): (parse_q(v[0]), parse_q(v[1])) for k, v in data["certificate"]["ranges"].items()}
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad embedded instance JSON: {exc}") from exc
        try:
            cert = certify(c, known=ranges)
        except Exception as exc:
            raise UncertifiedCircuit(str(exc)) from exc
        emb = build_gadgets(c, cert)
        if data.get("finis"):
            emb = add_finis(emb)
        stored = CHInstance.from_json(data)
        if stored.to_json()["agents"] != emb.instance.to_json()["agents"]:
            raise ParseError("stored agents do not match the source circuit")
        return emb


def build_gadgets(c: Circuit, cert: SpecialCircuitCertificate | None) -> EmbeddedInstance:
    """Four agents per node of a certified special circuit."""
    if cert is None or not cert.is_valid():
        raise UncertifiedCircuit("a valid special-circuit certificate is required")
    if cert.circuit_id != c.ident():
        raise UncertifiedCircuit("certificate belongs to a different circuit")
    if c.cyclic:
        # a closed circuit has no topological order; it must already use 0..r-1
        if sorted(c.nodes) != list(range(len(c.gates))):
            raise UncertifiedCircuit("cyclic circuits must number their nodes 0..r-1")
    elif not c.is_canonical():
        c, cert = renumber_with_certificate(c, cert)
    r = len(c.inputs) + len(c.gates)
    L = Fraction(BLOCK * r)
    prod = c.producer()
    gadgets = []
    for i in range(r):
        g = prod.get(i)
        kind, zeta, inputs = (g.kind, g.zeta, g.inputs) if g is not None else (None, None, ())
        ad = PiecewisePoly.from_segments(0, L, _ad_segments(i, kind, zeta, inputs))
        relays = [PiecewisePoly.from_segments(0, L, _relay_segments(i, role)) for role in (1, 2, 3)]
        gadgets.append(NodeGadget(i, kind, zeta, tuple(inputs), ad, *relays))
    return EmbeddedInstance(c, cert, tuple(gadgets))


def add_finis(emb: EmbeddedInstance) -> EmbeddedInstance:
    """Append the agent that is balanced by the existing cuts exactly when
    the last two nodes carry equal values."""
    r = emb.r
    outs = emb.circuit.outputs
    if r < 2 or len(outs) < 2 or tuple(outs[-2:]) != (r - 2, r - 1):
        raise MissingOutputPair("the last two nodes must be the designated output pair")
    return EmbeddedInstance(emb.circuit, emb.certificate, emb.gadgets, finis=True)


def forcing_masses(emb: EmbeddedInstance) -> list[tuple[Fraction, Fraction]]:
    """(mass inside own window, total mass) for every node agent."""
    out = []
    for g in emb.gadgets:
        for role, d in enumerate(g.densities):
            lo, hi = window(g.index, role)
            out.append((d.definite_integral(lo, hi), d.mass()))
    return out


def encode_values_to_cuts(emb: EmbeddedInstance, z: Sequence) -> CHSolution:
    """Cuts for a node-value tuple; the leftmost piece is negative."""
    z = [Fraction(v) for v in z]
    c = emb.circuit
    if len(z) != emb.r:
        raise ValuesDoNotSatisfyCircuit(f"expected {emb.r} values, got {len(z)}")
    if any(v < 0 or v > 1 for v in z):
        raise ValuesDoNotSatisfyCircuit("node values must lie in [0, 1]")
    bad = c.check_assignment(dict(enumerate(z)))
    if bad:
        raise ValuesDoNotSatisfyCircuit(f"gates {bad} violated")
    prod = c.producer()
    cuts = []
    for i in range(emb.r):
        g = prod.get(i)
        a = va(i) + z[i]
        if g is not None and g.kind == SUB_01:
            zj, zk = z[g.inputs[0]], z[g.inputs[1]]
            if zj < zk:
                a = va(i) - (zk - zj) / 5
        cuts += [a, vm(i) + z[i], vminus(i) + z[i], vplus(i) + z[i]]
    return CHSolution(tuple(cuts), "-")


def decode_cuts_to_values(emb: EmbeddedInstance, sol: CHSolution) -> list[Fraction]:
    """z_i = t_{4i} - v_i^+ (1-based cut index) after exact verification."""
    verdict = verify(emb.instance, sol, 0, budget=emb.cut_budget)
    if not verdict.ok:
        raise SolutionDoesNotSatisfyAgents(verdict.reason)
    if len(sol.cuts) < emb.cut_budget:
        raise CutOutsideExpectedInterval(f"expected {emb.cut_budget} cuts, got {len(sol.cuts)}")
    z = []
    for i in range(emb.r):
        t = sol.cuts[4 * i + 3]
        if not (vplus(i) <= t <= vplus(i) + 1):
            raise CutOutsideExpectedInterval(f"cut {4 * i + 4} at {t} is outside v^+ of node {i}")
        z.append(t - vplus(i))
    bad = emb.circuit.check_assignment(dict(enumerate(z)))
    if bad:
        raise ValuesDoNotSatisfyCircuit(f"decoded values violate gates {bad}")
    return z


def density_to_integral_circuit(f: PiecewisePoly, general: bool = False) -> Circuit:
    """Circuit computing F(t) = integral of f from its left end to t.

    Each piece contributes through D_s(t) = min(max(t, p_{s-1}), p_s): a
    constant piece c gives c (D_s - p_{s-1}), the ramp 2 (t - p_{s-1}) gives
    (D_s - p_{s-1})^2, and the pieces are summed with adders.  With
    ``general`` any affine piece c0 + c1 (t - p) is accepted.
    """
    b = CircuitBuilder()
    t = b.input()
    terms = []
    for s, (c0, c1, c2) in enumerate(f.pieces):
        p, q = f.breakpoints[s], f.breakpoints[s + 1]
        if c2 != 0:
            raise UnsupportedPieceKind(f"piece {s} has degree 2")
        if c0 == 0 and c1 == 0:
            continue
        if not general and c1 != 0 and not (c0 == 0 and c1 == 2):
            raise UnsupportedPieceKind(f"piece {s} is neither constant nor the ramp 2(t - p)")
        lo = b.const(p)
        d = b.min(b.max(t, lo), b.const(q))
        u = b.sub(d, lo)
        if c0 != 0:
            terms.append(b.mul_const(u, c0))
        if c1 != 0:
            sq = b.square(u)
            terms.append(sq if c1 == 2 else b.mul_const(sq, c1 / 2))
    out = b.sum(terms) if terms else b.const(0)
    return b.build([out])


def integral_circuits(emb: EmbeddedInstance) -> list[Circuit]:
    return [density_to_integral_circuit(d) for d in emb.densities]
