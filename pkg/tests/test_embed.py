import itertools
import random
from fractions import Fraction as Q

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exactch.chmodel import CHSolution, value_split, verify
from exactch.circuit import ADD, CONST, DOUBLE_01, MUL_CONST, SQUARE, SUB_01, CircuitBuilder, Gate
from exactch.embed import (
    EmbeddedInstance,
    add_finis,
    build_gadgets,
    decode_cuts_to_values,
    density_to_integral_circuit,
    encode_values_to_cuts,
    forcing_masses,
    integral_circuits,
    va,
    vm,
    vminus,
    vplus,
)
from exactch.errors import (
    MissingOutputPair,
    SolutionDoesNotSatisfyAgents,
    UncertifiedCircuit,
    UnsupportedPieceKind,
    ValuesDoNotSatisfyCircuit,
)
from exactch.generators import rand_q, special_circuit
from exactch.lowering import certify
from exactch.numerics import PiecewisePoly

HALF = Q(1, 2)


def embed(c, ranges=None):
    return build_gadgets(c, certify(c, input_ranges=ranges))


def const_node(z):
    b = CircuitBuilder()
    return b.build([b.const(z)])


def test_const_node_gives_four_balanced_agents():
    emb = embed(const_node(HALF))
    assert emb.n == 4 and emb.length == 12
    sol = encode_values_to_cuts(emb, [HALF])
    assert sol.cuts == (Q(3, 2), Q(9, 2), Q(15, 2), Q(21, 2))
    assert sol.leftmost_sign == "-"
    assert verify(emb.instance, sol, 0).ok


def test_decode_reads_fourth_cut():
    emb = embed(const_node(Q(3, 10)))
    sol = encode_values_to_cuts(emb, [Q(3, 10)])
    assert sol.cuts[3] == 10 + Q(3, 10)
    assert decode_cuts_to_values(emb, sol) == [Q(3, 10)]


def test_sub01_cut_left_of_value_interval():
    b = CircuitBuilder()
    x, y = b.input(), b.input()
    c = b.build([b.sub01(x, y)])
    emb = embed(c)
    sol = encode_values_to_cuts(emb, [Q(1, 4), Q(3, 4), Q(0)])
    assert sol.cuts[8:] == (va(2) - Q(1, 10), vm(2), vminus(2), vplus(2))
    assert sol.cuts[8] == 24 + 1 - Q(1, 10)


def test_encode_rejects_non_satisfying_values():
    b = CircuitBuilder()
    x = b.input()
    c = b.build([b.square(x)])
    emb = embed(c)
    with pytest.raises(ValuesDoNotSatisfyCircuit):
        encode_values_to_cuts(emb, [HALF, HALF])


def test_decode_rejects_unbalanced_cuts():
    emb = embed(const_node(HALF))
    with pytest.raises(SolutionDoesNotSatisfyAgents):
        decode_cuts_to_values(emb, CHSolution((Q(1), Q(4), Q(7), Q(10)), "-"))


def test_uncertified_circuit_refused():
    with pytest.raises(UncertifiedCircuit):
        build_gadgets(const_node(HALF), None)


def mul_const_pair(zeta):
    b = CircuitBuilder()
    x = b.input()
    return b.build([b.mul_const(x, zeta)])


def test_mul_const_balance_equation():
    """z_j + (zeta - z_i)/zeta + 4 = (1 - z_j) + 4 + z_i/zeta, holding iff z_i = zeta z_j."""
    for zeta in (Q(1, 3), Q(3, 4), Q(1)):
        emb = embed(mul_const_pair(zeta))
        for zj, zi in itertools.product([Q(k, 8) for k in range(9)], repeat=2):
            if zi > zeta:
                continue
            cuts = []
            for i, z in enumerate((zj, zi)):
                cuts += [va(i) + z, vm(i) + z, vminus(i) + z, vplus(i) + z]
            sol = CHSolution(tuple(cuts), "-")
            plus, minus = value_split(emb.instance, sol, 4)
            lhs = zj + (zeta - zi) / zeta + 4
            rhs = (1 - zj) + 4 + zi / zeta
            assert {plus, minus} == {lhs, rhs}
            assert (plus == minus) == (zi == zeta * zj)


def gate_circuit(kind, zeta=None):
    b = CircuitBuilder()
    if kind == CONST:
        return b.build([b.const(zeta)]), []
    if kind in (ADD, SUB_01):
        x, y = b.input(), b.input()
        hi = HALF if kind == ADD else Q(1)
        return b.build([b.add(x, y) if kind == ADD else b.sub01(x, y)]), [(Q(0), hi)] * 2
    x = b.input()
    out = {MUL_CONST: lambda: b.mul_const(x, zeta), SQUARE: lambda: b.square(x), DOUBLE_01: lambda: b.double(x)}[kind]()
    return b.build([out]), [(Q(0), HALF if kind == DOUBLE_01 else Q(1))]


def place(z, gates):
    cuts = []
    for i, zi in enumerate(z):
        a = va(i) + zi
        g = gates.get(i)
        if g is not None and g.kind == SUB_01 and zi == 0 and z[g.inputs[0]] < z[g.inputs[1]]:
            a = va(i) - (z[g.inputs[1]] - z[g.inputs[0]]) / 5
        cuts += [a, vm(i) + zi, vminus(i) + zi, vplus(i) + zi]
    return CHSolution(tuple(cuts), "-")


@pytest.mark.parametrize("kind", [CONST, MUL_CONST, ADD, SQUARE, DOUBLE_01, SUB_01])
def test_gate_agent_balanced_exactly_on_gate_graph(kind):
    """Over a grid of input and output values, the gate agent balances iff
    the output value is the gate applied to the inputs."""
    c, ranges = gate_circuit(kind, Q(5, 8))
    emb = embed(c, ranges)
    prod = c.producer()
    g = prod[max(prod)]
    grid = [Q(k, 8) for k in range(9)]
    axes = [[v for v in grid if lo <= v <= hi] for lo, hi in ranges] + [grid]
    seen = 0
    for z in itertools.product(*axes):
        z = list(z)
        sol = place(z, prod)
        plus, minus = value_split(emb.instance, sol, 4 * g.output)
        want = g.apply([z[i] for i in g.inputs])
        assert (plus == minus) == (z[-1] == want), z
        seen += plus == minus
    assert seen > 0


def two_outputs(builder_fn):
    b = CircuitBuilder()
    x = b.input()
    p, q = builder_fn(b, x)
    return b.build([p, q])


def test_finis_balance():
    c = two_outputs(lambda b, x: (b.mul_const(x, 1), b.mul_const(x, 1)))
    emb = add_finis(embed(c))
    assert emb.n == 4 * emb.r + 1
    for x in (Q(1, 3), Q(0)):
        sol = encode_values_to_cuts(emb, [x, x, x])
        assert len(sol.cuts) == emb.n - 1
        assert verify(emb.instance, sol, 0).ok

    c = two_outputs(lambda b, x: (b.sub01(x, x), b.const(1)))
    emb = add_finis(embed(c))
    sol = encode_values_to_cuts(emb, [HALF, Q(0), Q(1)])
    v = verify(emb.instance, sol, 0)
    assert v.failing == [emb.n - 1]


def test_finis_needs_output_pair():
    b = CircuitBuilder()
    x = b.input()
    y = b.square(x)
    c = b.build([y])
    with pytest.raises(MissingOutputPair):
        add_finis(embed(c))


def test_integral_circuit_examples():
    F = density_to_integral_circuit(PiecewisePoly.constant(1))
    assert all(F.evaluate([Q(k, 5)]) == [Q(k, 5)] for k in range(6))
    p = Q(1, 3)
    ramp = PiecewisePoly.from_segments(0, 1, [(p, Q(2, 3), (0, 2))])
    G = density_to_integral_circuit(ramp)
    for t in (Q(0), Q(1, 2), Q(3, 5), Q(1)):
        d = min(max(t, p), Q(2, 3))
        assert G.evaluate([t]) == [(d - p) ** 2]
    with pytest.raises(UnsupportedPieceKind):
        density_to_integral_circuit(PiecewisePoly((0, 1), ((1, 3),)))


def test_integral_circuits_match_integrals():
    rng = random.Random(12)
    c, cert = special_circuit(rng, kinds=[SQUARE, SUB_01, MUL_CONST, CONST])
    emb = build_gadgets(c, cert)
    circuits = integral_circuits(emb)
    for _ in range(1000):
        a = rng.randrange(emb.n)
        t = rand_q(rng, 64, 0, emb.length)
        assert circuits[a].evaluate([t]) == [emb.instance.F(a, t)]


def test_json_round_trip():
    rng = random.Random(13)
    c, cert = special_circuit(rng)
    emb = build_gadgets(c, cert)
    back = EmbeddedInstance.from_json(emb.to_json())
    assert back.instance.to_json() == emb.instance.to_json()
    assert back.node_map() == emb.node_map()


def test_noncanonical_circuit_is_renumbered():
    c = const_node(HALF)
    g = c.gates[0]
    moved = type(c)((Gate(g.kind, (), 7, g.zeta),), (), (7,))
    emb = embed(moved)
    assert emb.circuit.outputs == (0,)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_forward_and_backward_soundness(seed):
    rng = random.Random(seed)
    c, cert = special_circuit(rng)
    emb = build_gadgets(c, cert)
    assert emb.n == 4 * emb.r
    for inside, total in forcing_masses(emb):
        assert 2 * inside > total
    vals = emb.circuit.evaluate_all([rand_q(rng) for _ in emb.circuit.inputs])
    z = [vals[i] for i in range(emb.r)]
    sol = encode_values_to_cuts(emb, z)
    assert verify(emb.instance, sol, 0).ok
    assert verify(emb.instance, sol.flipped(), 0).ok
    assert decode_cuts_to_values(emb, sol) == z
