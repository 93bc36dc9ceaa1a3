import json
import random
from fractions import Fraction as Q

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exactch.circuit import (
    ADD,
    CMP_GT,
    MAX,
    SQUARE,
    SUB_01,
    Circuit,
    CircuitBuilder,
    Gate,
    interval_ranges,
    lipschitz_bound,
    validate,
)
from exactch.errors import CyclicCircuit, NonlinearCircuit, ParseError
from exactch.generators import linear_circuit, rand_q, special_circuit

from strategies import rationals


def one_gate(kind, n_in, zeta=None):
    ins = tuple(range(n_in))
    return Circuit((Gate(kind, ins, n_in, zeta),), ins, (n_in,))


def test_gate_semantics():
    assert one_gate(MAX, 2).evaluate([Q(1, 4), Q(3, 4)]) == [Q(3, 4)]
    assert one_gate(SUB_01, 2).evaluate([Q(1, 4), Q(3, 4)]) == [0]
    assert one_gate(SUB_01, 2).evaluate([Q(3, 4), Q(1, 4)]) == [Q(1, 2)]
    assert one_gate(SQUARE, 1).evaluate([Q(2, 3)]) == [Q(4, 9)]
    assert one_gate(CMP_GT, 1).evaluate([Q(0)]) == [0]
    assert one_gate(CMP_GT, 1).evaluate([Q(1, 9)]) == [1]


def test_lipschitz_examples():
    b = CircuitBuilder()
    x = b.input()
    assert lipschitz_bound(b.build([x])) == 1

    b = CircuitBuilder()
    x = b.input()
    f = b.sub(b.mul_const(x, 3), b.max(x, b.const(0)))
    assert lipschitz_bound(b.build([f])) == 4

    assert lipschitz_bound(one_gate(MAX, 2)) == 1
    with pytest.raises(NonlinearCircuit):
        lipschitz_bound(one_gate(SQUARE, 1))


def test_validate_examples():
    assert validate(one_gate(ADD, 2)) == []
    dup = Circuit((Gate(ADD, (0, 1), 2), Gate(MAX, (0, 1), 2)), (0, 1), (2,))
    assert [v.code for v in validate(dup)] == ["DuplicateProducer"]
    codes = [v.code for v in validate(one_gate(CMP_GT, 1))]
    assert codes == ["ComparisonGateForbidden"]
    assert validate(one_gate(CMP_GT, 1), role="decoder") == []


def test_validate_structure_errors():
    loop = Circuit((Gate(ADD, (0, 2), 1), Gate(ADD, (0, 1), 2)), (0,), (2,))
    assert "CyclicDependency" in [v.code for v in validate(loop)]
    with pytest.raises(CyclicCircuit):
        loop.topo_gates()
    bad = Circuit((Gate(ADD, (0, 7), 1),), (0,), (1,))
    assert "UndefinedNode" in [v.code for v in validate(bad)]
    special = Circuit((Gate("CONST", (), 0, Q(3, 2)),), (), (0,))
    assert [v.code for v in validate(special, special=True)] == ["ZetaOutOfRange"]
    assert [v.code for v in validate(one_gate(MAX, 2), special=True)] == ["NonSpecialGate"]


def test_json_round_trip_and_rejection():
    rng = random.Random(1)
    for _ in range(20):
        c = linear_circuit(rng, 3, 2)
        text = json.dumps(c.to_json())
        assert Circuit.from_json(json.loads(text)) == c
    with pytest.raises(ParseError):
        Circuit.from_json({"gates": [{"kind": "DIV", "in": [0, 1], "out": 2}], "inputs": [0, 1]})
    with pytest.raises(ParseError):
        Circuit.from_json({"gates": [{"kind": "CONST", "zeta": "0.5", "out": 0}]})


def test_renumbering_is_canonical_and_equivalent():
    b = CircuitBuilder()
    x = b.input()
    y = b.input()
    s = b.square(x)
    m = b.sub01(s, y)
    c = b.build([m]).relabelled({x: 5, y: 3, s: 9, m: 0})
    assert not c.is_canonical()
    d = c.renumbered()
    assert d.is_canonical()
    assert d.evaluate([Q(1, 2), Q(1, 8)]) == c.evaluate([Q(1, 2), Q(1, 8)]) == [Q(1, 8)]


def test_batch_evaluation_matches_exact():
    np = pytest.importorskip("numpy")
    rng = random.Random(4)
    c = linear_circuit(rng, 3, 2, 12)
    pts = [[rand_q(rng, 32, -1, 1) for _ in range(3)] for _ in range(50)]
    got = c.evaluate_batch(np.array([[float(v) for v in p] for p in pts]))
    want = np.array([[float(v) for v in c.evaluate(p)] for p in pts])
    assert np.allclose(got, want)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.lists(rationals(-1, 1, 32), min_size=8, max_size=8))
def test_lipschitz_bound_dominates_difference_quotients(seed, coords):
    rng = random.Random(seed)
    c = linear_circuit(rng, 4, 2)
    x, y = coords[:4], coords[4:]
    dx = max(abs(a - b) for a, b in zip(x, y))
    df = max(abs(a - b) for a, b in zip(c.evaluate(x), c.evaluate(y)))
    assert df <= lipschitz_bound(c) * dx


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_interval_ranges_are_sound(seed):
    rng = random.Random(seed)
    c, cert = special_circuit(rng)
    ranges = interval_ranges(c)
    for _ in range(20):
        vals = c.evaluate_all([rand_q(rng) for _ in c.inputs])
        for n, v in vals.items():
            lo, hi = ranges[n]
            assert lo <= v <= hi
            clo, chi = cert.ranges[n]
            assert clo <= v <= chi
