import random
from fractions import Fraction as Q

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exactch.circuit import (
    MAX,
    MUL,
    SPECIAL_KINDS,
    SUB,
    Circuit,
    CircuitBuilder,
    Gate,
    gate_interval,
    validate,
)
from exactch.errors import RangeUnprovable
from exactch.generators import rand_q
from exactch.lowering import certify, lower_to_special, renumber_with_certificate

UNIT = (Q(0), Q(1))


def two_input(kind):
    return Circuit((Gate(kind, (0, 1), 2),), (0, 1), (2,))


def is_special(c, cert):
    return c.kinds() <= SPECIAL_KINDS and validate(c, special=True) == [] and cert.is_valid()


def test_lowered_max():
    low, cert = lower_to_special(two_input(MAX))
    assert is_special(low, cert)
    assert low.evaluate([Q(1, 4), Q(3, 4)]) == [Q(3, 4)]


def test_lowered_product_at_one():
    low, cert = lower_to_special(two_input(MUL))
    assert is_special(low, cert)
    assert low.evaluate([Q(1), Q(1)]) == [1]


def test_lowered_subtraction_when_ordered():
    box = [(Q(1, 2), Q(1)), (Q(0), Q(1, 2))]
    low, cert = lower_to_special(two_input(SUB), input_ranges=box)
    assert is_special(low, cert)
    rng = random.Random(0)
    for _ in range(200):
        a, b = rand_q(rng, 64, *box[0]), rand_q(rng, 64, *box[1])
        assert low.evaluate([a, b]) == [a - b]


def test_unprovable_range_is_reported():
    with pytest.raises(RangeUnprovable):
        lower_to_special(two_input(SUB))


def test_certify_rejects_wide_adder():
    b = CircuitBuilder()
    x, y = b.input(), b.input()
    c = b.build([b.add(x, y)])
    with pytest.raises(RangeUnprovable):
        certify(c)
    assert certify(c, input_ranges=[(Q(0), Q(1, 2))] * 2).is_valid()


def test_renumbering_keeps_certificate_consistent():
    b = CircuitBuilder()
    x = b.input()
    s = b.square(x)
    h = b.mul_const(x, Q(1, 2))
    c = b.build([h, s])
    cert = certify(c)
    d, dcert = renumber_with_certificate(c, cert, last=[h])
    assert d.outputs[0] == len(d.nodes) - 1
    assert dcert.circuit_id == d.ident()
    assert dcert.is_valid()


def random_general_circuit(rng, n_inputs=2, n_gates=6):
    """General-gate circuit whose interval ranges stay within [0, 1]."""
    b = CircuitBuilder()
    ranges = {}
    for _ in range(n_inputs):
        ranges[b.input()] = UNIT
    while len(ranges) < n_inputs + n_gates:
        nodes = list(ranges)
        a, c = rng.choice(nodes), rng.choice(nodes)
        k = rng.choice(["MAX", "MIN", "MUL", "MUL_CONST", "ADD", "SUB", "CONST"])
        ra, rc = ranges[a], ranges[c]
        if k == "ADD" and ra[1] + rc[1] > 1:
            continue
        if k == "SUB" and ra[0] < rc[1]:
            continue
        if k == "MAX":
            out = b.max(a, c)
        elif k == "MIN":
            out = b.min(a, c)
        elif k == "MUL":
            out = b.mul(a, c)
        elif k == "MUL_CONST":
            out = b.mul_const(a, rand_q(rng, 8, Q(1, 8), 1))
        elif k == "ADD":
            out = b.add(a, c)
        elif k == "SUB":
            out = b.sub(a, c)
        else:
            out = b.const(rand_q(rng, 8))
        g = b.gates[-1]
        ranges[out] = gate_interval(g, [ranges[i] for i in g.inputs])
    return b.build([max(ranges), rng.choice(list(ranges))])


def test_lowering_preserves_values_on_random_points():
    rng = random.Random(11)
    checked = 0
    for _ in range(20):
        c = random_general_circuit(rng)
        low, cert = lower_to_special(c)
        assert is_special(low, cert)
        assert cert.node_count_out <= 40 * cert.node_count_in
        for _ in range(500):
            x = [rand_q(rng, 64) for _ in c.inputs]
            assert low.evaluate(x) == c.evaluate(x)
            checked += 1
    assert checked == 10_000


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_lowered_certificate_ranges_are_sound(seed):
    rng = random.Random(seed)
    c = random_general_circuit(rng)
    low, cert = lower_to_special(c)
    for _ in range(10):
        vals = low.evaluate_all([rand_q(rng, 32) for _ in low.inputs])
        for n, v in vals.items():
            lo, hi = cert.ranges[n]
            assert lo <= v <= hi
