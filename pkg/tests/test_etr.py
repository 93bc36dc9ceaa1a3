import random
from fractions import Fraction as Q

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exactch.borsuk_ulam import BUInstance
from exactch.chmodel import CHInstance, CHSolution, verify
from exactch.circuit import ADD, MAX, CircuitBuilder, Gate
from exactch.errors import ComparisonGateForbidden, ParseError, UnboundedVariable
from exactch.etr import (
    ETRSentence,
    brute_check,
    bu_to_etr,
    ch_to_etr,
    circuit_sentence,
    circuit_to_constraints,
    conj,
    emit,
    eq,
    gate_constraint,
    holds,
    node_name,
    parse,
    solution_witness,
)
from exactch.generators import linear_circuit, rand_q, special_circuit, step_density
from exactch.numerics import PiecewisePoly

HALF = Q(1, 2)


def name(n):
    return f"v{n}"


def test_adder_constraint():
    assert gate_constraint(Gate(ADD, (0, 1), 2), name) == ("=", "v2", ("+", "v0", "v1"))


def test_max_constraint_is_two_disjuncts():
    f = gate_constraint(Gate(MAX, (0, 1), 2), name)
    assert f[0] == "or" and len(f) == 3
    env = {"v0": Q(1), "v1": Q(2)}
    assert holds(f, dict(env, v2=Q(2)))
    assert not holds(f, dict(env, v2=Q(1)))


def test_one_max_sentence():
    b = CircuitBuilder()
    x, y = b.input(), b.input()
    c = b.build([b.max(x, y)])
    s = circuit_sentence(c, [(Q(0), Q(2))] * 2)
    assert holds(s.matrix(), {"v0": Q(1), "v1": Q(2), "v2": Q(2)})
    assert not holds(s.matrix(), {"v0": Q(1), "v1": Q(2), "v2": Q(1)})


def test_comparison_gate_refused():
    b = CircuitBuilder()
    x = b.input()
    with pytest.raises(ComparisonGateForbidden):
        circuit_to_constraints(b.build([b.cmp_gt(x)]))


def test_uniform_agent_one_cut_sat():
    inst = CHInstance.from_densities([PiecewisePoly.constant(1)])
    res = brute_check(ch_to_etr(inst, 1), Q(1, 8))
    assert res.status == "SAT" and res.exact
    w = res.witness
    assert w["xp0"] + w["xn0"] == HALF


def test_one_cut_too_few_is_unknown():
    # agent 1 forces the cut to 1/2, which leaves agent 2 on one side
    inst = CHInstance.from_densities(
        [PiecewisePoly.constant(1), PiecewisePoly.from_segments(0, 1, [(0, HALF, (1,))])]
    )
    assert brute_check(ch_to_etr(inst, 1), Q(1, 32)).status == "UNKNOWN"
    assert brute_check(ch_to_etr(inst, 2), Q(1, 8)).status == "SAT"


def test_n_cuts_always_sat_on_grid():
    rng = random.Random(6)
    for _ in range(3):
        inst = CHInstance.from_densities([step_density(rng, max_den=4) for _ in range(2)])
        assert brute_check(ch_to_etr(inst), Q(1, 8)).status == "SAT"


def test_identity_difference_map():
    b = CircuitBuilder()
    x0, _ = b.input(), b.input()
    s = bu_to_etr(BUInstance(1, b.build([x0])))
    res = brute_check(s, Q(1, 4))
    assert res.status == "SAT" and res.exact
    assert res.witness["xp0"] == res.witness["xn0"] == 0


def square_sentence(rhs):
    s = ETRSentence()
    s.declare("x", 0, 1)
    s.add(eq(("*", "x", "x"), Q(rhs)))
    return s


def test_square_root_on_grid():
    res = brute_check(square_sentence(Q(1, 4)), Q(1, 8))
    assert res.status == "SAT" and res.witness == {"x": HALF}
    assert brute_check(square_sentence(2), Q(1, 8)).status == "UNKNOWN"


def test_checker_refusals():
    s = ETRSentence()
    s.declare("y")
    s.add(eq("y", 1))
    with pytest.raises(UnboundedVariable):
        brute_check(s, Q(1, 4))
    big = ETRSentence()
    for k in range(6):
        big.declare(f"z{k}", 0, 1)
    big.add(eq(("*", "z0", "z1", "z2", "z3", "z4", "z5"), Q(1, 3)))
    with pytest.raises(ValueError):
        brute_check(big, Q(1, 64), max_points=1000)


def test_text_round_trip_and_errors():
    inst = CHInstance.from_densities([PiecewisePoly.constant(1), step_density(random.Random(2))])
    s = ch_to_etr(inst)
    text = emit(s)
    assert parse(text) == s
    assert parse(text).emit() == text
    for bad in ("(assert (= x 1/0))", "(assert (= x 0.5))", "(assert (and (= x 1)", "(frobnicate)"):
        with pytest.raises(ParseError):
            parse(bad)


def test_known_witness_confirmed():
    inst = CHInstance.from_densities(
        [PiecewisePoly.constant(Q(1, 4)), PiecewisePoly.from_segments(0, 1, [(0, Q(3, 7), (1,))])]
    )
    sol = CHSolution((Q(3, 14), Q(5, 7)), "+")
    assert verify(inst, sol, 0).ok
    res = brute_check(ch_to_etr(inst), Q(1, 64), witness=solution_witness(sol))
    assert res.status == "SAT" and res.exact
    bad = CHSolution((Q(1, 4), Q(5, 7)), "+")
    assert brute_check(ch_to_etr(inst), Q(1, 64), witness=solution_witness(bad)).status == "UNKNOWN"


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.booleans())
def test_constraints_describe_the_circuit_graph(seed, special):
    rng = random.Random(seed)
    c = special_circuit(rng)[0] if special else linear_circuit(rng, 2, 2)
    f = conj(*circuit_to_constraints(c))
    vals = c.evaluate_all([rand_q(rng, 32, -1, 1) for _ in c.inputs])
    env = {node_name(n): v for n, v in vals.items()}
    assert holds(f, env)
    g = c.gates[-1]
    env[node_name(g.output)] += Q(1, 7)
    assert not holds(f, env)
