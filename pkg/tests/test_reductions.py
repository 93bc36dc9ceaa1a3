import itertools
import random
from fractions import Fraction as Q

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exactch.chmodel import verify
from exactch.errors import NormalizationFailure, ParseError, ValuesDoNotSatisfyCircuit
from exactch.reductions import (
    GameInstance,
    Polynomial,
    comparators,
    conjunction_to_feasible,
    feasible_circuit,
    feasible_reduction,
    fixed_points,
    game_circuit_scaled,
    game_circuit_unscaled,
    matching_pennies,
    normal_form,
    regret,
    sorting_network,
)

HALF = Q(1, 2)


def test_polynomial_collects_like_terms():
    p = Polynomial(2, ((1, (1, 0)), (2, (1, 0)), (3, (0, 1)), (-3, (0, 1))))
    assert p.terms == ((3, (1, 0)),)
    assert p([Q(1, 3), 5]) == 1
    assert Polynomial(1, ((1, (1,)), (-1, (1,)))).is_zero()


def test_polynomial_rejects_bad_terms():
    with pytest.raises(ParseError):
        Polynomial(2, ((1, (1,)),))
    with pytest.raises(ParseError):
        Polynomial(1, ((Q(1, 2), (1,)),))
    with pytest.raises(ParseError):
        Polynomial.from_json({"vars": 1, "terms": [{"coef": 1.5, "exps": [1]}]})


def test_polynomial_json_round_trip():
    p = Polynomial(2, ((4, (2, 1)), (-7, (0, 0))))
    assert Polynomial.from_json(p.to_json()) == p
    assert str(p) == "4*X1^2*X2 - 7"


def test_conjunction_zero_set():
    x, y = Polynomial.variable(2, 0), Polynomial.variable(2, 1)
    one = Polynomial.constant(2, 1)
    q = conjunction_to_feasible([x - y, x + y - one])
    assert q([HALF, HALF]) == 0
    assert q([0, 0]) == 1
    assert q([1, 0]) == 1
    assert conjunction_to_feasible([], nvars=3).is_zero()
    p = x * y - one
    assert conjunction_to_feasible([p]) == p * p


def test_normal_form_coefficients():
    nf = normal_form(Polynomial(1, ((2, (1,)), (1, (0,)))))
    assert nf.l == 2 and nf.c_max == 2
    assert nf.q1 == [(HALF, (1,)), (Q(1, 4), (0,))]
    assert nf.q2 == []


@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.tuples(st.integers(-9, 9), st.tuples(st.integers(0, 3), st.integers(0, 3))),
        min_size=1,
        max_size=5,
    ),
    st.tuples(st.fractions(0, 1, max_denominator=16), st.fractions(0, 1, max_denominator=16)),
)
def test_normal_form_scales_polynomial(terms, x):
    p = Polynomial(2, tuple(terms))
    nf = normal_form(p)
    if p.is_zero():
        return
    q1, q2 = nf.evaluate(x)
    assert q1 - q2 == p(x) / (nf.l * nf.c_max)
    assert all(0 < c <= Q(1, nf.l) for c, _ in nf.q1 + nf.q2)
    assert feasible_circuit(nf).evaluate(list(x)) == [q1, q2]
    assert 0 <= q1 <= 1 and 0 <= q2 <= 1


def test_feasible_yes_instance_balances_every_agent():
    red = feasible_reduction(Polynomial(1, ((2, (1,)), (-1, (0,)))))
    emb = red.embedded
    assert emb.n == 4 * emb.r + 1
    sol = red.encode_root([HALF])
    assert verify(emb.instance, sol, 0, budget=emb.n - 1).ok
    with pytest.raises(ValuesDoNotSatisfyCircuit):
        red.encode_root([Q(1, 4)])


def test_comparator_counts():
    assert comparators(1) == []
    assert comparators(2) == [(0, 1)]
    with pytest.raises(ValueError):
        comparators(0)


def test_sorting_network_width_two():
    assert sorting_network(2).evaluate([Q(1, 3), Q(2, 3)]) == [Q(2, 3), Q(1, 3)]
    assert sorting_network(1).evaluate([Q(1, 5)]) == [Q(1, 5)]


@pytest.mark.parametrize("width", [3, 4, 5, 6])
def test_sorting_network_all_permutations(width):
    net = sorting_network(width)
    vals = [Q(k, width + 1) for k in range(width)]
    want = sorted(vals, reverse=True)
    for perm in itertools.permutations(vals):
        assert net.evaluate(list(perm)) == want


def test_matching_pennies_fixed_point():
    mp = matching_pennies()
    assert fixed_points(mp) == [(HALF,) * 4]
    assert regret(mp, [HALF] * 4) == 0
    assert regret(mp, [1, 0, 1, 0]) > 0


def test_pure_equilibrium_is_a_fixed_point():
    # prisoner's dilemma: both defect
    pd = GameInstance((2, 2), ((3, 0, 5, 1), (3, 5, 0, 1)))
    x = [0, 1, 0, 1]
    assert regret(pd, x) == 0
    assert game_circuit_unscaled(pd).evaluate(x) == [Q(v) for v in x]
    assert (Q(0), Q(1), Q(0), Q(1)) in fixed_points(pd)


def test_game_validation_and_json():
    with pytest.raises(NormalizationFailure):
        GameInstance((2,), ((1, 2),))
    with pytest.raises(NormalizationFailure):
        GameInstance((2, 2), ((1, 2, 3), (1, 2, 3)))
    g = GameInstance((2, 3), (tuple(range(6)), tuple(Q(k, 3) for k in range(6))))
    assert GameInstance.from_json(g.to_json()) == g
    with pytest.raises(ParseError):
        GameInstance.from_json({"payoffs": []})


def test_normalized_payoffs_range():
    g = GameInstance((2, 3), ((1, -4, 7, 0, 2, 2), (5, 5, 5, 5, 5, 5))).normalized()
    N = g.total_strategies
    assert min(g.payoffs[0]) == 0 and max(g.payoffs[0]) == Q(1, N)
    assert all(v == 0 for v in g.payoffs[1])


def _profile(rng, counts):
    x = []
    for k in counts:
        w = [rng.randint(0, 9) for _ in range(k)]
        w[rng.randrange(k)] += 1
        x += [Q(v, sum(w)) for v in w]
    return x


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_scaled_and_unscaled_agree_on_simplices(seed):
    rng = random.Random(seed)
    counts = rng.choice([(2, 2), (2, 3), (3, 3)])
    size = counts[0] * counts[1]
    g = GameInstance(counts, tuple(tuple(rng.randint(-3, 3) for _ in range(size)) for _ in counts))
    x = _profile(rng, counts)
    y = game_circuit_unscaled(g).evaluate(x)
    sg = game_circuit_scaled(g)
    assert sg.circuit.evaluate(x) == y
    for part in g.split(y):
        assert sum(part) == 1 and min(part) >= 0
    vals = sg.circuit.evaluate_all(x)
    for node, (lo, hi) in sg.hints.items():
        assert lo <= vals[node] <= hi
