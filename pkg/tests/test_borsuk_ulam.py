import random
from fractions import Fraction as Q

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exactch.borsuk_ulam import (
    ApproxSolution,
    BUInstance,
    LipschitzWitness,
    bu_verify,
    ch_to_bu,
    decode_bu_solution,
    decoder_circuit,
    edge_steps,
    l1,
    mesh_size,
    point_to_cuts,
    run_decoder_circuit,
    tucker_label,
    tucker_solve,
)
from exactch.chmodel import CHInstance, CHSolution, value_split, verify
from exactch.circuit import MUL, SQUARE, CircuitBuilder, lipschitz_bound, validate
from exactch.errors import DimensionTooLarge, NotABUSolution, NotOnSphere
from exactch.generators import sphere_point, step_density
from exactch.numerics import PiecewisePoly

HALF = Q(1, 2)


def uniform():
    return CHInstance.from_densities([PiecewisePoly.constant(1)])


def projection(d=1, k=0):
    b = CircuitBuilder()
    xs = [b.input() for _ in range(d + 1)]
    return BUInstance(d, b.build([xs[k]] * d if d == 1 else xs[:d]))


def test_uniform_agent_bu_solution():
    bu = ch_to_bu(uniform())
    assert bu.f([HALF, -HALF]) == [HALF] == bu.f([-HALF, HALF])
    assert bu_verify(bu, [HALF, -HALF], 0).ok


def test_degenerate_point_is_not_a_solution():
    inst = CHInstance.from_densities([PiecewisePoly.constant(1), PiecewisePoly.constant(2)])
    bu = ch_to_bu(inst)
    x = [Q(1), Q(0), Q(0)]
    assert bu.f(x) == [1, 2]
    assert bu.f([-v for v in x]) == [0, 0]
    assert not bu_verify(bu, x, 0).ok


def test_linear_instance_gives_linear_circuit():
    inst = CHInstance.from_densities([PiecewisePoly.constant(1), step_density(random.Random(0))])
    bu = ch_to_bu(inst)
    assert validate(bu.circuit) == []
    assert not bu.circuit.kinds() & {MUL, SQUARE}
    assert bu.linear


def test_ramp_instance_is_not_linear():
    inst = CHInstance.from_densities([PiecewisePoly((0, 1), ((0, 2),))])
    assert not ch_to_bu(inst).linear


def test_decode_examples():
    inst = uniform()
    assert decode_bu_solution([HALF, -HALF], inst) == CHSolution((HALF,), "+")
    assert point_to_cuts([Q(1, 4), Q(1, 4), -HALF]) == CHSolution((HALF, Q(1)), "+")
    assert point_to_cuts([Q(0), HALF, -HALF]) == CHSolution((HALF, Q(1)), "+")
    with pytest.raises(NotOnSphere):
        decode_bu_solution([HALF, HALF / 2], inst)
    with pytest.raises(NotABUSolution):
        decode_bu_solution([Q(1, 4), -Q(3, 4)], inst)


def test_bu_verify_off_sphere():
    v = bu_verify(ch_to_bu(uniform()), [HALF, Q(1, 4)], 0)
    assert not v.ok and not v.on_sphere and v.reason == "NotOnSphere"


def test_tucker_label_rule():
    assert tucker_label([Q(3, 10), -HALF]) == -2
    assert tucker_label([HALF, -HALF]) == 1
    assert tucker_label([Q(0), Q(0)]) == 1


def test_tucker_on_projection():
    bu = projection()
    eps = Q(1, 32)
    out = tucker_solve(bu, eps, lipschitz_bound(bu.circuit))
    assert isinstance(out, ApproxSolution)
    assert abs(out.x[0]) <= eps
    assert bu_verify(bu, out.x, eps).ok


def test_tucker_returns_lipschitz_witness():
    # g = 8 x0 + x1 / 2 vanishes at x0 = 1/17, which is not a lattice vertex
    b = CircuitBuilder()
    x0, x1 = b.input(), b.input()
    bu = BUInstance(1, b.build([b.add(b.mul_const(x0, 4), b.mul_const(x1, Q(1, 4)))]))
    lam = lipschitz_bound(bu.circuit) - Q(5, 4)
    assert lam == 3
    out = tucker_solve(bu, Q(1, 8), lam)
    assert isinstance(out, LipschitzWitness)
    assert out.ratio > lam


def test_zero_at_lattice_vertex_is_found():
    b = CircuitBuilder()
    x0, _ = b.input(), b.input()
    bu = BUInstance(1, b.build([b.mul_const(x0, 4)]))
    out = tucker_solve(bu, Q(1, 8), 3)
    assert isinstance(out, ApproxSolution)
    assert out.residual == 0 and out.x[0] == 0


def test_dimension_limit():
    b = CircuitBuilder()
    xs = [b.input() for _ in range(5)]
    with pytest.raises(DimensionTooLarge):
        tucker_solve(BUInstance(4, b.build(xs[:4])), Q(1, 4), 1)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_tucker_on_linear_ch_instances(n):
    rng = random.Random(n)
    inst = CHInstance.from_densities([step_density(rng, max_den=4) for _ in range(n)])
    bu = ch_to_bu(inst)
    lam = lipschitz_bound(bu.circuit)
    # the composed bound grows quickly with n; keep the mesh at 40 steps
    eps = lam / 40
    assert mesh_size(eps, lam) == 40
    out = tucker_solve(bu, eps, lam)
    assert isinstance(out, ApproxSolution)
    assert bu_verify(bu, out.x, eps).ok
    sol = point_to_cuts(out.x)
    assert verify(inst, sol, eps).ok


def test_mesh_and_edge_steps():
    assert mesh_size(Q(1, 64), 15) == 960
    for d in (1, 2, 3):
        steps = edge_steps(d)
        assert len(steps) == 2**d - 1
        for s in steps:
            assert sum(s) == 0
            assert max(abs(v) for v in s) == 1


def test_json_round_trip():
    bu = ch_to_bu(uniform())
    assert BUInstance.from_json(bu.to_json()) == bu


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_decoder_circuit_agrees_with_direct_algorithm(seed):
    rng = random.Random(seed)
    n = rng.randint(1, 3)
    x = sphere_point(rng, n + 1, max_den=4)
    c = decoder_circuit(n)
    assert validate(c, role="decoder") == []
    assert run_decoder_circuit(c, x) == point_to_cuts(x)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_reduction_and_decoding_preserve_values(seed):
    rng = random.Random(seed)
    n = rng.randint(1, 3)
    inst = CHInstance.from_densities([step_density(rng) for _ in range(n)])
    bu = ch_to_bu(inst)
    x = sphere_point(rng, n + 1)
    assert l1(x) == 1
    sol = point_to_cuts(x)
    # widths of the raw signed pieces, before zero shifting and merging
    bounds = [Q(0)]
    for v in x:
        bounds.append(bounds[-1] + abs(v))
    for i in range(n):
        raw_plus = sum((inst.F(i, b) - inst.F(i, a) for a, b, v in zip(bounds, bounds[1:], x) if v > 0), Q(0))
        assert value_split(inst, sol, i)[0] == raw_plus == bu.f(x)[i]
        assert bu.f(x)[i] + bu.f([-v for v in x])[i] == inst.total(i)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_labels_are_odd(seed):
    rng = random.Random(seed)
    inst = CHInstance.from_densities([step_density(rng) for _ in range(2)])
    bu = ch_to_bu(inst)
    x = sphere_point(rng, 3)
    g = bu.g(x)
    if any(g):
        assert tucker_label(g) == -tucker_label(bu.g([-v for v in x]))
