from fractions import Fraction as Q

import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from exactch.errors import DegreeTooHigh, OutOfDomain, ParseError
from exactch.numerics import PiecewisePoly, as_q, fmt_q, parse_q

from strategies import rationals, step_or_ramp


def test_constant_piece_evaluates_to_its_value():
    assert PiecewisePoly.constant(4)(Q(1, 2)) == 4


def test_ramp_piece():
    f = PiecewisePoly((0, 1), ((0, 2),))
    assert f(Q(1, 3)) == Q(2, 3)


def test_breakpoint_takes_right_piece():
    f = PiecewisePoly((0, 1, 2), ((1,), (0,)))
    assert f(1) == 0
    assert f(2) == 0


def test_out_of_domain():
    with pytest.raises(OutOfDomain):
        PiecewisePoly.constant(1)(Q(3, 2))


def test_integrate_constant_gives_identity():
    F = PiecewisePoly.constant(1).integrate()
    assert all(F(Q(k, 7)) == Q(k, 7) for k in range(8))


def test_integrate_ramp_gives_square():
    F = PiecewisePoly((0, 1), ((0, 2),)).integrate()
    assert F(Q(1, 3)) == Q(1, 9)
    assert F.degree() == 2


def test_integrate_two_pieces():
    F = PiecewisePoly((0, 1, 2), ((0,), (4,))).integrate()
    assert F.pieces == ((0, 0, 0), (0, 4, 0))
    assert F(Q(3, 2)) == 2


def test_integrate_refuses_degree_two():
    with pytest.raises(DegreeTooHigh):
        PiecewisePoly((0, 1), ((0, 0, 1),)).integrate()


def test_definite_integrals():
    assert PiecewisePoly.constant(1).definite_integral(0, 1) == 1
    assert PiecewisePoly.constant(1).definite_integral(Q(1, 3), Q(1, 3)) == 0
    f = PiecewisePoly((0, 1, 2), ((4,), (0,)))
    assert f.definite_integral(Q(1, 2), Q(3, 2)) == 2
    assert quad(lambda t: f.eval_float(t), 0.5, 1.5, points=[1.0])[0] == pytest.approx(2.0)


def test_from_segments_sums_bumps():
    f = PiecewisePoly.from_segments(0, 3, [(0, 2, (1,)), (1, 3, (2,))])
    assert [f(t) for t in (Q(1, 2), Q(3, 2), Q(5, 2))] == [1, 3, 2]
    assert f.mass() == 1 * 2 + 2 * 2


def test_rational_text_form():
    assert parse_q("3/6") == Q(1, 2)
    assert parse_q("-4") == -4
    assert fmt_q(Q(2)) == "2/1"
    for bad in ("0.5", "1/0", "x", 1.5):
        with pytest.raises(ParseError):
            as_q(bad)


def test_json_round_trip():
    f = PiecewisePoly((0, Q(1, 3), 1), ((1, 2), (Q(5, 3), 0, 1)))
    assert PiecewisePoly.from_json(f.to_json()) == f


@given(rationals(-10, 10, 1000))
def test_rational_string_round_trip(q):
    assert parse_q(fmt_q(q)) == q


@given(step_or_ramp(), rationals(0, 2, 32), rationals(0, 2, 32), rationals(0, 2, 32))
def test_definite_integral_is_additive(f, a, b, c):
    a, b, c = sorted((a, b, c))
    assert f.definite_integral(a, c) == f.definite_integral(a, b) + f.definite_integral(b, c)


@given(step_or_ramp())
def test_derivative_of_integral_recovers_density(f):
    F = f.integrate()
    assert F.is_continuous()
    assert F.is_nondecreasing()
    assert F.derivative().pieces == f.pieces


@given(step_or_ramp(), rationals(0, 2, 32))
def test_float_mode_tracks_exact(f, t):
    assert f.eval_float(float(t)) == pytest.approx(float(f(t)), abs=1e-9)


@given(step_or_ramp(), st.integers(1, 12))
def test_rescaling_preserves_shape(f, k):
    g = f.rescaled(k)
    assert g.hi == f.hi / k
    for t in g.breakpoints:
        assert g(t) == f(k * t)
