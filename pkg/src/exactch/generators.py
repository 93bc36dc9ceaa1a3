"""Seeded random instances for tests, acceptance runs and the CLI."""

from __future__ import annotations

import math
import random
from fractions import Fraction
from typing import Sequence

from .circuit import (
    ADD,
    CONST,
    DOUBLE_01,
    MUL_CONST,
    SQUARE,
    SUB_01,
    Circuit,
    CircuitBuilder,
    gate_interval,
)
from .lowering import SpecialCircuitCertificate, certify
from .numerics import PiecewisePoly


def rand_q(rng: random.Random, max_den: int = 64, lo=0, hi=1) -> Fraction:
    """Uniform-ish rational in [lo, hi] with denominator at most ``max_den``."""
    lo, hi = Fraction(lo), Fraction(hi)
    q = rng.randint(1, max_den)
    a = math.ceil(lo * q)
    b = math.floor(hi * q)
    if a > b:
        return lo
    return Fraction(rng.randint(a, b), q)


def special_circuit(
    rng: random.Random, max_nodes: int = 6, kinds: Sequence[str] | None = None
) -> tuple[Circuit, SpecialCircuitCertificate]:
    """Random certified special circuit with at most ``max_nodes`` nodes.

    Gates are drawn only when their inputs already have certified ranges
    that fit the gate, so every draw certifies.
    """
    kinds = list(kinds or [CONST, MUL_CONST, ADD, SQUARE, DOUBLE_01, SUB_01])
    b = CircuitBuilder()
    ranges: dict[int, tuple[Fraction, Fraction]] = {}
    n_inputs = rng.randint(1, 2)
    for _ in range(n_inputs):
        ranges[b.input()] = (Fraction(0), Fraction(1))
    half = Fraction(1, 2)
    while len(ranges) < max_nodes:
        nodes = list(ranges)
        small = [v for v in nodes if ranges[v][1] <= half]
        options = [CONST, MUL_CONST, SQUARE, SUB_01]
        if small:
            options += [ADD, DOUBLE_01]
        options = [k for k in options if k in kinds]
        if not options:
            break
        k = rng.choice(options)
        if k == CONST:
            z = rand_q(rng, 16, Fraction(1, 16), 1)
            out = b.const(z)
        elif k == MUL_CONST:
            z = rand_q(rng, 16, Fraction(1, 16), 1)
            out = b.mul_const(rng.choice(nodes), z)
        elif k == SQUARE:
            out = b.square(rng.choice(nodes))
        elif k == SUB_01:
            out = b.sub01(rng.choice(nodes), rng.choice(nodes))
        elif k == ADD:
            out = b.add(rng.choice(small), rng.choice(small))
        else:
            out = b.double(rng.choice(small))
        g = b.gates[-1]
        ranges[out] = gate_interval(g, [ranges[i] for i in g.inputs])
    c = b.build([max(ranges)])
    return c, certify(c, known=ranges)


def satisfying_values(c: Circuit, rng: random.Random, max_den: int = 64) -> list[Fraction]:
    """Node values (indexed by node id) from random rational inputs."""
    x = [rand_q(rng, max_den) for _ in c.inputs]
    vals = c.evaluate_all(x)
    return [vals[n] for n in sorted(vals)]


def linear_circuit(rng: random.Random, n_inputs: int, n_outputs: int, n_gates: int = 8) -> Circuit:
    """Random circuit over CONST, ADD, SUB, MUL_CONST, MAX, MIN."""
    b = CircuitBuilder()
    nodes = [b.input() for _ in range(n_inputs)]
    for _ in range(n_gates):
        k = rng.choice(["ADD", "SUB", "MUL_CONST", "MAX", "MIN", "CONST"])
        a, c = rng.choice(nodes), rng.choice(nodes)
        if k == "ADD":
            out = b.add(a, c)
        elif k == "SUB":
            out = b.sub(a, c)
        elif k == "MUL_CONST":
            out = b.mul_const(a, rand_q(rng, 8, -3, 3))
        elif k == "MAX":
            out = b.max(a, c)
        elif k == "MIN":
            out = b.min(a, c)
        else:
            out = b.const(rand_q(rng, 8, -1, 1))
        nodes.append(out)
    outs = [rng.choice(nodes[n_inputs:] or nodes) for _ in range(n_outputs)]
    return b.build(outs)


def sphere_point(rng: random.Random, dim: int, max_den: int = 64) -> list[Fraction]:
    """Random rational point with sum |x_j| = 1 in R^dim."""
    weights = [Fraction(rng.randint(0, max_den)) for _ in range(dim)]
    if not any(weights):
        weights[rng.randrange(dim)] = Fraction(1)
    total = sum(weights)
    return [w / total * rng.choice((1, -1)) for w in weights]


def step_density(rng: random.Random, pieces: int = 3, max_den: int = 8) -> PiecewisePoly:
    """Nonnegative step density on [0, 1] with positive mass."""
    cuts = sorted({rand_q(rng, max_den) for _ in range(pieces - 1)} - {Fraction(0), Fraction(1)})
    bps = [Fraction(0)] + cuts + [Fraction(1)]
    segs = []
    for a, b in zip(bps, bps[1:]):
        h = rand_q(rng, max_den, 0, 2)
        if h:
            segs.append((a, b, (h,)))
    if not segs:
        segs.append((Fraction(0), Fraction(1), (Fraction(1),)))
    return PiecewisePoly.from_segments(0, 1, segs)
