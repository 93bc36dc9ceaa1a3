"""Consensus halving instances, solutions and the exact verifier."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence, Union

from .circuit import MUL_CONST, Circuit, Gate
from .errors import BadSolutionShape, ParseError
from .numerics import PiecewisePoly, fmt_q, parse_q

Valuation = Union[PiecewisePoly, Circuit]


def _flip(sign: str) -> str:
    return "-" if sign == "+" else "+"


@dataclass(frozen=True)
class CHInstance:
    """``agents[i]`` is the integral F_i, either piecewise or a one-in one-out circuit."""

    agents: tuple
    domain_length: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "domain_length", Fraction(self.domain_length))

    @classmethod
    def from_densities(cls, densities: Sequence[PiecewisePoly], domain_length=None) -> "CHInstance":
        L = Fraction(domain_length) if domain_length is not None else densities[0].hi
        return cls(tuple(d.integrate() for d in densities), L)

    @property
    def n(self) -> int:
        return len(self.agents)

    def F(self, i: int, t) -> Fraction:
        a = self.agents[i]
        if isinstance(a, Circuit):
            return a.evaluate([Fraction(t)])[0]
        return a(t)

    def total(self, i: int) -> Fraction:
        return self.F(i, self.domain_length)

    def problems(self) -> list[str]:
        """Invariant violations (empty when the instance is well formed)."""
        out = []
        for i, a in enumerate(self.agents):
            if isinstance(a, Circuit):
                if len(a.inputs) != 1 or len(a.outputs) != 1:
                    out.append(f"agent {i}: circuit must have one input and one output")
                continue
            if a.lo != 0 or a.hi != self.domain_length:
                out.append(f"agent {i}: domain [{a.lo}, {a.hi}] differs from [0, {self.domain_length}]")
            if a(a.lo) != 0:
                out.append(f"agent {i}: F(0) != 0")
            if not a.is_nondecreasing():
                out.append(f"agent {i}: F is not nondecreasing")
        return out

    def normalized(self) -> "CHInstance":
        """The same instance rescaled to the domain [0, 1]."""
        L = self.domain_length
        if L == 1:
            return self
        agents = []
        for a in self.agents:
            if isinstance(a, Circuit):
                agents.append(_prescale_circuit(a, L))
            else:
                agents.append(a.rescaled(L))
        return CHInstance(tuple(agents), Fraction(1))

    def to_json(self) -> dict:
        inst = self.normalized()
        agents = []
        for a in inst.agents:
            if isinstance(a, Circuit):
                agents.append({"kind": "circuit", "circuit": a.to_json()})
            else:
                agents.append({"kind": "piecewise", "F": a.to_json()})
        return {"domain_length": fmt_q(inst.domain_length), "agents": agents}

    @classmethod
    def from_json(cls, data: dict) -> "CHInstance":
        try:
            L = parse_q(data.get("domain_length", "1/1"))
            agents = []
            for ad in data["agents"]:
                if ad["kind"] == "circuit":
                    agents.append(Circuit.from_json(ad["circuit"]))
                elif ad["kind"] == "piecewise":
                    agents.append(PiecewisePoly.from_json(ad["F"], integral_form=True))
                else:
                    raise ParseError(f"unknown agent kind {ad['kind']!r}")
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad instance JSON: {exc}") from exc
        return cls(tuple(agents), L)

    def ident(self) -> str:
        return _digest(self.to_json())


def _digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _prescale_circuit(c: Circuit, L: Fraction) -> Circuit:
    """Circuit computing t -> c(L t)."""
    src = c.inputs[0]
    fresh = max(c.nodes) + 1
    gates = [Gate(MUL_CONST, (fresh,), src, L)] + list(c.gates)
    return Circuit(tuple(gates), (fresh,), c.outputs)


@dataclass(frozen=True)
class CHSolution:
    cuts: tuple[Fraction, ...]
    leftmost_sign: str = "+"

    def __post_init__(self):
        object.__setattr__(self, "cuts", tuple(Fraction(t) for t in self.cuts))
        if self.leftmost_sign not in ("+", "-"):
            raise BadSolutionShape(f"leftmost sign must be '+' or '-', got {self.leftmost_sign!r}")

    def flipped(self) -> "CHSolution":
        return CHSolution(self.cuts, _flip(self.leftmost_sign))

    def oriented(self, sign: str = "-") -> "CHSolution":
        return self if self.leftmost_sign == sign else self.flipped()

    def piece_signs(self) -> list[str]:
        s = self.leftmost_sign
        out = []
        for _ in range(len(self.cuts) + 1):
            out.append(s)
            s = _flip(s)
        return out

    def pieces(self, domain_length) -> list[tuple[Fraction, Fraction, str]]:
        bounds = [Fraction(0)] + list(self.cuts) + [Fraction(domain_length)]
        return [(a, b, s) for a, b, s in zip(bounds, bounds[1:], self.piece_signs())]

    def scaled(self, factor) -> "CHSolution":
        k = Fraction(factor)
        return CHSolution(tuple(t * k for t in self.cuts), self.leftmost_sign)

    def to_json(self, domain_length=1) -> dict:
        L = Fraction(domain_length)
        return {"cuts": [fmt_q(t / L) for t in self.cuts], "leftmost_sign": self.leftmost_sign}

    @classmethod
    def from_json(cls, data: dict, domain_length=1) -> "CHSolution":
        L = Fraction(domain_length)
        try:
            return cls(tuple(parse_q(t) * L for t in data["cuts"]), data.get("leftmost_sign", "+"))
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad solution JSON: {exc}") from exc

    def ident(self) -> str:
        return _digest(self.to_json())


def check_shape(inst: CHInstance, sol: CHSolution, budget: int | None = None) -> None:
    L = inst.domain_length
    prev = Fraction(0)
    for t in sol.cuts:
        if t < prev or t > L:
            raise BadSolutionShape(f"cuts must be ascending within [0, {L}]")
        prev = t
    if budget is not None and len(sol.cuts) > budget:
        raise BadSolutionShape(f"{len(sol.cuts)} cuts exceed the budget {budget}")


def value_split(inst: CHInstance, sol: CHSolution, agent: int) -> tuple[Fraction, Fraction]:
    """Exact (F_i(A+), F_i(A-))."""
    check_shape(inst, sol)
    plus = minus = Fraction(0)
    for a, b, s in sol.pieces(inst.domain_length):
        if a == b:
            continue
        v = inst.F(agent, b) - inst.F(agent, a)
        if s == "+":
            plus += v
        else:
            minus += v
    return plus, minus


@dataclass
class Verdict:
    ok: bool
    agents: list[tuple[Fraction, Fraction, bool]] = field(default_factory=list)
    reason: str = ""

    @property
    def failing(self) -> list[int]:
        return [i for i, (_, _, ok) in enumerate(self.agents) if not ok]

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "reason": self.reason,
            "agents": [{"plus": fmt_q(p), "minus": fmt_q(m), "ok": ok} for p, m, ok in self.agents],
        }


def verify(inst: CHInstance, sol: CHSolution, tol=0, budget: int | None = None) -> Verdict:
    """Per-agent check |F_i(A+) - F_i(A-)| <= tol, compared exactly."""
    tol = Fraction(tol)
    try:
        check_shape(inst, sol, budget)
    except BadSolutionShape as exc:
        return Verdict(False, [], str(exc))
    rows = []
    for i in range(inst.n):
        p, m = value_split(inst, sol, i)
        rows.append((p, m, abs(p - m) <= tol))
    ok = all(r[2] for r in rows)
    return Verdict(ok, rows, "" if ok else f"agents {[i for i, r in enumerate(rows) if not r[2]]} unbalanced")


def canonicalize(cuts: Sequence, signs: Sequence[str] | None = None, domain_length=1, leftmost_sign: str = "+") -> CHSolution:
    """Alternating-sign form of an arbitrary signed partition.

    ``signs`` gives the sign of each of the ``len(cuts) + 1`` pieces; when
    omitted the pieces alternate from ``leftmost_sign``.  Zero-width pieces are
    dropped, same-sign neighbours merged, and the freed cuts moved to the right
    end of the domain so the cut count is unchanged.
    """
    L = Fraction(domain_length)
    cuts = [Fraction(t) for t in cuts]
    if signs is None:
        signs = CHSolution(tuple(cuts), leftmost_sign).piece_signs()
    if len(signs) != len(cuts) + 1:
        raise BadSolutionShape("need one sign per piece")
    bounds = [Fraction(0)] + cuts + [L]
    if any(a > b for a, b in zip(bounds, bounds[1:])):
        raise BadSolutionShape("cuts must be ascending within the domain")
    merged: list[list] = []
    for a, b, s in zip(bounds, bounds[1:], signs):
        if a == b:
            continue
        if merged and merged[-1][2] == s:
            merged[-1][1] = b
        else:
            merged.append([a, b, s])
    if not merged:
        return CHSolution(tuple([L] * len(cuts)), leftmost_sign)
    new_cuts = [p[1] for p in merged[:-1]]
    new_cuts += [L] * (len(cuts) - len(new_cuts))
    return CHSolution(tuple(new_cuts), merged[0][2])
