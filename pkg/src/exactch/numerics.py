"""Exact rationals and piecewise polynomials of degree at most two.

Rationals are :class:`fractions.Fraction` throughout.  The canonical text form
is ``"num/den"`` (always with a slash, never a decimal point) so that values
survive JSON round trips without rounding.

A :class:`PiecewisePoly` stores each piece in the shifted basis
``c0 + c1*(t - p) + c2*(t - p)**2`` where ``p`` is the left breakpoint of the
piece.  Evaluation at an interior breakpoint uses the right piece; only the
last breakpoint falls back to the left piece.
"""

from __future__ import annotations

import bisect
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import DegreeTooHigh, OutOfDomain, ParseError

Q = Fraction

_RATIONAL_RE = re.compile(r"^\s*([+-]?\d+)\s*(?:/\s*(\d+))?\s*$")


def parse_q(text) -> Fraction:
    """Parse ``"p/q"`` or ``"p"``; decimals and floats are refused."""
    if isinstance(text, Fraction):
        return text
    if isinstance(text, bool):
        raise ParseError(f"not a rational: {text!r}")
    if isinstance(text, int):
        return Fraction(text)
    if not isinstance(text, str):
        raise ParseError(f"not a rational: {text!r}")
    m = _RATIONAL_RE.match(text)
    if not m:
        raise ParseError(f"not a rational in p/q form: {text!r}")
    den = int(m.group(2)) if m.group(2) is not None else 1
    if den == 0:
        raise ParseError(f"zero denominator: {text!r}")
    return Fraction(int(m.group(1)), den)


def fmt_q(q) -> str:
    q = Fraction(q)
    return f"{q.numerator}/{q.denominator}"


def as_q(x) -> Fraction:
    """Coerce ints, Fractions and p/q strings; floats are rejected."""
    if isinstance(x, float):
        raise ParseError(f"floating point value {x!r} refused; use p/q")
    return parse_q(x)


def _trim(coeffs: Iterable) -> tuple[Fraction, Fraction, Fraction]:
    cs = [Fraction(c) for c in coeffs]
    if len(cs) > 3:
        if any(c != 0 for c in cs[3:]):
            raise DegreeTooHigh(f"degree {len(cs) - 1} > 2")
        cs = cs[:3]
    while len(cs) < 3:
        cs.append(Fraction(0))
    return cs[0], cs[1], cs[2]


def shift_basis(coeffs: Sequence[Fraction], delta) -> tuple[Fraction, Fraction, Fraction]:
    """Re-express ``sum c_j (t - p)**j`` around ``p + delta``."""
    c0, c1, c2 = _trim(coeffs)
    d = Fraction(delta)
    return (c0 + c1 * d + c2 * d * d, c1 + 2 * c2 * d, c2)


def _poly_eval(coeffs, x):
    c0, c1, c2 = coeffs
    return c0 + x * (c1 + x * c2)


def _degree(coeffs) -> int:
    c0, c1, c2 = coeffs
    if c2 != 0:
        return 2
    if c1 != 0:
        return 1
    return 0


@dataclass(frozen=True)
class PiecewisePoly:
    breakpoints: tuple[Fraction, ...]
    pieces: tuple[tuple[Fraction, Fraction, Fraction], ...]
    integral_form: bool = False
    _float_bp: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        bps = tuple(Fraction(b) for b in self.breakpoints)
        pcs = tuple(_trim(p) for p in self.pieces)
        if len(bps) < 2:
            raise ValueError("need at least two breakpoints")
        if any(b1 >= b2 for b1, b2 in zip(bps, bps[1:])):
            raise ValueError("breakpoints must be strictly ascending")
        if len(pcs) != len(bps) - 1:
            raise ValueError("piece count must equal breakpoint count - 1")
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "pieces", pcs)
        object.__setattr__(self, "_float_bp", tuple(float(b) for b in bps))
        if self.integral_form and not self.is_continuous():
            raise ValueError("integral-form function is discontinuous")

    # construction helpers
    @classmethod
    def constant(cls, value, lo=0, hi=1) -> "PiecewisePoly":
        return cls((lo, hi), ((value,),))

    @classmethod
    def from_segments(cls, lo, hi, segments) -> "PiecewisePoly":
        """Sum of polynomial bumps.

        ``segments`` holds ``(a, b, coeffs)`` triples; ``coeffs`` are in the
        basis ``(t - a)**j`` and the bump is zero outside ``[a, b]``.
        """
        lo, hi = Fraction(lo), Fraction(hi)
        cuts = {lo, hi}
        segs = []
        for a, b, coeffs in segments:
            a, b = Fraction(a), Fraction(b)
            if not (lo <= a < b <= hi):
                raise OutOfDomain(f"segment [{a}, {b}] outside [{lo}, {hi}]")
            cuts.update((a, b))
            segs.append((a, b, _trim(coeffs)))
        bps = sorted(cuts)
        pieces = []
        for left, right in zip(bps, bps[1:]):
            acc = [Fraction(0)] * 3
            for a, b, cs in segs:
                if a <= left and right <= b:
                    shifted = shift_basis(cs, left - a)
                    acc = [x + y for x, y in zip(acc, shifted)]
            pieces.append(tuple(acc))
        return cls(tuple(bps), tuple(pieces)).simplified()

    def simplified(self) -> "PiecewisePoly":
        """Merge neighbouring pieces that carry the same polynomial."""
        bps = [self.breakpoints[0]]
        pcs = []
        for i, cs in enumerate(self.pieces):
            if pcs:
                prev = pcs[-1]
                moved = shift_basis(prev, self.breakpoints[i] - bps[-1])
                if moved == cs:
                    bps[-1] = self.breakpoints[i + 1]
                    continue
            bps.append(self.breakpoints[i + 1])
            pcs.append(cs)
        return PiecewisePoly(tuple(bps), tuple(pcs), self.integral_form)

    # queries
    @property
    def lo(self) -> Fraction:
        return self.breakpoints[0]

    @property
    def hi(self) -> Fraction:
        return self.breakpoints[-1]

    def degree(self) -> int:
        return max(_degree(p) for p in self.pieces)

    def _locate(self, t) -> int:
        if t < self.lo or t > self.hi:
            raise OutOfDomain(f"{t} outside [{self.lo}, {self.hi}]")
        idx = bisect.bisect_right(self.breakpoints, t) - 1
        return min(idx, len(self.pieces) - 1)

    def __call__(self, t) -> Fraction:
        t = Fraction(t)
        i = self._locate(t)
        return _poly_eval(self.pieces[i], t - self.breakpoints[i])

    def eval_float(self, t: float) -> float:
        """Double-precision evaluation; never used on verification paths."""
        if t < self._float_bp[0] or t > self._float_bp[-1]:
            raise OutOfDomain(f"{t} outside [{self.lo}, {self.hi}]")
        i = min(bisect.bisect_right(self._float_bp, t) - 1, len(self.pieces) - 1)
        c0, c1, c2 = (float(c) for c in self.pieces[i])
        x = t - self._float_bp[i]
        return c0 + x * (c1 + x * c2)

    def is_continuous(self) -> bool:
        for i in range(1, len(self.pieces)):
            width = self.breakpoints[i] - self.breakpoints[i - 1]
            if _poly_eval(self.pieces[i - 1], width) != self.pieces[i][0]:
                return False
        return True

    def is_nondecreasing(self) -> bool:
        """Exact check that the function never decreases on its domain."""
        if not self.is_continuous():
            return False
        for i, (c0, c1, c2) in enumerate(self.pieces):
            width = self.breakpoints[i + 1] - self.breakpoints[i]
            # derivative c1 + 2 c2 x is affine; check both ends of the piece
            if c1 < 0 or c1 + 2 * c2 * width < 0:
                return False
        return True

    # calculus
    def integrate(self) -> "PiecewisePoly":
        """Antiderivative vanishing at the left end of the domain."""
        if self.degree() > 1:
            raise DegreeTooHigh("integrate needs pieces of degree <= 1")
        acc = Fraction(0)
        pieces = []
        for i, (c0, c1, _) in enumerate(self.pieces):
            width = self.breakpoints[i + 1] - self.breakpoints[i]
            pieces.append((acc, c0, c1 / 2))
            acc += c0 * width + c1 * width * width / 2
        return PiecewisePoly(self.breakpoints, tuple(pieces), integral_form=True)

    def derivative(self) -> "PiecewisePoly":
        return PiecewisePoly(self.breakpoints, tuple((c1, 2 * c2, 0) for _, c1, c2 in self.pieces))

    def definite_integral(self, a, b) -> Fraction:
        a, b = Fraction(a), Fraction(b)
        if a > b:
            raise OutOfDomain(f"lower limit {a} exceeds upper limit {b}")
        for t in (a, b):
            if t < self.lo or t > self.hi:
                raise OutOfDomain(f"{t} outside [{self.lo}, {self.hi}]")
        if a == b:
            return Fraction(0)
        F = self.integrate()
        return F(b) - F(a)

    def mass(self) -> Fraction:
        return self.definite_integral(self.lo, self.hi)

    def rescaled(self, factor) -> "PiecewisePoly":
        """Return ``t -> self(factor * t)`` on the shrunken domain."""
        k = Fraction(factor)
        bps = tuple(b / k for b in self.breakpoints)
        pcs = tuple((c0, c1 * k, c2 * k * k) for c0, c1, c2 in self.pieces)
        return PiecewisePoly(bps, pcs, self.integral_form)

    def scaled_values(self, factor) -> "PiecewisePoly":
        k = Fraction(factor)
        return PiecewisePoly(self.breakpoints, tuple(tuple(c * k for c in p) for p in self.pieces), self.integral_form)

    # serialisation
    def to_json(self) -> dict:
        return {
            "breakpoints": [fmt_q(b) for b in self.breakpoints],
            "pieces": [[fmt_q(c) for c in p] for p in self.pieces],
        }

    @classmethod
    def from_json(cls, data: dict, integral_form: bool = False) -> "PiecewisePoly":
        try:
            bps = [parse_q(b) for b in data["breakpoints"]]
            pcs = [[parse_q(c) for c in p] for p in data["pieces"]]
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad piecewise polynomial: {exc}") from exc
        try:
            return cls(tuple(bps), tuple(tuple(p) for p in pcs), integral_form)
        except ValueError as exc:
            raise ParseError(str(exc)) from exc
