"""Exception hierarchy shared by every module of the toolkit."""

from __future__ import annotations


class ExactCHError(Exception):
    """Base class for all toolkit errors."""


class ParseError(ExactCHError, ValueError):
    pass


# numerics
class OutOfDomain(ExactCHError, ValueError):
    pass


class DegreeTooHigh(ExactCHError, ValueError):
    pass


# circuit
class CyclicCircuit(ExactCHError):
    pass


class ArityMismatch(ExactCHError, ValueError):
    pass


class RangeUnprovable(ExactCHError):
    pass


class RangeViolation(ExactCHError):
    pass


class NonlinearCircuit(ExactCHError):
    pass


class InvalidCircuit(ExactCHError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


# consensus halving model and embedding
class BadSolutionShape(ExactCHError, ValueError):
    pass


class UncertifiedCircuit(ExactCHError):
    pass


class ValuesDoNotSatisfyCircuit(ExactCHError):
    pass


class SolutionDoesNotSatisfyAgents(ExactCHError):
    pass


class CutOutsideExpectedInterval(ExactCHError):
    pass


class MissingOutputPair(ExactCHError):
    pass


class UnsupportedPieceKind(ExactCHError):
    pass


# borsuk-ulam
class NonCircuitValuation(ExactCHError):
    pass


class NotOnSphere(ExactCHError):
    pass


class NotABUSolution(ExactCHError):
    pass


class DimensionTooLarge(ExactCHError):
    pass


# lp rounding
class InfeasibleLP(ExactCHError):
    pass


class PositiveOptimum(ExactCHError):
    def __init__(self, z, x=None):
        self.z = z
        self.x = x
        super().__init__(f"LP optimum z* = {z} > 0; the epsilon budget was violated")


# etr
class ComparisonGateForbidden(ExactCHError):
    pass


class UnboundedVariable(ExactCHError):
    pass


# reductions
class NormalizationFailure(ExactCHError):
    pass
