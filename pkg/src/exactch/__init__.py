"""Exact consensus-halving reductions, solvers and verifiers."""

__version__ = "0.1.0"
