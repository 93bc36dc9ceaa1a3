"""Existential theory of the reals: sentence AST, s-expression text format,
emitters for circuits, consensus-halving and Borsuk-Ulam, and a grid checker.

Text grammar (whitespace separated, ``;`` starts a comment)::

    sentence := item*
    item     := (declare-var NAME [RAT RAT]) | (assert FORMULA) | (check-sat)
    FORMULA  := true | false | (and FORMULA*) | (or FORMULA*) | (not FORMULA)
              | (CMP TERM TERM)            CMP in < <= = >= >
    TERM     := NAME | RAT | (+ TERM+) | (* TERM+) | (- TERM TERM) | (- TERM)
    RAT      := [-]p/q | [-]p
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Sequence, Union

from .borsuk_ulam import BUInstance, l1, positive_mass_circuit
from .chmodel import CHInstance, CHSolution
from .circuit import (
    ADD,
    CMP_GT,
    CONST,
    DOUBLE_01,
    MAX,
    MIN,
    MUL,
    MUL_CONST,
    SQUARE,
    SUB,
    SUB_01,
    Circuit,
    CircuitBuilder,
    interval_ranges,
)
from .errors import ComparisonGateForbidden, ParseError, UnboundedVariable
from .numerics import fmt_q, parse_q

# AST: terms are str (variable), Fraction (constant) or tuple (op, *args);
# formulas are bool or tuple (op, *args).
Term = Union[str, Fraction, tuple]
Formula = Union[bool, tuple]

CMPS = ("<", "<=", "=", ">=", ">")
CONNECTIVES = ("and", "or", "not")
TERM_OPS = ("+", "*", "-")


def var(name: str) -> str:
    return name


def eq(a, b) -> tuple:
    return ("=", a, b)


def ge(a, b) -> tuple:
    return (">=", a, b)


def conj(*fs) -> tuple:
    return ("and",) + tuple(fs)


def disj(*fs) -> tuple:
    return ("or",) + tuple(fs)


@dataclass
class ETRSentence:
    """Declared variables with optional boxes and a list of asserted formulas."""

    variables: dict[str, tuple[Fraction, Fraction] | None] = field(default_factory=dict)
    asserts: list[Formula] = field(default_factory=list)
    comments: list[str] = field(default_factory=list)

    def declare(self, name: str, lo=None, hi=None):
        box = None if lo is None else (Fraction(lo), Fraction(hi))
        self.variables[name] = box
        return name

    def add(self, f: Formula):
        self.asserts.append(f)

    def matrix(self) -> tuple:
        return conj(*self.asserts)

    def undeclared(self) -> set[str]:
        used: set[str] = set()
        for f in self.asserts:
            used |= formula_vars(f)
        return used - set(self.variables)

    def emit(self) -> str:
        return emit(self)

    def __eq__(self, other):
        return (
            isinstance(other, ETRSentence)
            and self.variables == other.variables
            and [normalize(f) for f in self.asserts] == [normalize(f) for f in other.asserts]
        )


# traversal


def term_vars(t: Term) -> set[str]:
    if isinstance(t, str):
        return {t}
    if isinstance(t, Fraction):
        return set()
    out: set[str] = set()
    for a in t[1:]:
        out |= term_vars(a)
    return out


def formula_vars(f: Formula) -> set[str]:
    if isinstance(f, bool):
        return set()
    if f[0] in CMPS:
        return term_vars(f[1]) | term_vars(f[2])
    out: set[str] = set()
    for a in f[1:]:
        out |= formula_vars(a)
    return out


def normalize(f):
    """Structural form with plain ints folded to Fractions."""
    if isinstance(f, bool) or isinstance(f, str):
        return f
    if isinstance(f, (int, Fraction)):
        return Fraction(f)
    return (f[0],) + tuple(normalize(a) for a in f[1:])


def eval_term(t: Term, env: Mapping[str, Fraction]) -> Fraction:
    if isinstance(t, str):
        return env[t]
    if isinstance(t, (int, Fraction)):
        return Fraction(t)
    op, args = t[0], t[1:]
    if op == "+":
        return sum((eval_term(a, env) for a in args), Fraction(0))
    if op == "*":
        out = Fraction(1)
        for a in args:
            out *= eval_term(a, env)
        return out
    if op == "-":
        if len(args) == 1:
            return -eval_term(args[0], env)
        return eval_term(args[0], env) - eval_term(args[1], env)
    raise ValueError(f"unknown term operator {op}")


INF = float("inf")


def violation(f: Formula, env: Mapping[str, Fraction], cap=None):
    """How far ``f`` is from holding: 0 when it holds exactly, infinite when a
    strict comparison or a negation fails.

    With ``cap`` a conjunction stops at the first part violated by more than
    ``cap``; the result is then some value above ``cap``, exact otherwise.
    """
    if isinstance(f, bool):
        return Fraction(0) if f else INF
    op = f[0]
    if op == "and":
        worst = Fraction(0)
        for a in f[1:]:
            worst = max(worst, violation(a, env, cap))
            if cap is not None and worst > cap:
                break
        return worst
    if op == "or":
        best = INF
        for a in f[1:]:
            best = min(best, violation(a, env, cap))
            if best == 0:
                break
        return best
    if op == "not":
        return Fraction(0) if violation(f[1], env) > 0 else INF
    d = eval_term(f[1], env) - eval_term(f[2], env)
    if op == "=":
        return abs(d)
    if op == "<=":
        return max(d, Fraction(0))
    if op == ">=":
        return max(-d, Fraction(0))
    if op == "<":
        return Fraction(0) if d < 0 else INF
    if op == ">":
        return Fraction(0) if d > 0 else INF
    raise ValueError(f"unknown formula operator {op}")


def holds(f: Formula, env: Mapping[str, Fraction], tol=Fraction(0)) -> bool:
    """Truth of ``f`` with non-strict comparisons relaxed by ``tol``."""
    return violation(f, env) <= tol


# text format


def _emit_term(t: Term) -> str:
    if isinstance(t, str):
        return t
    if isinstance(t, (int, Fraction)):
        return fmt_q(Fraction(t))
    return "(" + " ".join([t[0]] + [_emit_term(a) for a in t[1:]]) + ")"


def _emit_formula(f: Formula) -> str:
    if isinstance(f, bool):
        return "true" if f else "false"
    if f[0] in CMPS:
        return f"({f[0]} {_emit_term(f[1])} {_emit_term(f[2])})"
    return "(" + " ".join([f[0]] + [_emit_formula(a) for a in f[1:]]) + ")"


def emit(s: ETRSentence) -> str:
    lines = [f"; {c}" for c in s.comments]
    for name, box in s.variables.items():
        if box is None:
            lines.append(f"(declare-var {name})")
        else:
            lines.append(f"(declare-var {name} {fmt_q(box[0])} {fmt_q(box[1])})")
    for f in s.asserts:
        lines.append(f"(assert {_emit_formula(f)})")
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"


_TOKEN = re.compile(r"\(|\)|[^\s()]+")
_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*$")


def _tokens(text: str) -> list[str]:
    out = []
    for line in text.splitlines():
        line = line.split(";", 1)[0]
        out += _TOKEN.findall(line)
    return out


def _read(tokens: list[str], pos: int):
    if pos >= len(tokens):
        raise ParseError("unexpected end of input")
    tok = tokens[pos]
    if tok == ")":
        raise ParseError("unexpected ')'")
    if tok != "(":
        return tok, pos + 1
    items = []
    pos += 1
    while True:
        if pos >= len(tokens):
            raise ParseError("unbalanced '('")
        if tokens[pos] == ")":
            return items, pos + 1
        item, pos = _read(tokens, pos)
        items.append(item)


def _atom_term(tok: str) -> Term:
    if _NAME.match(tok) and tok not in ("true", "false"):
        return tok
    try:
        return parse_q(tok)
    except ParseError:
        raise ParseError(f"bad term atom {tok!r}") from None


def _parse_term(x) -> Term:
    if isinstance(x, str):
        return _atom_term(x)
    if not x or x[0] not in TERM_OPS:
        raise ParseError(f"bad term {x!r}")
    args = tuple(_parse_term(a) for a in x[1:])
    if x[0] == "-" and len(args) not in (1, 2):
        raise ParseError("'-' takes one or two arguments")
    if x[0] != "-" and not args:
        raise ParseError(f"'{x[0]}' needs arguments")
    return (x[0],) + args


def _parse_formula(x) -> Formula:
    if x == "true":
        return True
    if x == "false":
        return False
    if isinstance(x, str) or not x:
        raise ParseError(f"bad formula {x!r}")
    op = x[0]
    if op in ("and", "or"):
        return (op,) + tuple(_parse_formula(a) for a in x[1:])
    if op == "not":
        if len(x) != 2:
            raise ParseError("'not' takes one argument")
        return ("not", _parse_formula(x[1]))
    if op in CMPS:
        if len(x) != 3:
            raise ParseError(f"'{op}' takes two arguments")
        return (op, _parse_term(x[1]), _parse_term(x[2]))
    raise ParseError(f"unknown formula operator {op!r}")


def parse(text: str) -> ETRSentence:
    tokens = _tokens(text)
    s = ETRSentence()
    s.comments = [ln.split(";", 1)[1].strip() for ln in text.splitlines() if ln.lstrip().startswith(";")]
    pos = 0
    while pos < len(tokens):
        item, pos = _read(tokens, pos)
        if isinstance(item, str) or not item:
            raise ParseError(f"bad top-level item {item!r}")
        head = item[0]
        if head == "declare-var":
            if len(item) == 2:
                s.declare(item[1])
            elif len(item) == 4:
                s.declare(item[1], parse_q(item[2]), parse_q(item[3]))
            else:
                raise ParseError(f"bad declaration {item!r}")
            if not isinstance(item[1], str) or not _NAME.match(item[1]):
                raise ParseError(f"bad variable name {item[1]!r}")
        elif head == "assert":
            if len(item) != 2:
                raise ParseError("assert takes one formula")
            s.add(_parse_formula(item[1]))
        elif head == "check-sat":
            pass
        else:
            raise ParseError(f"unknown command {head!r}")
    missing = s.undeclared()
    if missing:
        raise ParseError(f"undeclared variables {sorted(missing)}")
    return s


# emitters


def node_name(node: int, prefix: str = "v") -> str:
    return f"{prefix}{node}"


def gate_constraint(g, name) -> Formula:
    out = name(g.output)
    a = [name(i) for i in g.inputs]
    k = g.kind
    if k == CONST:
        return eq(out, g.zeta)
    if k == ADD:
        return eq(out, ("+", a[0], a[1]))
    if k == SUB:
        return eq(out, ("-", a[0], a[1]))
    if k == MUL_CONST:
        return eq(out, ("*", g.zeta, a[0]))
    if k == MUL:
        return eq(out, ("*", a[0], a[1]))
    if k == SQUARE:
        return eq(out, ("*", a[0], a[0]))
    if k == DOUBLE_01:
        return eq(out, ("*", Fraction(2), a[0]))
    if k == MAX:
        return disj(conj(eq(out, a[0]), ge(a[0], a[1])), conj(eq(out, a[1]), ge(a[1], a[0])))
    if k == MIN:
        return disj(conj(eq(out, a[0]), ge(a[1], a[0])), conj(eq(out, a[1]), ge(a[0], a[1])))
    if k == SUB_01:
        return disj(conj(eq(out, ("-", a[0], a[1])), ge(a[0], a[1])), conj(eq(out, Fraction(0)), ge(a[1], a[0])))
    if k == CMP_GT:
        raise ComparisonGateForbidden("comparison gates have no ETR encoding here")
    raise ValueError(f"unknown gate kind {k}")


def circuit_to_constraints(c: Circuit, prefix: str = "v", names: Mapping[int, str] | None = None) -> list[Formula]:
    """One constraint per gate; their conjunction is the graph of the circuit."""
    if CMP_GT in c.kinds():
        raise ComparisonGateForbidden("comparison gates have no ETR encoding here")
    names = dict(names or {})

    def name(n):
        return names.get(n, node_name(n, prefix))

    return [gate_constraint(g, name) for g in c.topo_gates()]


def circuit_sentence(c: Circuit, input_box=None, prefix: str = "v") -> ETRSentence:
    """Sentence declaring every node with a propagated box plus the gate constraints."""
    s = ETRSentence(comments=[f"circuit {c.ident()}"])
    rng = interval_ranges(c, input_box)
    for n in c.nodes:
        s.declare(node_name(n, prefix), *rng[n])
    for f in circuit_to_constraints(c, prefix):
        s.add(f)
    return s


def _antipodal_pair(f: Circuit) -> tuple[Circuit, list[int], list[int]]:
    b = CircuitBuilder()
    xs = [b.input() for _ in f.inputs]
    neg = [b.mul_const(x, -1) for x in xs]
    fx = b.inline(f, xs)
    fm = b.inline(f, neg)
    return b.build(fx + fm), fx, fm


def bu_to_etr(bu: BUInstance) -> ETRSentence:
    """exists x: f(x) = f(-x), sum |x_j| = 1, with |x_j| split as xp_j + xn_j."""
    return antipodal_sentence(bu.circuit)


def antipodal_sentence(f: Circuit) -> ETRSentence:
    """The Borsuk-Ulam sentence for any map f with no shape restriction."""
    c, fx, fm = _antipodal_pair(f)
    s = ETRSentence(comments=[f"antipodal sentence for circuit {f.ident()}"])
    one = Fraction(1)
    names = {node: f"x{j}" for j, node in enumerate(c.inputs)}
    for j in range(len(c.inputs)):
        s.declare(f"xp{j}", 0, 1)
        s.declare(f"xn{j}", 0, 1)
    rng = interval_ranges(c, [(-one, one)] * len(c.inputs))
    for node in c.nodes:
        s.declare(names.get(node, node_name(node)), *rng[node])
    for j in range(len(c.inputs)):
        s.add(eq(f"x{j}", ("-", f"xp{j}", f"xn{j}")))
    s.add(eq(("+",) + tuple(v for j in range(len(c.inputs)) for v in (f"xp{j}", f"xn{j}")), one))
    for j in range(len(c.inputs)):
        s.add(eq(("*", f"xp{j}", f"xn{j}"), Fraction(0)))
    for f in circuit_to_constraints(c, names=names):
        s.add(f)
    for u, v in zip(fx, fm):
        s.add(eq(names.get(u, node_name(u)), names.get(v, node_name(v))))
    return s


def ch_to_etr(inst: CHInstance, k: int | None = None) -> ETRSentence:
    """exists a k-cut: F_i(A+) = F_i(A-) for every agent, through the
    Borsuk-Ulam circuit whose outputs are the positive masses."""
    s = antipodal_sentence(positive_mass_circuit(inst, k))
    s.comments = [f"consensus-halving sentence for instance {inst.ident()} with {inst.n if k is None else k} cuts"]
    return s


def solution_witness(sol: CHSolution, domain_length=1) -> dict[str, Fraction]:
    """Values of xp_j, xn_j for the sphere point of an alternating cut."""
    L = Fraction(domain_length)
    bounds = [Fraction(0)] + list(sol.cuts) + [L]
    w: dict[str, Fraction] = {}
    sign = 1 if sol.leftmost_sign == "+" else -1
    for j in range(len(bounds) - 1):
        width = (bounds[j + 1] - bounds[j]) / L
        w[f"xp{j}"] = width if sign > 0 else Fraction(0)
        w[f"xn{j}"] = width if sign < 0 else Fraction(0)
        sign = -sign
    assert l1([w[f"xp{j}"] + w[f"xn{j}"] for j in range(len(bounds) - 1)]) == 1
    return w


# grid checker


@dataclass
class CheckResult:
    status: str  # "SAT" or "UNKNOWN"
    witness: dict[str, Fraction] | None = None
    points: int = 0
    exact: bool = False

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "witness": None if self.witness is None else {k: fmt_q(v) for k, v in self.witness.items()},
            "points_checked": self.points,
            "exact": self.exact,
        }


def _definition(f: Formula):
    """(target, alternatives) if ``f`` defines a variable, else None.

    Alternatives are (term, guards) pairs: a top-level ``(= v t)`` or a
    disjunction whose every branch is ``(and (= v t_k) guards...)``.
    """
    if isinstance(f, bool):
        return None
    if f[0] == "=" and isinstance(f[1], str) and f[1] not in term_vars(f[2]):
        return f[1], [(f[2], [])]
    if f[0] == "or" and len(f) > 1:
        alts = []
        target = None
        for br in f[1:]:
            if isinstance(br, bool) or br[0] != "and" or len(br) < 2:
                return None
            head = br[1]
            if isinstance(head, bool) or head[0] != "=" or not isinstance(head[1], str):
                return None
            if target is None:
                target = head[1]
            if head[1] != target or target in term_vars(head[2]):
                return None
            alts.append((head[2], list(br[2:])))
        return target, alts
    return None


def _needs(alts) -> set[str]:
    out: set[str] = set()
    for t, guards in alts:
        out |= term_vars(t)
        for g in guards:
            out |= formula_vars(g)
    return out


def _plan(s: ETRSentence):
    """Choose definitions and an evaluation order; everything else is free.

    Definitions are scheduled greedily; when none is ready the first pending
    one is dropped and its variable becomes free, which breaks cycles.
    """
    defs: dict[str, list] = {}
    for f in s.asserts:
        d = _definition(f)
        if d and d[0] not in defs:
            defs[d[0]] = d[1]
    order: list[str] = []
    pending = dict(defs)
    known = set(s.variables) - set(defs)
    while pending:
        ready = [v for v, alts in pending.items() if _needs(alts) <= known]
        if not ready:
            v = next(iter(pending))
            pending.pop(v)
            defs.pop(v)
            known.add(v)
            continue
        for v in ready:
            order.append(v)
            known.add(v)
            pending.pop(v)
    free = [v for v in s.variables if v not in defs]
    return free, order, defs


def _propagate(env: dict, order, defs) -> bool:
    for v in order:
        for t, guards in defs[v]:
            if all(holds(g, env) for g in guards):
                env[v] = eval_term(t, env)
                break
        else:
            return False
    return True


def _box_violation(s: ETRSentence, env):
    worst = Fraction(0)
    for v, box in s.variables.items():
        if box is not None:
            worst = max(worst, box[0] - env[v], env[v] - box[1])
    return worst


def _grid(lo: Fraction, hi: Fraction, step: Fraction) -> list[Fraction]:
    out = []
    v = lo
    while v <= hi:
        out.append(v)
        v += step
    return out


def grid_points(s: ETRSentence, step, free: Sequence[str], slack=None, limit: int | None = None) -> Iterator[dict]:
    """Grid assignments of the free variables in depth-first order.

    With ``slack`` every assertion over free variables only is checked as
    soon as its last variable is set, and branches violating it by more
    than ``slack`` are cut.  ``limit`` bounds the number of partial
    assignments visited; exceeding it raises ValueError.
    """
    axes = [_grid(*s.variables[v], step) for v in free]
    checks: list[list] = [[] for _ in free]
    if slack is not None:
        pos = {v: k for k, v in enumerate(free)}
        for f in s.asserts:
            vs = formula_vars(f)
            if vs and vs <= pos.keys():
                checks[max(pos[v] for v in vs)].append(f)
    env: dict[str, Fraction] = {}
    visited = 0

    def walk(k: int):
        nonlocal visited
        if k == len(free):
            yield dict(env)
            return
        for val in axes[k]:
            visited += 1
            if limit is not None and visited > limit:
                raise ValueError(f"grid search visited more than {limit} points")
            env[free[k]] = val
            if all(violation(f, env) <= slack for f in checks[k]):
                yield from walk(k + 1)
        env.pop(free[k], None)

    yield from walk(0)


def brute_check(
    s: ETRSentence,
    grid,
    witness: Mapping[str, Fraction] | None = None,
    max_points: int = 2_000_000,
) -> CheckResult:
    """Grid search with comparisons relaxed to the grid step.

    Stops at the first exactly satisfying point, otherwise reports the point
    of least violation within the step.  Variables defined by a top-level
    equation or guarded disjunction are computed from the free ones rather
    than gridded, and assertions over free variables alone prune the grid
    early.  ``max_points`` bounds the grid nodes visited.  With ``witness``
    only that partial assignment is propagated and checked.  Never answers
    UNSAT.
    """
    step = Fraction(grid)
    if step <= 0:
        raise ValueError("grid step must be positive")
    unbounded = [v for v, box in s.variables.items() if box is None]
    if unbounded:
        raise UnboundedVariable(f"variables without a box: {unbounded}")
    free, order, defs = _plan(s)
    matrix = s.matrix()

    def score(env):
        if not _propagate(env, order, defs):
            return INF
        box = _box_violation(s, env)
        if box > step:
            return box
        return max(violation(matrix, env, cap=step), box)

    if witness is not None:
        env = {k: Fraction(v) for k, v in witness.items()}
        missing = [v for v in free if v not in env]
        if missing:
            raise ValueError(f"witness leaves free variables unset: {missing}")
        v = score(env)
        if v <= step:
            return CheckResult("SAT", env, points=1, exact=v == 0)
        return CheckResult("UNKNOWN", points=1)
    count = 0
    best = None
    for env in grid_points(s, step, free, slack=step, limit=max_points):
        count += 1
        v = score(env)
        if v == 0:
            return CheckResult("SAT", env, points=count, exact=True)
        if v <= step and (best is None or v < best[0]):
            best = (v, env)
    if best is not None:
        return CheckResult("SAT", best[1], points=count)
    return CheckResult("UNKNOWN", points=count)
