"""Command-line front end.

Exit status: 0 success, 1 parse or validation failure, 2 solver refusal,
3 verification failure.  Every rational option uses p/q (or integer) syntax.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__
from .borsuk_ulam import (
    ApproxSolution,
    BUInstance,
    antipodal_difference,
    LipschitzWitness,
    bu_verify,
    ch_to_bu,
    decode_bu_solution,
    tucker_solve,
)
from .chmodel import CHInstance, CHSolution, verify
from .circuit import Circuit, lipschitz_bound, validate
from .embed import (
    EmbeddedInstance,
    add_finis,
    build_gadgets,
    decode_cuts_to_values,
    encode_values_to_cuts,
)
from .errors import (
    ComparisonGateForbidden,
    CutOutsideExpectedInterval,
    DimensionTooLarge,
    ExactCHError,
    InfeasibleLP,
    InvalidCircuit,
    MissingOutputPair,
    NonlinearCircuit,
    NormalizationFailure,
    NotABUSolution,
    NotOnSphere,
    ParseError,
    PositiveOptimum,
    RangeUnprovable,
    SolutionDoesNotSatisfyAgents,
    UncertifiedCircuit,
    UnboundedVariable,
    ValuesDoNotSatisfyCircuit,
)
from .lowering import certify, lower_to_special
from .lp import build_rounding_lp, round_to_exact
from .etr import brute_check, bu_to_etr, ch_to_etr, circuit_sentence, parse as parse_etr
from .numerics import fmt_q, parse_q
from . import reductions as red
from . import report

EXIT_OK, EXIT_PARSE, EXIT_REFUSED, EXIT_VERIFY = 0, 1, 2, 3

REFUSALS = (DimensionTooLarge, PositiveOptimum, InfeasibleLP, RangeUnprovable, NonlinearCircuit, UncertifiedCircuit, MissingOutputPair)
VERIFY_FAILURES = (
    SolutionDoesNotSatisfyAgents,
    ValuesDoNotSatisfyCircuit,
    NotABUSolution,
    NotOnSphere,
    CutOutsideExpectedInterval,
)
PARSE_FAILURES = (ParseError, InvalidCircuit, ComparisonGateForbidden, NormalizationFailure, UnboundedVariable, ValueError, json.JSONDecodeError)


class CLIFailure(Exception):
    def __init__(self, code: int, message: str, payload: dict | None = None):
        super().__init__(message)
        self.code = code
        self.payload = payload or {}


def rational(text: str) -> Fraction:
    try:
        return parse_q(text)
    except ParseError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_json(path: str) -> dict:
    try:
        text = sys.stdin.read() if path == "-" else Path(path).read_text()
    except OSError as exc:
        raise CLIFailure(EXIT_PARSE, f"cannot read {path}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CLIFailure(EXIT_PARSE, f"{path}: invalid JSON: {exc}") from None


def load_circuit(data: dict) -> Circuit:
    """A plain circuit or a lowering result {"circuit", "certificate"}."""
    if "gates" not in data and "circuit" in data:
        data = data["circuit"]
    return Circuit.from_json(data)


def load_instance(data: dict) -> CHInstance:
    return CHInstance.from_json(data)


class Run:
    """State of one command: output artifact, summary, provenance, figures."""

    def __init__(self, args):
        self.args = args
        self.artifact = None
        self.text = None
        self.summary: dict = {}
        self.provenance: dict = {}
        self.figures: dict = {}


# commands


def cmd_validate(run: Run):
    data = load_json(run.args.input)
    if "gates" in data or ("circuit" in data and "agents" not in data and "d" not in data):
        c = load_circuit(data)
        viol = validate(c, role=run.args.role, special=run.args.special)
        run.provenance["circuit_id"] = c.ident()
        run.summary = {"kind": "circuit", "valid": not viol, "violations": [str(v) for v in viol]}
        if viol:
            raise CLIFailure(EXIT_PARSE, "; ".join(map(str, viol)), run.summary)
    elif "agents" in data:
        inst = load_instance(data)
        probs = inst.problems()
        run.provenance["instance_id"] = inst.ident()
        run.summary = {"kind": "instance", "agents": inst.n, "valid": not probs, "problems": probs}
        if probs:
            raise CLIFailure(EXIT_PARSE, "; ".join(probs), run.summary)
    elif "d" in data:
        bu = BUInstance.from_json(data)
        run.summary = {"kind": "bu-instance", "d": bu.d, "linear": bu.linear, "valid": True}
    elif "vars" in data:
        p = red.Polynomial.from_json(data)
        run.summary = {"kind": "polynomial", "vars": p.nvars, "terms": len(p.terms), "valid": True}
    elif "strategies" in data:
        g = red.GameInstance.from_json(data)
        run.summary = {"kind": "game", "strategies": list(g.counts), "valid": True}
    else:
        raise CLIFailure(EXIT_PARSE, "unrecognised document")
    run.artifact = run.summary


def _input_box(args, n):
    if not args.input_range:
        return None
    if len(args.input_range) == 1:
        return [tuple(args.input_range[0])] * n
    if len(args.input_range) != n:
        raise CLIFailure(EXIT_PARSE, f"expected 1 or {n} --input-range options")
    return [tuple(r) for r in args.input_range]


def cmd_lower(run: Run):
    c = load_circuit(load_json(run.args.input))
    low, cert = lower_to_special(c, _input_box(run.args, len(c.inputs)))
    run.artifact = {"circuit": low.to_json(), "certificate": cert.to_json()}
    run.provenance = {"source_circuit_id": c.ident(), "circuit_id": low.ident()}
    run.summary = {"nodes_in": cert.node_count_in, "nodes_out": cert.node_count_out, "ratio": fmt_q(cert.ratio)}
    run.figures["ranges.png"] = lambda p: report.plot_ranges(cert.ranges, p, "certified node ranges")


def _certified(data: dict):
    c = load_circuit(data)
    if "certificate" in data:
        ranges = {int(k): (parse_q(v[0]), parse_q(v[1])) for k, v in data["certificate"]["ranges"].items()}
        cert = certify(c, known=ranges)
        cert.assumptions = data["certificate"].get("assumptions", {})
    else:
        cert = certify(c)
    return c, cert


def cmd_embed(run: Run):
    c, cert = _certified(load_json(run.args.input))
    emb = build_gadgets(c, cert)
    if run.args.finis:
        emb = add_finis(emb)
    run.artifact = emb.to_json()
    run.provenance = {"source_circuit_id": c.ident(), "instance_id": emb.instance.ident()}
    run.summary = {"nodes": emb.r, "agents": emb.n, "cut_budget": emb.cut_budget, "internal_length": fmt_q(emb.length)}
    run.figures["instance.png"] = lambda p: report.plot_instance(emb.instance, p, title="embedded agents")


def _embedded(path: str) -> EmbeddedInstance:
    data = load_json(path)
    if "source_circuit" not in data:
        raise CLIFailure(EXIT_PARSE, f"{path} is not an embedded instance")
    return EmbeddedInstance.from_json(data)


def cmd_encode(run: Run):
    emb = _embedded(run.args.instance)
    if run.args.values:
        z = list(run.args.values)
    elif run.args.inputs is not None:
        vals = emb.circuit.evaluate_all(run.args.inputs)
        z = [vals[i] for i in range(emb.r)]
    else:
        raise CLIFailure(EXIT_PARSE, "give --values or --inputs")
    sol = encode_values_to_cuts(emb, z)
    v = verify(emb.instance, sol, 0, budget=emb.cut_budget)
    run.artifact = sol.to_json(emb.length)
    run.provenance = {"source_circuit_id": emb.circuit.ident(), "instance_id": emb.instance.ident(), "solution_id": sol.ident()}
    run.summary = {"cuts": len(sol.cuts), "verified": v.ok}
    run.figures["solution.png"] = lambda p: report.plot_instance(emb.instance, p, sol, "encoded cuts")
    if not v.ok:
        raise CLIFailure(EXIT_VERIFY, v.reason, run.summary)


def cmd_decode(run: Run):
    emb = _embedded(run.args.instance)
    sol = CHSolution.from_json(load_json(run.args.solution), emb.length)
    z = decode_cuts_to_values(emb, sol)
    run.artifact = {"values": [fmt_q(v) for v in z]}
    run.provenance = {"source_circuit_id": emb.circuit.ident(), "instance_id": emb.instance.ident(), "solution_id": sol.ident()}
    run.summary = {"values": len(z)}


def cmd_ch2bu(run: Run):
    inst = load_instance(load_json(run.args.input))
    bu = ch_to_bu(inst)
    run.artifact = bu.to_json()
    run.provenance = {"instance_id": inst.ident(), "circuit_id": bu.circuit.ident()}
    run.summary = {"d": bu.d, "linear": bu.linear, "gates": len(bu.circuit.gates)}


def cmd_solve_bu(run: Run):
    bu = BUInstance.from_json(load_json(run.args.input))
    lam = run.args.lam if run.args.lam is not None else lipschitz_bound(bu.circuit)
    out = tucker_solve(bu, run.args.epsilon, lam, max_dim=run.args.max_dim)
    run.provenance = {"circuit_id": bu.circuit.ident()}
    if isinstance(out, LipschitzWitness):
        run.artifact = {"kind": "lipschitz-witness", **out.to_json()}
        run.summary = {"outcome": "lipschitz-witness", "ratio": fmt_q(out.ratio), "lambda": fmt_q(lam)}
        return
    run.artifact = {"kind": "approximate-solution", **out.to_json()}
    run.provenance["solution_id"] = digest(run.artifact)
    run.summary = {"outcome": "solution", "residual": fmt_q(out.residual), "epsilon": fmt_q(run.args.epsilon), "lambda": fmt_q(lam)}
    run.figures["point.png"] = lambda p: report.plot_point(out.x, p, "approximate solution")


def cmd_round(run: Run):
    bu = BUInstance.from_json(load_json(run.args.instance))
    sol = ApproxSolution.from_json(load_json(run.args.solution))
    if run.args.lp_out:
        lp = build_rounding_lp(antipodal_difference(bu), sol.x)
        Path(run.args.lp_out).write_text(lp.to_lp_text())
    res = round_to_exact(bu, sol.x)
    verdict = bu_verify(bu, res.x, 0)
    run.artifact = {"kind": "exact-solution", "x": [fmt_q(v) for v in res.x], "residual": fmt_q(verdict.residual)}
    run.provenance = {"circuit_id": bu.circuit.ident(), "anchor_id": digest(sol.to_json()), "solution_id": digest(run.artifact)}
    run.summary = {"z": fmt_q(res.z), "verified": verdict.ok}
    run.figures["point.png"] = lambda p: report.plot_point(res.x, p, "exact solution")
    if not verdict.ok:
        raise CLIFailure(EXIT_VERIFY, verdict.reason, run.summary)


def cmd_verify(run: Run):
    idata = load_json(run.args.instance)
    sdata = load_json(run.args.solution)
    tol = run.args.tol
    if "d" in idata:
        bu = BUInstance.from_json(idata)
        x = [parse_q(v) for v in sdata["x"]]
        v = bu_verify(bu, x, tol)
        run.artifact = v.to_json()
        run.provenance = {"circuit_id": bu.circuit.ident(), "solution_id": digest(sdata)}
        run.summary = {"kind": "bu", "ok": v.ok}
        if not v.ok:
            raise CLIFailure(EXIT_VERIFY, v.reason, run.summary)
        return
    inst = load_instance(idata)
    if "cuts" in sdata:
        sol = CHSolution.from_json(sdata, inst.domain_length)
    elif "x" in sdata:
        sol = decode_bu_solution([parse_q(v) for v in sdata["x"]], inst, tol)
    else:
        raise CLIFailure(EXIT_PARSE, "solution has neither cuts nor x")
    budget = run.args.budget
    if budget is None and "source_circuit" in idata:
        budget = 4 * len(Circuit.from_json(idata["source_circuit"]).nodes)
    v = verify(inst, sol, tol, budget)
    run.artifact = v.to_json()
    run.provenance = {"instance_id": inst.ident(), "solution_id": sol.ident()}
    if "source_circuit_id" in idata:
        run.provenance["source_circuit_id"] = idata["source_circuit_id"]
    run.summary = {"kind": "ch", "ok": v.ok, "agents": inst.n, "cuts": len(sol.cuts), "failing": v.failing}
    run.figures["solution.png"] = lambda p: report.plot_instance(inst, p, sol, "verified cuts" if v.ok else "failing cuts")
    if not v.ok:
        raise CLIFailure(EXIT_VERIFY, v.reason, run.summary)


def cmd_emit_etr(run: Run):
    data = load_json(run.args.input)
    if "d" in data:
        s = bu_to_etr(BUInstance.from_json(data))
    elif "agents" in data:
        s = ch_to_etr(load_instance(data), run.args.cuts)
    else:
        c = load_circuit(data)
        s = circuit_sentence(c, _input_box(run.args, len(c.inputs)))
    run.text = s.emit()
    run.summary = {"variables": len(s.variables), "asserts": len(s.asserts)}
    run.provenance = {"sentence_id": hashlib.sha256(run.text.encode()).hexdigest()[:16]}


def cmd_check_etr(run: Run):
    try:
        text = Path(run.args.input).read_text()
    except OSError as exc:
        raise CLIFailure(EXIT_PARSE, str(exc)) from None
    s = parse_etr(text)
    witness = None
    if run.args.witness:
        witness = {k: parse_q(v) for k, v in load_json(run.args.witness).items()}
    res = brute_check(s, run.args.grid, witness=witness, max_points=run.args.max_points)
    run.artifact = res.to_json()
    run.provenance = {"sentence_id": hashlib.sha256(text.encode()).hexdigest()[:16]}
    run.summary = {"status": res.status, "exact": res.exact, "points": res.points}


def cmd_reduce_feasible(run: Run):
    p = red.Polynomial.from_json(load_json(run.args.input))
    fr = red.feasible_reduction(p)
    emb = fr.embedded
    run.artifact = emb.to_json()
    run.provenance = {"polynomial_id": digest(p.to_json()), "source_circuit_id": fr.special.ident(), "instance_id": emb.instance.ident()}
    run.summary = {"nodes": emb.r, "agents": emb.n, "cut_budget": emb.n - 1, "normal_form": fr.normal.to_json()}
    if run.args.root is not None:
        sol = fr.encode_root(run.args.root)
        v = verify(emb.instance, sol, 0, budget=emb.n - 1)
        run.summary["root_solution_verified"] = v.ok
        run.provenance["solution_id"] = sol.ident()
        if run.args.solution_out:
            Path(run.args.solution_out).write_text(json.dumps(sol.to_json(emb.length), indent=2) + "\n")
        run.figures["solution.png"] = lambda path: report.plot_instance(emb.instance, path, sol, "encoded root")
        if not v.ok:
            raise CLIFailure(EXIT_VERIFY, v.reason, run.summary)
    else:
        run.figures["instance.png"] = lambda path: report.plot_instance(emb.instance, path, title="reduction instance")


def cmd_reduce_game(run: Run):
    g = red.GameInstance.from_json(load_json(run.args.input))
    scaled = red.game_circuit_scaled(g)
    cyc, emb = red.embed_game(g)
    run.artifact = {
        "circuit": scaled.circuit.to_json(),
        "range_hints": {str(k): [fmt_q(a), fmt_q(b)] for k, (a, b) in sorted(scaled.hints.items())},
        "lowered": cyc.lowered.to_json(),
        "cyclic": cyc.circuit.to_json(),
        "certificate": cyc.certificate.to_json(),
        "strategy_nodes": cyc.strategy_nodes,
        "embedded": emb.to_json() if run.args.embed else None,
    }
    run.provenance = {"game_id": digest(g.to_json()), "circuit_id": scaled.circuit.ident(), "cyclic_id": cyc.circuit.ident()}
    run.summary = {"gates": len(scaled.circuit.gates), "cyclic_nodes": len(cyc.circuit.gates), "agents": emb.n}
    run.figures["ranges.png"] = lambda p: report.plot_ranges(cyc.certificate.ranges, p, "closed circuit node ranges")


COMMANDS = {
    "validate": cmd_validate,
    "lower": cmd_lower,
    "embed": cmd_embed,
    "encode": cmd_encode,
    "decode": cmd_decode,
    "ch2bu": cmd_ch2bu,
    "solve-bu": cmd_solve_bu,
    "round": cmd_round,
    "verify": cmd_verify,
    "emit-etr": cmd_emit_etr,
    "reduce-feasible": cmd_reduce_feasible,
    "reduce-game": cmd_reduce_game,
    "check-etr": cmd_check_etr,
}


class Parser(argparse.ArgumentParser):
    """Usage errors are parse failures (exit 1), not argparse's default 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARSE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = Parser(add_help=False)
    common.add_argument("--out", "-o", help="write the artifact here instead of stdout")
    common.add_argument("--report-dir", help="write report.json and figures into this directory")
    common.add_argument("--seed", type=int, default=0, help="seed for any randomized step")

    p = Parser(prog="exactch", description="Exact consensus-halving and Borsuk-Ulam toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", parents=[common], help="check a circuit, instance, polynomial or game")
    s.add_argument("input")
    s.add_argument("--special", action="store_true", help="require the special gate set")
    s.add_argument("--role", choices=["instance", "decoder"], default="instance")

    s = sub.add_parser("lower", parents=[common], help="rewrite a circuit over the special gate set")
    s.add_argument("input")
    s.add_argument("--input-range", nargs=2, type=rational, action="append", metavar=("LO", "HI"))

    s = sub.add_parser("embed", parents=[common], help="consensus-halving instance of a special circuit")
    s.add_argument("input")
    s.add_argument("--finis", action="store_true", help="add the agent tying the last two nodes")

    s = sub.add_parser("encode", parents=[common], help="cuts for node values of an embedded circuit")
    s.add_argument("instance")
    s.add_argument("--values", nargs="+", type=rational)
    s.add_argument("--inputs", nargs="*", type=rational)

    s = sub.add_parser("decode", parents=[common], help="node values from verified cuts")
    s.add_argument("instance")
    s.add_argument("solution")

    s = sub.add_parser("ch2bu", parents=[common], help="Borsuk-Ulam circuit of a consensus-halving instance")
    s.add_argument("input")

    s = sub.add_parser("solve-bu", parents=[common], help="approximate Borsuk-Ulam solution by Tucker search")
    s.add_argument("input")
    s.add_argument("--epsilon", type=rational, required=True)
    s.add_argument("--lambda", dest="lam", type=rational)
    s.add_argument("--max-dim", type=int, default=3)

    s = sub.add_parser("round", parents=[common], help="exact solution from an approximate one (linear circuits)")
    s.add_argument("instance")
    s.add_argument("solution")
    s.add_argument("--lp-out", help="also write the rounding LP in CPLEX LP format")

    s = sub.add_parser("verify", parents=[common], help="exact verification of a solution")
    s.add_argument("instance")
    s.add_argument("solution")
    s.add_argument("--tol", type=rational, default=Fraction(0))
    s.add_argument("--budget", type=int)

    s = sub.add_parser("emit-etr", parents=[common], help="ETR sentence of a circuit, instance or BU instance")
    s.add_argument("input")
    s.add_argument("--cuts", type=int)
    s.add_argument("--input-range", nargs=2, type=rational, action="append", metavar=("LO", "HI"))

    s = sub.add_parser("reduce-feasible", parents=[common], help="polynomial root finding to consensus halving")
    s.add_argument("input")
    s.add_argument("--root", nargs="+", type=rational, help="encode this root as a solution")
    s.add_argument("--solution-out", help="write the encoded root solution here")

    s = sub.add_parser("reduce-game", parents=[common], help="game to fixed-point circuit")
    s.add_argument("input")
    s.add_argument("--embed", action="store_true", help="include the embedded instance in the output")

    s = sub.add_parser("check-etr", parents=[common], help="grid search on a bounded ETR sentence")
    s.add_argument("input")
    s.add_argument("--grid", type=rational, required=True)
    s.add_argument("--witness", help="JSON object of variable values to check instead of searching")
    s.add_argument("--max-points", type=int, default=2_000_000, help="limit on grid nodes visited")
    return p


def _emit(run: Run):
    if run.text is not None:
        out = run.text
    elif run.artifact is not None:
        out = json.dumps(run.artifact, indent=2) + "\n"
    else:
        return
    if run.args.out:
        Path(run.args.out).write_text(out)
    else:
        sys.stdout.write(out)


def _report(run: Run, code: int, error: str | None):
    if not run.args.report_dir:
        return
    data = {
        "command": run.args.command,
        "exit_code": code,
        "error": error,
        "summary": run.summary,
        "provenance": run.provenance,
        "version": __version__,
    }
    figures = run.figures if code in (EXIT_OK, EXIT_VERIFY) else {}
    report.write_report(run.args.report_dir, data, figures)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    run = Run(args)
    code, error = EXIT_OK, None
    try:
        COMMANDS[args.command](run)
    except CLIFailure as exc:
        code, error = exc.code, str(exc)
        run.summary = exc.payload or run.summary
    except REFUSALS as exc:
        code, error = EXIT_REFUSED, f"{type(exc).__name__}: {exc}"
    except VERIFY_FAILURES as exc:
        code, error = EXIT_VERIFY, f"{type(exc).__name__}: {exc}"
    except PARSE_FAILURES as exc:
        code, error = EXIT_PARSE, f"{type(exc).__name__}: {exc}"
    except ExactCHError as exc:
        code, error = EXIT_PARSE, f"{type(exc).__name__}: {exc}"
    if code in (EXIT_OK, EXIT_VERIFY):
        _emit(run)
    if error:
        print(f"exactch {args.command}: {error}", file=sys.stderr)
    else:
        print(f"exactch {args.command}: ok {json.dumps(run.summary, sort_keys=True, default=str)}", file=sys.stderr)
    _report(run, code, error)
    return code


if __name__ == "__main__":
    sys.exit(main())
