"""Command-line entry point.

Exit codes: 0 result produced, 1 usage error, 2 unreadable input, 3 no
certificate / invalid certificate / unknown verdict, 4 internal limit hit.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from . import bounds, sim
from .certificate import (
    format_certificate,
    format_stochastic_invariant,
    parse_certificate,
    parse_stochastic_invariant,
)
from .check import check_certificate, spot_check
from .frontend import FrontendError, parse_program, pretty
from .lp import SizeLimit
from .pcfg import (
    Pcfg,
    PcfgError,
    build_pcfg,
    format_pcfg,
    parse_lpm,
    parse_pcfg,
    terminal_lpm,
    validate_pcfg,
)
from .polyhedra import BlowupLimit, Plp
from .synth import DEFAULT_SWEEP, SynthStatus, gen_quadratic_system, synthesize_repsm, synthesize_rsm
from .verdicts import (
    DMismatch,
    EntailmentFails,
    InvalidCertificate,
    check_persistence,
    expected_time_bound,
    make_stochastic_invariant,
    refute_as_termination,
    refute_finite_termination,
    termination_verdict,
)

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_NONE, EXIT_LIMIT = 0, 1, 2, 3, 4

log = logging.getLogger("stochinv")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


class _InputError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise _InputError(f"cannot read {path}: {exc.strerror}") from None


def _load_pcfg(path: str) -> Pcfg:
    """A ``.app`` program is built on the fly; anything else is read as a
    pCFG file."""
    text = _read(path)
    if path.endswith(".app"):
        pcfg = build_pcfg(parse_program(text))
    else:
        pcfg = parse_pcfg(text)
    problems = validate_pcfg(pcfg)
    if problems:
        raise _InputError("invalid pCFG:\n" + "\n".join(f"  {d.rule} at {d.loc}: {d.message}" for d in problems))
    return pcfg


def _load_lpm(spec: str | None, pcfg: Pcfg, default: Plp) -> dict[str, Plp]:
    """A predicate-map file, or one of the keywords ``true``, ``false``,
    ``terminal``."""
    if spec is None or spec == "true":
        return {loc: Plp.true() for loc in pcfg.loc_ids}
    if spec == "false":
        return {loc: Plp.false() for loc in pcfg.loc_ids}
    if spec == "terminal":
        return terminal_lpm(pcfg)
    return parse_lpm(_read(spec), pcfg, default)


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)
        print(f"wrote {path}")


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def _table(rows: list[dict[str, str]], fmt: str) -> str:
    if not rows:
        return ""
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return buf.getvalue()
    keys = list(rows[0])
    widths = {k: max(len(k), *(len(r[k]) for r in rows)) for k in keys}
    lines = ["  ".join(k.ljust(widths[k]) for k in keys)]
    lines += ["  ".join(r[k].ljust(widths[k]) for k in keys) for r in rows]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# subcommands


def cmd_parse(args) -> int:
    ast = parse_program(_read(args.program))
    sys.stdout.write(pretty(ast))
    return EXIT_OK


def cmd_build(args) -> int:
    pcfg = build_pcfg(parse_program(_read(args.program)))
    for d in validate_pcfg(pcfg):
        print(f"warning: {d.rule} at {d.loc}: {d.message}", file=sys.stderr)
    _write(args.output, format_pcfg(pcfg))
    return EXIT_OK


def _default_out(args, suffix: str) -> str:
    return args.output or f"{Path(args.pcfg).stem}.{suffix}.cert"


def cmd_synth_repsm(args) -> int:
    pcfg = _load_pcfg(args.pcfg)
    inv = _load_lpm(args.invariant, pcfg, Plp.true())
    pi = _load_lpm(args.pi, pcfg, Plp.true())
    res = synthesize_repsm(pcfg, inv, pi, sweep=args.sweep, eps=args.eps, jobs=args.jobs, stopped=not args.unstopped)
    if args.format == "csv" and res.sweep:
        rows = [
            {"j": str(p.j), "c": str(p.c), "m0": "" if p.m0 is None else str(p.m0), "p": "" if p.p is None else repr(p.p)}
            for p in res.sweep
        ]
        sys.stdout.write(_table(rows, "csv"))
    if res.status is SynthStatus.NO_CERTIFICATE:
        print(f"no certificate: {res.message}")
        return EXIT_NONE
    if res.status is not SynthStatus.CERTIFICATE:
        print(f"{res.status.value}: p = {res.bound} ({res.message})")
        return EXIT_OK
    cert = res.certificate
    _write(_default_out(args, "repsm"), format_certificate(cert))
    si = make_stochastic_invariant(pcfg, cert, pi)
    if args.si:
        _write(args.si, format_stochastic_invariant(si))
    print(f"c = {cert.c} (offset j = {res.j}), m0 = {cert.m0}")
    print(f"stochastic invariant: p = {float(si.p):.6g}")
    print(f"expression: {si.note}")
    return EXIT_OK


def cmd_synth_rsm(args) -> int:
    pcfg = _load_pcfg(args.pcfg)
    inv = _load_lpm(args.invariant, pcfg, Plp.true())
    target = _load_lpm(args.target, pcfg, Plp.false())
    res = synthesize_rsm(pcfg, inv, target, eps=args.eps)
    if res.status is not SynthStatus.CERTIFICATE:
        print(f"no certificate: {res.message}")
        return EXIT_NONE
    cert = res.certificate
    _write(_default_out(args, "rsm"), format_certificate(cert))
    print(f"m0 = {cert.m0}")
    print(f"m0 / eps = {res.bound}")
    t = expected_time_bound(pcfg, cert, validate=False)
    print(f"expected steps to reach the target <= {t if t == float('inf') else float(t):.6g}")
    return EXIT_OK


def cmd_bound(args) -> int:
    try:
        if args.n is not None:
            p = bounds.azuma_tail(args.eps, args.c, args.m0, args.n)
            print(f"P(not repelled after {args.n} steps) <= {p:.6g}")
        else:
            p = bounds.reach_bound(args.eps, args.c, args.m0)
            a = bounds.first_nonempty_step(args.c, args.m0)
            print(f"{p:.6g}")
            print(f"expression: exp(eps*m0/(c+eps)^2) * gamma^{a} / (1 - gamma), gamma = exp(-eps^2/(2*(c+eps)^2))")
    except bounds.PreconditionViolated as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def cmd_check(args) -> int:
    pcfg = _load_pcfg(args.pcfg)
    cert = parse_certificate(_read(args.cert))
    report = check_certificate(pcfg, cert, stopped=not args.unstopped)
    if args.format == "csv":
        sys.stdout.write(_table(report.rows(pcfg.vars), "csv"))
    else:
        print(report.format(pcfg.vars))
        table = _table(report.rows(pcfg.vars), "text")
        if table:
            sys.stdout.write(table)
    return EXIT_OK if report.valid else EXIT_NONE


def cmd_spot_check(args) -> int:
    pcfg = _load_pcfg(args.pcfg)
    cert = parse_certificate(_read(args.cert))
    report = spot_check(pcfg, cert, args.samples, args.seed, stopped=not args.unstopped)
    print(report.format())
    return EXIT_OK if report.violations == 0 else EXIT_NONE


def _verdict(verdict, paths: Sequence[str]) -> int:
    print(verdict.report(paths))
    return EXIT_OK if verdict.known else EXIT_NONE


def cmd_refute_as(args) -> int:
    pcfg = _load_pcfg(args.pcfg)
    return _verdict(refute_as_termination(pcfg, parse_certificate(_read(args.cert))), [args.cert])


def cmd_refute_finite(args) -> int:
    pcfg = _load_pcfg(args.pcfg)
    return _verdict(refute_finite_termination(pcfg, parse_certificate(_read(args.cert))), [args.cert])


def cmd_persistence(args) -> int:
    pcfg = _load_pcfg(args.pcfg)
    repsm = parse_certificate(_read(args.repsm))
    rsm = parse_certificate(_read(args.rsm))
    return _verdict(check_persistence(pcfg, repsm, rsm, args.K), [args.repsm, args.rsm])


def cmd_combine(args) -> int:
    rsm = parse_certificate(_read(args.rsm))
    pcfg = _load_pcfg(args.pcfg) if args.pcfg else None
    sis = [parse_stochastic_invariant(_read(p)) for p in args.stochinv.split(",") if p]
    return _verdict(termination_verdict(sis, rsm, pcfg), [args.rsm])


def cmd_expected_time(args) -> int:
    pcfg = _load_pcfg(args.pcfg)
    cert = parse_certificate(_read(args.cert))
    t = expected_time_bound(pcfg, cert)
    print(f"expected steps to reach the target <= {t if t == float('inf') else float(t):.6g}")
    if t != float("inf"):
        print(f"exact: {t}")
    return EXIT_OK


def _policy(args) -> sim.SchedulerPolicy:
    choose = sim.ChooseRule[args.choose.upper()]
    if args.script:
        return sim.SchedulerPolicy.scripted([int(k) for k in args.script.split(",")], choose)
    return sim.SchedulerPolicy(sim.NondetRule[args.nondet.upper()], choose)


def cmd_simulate(args) -> int:
    pcfg = _load_pcfg(args.pcfg)
    event = None if args.event is None else _load_lpm(args.event, pcfg, Plp.false())
    est = sim.estimate(
        pcfg, _policy(args), event, args.runs, args.max_steps, args.seed, args.confidence, args.jobs
    )
    if args.format == "csv":
        sim.write_csv(sys.stdout, est.codes, est.steps)
    else:
        print(f"backend: {sim.BACKEND}")
        print(est.summary())
    return EXIT_OK


def _shape(text: str) -> dict[str, int]:
    out = {}
    for part in text.split(","):
        if not part.strip():
            continue
        loc, sep, k = part.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected loc=count, got {part!r}")
        out[loc.strip()] = int(k)
    return out


def cmd_export_quad(args) -> int:
    pcfg = _load_pcfg(args.pcfg)
    target = _load_lpm(args.target, pcfg, Plp.false())
    inv = _load_lpm(args.invariant, pcfg, Plp.true())
    unknown = [loc for loc in args.template if loc not in pcfg.loc_ids]
    if unknown:
        raise _InputError(f"template names unknown locations: {', '.join(unknown)}")
    system = gen_quadratic_system(pcfg, target, args.template, inv, args.eps)
    _write(args.output, system.to_sexpr())
    print(f"declarations: {len(system.declarations)}, constraints: {len(system.rows) + len(system.strict)}, degree: {system.max_degree}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stochinv", description="Stochastic invariants and supermartingale certificates for affine probabilistic programs.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=func)
        return sp

    sp = add("parse", cmd_parse, "parse a program and pretty-print it")
    sp.add_argument("program")

    sp = add("build", cmd_build, "build the pCFG of a program")
    sp.add_argument("program")
    sp.add_argument("-o", "--output")

    sp = add("synth-repsm", cmd_synth_repsm, "bound the probability of violating a predicate map")
    sp.add_argument("--pcfg", required=True)
    sp.add_argument("--invariant", help="pure invariant (file or true); default true")
    sp.add_argument("--pi", required=True, help="predicate map whose violation is bounded")
    sp.add_argument("--sweep", type=int, default=DEFAULT_SWEEP)
    sp.add_argument("--eps", type=_fraction, default=Fraction(1))
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--unstopped", action="store_true", help="bound differences on every step, not only before the target")
    sp.add_argument("--si", help="also write the stochastic invariant here")
    sp.add_argument("--format", choices=["text", "csv"], default="text", help="csv prints the sweep table")
    sp.add_argument("-o", "--output")

    sp = add("synth-rsm", cmd_synth_rsm, "synthesize a ranking supermartingale")
    sp.add_argument("--pcfg", required=True)
    sp.add_argument("--invariant")
    sp.add_argument("--target", default="terminal", help="predicate-map file or terminal")
    sp.add_argument("--eps", type=_fraction, default=Fraction(1))
    sp.add_argument("-o", "--output")

    sp = add("bound", cmd_bound, "evaluate the closed-form reachability bound")
    sp.add_argument("--eps", type=_fraction, required=True)
    sp.add_argument("--c", type=_fraction, required=True)
    sp.add_argument("--m0", type=_fraction, required=True)
    sp.add_argument("--n", type=int, help="tail bound after n steps instead")

    for name, func, help_ in (
        ("check", cmd_check, "check a certificate exactly"),
        ("refute-as", cmd_refute_as, "refute almost-sure termination"),
        ("refute-finite", cmd_refute_finite, "refute finite expected termination time"),
        ("expected-time", cmd_expected_time, "expected-time bound from a ranking certificate"),
    ):
        sp = add(name, func, help_)
        sp.add_argument("--pcfg", required=True)
        sp.add_argument("--cert", required=True)
        if name == "check":
            sp.add_argument("--format", choices=["text", "csv"], default="text")
            sp.add_argument("--unstopped", action="store_true")

    sp = add("spot-check", cmd_spot_check, "evaluate obligations at random points")
    sp.add_argument("--pcfg", required=True)
    sp.add_argument("--cert", required=True)
    sp.add_argument("--samples", type=int, default=10_000)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--unstopped", action="store_true")

    sp = add("persistence", cmd_persistence, "almost-sure persistence from a repulsing and a ranking certificate")
    sp.add_argument("--pcfg", required=True)
    sp.add_argument("--repsm", required=True)
    sp.add_argument("--rsm", required=True)
    sp.add_argument("--K", type=_fraction, required=True)

    sp = add("combine", cmd_combine, "termination lower bound from stochastic invariants")
    sp.add_argument("--rsm", required=True)
    sp.add_argument("--stochinv", required=True, help="comma-separated stochastic invariant files")
    sp.add_argument("--pcfg", help="also re-check the ranking certificate against this pCFG")

    sp = add("simulate", cmd_simulate, "Monte Carlo runs")
    sp.add_argument("--pcfg", required=True)
    sp.add_argument("--runs", type=int, required=True)
    sp.add_argument("--max-steps", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--event", help="predicate-map file or terminal")
    sp.add_argument("--confidence", type=float, default=0.99)
    sp.add_argument("--nondet", choices=["uniform", "first"], default="uniform")
    sp.add_argument("--choose", choices=["uniform", "endpoint"], default="uniform")
    sp.add_argument("--script", help="comma-separated successor indices for nondeterministic locations")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--format", choices=["text", "csv"], default="text")

    sp = add("export-quad", cmd_export_quad, "export the quadratic system for a symbolic stochastic invariant")
    sp.add_argument("--pcfg", required=True)
    sp.add_argument("--target", default="terminal")
    sp.add_argument("--template", type=_shape, required=True, help="conjunct counts, e.g. l2=1")
    sp.add_argument("--invariant")
    sp.add_argument("--eps", type=_fraction, default=Fraction(1))
    sp.add_argument("-o", "--output")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (_InputError, FrontendError, PcfgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (InvalidCertificate, EntailmentFails, DMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONE
    except (SizeLimit, BlowupLimit) as exc:
        print(f"limit: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    except (sim.SimulationError, sim.UnsupportedDistribution) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONE


if __name__ == "__main__":
    sys.exit(main())
