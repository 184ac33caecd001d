"""Probabilistic control-flow graphs.

A :class:`Pcfg` has deterministic, probabilistic and nondeterministic
locations.  Each transition updates one variable (or none, for
:class:`Identity`) and carries a guard when it leaves a deterministic
location or a probability when it leaves a probabilistic one.

Three ways in: :func:`build_pcfg` from a parsed program, :func:`parse_pcfg`
from the line format below, or direct construction.  :func:`validate_pcfg`
reports every broken well-formedness rule.

Line format (``#`` starts a comment)::

    vars x y
    loc l0 det
    loc l1 prob
    loc l2 det terminal
    init l0 10 0
    dist d1 uniform(-2, 1)
    dist d2 mean -1/2 support v >= -2 and v <= 1
    edge l0 l1 var x update id guard x >= 1
    edge l1 l0 var x update affine x - 1 prob 3/4
    edge l1 l0 var x update sample d1 scale 2 plus x prob 1/4
    edge l2 l2 var x update choose Real[0, 1] or Real[3, 4] guard true

Predicate maps (invariants, targets, events) use ``<loc>: <plp>`` entries
separated by newlines or ``;``.  ``*`` sets the default for unlisted
locations and ``terminal`` the value on terminal locations.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Mapping, Sequence

from .frontend import (
    Assign,
    AssignNdet,
    AssignSample,
    Ast,
    DistributionSpec,
    FrontendError,
    If,
    IfProb,
    IfStar,
    Interval,
    Seq,
    Skip,
    Stmt,
    While,
    format_domain,
    parse_affine,
    parse_distribution,
    parse_domain,
    parse_plp,
)
from .polyhedra import (
    AffineExpr,
    Assertion,
    Constraint,
    Plp,
    is_satisfiable,
)

__all__ = [
    "AffineUpdate",
    "ChooseUpdate",
    "Configuration",
    "DanglingLocation",
    "Diagnostic",
    "FormatError",
    "Identity",
    "LocKind",
    "Location",
    "Lpm",
    "Pcfg",
    "PcfgError",
    "ProbSumNotOne",
    "SampleUpdate",
    "Transition",
    "build_pcfg",
    "format_lpm",
    "format_pcfg",
    "parse_lpm",
    "parse_pcfg",
    "validate_pcfg",
]

SUPPORT_VAR = "v"

Lpm = Mapping[str, Plp]


class PcfgError(Exception):
    pass


class FormatError(PcfgError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class DanglingLocation(PcfgError):
    def __init__(self, loc: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"unknown location {loc!r}{where}")
        self.loc = loc


class ProbSumNotOne(PcfgError):
    def __init__(self, loc: str, total: Fraction):
        super().__init__(f"probabilities out of {loc} sum to {total}, not 1")
        self.loc = loc
        self.total = total


class LocKind(enum.Enum):
    DET = "det"
    PROB = "prob"
    NONDET = "nondet"


@dataclass(frozen=True)
class Location:
    id: str
    kind: LocKind
    terminal: bool = False


# -- update elements


@dataclass(frozen=True)
class Identity:
    pass


@dataclass(frozen=True)
class AffineUpdate:
    expr: AffineExpr


@dataclass(frozen=True)
class SampleUpdate:
    """``x_j := base + scale * d`` for a fresh draw of ``d``."""

    dist: str
    base: AffineExpr = field(default_factory=AffineExpr)
    scale: Fraction = Fraction(1)


@dataclass(frozen=True)
class ChooseUpdate:
    """``x_j`` is set by the scheduler to any value of ``domain``."""

    domain: tuple[Interval, ...]


Update = Identity | AffineUpdate | SampleUpdate | ChooseUpdate


@dataclass(frozen=True)
class Transition:
    source: str
    target: str
    var: int
    update: Update
    guard: Plp | None = None
    prob: Fraction | None = None


@dataclass(frozen=True)
class Configuration:
    loc: str
    val: tuple[Fraction, ...]


@dataclass(frozen=True)
class Pcfg:
    vars: tuple[str, ...]
    locations: tuple[Location, ...]
    init_loc: str
    init_val: tuple[Fraction, ...]
    transitions: tuple[Transition, ...]
    dists: Mapping[str, DistributionSpec] = field(default_factory=dict)

    @cached_property
    def _by_id(self) -> dict[str, Location]:
        return {loc.id: loc for loc in self.locations}

    @cached_property
    def _outgoing(self) -> dict[str, tuple[Transition, ...]]:
        out: dict[str, list[Transition]] = {loc.id: [] for loc in self.locations}
        for t in self.transitions:
            out.setdefault(t.source, []).append(t)
        return {k: tuple(v) for k, v in out.items()}

    def location(self, loc_id: str) -> Location:
        try:
            return self._by_id[loc_id]
        except KeyError:
            raise DanglingLocation(loc_id) from None

    def outgoing(self, loc_id: str) -> tuple[Transition, ...]:
        return self._outgoing.get(loc_id, ())

    @property
    def loc_ids(self) -> tuple[str, ...]:
        return tuple(loc.id for loc in self.locations)

    @property
    def nvars(self) -> int:
        return len(self.vars)

    @property
    def initial(self) -> Configuration:
        return Configuration(self.init_loc, self.init_val)

    def is_terminal(self, loc_id: str) -> bool:
        return self.location(loc_id).terminal

    def with_init(self, val: Sequence) -> "Pcfg":
        """Same graph, different initial valuation."""
        return Pcfg(
            self.vars,
            self.locations,
            self.init_loc,
            tuple(Fraction(v) for v in val),
            self.transitions,
            self.dists,
        )


# ---------------------------------------------------------------------------
# construction from programs


class _Slot:
    """A location whose number is fixed once a statement starts at it."""

    __slots__ = ("id", "kind")

    def __init__(self):
        self.id: str | None = None
        self.kind = LocKind.DET


class _Builder:
    def __init__(self, ast: Ast):
        self.ast = ast
        self.slots: list[_Slot] = []
        self.edges: list[tuple[_Slot, _Slot, int, Update, Plp | None, Fraction | None]] = []
        self.dist_keys: dict[str, str] = {}
        self.count = 0

    def number(self, slot: _Slot) -> None:
        if slot.id is None:
            slot.id = f"l{self.count}"
            self.count += 1
            self.slots.append(slot)

    def dist(self, name: str) -> str:
        if name not in self.dist_keys:
            self.dist_keys[name] = f"d{len(self.dist_keys) + 1}"
        return self.dist_keys[name]

    def det(self, src, dst, var=0, update: Update = Identity(), guard: Plp | None = None):
        self.edges.append((src, dst, var, update, guard or Plp.true(), None))

    def stmt(self, s: Stmt, entry: _Slot, exit_: _Slot) -> None:
        self.number(entry)
        if isinstance(s, Skip):
            self.det(entry, exit_)
        elif isinstance(s, Assign):
            self.det(entry, exit_, s.var, AffineUpdate(s.expr))
        elif isinstance(s, AssignSample):
            self.det(entry, exit_, s.var, SampleUpdate(self.dist(s.dist), s.base, s.scale))
        elif isinstance(s, AssignNdet):
            self.det(entry, exit_, s.var, ChooseUpdate(s.domain))
        elif isinstance(s, Seq):
            cur = entry
            for k, sub in enumerate(s.stmts):
                nxt = exit_ if k == len(s.stmts) - 1 else _Slot()
                self.stmt(sub, cur, nxt)
                cur = nxt
        elif isinstance(s, While):
            body_in = _Slot()
            self.det(entry, body_in, guard=s.guard)
            self.det(entry, exit_, guard=s.guard.negate())
            self.stmt(s.body, body_in, entry)
        elif isinstance(s, (If, IfProb, IfStar)):
            in1, in2 = _Slot(), _Slot()
            if isinstance(s, If):
                self.det(entry, in1, guard=s.guard)
                self.det(entry, in2, guard=s.guard.negate())
            elif isinstance(s, IfProb):
                entry.kind = LocKind.PROB
                self.edges.append((entry, in1, 0, Identity(), None, s.prob))
                self.edges.append((entry, in2, 0, Identity(), None, 1 - s.prob))
            else:
                entry.kind = LocKind.NONDET
                self.edges.append((entry, in1, 0, Identity(), None, None))
                self.edges.append((entry, in2, 0, Identity(), None, None))
            self.stmt(s.then, in1, exit_)
            self.stmt(s.orelse, in2, exit_)
        else:
            raise TypeError(f"unknown statement {s!r}")


def build_pcfg(ast: Ast) -> Pcfg:
    """Translate a program into its pCFG.

    Locations are named ``l0, l1, ...`` in the order statements start at
    them, the terminal location last.  Assignments leave deterministic
    locations; ``if``/``while`` heads branch on the guard and its negation,
    ``prob``/``*`` heads become probabilistic/nondeterministic.  The
    terminal location gets an identity self-loop.
    """
    b = _Builder(ast)
    entry = _Slot()
    body = ast.body
    if isinstance(body, Seq) and not body.stmts:
        terminal = entry
        b.number(entry)
    else:
        terminal = _Slot()
        b.stmt(body, entry, terminal)
        b.number(terminal)
    b.det(terminal, terminal)
    # Unnumbered slots can only come from unreachable joins; none arise from
    # the statement forms above.
    locations = tuple(
        Location(s.id, s.kind, terminal=s is terminal) for s in b.slots
    )
    transitions = tuple(
        Transition(src.id, dst.id, var, upd, guard if src.kind is LocKind.DET else None, prob)
        for src, dst, var, upd, guard, prob in b.edges
    )
    dists = {key: ast.dists[name] for name, key in b.dist_keys.items()}
    init_val = tuple(Fraction(v) for _, v in ast.preamble)
    return Pcfg(ast.vars, locations, entry.id, init_val, transitions, dists)


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Diagnostic:
    rule: str
    loc: str | None
    message: str

    def __str__(self) -> str:
        where = f"{self.loc}: " if self.loc else ""
        return f"[{self.rule}] {where}{self.message}"


def _overlap(a: Plp, b: Plp, nvars: int) -> bool:
    return any(is_satisfiable(da & db, nvars) for da in a for db in b)


def _uncovered(guards: Sequence[Plp], nvars: int) -> Assertion | None:
    """A satisfiable disjunct of the complement of the guards' union."""
    rest = Plp.true()
    for g in guards:
        rest = rest.conjoin(g.negate())
        rest = Plp(d for d in rest if is_satisfiable(d, nvars))
        if not len(rest):
            return None
    return next(iter(rest), None)


def validate_pcfg(pcfg: Pcfg) -> list[Diagnostic]:
    """Every violated well-formedness rule, one diagnostic each."""
    out: list[Diagnostic] = []
    n = pcfg.nvars
    ids = set()
    for loc in pcfg.locations:
        if loc.id in ids:
            out.append(Diagnostic("duplicate-location", loc.id, "declared twice"))
        ids.add(loc.id)
    if pcfg.init_loc not in ids:
        out.append(Diagnostic("dangling", pcfg.init_loc, "initial location is undeclared"))
    if len(pcfg.init_val) != n:
        out.append(
            Diagnostic("init-dimension", None, f"{len(pcfg.init_val)} initial values for {n} variables")
        )
    for name, d in pcfg.dists.items():
        mean_pt = Assertion(
            [Constraint(AffineExpr(-d.mean, {0: 1}), False), Constraint(AffineExpr(d.mean, {0: -1}), False)]
        )
        if not any(is_satisfiable(disj.closure() & mean_pt, 1) for disj in d.support):
            out.append(Diagnostic("dist-mean", None, f"mean of {name} lies outside its support"))
    for t in pcfg.transitions:
        for end in (t.source, t.target):
            if end not in ids:
                out.append(Diagnostic("dangling", end, f"transition {t.source}->{t.target} names an undeclared location"))
        if not 0 <= t.var < max(n, 1):
            out.append(Diagnostic("var-index", t.source, f"variable index {t.var} out of range"))
        if isinstance(t.update, SampleUpdate) and t.update.dist not in pcfg.dists:
            out.append(Diagnostic("unknown-dist", t.source, f"distribution {t.update.dist!r} is not declared"))
    for loc in pcfg.locations:
        edges = pcfg.outgoing(loc.id)
        if not edges:
            out.append(Diagnostic("no-successor", loc.id, "no outgoing transition"))
            continue
        if loc.kind is LocKind.DET:
            guards = []
            for t in edges:
                if t.guard is None:
                    out.append(Diagnostic("missing-guard", loc.id, f"edge to {t.target} has no guard"))
                else:
                    guards.append(t.guard)
                if t.prob is not None:
                    out.append(Diagnostic("stray-prob", loc.id, f"edge to {t.target} carries a probability"))
            for i in range(len(guards)):
                for j in range(i + 1, len(guards)):
                    if _overlap(guards[i], guards[j], n):
                        out.append(
                            Diagnostic("guard-overlap", loc.id, f"guards {i} and {j} are jointly satisfiable")
                        )
            gap = _uncovered(guards, n)
            if gap is not None:
                out.append(
                    Diagnostic("guard-gap", loc.id, f"guards do not cover {gap.format(pcfg.vars)}")
                )
        elif loc.kind is LocKind.PROB:
            total = Fraction(0)
            for t in edges:
                if t.prob is None:
                    out.append(Diagnostic("missing-prob", loc.id, f"edge to {t.target} has no probability"))
                    continue
                if t.prob < 0:
                    out.append(Diagnostic("negative-prob", loc.id, f"edge to {t.target} has probability {t.prob}"))
                total += t.prob
            if total != 1:
                out.append(Diagnostic("prob-sum", loc.id, f"probabilities sum to {total}"))
        if loc.kind is not LocKind.DET:
            for t in edges:
                if t.guard is not None:
                    out.append(Diagnostic("stray-guard", loc.id, f"edge to {t.target} carries a guard"))
                if isinstance(t.update, ChooseUpdate):
                    out.append(
                        Diagnostic("choose-source", loc.id, "nondeterministic assignment out of a non-det location")
                    )
        if loc.kind is LocKind.NONDET:
            for t in edges:
                if t.prob is not None:
                    out.append(Diagnostic("stray-prob", loc.id, f"edge to {t.target} carries a probability"))
    return out


# ---------------------------------------------------------------------------
# text format


_EDGE = re.compile(
    r"edge\s+(?P<src>\S+)\s+(?P<dst>\S+)\s+var\s+(?P<var>\S+)\s+update\s+(?P<upd>.*?)"
    r"(?:\s+guard\s+(?P<guard>.*?))?(?:\s+prob\s+(?P<prob>\S+))?\s*$"
)
_SAMPLE = re.compile(r"sample\s+(?P<dist>\S+)(?:\s+scale\s+(?P<scale>\S+))?(?:\s+plus\s+(?P<base>.*))?$")
_DIST_RAW = re.compile(r"mean\s+(?P<mean>\S+)\s+support\s+(?P<support>.*)$")


def _fraction(text: str, line: int) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise FormatError(line, f"not a rational number: {text!r}") from None


def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


def parse_pcfg(text: str) -> Pcfg:
    """Read the line format described in the module docstring."""
    vars_: tuple[str, ...] | None = None
    locations: list[Location] = []
    init: tuple[str, tuple[Fraction, ...], int] | None = None
    dists: dict[str, DistributionSpec] = {}
    pending: list[tuple[int, re.Match]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip(raw)
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        if head == "vars":
            if vars_ is not None:
                raise FormatError(lineno, "second vars line")
            vars_ = tuple(rest.split())
            if len(set(vars_)) != len(vars_):
                raise FormatError(lineno, "repeated variable name")
        elif head == "loc":
            parts = rest.split()
            if len(parts) not in (2, 3) or (len(parts) == 3 and parts[2] != "terminal"):
                raise FormatError(lineno, "expected: loc <id> det|prob|nondet [terminal]")
            try:
                kind = LocKind(parts[1])
            except ValueError:
                raise FormatError(lineno, f"unknown location kind {parts[1]!r}") from None
            if any(loc.id == parts[0] for loc in locations):
                raise FormatError(lineno, f"location {parts[0]!r} declared twice")
            locations.append(Location(parts[0], kind, len(parts) == 3))
        elif head == "init":
            parts = rest.split()
            if not parts:
                raise FormatError(lineno, "expected: init <loc> <value>...")
            init = (parts[0], tuple(_fraction(p, lineno) for p in parts[1:]), lineno)
        elif head == "dist":
            name, _, spec = rest.partition(" ")
            spec = spec.strip()
            try:
                m = _DIST_RAW.match(spec)
                if m:
                    dists[name] = DistributionSpec(
                        name,
                        _fraction(m["mean"], lineno),
                        parse_plp(m["support"], [SUPPORT_VAR]),
                    )
                else:
                    dists[name] = parse_distribution(spec)
            except FrontendError as exc:
                raise FormatError(lineno, str(exc)) from None
        elif head == "edge":
            m = _EDGE.match(line)
            if not m:
                raise FormatError(lineno, "malformed edge")
            pending.append((lineno, m))
        else:
            raise FormatError(lineno, f"unknown directive {head!r}")
    if vars_ is None:
        raise FormatError(0, "missing vars line")
    if init is None:
        raise FormatError(0, "missing init line")
    ids = {loc.id: loc for loc in locations}
    init_loc, init_val, init_line = init
    if init_loc not in ids:
        raise DanglingLocation(init_loc, init_line)
    if len(init_val) != len(vars_):
        raise FormatError(init_line, f"expected {len(vars_)} initial values")
    transitions = [_edge(m, lineno, vars_, ids, dists) for lineno, m in pending]
    for loc in locations:
        if loc.kind is LocKind.PROB:
            total = sum((t.prob for t in transitions if t.source == loc.id), Fraction(0))
            if total != 1:
                raise ProbSumNotOne(loc.id, total)
    return Pcfg(vars_, tuple(locations), init_loc, init_val, tuple(transitions), dists)


def _edge(m: re.Match, lineno: int, vars_, ids, dists) -> Transition:
    src, dst = m["src"], m["dst"]
    for end in (src, dst):
        if end not in ids:
            raise DanglingLocation(end, lineno)
    if m["var"] not in vars_:
        raise FormatError(lineno, f"unknown variable {m['var']!r}")
    var = vars_.index(m["var"])
    upd_text = m["upd"].strip()
    try:
        update = _update(upd_text, vars_, lineno, dists)
        guard = parse_plp(m["guard"], vars_) if m["guard"] is not None else None
    except FrontendError as exc:
        raise FormatError(lineno, str(exc)) from None
    prob = _fraction(m["prob"], lineno) if m["prob"] is not None else None
    kind = ids[src].kind
    if kind is LocKind.DET:
        if prob is not None:
            raise FormatError(lineno, "probability on an edge out of a det location")
        guard = guard if guard is not None else Plp.true()
    else:
        if guard is not None:
            raise FormatError(lineno, f"guard on an edge out of a {kind.value} location")
        if kind is LocKind.PROB and prob is None:
            raise FormatError(lineno, "edge out of a prob location needs a probability")
        if kind is LocKind.NONDET and prob is not None:
            raise FormatError(lineno, "probability on an edge out of a nondet location")
    return Transition(src, dst, var, update, guard, prob)


def _update(text: str, vars_, lineno: int, dists) -> Update:
    kind, _, rest = text.partition(" ")
    rest = rest.strip()
    if kind == "id":
        if rest:
            raise FormatError(lineno, "id update takes no argument")
        return Identity()
    if kind == "affine":
        return AffineUpdate(parse_affine(rest, vars_))
    if kind == "choose":
        return ChooseUpdate(parse_domain(rest))
    if kind == "sample":
        m = _SAMPLE.match(text)
        if not m:
            raise FormatError(lineno, "expected: sample <dist> [scale r] [plus expr]")
        if m["dist"] not in dists:
            raise FormatError(lineno, f"undeclared distribution {m['dist']!r}")
        scale = _fraction(m["scale"], lineno) if m["scale"] else Fraction(1)
        base = parse_affine(m["base"], vars_) if m["base"] else AffineExpr()
        return SampleUpdate(m["dist"], base, scale)
    raise FormatError(lineno, f"unknown update kind {kind!r}")


def _format_update(u: Update, names: Sequence[str]) -> str:
    if isinstance(u, Identity):
        return "id"
    if isinstance(u, AffineUpdate):
        return f"affine {u.expr.format(names)}"
    if isinstance(u, ChooseUpdate):
        return f"choose {format_domain(u.domain)}"
    text = f"sample {u.dist}"
    if u.scale != 1:
        text += f" scale {u.scale}"
    if u.base != AffineExpr():
        text += f" plus {u.base.format(names)}"
    return text


def format_pcfg(pcfg: Pcfg) -> str:
    lines = [f"vars {' '.join(pcfg.vars)}"]
    for loc in pcfg.locations:
        lines.append(f"loc {loc.id} {loc.kind.value}" + (" terminal" if loc.terminal else ""))
    lines.append(" ".join(["init", pcfg.init_loc, *(str(v) for v in pcfg.init_val)]))
    for name, d in pcfg.dists.items():
        if d.family:
            lines.append(f"dist {name} {d.id}")
        else:
            lines.append(f"dist {name} mean {d.mean} support {d.support.format([SUPPORT_VAR])}")
    names = pcfg.vars or ("_",)
    for t in pcfg.transitions:
        text = f"edge {t.source} {t.target} var {names[t.var]} update {_format_update(t.update, pcfg.vars)}"
        if t.guard is not None:
            text += f" guard {t.guard.format(pcfg.vars)}"
        if t.prob is not None:
            text += f" prob {t.prob}"
        lines.append(text)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# predicate maps


def parse_lpm(text: str, pcfg: Pcfg, default: Plp | None = None) -> dict[str, Plp]:
    """Parse ``loc: plp`` entries into a total map over ``pcfg``'s locations.

    Unlisted locations take the ``terminal`` entry when terminal, else the
    ``*`` entry, else ``default`` (``false`` when omitted).
    """
    entries: dict[str, Plp] = {}
    chunks = [(n, c) for n, raw in enumerate(text.splitlines(), 1) for c in _strip(raw).split(";")]
    for lineno, chunk in chunks:
        chunk = chunk.strip()
        if not chunk:
            continue
        key, sep, body = chunk.partition(":")
        key = key.strip()
        if not sep:
            raise FormatError(lineno, f"expected '<loc>: <predicate>', got {chunk!r}")
        if key not in ("*", "terminal") and key not in pcfg.loc_ids:
            raise DanglingLocation(key, lineno)
        if key in entries:
            raise FormatError(lineno, f"location {key!r} listed twice")
        try:
            entries[key] = parse_plp(body.strip(), pcfg.vars)
        except FrontendError as exc:
            raise FormatError(lineno, f"{key}: {exc}") from None
    fallback = entries.get("*", default if default is not None else Plp.false())
    out = {}
    for loc in pcfg.locations:
        if loc.id in entries:
            out[loc.id] = entries[loc.id]
        elif loc.terminal and "terminal" in entries:
            out[loc.id] = entries["terminal"]
        else:
            out[loc.id] = fallback
    return out


def format_lpm(lpm: Lpm, names: Sequence[str]) -> str:
    return "".join(f"{loc}: {plp.format(names)}\n" for loc, plp in lpm.items())


def lpm_holds(lpm: Lpm, conf: Configuration) -> bool:
    plp = lpm.get(conf.loc)
    return plp is not None and plp.holds(conf.val)


def terminal_lpm(pcfg: Pcfg) -> dict[str, Plp]:
    """The set of terminal configurations as a predicate map."""
    return {loc.id: Plp.true() if loc.terminal else Plp.false() for loc in pcfg.locations}


def constant_lpm(pcfg: Pcfg, plp: Plp) -> dict[str, Plp]:
    return {loc.id: plp for loc in pcfg.locations}


__all__ += ["constant_lpm", "lpm_holds", "terminal_lpm"]
