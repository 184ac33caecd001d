"""Lexer, parser and pretty-printer for affine probabilistic programs.

Concrete syntax (keywords as in the usual while-language presentation)::

    x := 10
    while x >= 1 do
        if prob(0.75) then x := x - 1 else x := x + 1 fi
    od

A program starts with a preamble of constant assignments ``v := c`` (also
``x, y := 1, 2`` or ``x := 1, y := 2``) that fixes the variable order and
the initial valuation.  Statements are separated by newlines or ``;``.
Numeric literals are exact rationals: ``0.75`` is ``3/4``.

Accepted beyond the bare grammar: ``<``/``>`` and ``true``/``false`` in
guards, ``not`` / ``¬`` on any sub-formula, unicode ``≤ ≥ · ⋆``,
``x := e + k*sample(d)`` (an affine base plus a scaled draw), and
simultaneous assignment ``x, y := e1, e2`` when no right-hand side reads an
earlier target, which desugars to a sequence.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Sequence

from .polyhedra import (
    AffineExpr,
    And,
    Assertion,
    Atom,
    Constraint,
    FalseF,
    Formula,
    Not,
    Or,
    Plp,
    TrueF,
    to_dnf,
)

__all__ = [
    "Assign",
    "AssignNdet",
    "AssignSample",
    "Ast",
    "DistributionSpec",
    "FrontendError",
    "If",
    "IfProb",
    "IfStar",
    "Interval",
    "InvalidParameters",
    "Seq",
    "Skip",
    "SyntaxError",
    "UninitializedVariable",
    "UnknownDistribution",
    "While",
    "builtin_distribution",
    "format_domain",
    "parse_affine",
    "parse_distribution",
    "parse_domain",
    "parse_plp",
    "parse_program",
    "pretty",
]


class FrontendError(Exception):
    pass


class SyntaxError(FrontendError):  # noqa: A001 - mirrors the usual name
    def __init__(self, line: int, col: int, message: str):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col
        self.message = message


class UninitializedVariable(FrontendError):
    def __init__(self, name: str):
        super().__init__(f"variable {name!r} is used but not initialized in the preamble")
        self.name = name


class UnknownDistribution(FrontendError):
    pass


class InvalidParameters(FrontendError):
    pass


# ---------------------------------------------------------------------------
# distributions


@dataclass(frozen=True)
class DistributionSpec:
    """A distribution known through its mean and a support predicate.

    ``support`` is a PLP over the single variable index 0.  ``family`` and
    ``params`` are kept so the simulator can draw from it; they are empty
    for distributions declared only by mean and support.
    """

    id: str
    mean: Fraction
    support: Plp
    family: str = ""
    params: tuple[Fraction, ...] = ()


def _fmt_num(v: Fraction) -> str:
    return str(v)


def builtin_distribution(name: str, params: Sequence) -> DistributionSpec:
    """``uniform(a, b)``, ``bernoulli(p)`` or ``dirac(v)``."""
    family = name.lower()
    ps = tuple(Fraction(p) for p in params)
    t = AffineExpr.var(0)
    if family == "uniform":
        if len(ps) != 2:
            raise InvalidParameters("uniform takes two parameters")
        a, b = ps
        if a > b:
            raise InvalidParameters(f"uniform({a}, {b}) has a > b")
        support = Plp.of(Constraint.ge(t, a), Constraint.le(t, b))
        mean = (a + b) / 2
    elif family == "bernoulli":
        if len(ps) != 1:
            raise InvalidParameters("bernoulli takes one parameter")
        (p,) = ps
        if not 0 <= p <= 1:
            raise InvalidParameters(f"bernoulli({p}) outside [0, 1]")
        point0 = Assertion((Constraint.le(t, 0), Constraint.ge(t, 0)))
        point1 = Assertion((Constraint.le(t, 1), Constraint.ge(t, 1)))
        support = Plp((point0, point1))
        mean = p
    elif family == "dirac":
        if len(ps) != 1:
            raise InvalidParameters("dirac takes one parameter")
        (v,) = ps
        support = Plp.of(Constraint.le(t, v), Constraint.ge(t, v))
        mean = v
    else:
        raise UnknownDistribution(f"unknown distribution {name!r}")
    dist_id = f"{family}({', '.join(_fmt_num(p) for p in ps)})"
    return DistributionSpec(dist_id, mean, support, family, ps)


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Interval:
    """Domain piece of ``ndet``; ``None`` bounds are infinite."""

    integral: bool
    lo: Fraction | None
    hi: Fraction | None

    @property
    def bounded(self) -> bool:
        return self.lo is not None and self.hi is not None


class Stmt:
    pass


@dataclass(frozen=True)
class Skip(Stmt):
    pass


@dataclass(frozen=True)
class Assign(Stmt):
    var: int
    expr: AffineExpr


@dataclass(frozen=True)
class AssignSample(Stmt):
    """``x_var := base + scale * sample(dist)``."""

    var: int
    dist: str
    base: AffineExpr = field(default_factory=AffineExpr)
    scale: Fraction = Fraction(1)


@dataclass(frozen=True)
class AssignNdet(Stmt):
    var: int
    domain: tuple[Interval, ...]


@dataclass(frozen=True)
class Seq(Stmt):
    stmts: tuple[Stmt, ...]


@dataclass(frozen=True)
class If(Stmt):
    guard: Plp
    then: Stmt
    orelse: Stmt


@dataclass(frozen=True)
class IfProb(Stmt):
    prob: Fraction
    then: Stmt
    orelse: Stmt


@dataclass(frozen=True)
class IfStar(Stmt):
    then: Stmt
    orelse: Stmt


@dataclass(frozen=True)
class While(Stmt):
    guard: Plp
    body: Stmt


@dataclass(frozen=True)
class Ast:
    vars: tuple[str, ...]
    preamble: tuple[tuple[str, Fraction], ...]
    body: Stmt
    dists: Mapping[str, DistributionSpec]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Ast)
            and self.vars == other.vars
            and self.preamble == other.preamble
            and self.body == other.body
            and dict(self.dists) == dict(other.dists)
        )

    def __hash__(self) -> int:
        return hash((self.vars, self.preamble, self.body))


# ---------------------------------------------------------------------------
# lexer

_KEYWORDS = {
    "while", "do", "od", "if", "then", "else", "fi", "skip", "prob",
    "sample", "ndet", "and", "or", "not", "true", "false",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?|\.\d+)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9']*)
  | (?P<op>:=|<=|>=|≤|≥|[;,()\[\]+\-*/<>=·⋆¬])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # num, ident, kw, op, nl, eof
    text: str
    line: int
    col: int


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    line = 1
    line_start = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if not m:
            raise SyntaxError(line, pos - line_start + 1, f"unexpected character {source[pos]!r}")
        kind = m.lastgroup
        text = m.group()
        col = pos - line_start + 1
        if kind == "nl":
            tokens.append(Token("nl", text, line, col))
            line += 1
            line_start = m.end()
        elif kind == "ident":
            tokens.append(Token("kw" if text in _KEYWORDS else "ident", text, line, col))
        elif kind in ("num", "op"):
            op = {"≤": "<=", "≥": ">=", "·": "*", "⋆": "*", "¬": "not"}.get(text, text)
            tokens.append(Token("kw" if op == "not" else kind, op, line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# ---------------------------------------------------------------------------
# parser (name-based intermediate form, resolved to indices afterwards)

# linear expression over names: {name: coeff, None: const}
Lin = dict


def _lin_const(c: Fraction) -> Lin:
    return {None: Fraction(c)}


def _lin_add(a: Lin, b: Lin, k: Fraction = Fraction(1)) -> Lin:
    out = dict(a)
    for name, v in b.items():
        out[name] = out.get(name, Fraction(0)) + k * v
    return {n: v for n, v in out.items() if v or n is None}


def _lin_scale(a: Lin, k: Fraction) -> Lin:
    return {n: v * k for n, v in a.items()}


# pseudo-variable standing for the drawn value inside an assignment
_DRAW = "$draw"


def _lin_is_const(a: Lin) -> bool:
    return all(n is None or not v for n, v in a.items())


@dataclass
class _Sample:
    dist: DistributionSpec
    scale: Fraction


@dataclass
class _RExpr:
    lin: Lin
    sample: _Sample | None = None
    ndet: tuple[Interval, ...] | None = None


class _Parser:
    def __init__(self, source: str):
        self.toks = tokenize(source)
        self.i = 0
        self.dists: dict[str, DistributionSpec] = {}
        self._drawn: DistributionSpec | None = None

    # -- token helpers ------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, message: str, tok: Token | None = None) -> SyntaxError:
        tok = tok or self.tok
        return SyntaxError(tok.line, tok.col, message)

    def at(self, text: str) -> bool:
        return self.tok.kind in ("op", "kw") and self.tok.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        tok = self.tok
        self.i += 1
        return tok

    def skip_newlines(self) -> None:
        while self.tok.kind == "nl":
            self.i += 1

    def skip_separators(self) -> None:
        while self.tok.kind == "nl" or self.at(";"):
            self.i += 1

    # -- program ------------------------------------------------------------

    def program(self):
        preamble: list[tuple[str, Fraction, Token]] = []
        seen: set[str] = set()
        self.skip_separators()
        while self.tok.kind == "ident":
            save = self.i
            items = self._try_preamble_item(seen)
            if items is None:
                self.i = save
                break
            for name, value, tok in items:
                preamble.append((name, value, tok))
                seen.add(name)
            if self.accept(","):
                continue
            if self.tok.kind == "eof":
                break
            if not (self.tok.kind == "nl" or self.at(";")):
                raise self.error("expected a newline or ';' after a preamble assignment")
            self.skip_separators()
        body = self.stmt_list(("eof",))
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r}")
        return preamble, body

    def _try_preamble_item(self, seen: set[str]):
        targets = [self.tok]
        self.i += 1
        while self.at(","):
            if self.peek().kind != "ident":
                break
            self.i += 1
            targets.append(self.tok)
            self.i += 1
        if not self.at(":="):
            return None
        self.i += 1
        values = []
        for k in range(len(targets)):
            if k:
                if not self.accept(","):
                    return None
            try:
                e = self.rexpr()
            except SyntaxError:
                return None
            if e.sample or e.ndet is not None or not _lin_is_const(e.lin):
                return None
            values.append(e.lin.get(None, Fraction(0)))
        names = [t.text for t in targets]
        if len(set(names)) != len(names) or any(n in seen for n in names):
            return None
        return [(t.text, v, t) for t, v in zip(targets, values)]

    def stmt_list(self, terminators: tuple[str, ...]) -> list:
        stmts = []
        self.skip_separators()
        while not self._at_terminator(terminators):
            stmts.append(self.statement())
            if self._at_terminator(terminators):
                break
            if not (self.tok.kind == "nl" or self.at(";")):
                raise self.error(f"expected a newline or ';', found {self.tok.text!r}")
            self.skip_separators()
        return stmts

    def _at_terminator(self, terminators) -> bool:
        if self.tok.kind == "eof":
            return True
        return self.tok.kind == "kw" and self.tok.text in terminators

    def statement(self):
        tok = self.tok
        if self.accept("skip"):
            return ("skip",)
        if self.accept("while"):
            cond = self.bexpr()
            self.skip_newlines()
            self.expect("do")
            body = self.stmt_list(("od",))
            self.expect("od")
            return ("while", cond, body, tok)
        if self.accept("if"):
            if self.at("*"):
                self.i += 1
                head = ("star",)
            elif self.at("prob"):
                self.i += 1
                self.expect("(")
                ptok = self.tok
                p = self.aexpr()
                self.expect(")")
                if not _lin_is_const(p):
                    raise self.error("prob(p) needs a constant", ptok)
                pv = p.get(None, Fraction(0))
                if not 0 <= pv <= 1:
                    raise self.error(f"probability {pv} outside [0, 1]", ptok)
                head = ("prob", pv)
            else:
                head = ("cond", self.bexpr())
            self.skip_newlines()
            self.expect("then")
            then = self.stmt_list(("else", "fi"))
            orelse: list = []
            if self.accept("else"):
                orelse = self.stmt_list(("fi",))
            self.expect("fi")
            return ("if", head, then, orelse, tok)
        if tok.kind == "ident":
            return self.assignment()
        raise self.error(f"unexpected {tok.text or 'end of input'!r}")

    def assignment(self):
        targets = [self.tok]
        self.i += 1
        while self.accept(","):
            if self.tok.kind != "ident":
                raise self.error("expected a variable name")
            targets.append(self.tok)
            self.i += 1
        self.expect(":=")
        values = [self.rexpr()]
        while self.accept(","):
            values.append(self.rexpr())
        if len(values) != len(targets):
            raise self.error(f"{len(targets)} targets but {len(values)} values", targets[0])
        return ("assign", targets, values)

    # -- expressions ----------------------------------------------------------

    def rexpr(self) -> _RExpr:
        if self.at("ndet"):
            self.i += 1
            self.expect("(")
            dom = self.domain()
            self.expect(")")
            return _RExpr({None: Fraction(0)}, ndet=dom)
        tok = self.tok
        self._drawn = None
        lin = self._sum(allow_sample=True)
        scale = lin.pop(_DRAW, Fraction(0))
        if self._drawn is None:
            return _RExpr(lin)
        if not scale:
            raise self.error("sample(...) cancels out of the expression", tok)
        return _RExpr(lin, _Sample(self._drawn, scale))

    def aexpr(self) -> Lin:
        return self._sum(allow_sample=False)

    def _sum(self, allow_sample: bool) -> Lin:
        acc = self._product(allow_sample)
        while self.at("+") or self.at("-"):
            k = Fraction(1) if self.tok.text == "+" else Fraction(-1)
            self.i += 1
            acc = _lin_add(acc, self._product(allow_sample), k)
        return acc

    def _product(self, allow_sample: bool) -> Lin:
        acc = self._factor(allow_sample)
        while self.at("*") or self.at("/"):
            optok = self.tok
            self.i += 1
            rhs = self._factor(allow_sample)
            if optok.text == "*":
                if _lin_is_const(rhs):
                    acc = _lin_scale(acc, rhs.get(None, Fraction(0)))
                elif _lin_is_const(acc):
                    acc = _lin_scale(rhs, acc.get(None, Fraction(0)))
                else:
                    raise self.error("product of two non-constant terms is not affine", optok)
            else:
                if not _lin_is_const(rhs):
                    raise self.error("division by a non-constant", optok)
                c = rhs.get(None, Fraction(0))
                if c == 0:
                    raise self.error("division by zero", optok)
                acc = _lin_scale(acc, 1 / c)
        return acc

    def _factor(self, allow_sample: bool) -> Lin:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return _lin_const(Fraction(tok.text))
        if tok.kind == "ident":
            self.i += 1
            return {tok.text: Fraction(1), None: Fraction(0)}
        if self.at("sample"):
            if not allow_sample:
                raise self.error("sample(...) is only allowed on the right of ':='")
            if self._drawn is not None:
                raise self.error("at most one sample(...) per assignment")
            self.i += 1
            self.expect("(")
            self._drawn = self.distribution()
            self.expect(")")
            return {_DRAW: Fraction(1), None: Fraction(0)}
        if self.accept("("):
            inner = self._sum(allow_sample)
            self.expect(")")
            return inner
        if self.accept("-"):
            return _lin_scale(self._factor(allow_sample), Fraction(-1))
        if self.accept("+"):
            return self._factor(allow_sample)
        raise self.error(f"expected an expression, found {tok.text or 'end of input'!r}")

    def distribution(self) -> DistributionSpec:
        tok = self.tok
        if tok.kind != "ident":
            raise self.error("expected a distribution name")
        self.i += 1
        if self.accept("("):
            close = ")"
        elif self.accept("["):
            close = "]"
        else:
            raise self.error("expected '(' or '[' after distribution name")
        params = []
        if not self.at(close):
            params.append(self._const())
            while self.accept(","):
                params.append(self._const())
        self.expect(close)
        try:
            spec = builtin_distribution(tok.text, params)
        except FrontendError as exc:
            raise self.error(str(exc), tok) from None
        self.dists.setdefault(spec.id, spec)
        return spec

    def _const(self) -> Fraction:
        tok = self.tok
        lin = self.aexpr()
        if not _lin_is_const(lin):
            raise self.error("expected a constant", tok)
        return lin.get(None, Fraction(0))

    def domain(self) -> tuple[Interval, ...]:
        pieces = [self._domain_piece()]
        while self.accept("or"):
            pieces.append(self._domain_piece())
        return tuple(pieces)

    def _domain_piece(self) -> Interval:
        tok = self.tok
        if tok.kind != "ident" or tok.text not in ("Int", "Real"):
            raise self.error("expected Int or Real")
        self.i += 1
        integral = tok.text == "Int"
        if self.accept("["):
            lo = self._bound(-1)
            self.expect(",")
            hi = self._bound(+1)
            self.expect("]")
            if lo is not None and hi is not None and lo > hi:
                raise self.error(f"empty domain [{lo}, {hi}]", tok)
            return Interval(integral, lo, hi)
        return Interval(integral, None, None)

    def _bound(self, side: int) -> Fraction | None:
        """A domain bound; ``inf`` (with the sign matching ``side``) is
        unbounded."""
        save = self.i
        neg = self.accept("-")
        if not neg:
            self.accept("+")
        if self.tok.kind == "ident" and self.tok.text == "inf":
            if (-1 if neg else 1) != side:
                raise self.error("infinite bound on the wrong side")
            self.i += 1
            return None
        self.i = save
        return self._const()

    # -- boolean expressions --------------------------------------------------

    def bexpr(self) -> Formula:
        parts = [self._conj()]
        while self.accept("or"):
            parts.append(self._conj())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def _conj(self) -> Formula:
        parts = [self._literal()]
        while self.accept("and"):
            parts.append(self._literal())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def _literal(self) -> Formula:
        if self.accept("not"):
            return Not(self._literal())
        if self.accept("true"):
            return TrueF()
        if self.accept("false"):
            return FalseF()
        if self.at("("):
            save = self.i
            try:
                return self._comparison()
            except SyntaxError:
                self.i = save
            self.expect("(")
            inner = self.bexpr()
            self.expect(")")
            return inner
        return self._comparison()

    def _comparison(self) -> Formula:
        lhs = self.aexpr()
        tok = self.tok
        if tok.kind != "op" or tok.text not in ("<=", ">=", "<", ">", "="):
            raise self.error("expected a comparison operator")
        self.i += 1
        rhs = self.aexpr()
        return ("cmp", tok.text, lhs, rhs)  # resolved later


# ---------------------------------------------------------------------------
# resolution to the index-based AST


class _Resolver:
    def __init__(self, names: Sequence[str]):
        self.index = {n: i for i, n in enumerate(names)}

    def lin(self, lin: Lin) -> AffineExpr:
        coeffs = {}
        for name, v in lin.items():
            if name is None:
                continue
            if name not in self.index:
                raise UninitializedVariable(name)
            coeffs[self.index[name]] = v
        return AffineExpr(lin.get(None, Fraction(0)), coeffs)

    def formula(self, f) -> Formula:
        if isinstance(f, tuple) and f[0] == "cmp":
            _, op, lhs, rhs = f
            a, b = self.lin(lhs), self.lin(rhs)
            if op == "<=":
                return Atom(Constraint.le(a, b))
            if op == ">=":
                return Atom(Constraint.ge(a, b))
            if op == "<":
                return Atom(Constraint.lt(a, b))
            if op == ">":
                return Atom(Constraint.gt(a, b))
            return And((Atom(Constraint.le(a, b)), Atom(Constraint.ge(a, b))))
        if isinstance(f, (TrueF, FalseF)):
            return f
        if isinstance(f, Not):
            return Not(self.formula(f.part))
        if isinstance(f, And):
            return And(tuple(self.formula(p) for p in f.parts))
        if isinstance(f, Or):
            return Or(tuple(self.formula(p) for p in f.parts))
        raise TypeError(f"unexpected formula node {f!r}")

    def guard(self, f) -> Plp:
        return to_dnf(self.formula(f))

    def stmts(self, items: list) -> Stmt:
        if not items:
            return Skip()
        out = [self.stmt(s) for s in items]
        return out[0] if len(out) == 1 else Seq(tuple(out))

    def stmt(self, s) -> Stmt:
        tag = s[0]
        if tag == "skip":
            return Skip()
        if tag == "while":
            return While(self.guard(s[1]), self.stmts(s[2]))
        if tag == "if":
            head, then, orelse = s[1], self.stmts(s[2]), self.stmts(s[3])
            if head[0] == "star":
                return IfStar(then, orelse)
            if head[0] == "prob":
                return IfProb(head[1], then, orelse)
            return If(self.guard(head[1]), then, orelse)
        if tag == "assign":
            return self.assign(s[1], s[2])
        raise AssertionError(tag)

    def assign(self, targets: list[Token], values: list[_RExpr]) -> Stmt:
        names = [t.text for t in targets]
        for t in targets:
            if t.text not in self.index:
                raise UninitializedVariable(t.text)
        if len(set(names)) != len(names):
            raise SyntaxError(targets[0].line, targets[0].col, "repeated assignment target")
        for k, v in enumerate(values):
            read = {n for n, c in v.lin.items() if n is not None and c}
            if read & set(names[:k]):
                raise SyntaxError(
                    targets[k].line,
                    targets[k].col,
                    "simultaneous assignment reads an earlier target; rewrite it sequentially",
                )
        stmts = [self._single(self.index[n], v) for n, v in zip(names, values)]
        return stmts[0] if len(stmts) == 1 else Seq(tuple(stmts))

    def _single(self, j: int, v: _RExpr) -> Stmt:
        if v.ndet is not None:
            return AssignNdet(j, v.ndet)
        base = self.lin(v.lin)
        if v.sample is not None:
            return AssignSample(j, v.sample.dist.id, base, v.sample.scale)
        return Assign(j, base)


def _flatten(stmt: Stmt) -> Stmt:
    """Canonical nesting: sequences are flat and never singletons."""
    if isinstance(stmt, Seq):
        items: list[Stmt] = []
        for s in stmt.stmts:
            s = _flatten(s)
            if isinstance(s, Seq):
                items.extend(s.stmts)
            else:
                items.append(s)
        return items[0] if len(items) == 1 else Seq(tuple(items))
    if isinstance(stmt, While):
        return While(stmt.guard, _flatten(stmt.body))
    if isinstance(stmt, If):
        return If(stmt.guard, _flatten(stmt.then), _flatten(stmt.orelse))
    if isinstance(stmt, IfProb):
        return IfProb(stmt.prob, _flatten(stmt.then), _flatten(stmt.orelse))
    if isinstance(stmt, IfStar):
        return IfStar(_flatten(stmt.then), _flatten(stmt.orelse))
    return stmt


def parse_program(source: str) -> Ast:
    """Parse program text into an :class:`Ast`.

    Raises :class:`SyntaxError` with a line/column and
    :class:`UninitializedVariable` for body variables missing from the
    preamble.
    """
    parser = _Parser(source)
    preamble, body_items = parser.program()
    names = tuple(name for name, _, _ in preamble)
    resolver = _Resolver(names)
    body = _flatten(resolver.stmts(body_items)) if body_items else Seq(())
    return Ast(
        vars=names,
        preamble=tuple((name, value) for name, value, _ in preamble),
        body=body,
        dists=dict(parser.dists),
    )


# ---------------------------------------------------------------------------
# pretty-printer


def _fmt_affine(e: AffineExpr, names: Sequence[str]) -> str:
    return e.format(names)


def _fmt_guard(g: Plp, names: Sequence[str]) -> str:
    if len(g) == 0:
        return "false"
    return g.format(names)


def _iter_lines(stmt: Stmt, names: Sequence[str], dists, depth: int) -> Iterator[str]:
    pad = "    " * depth
    if isinstance(stmt, Seq):
        if not stmt.stmts:
            return
        for s in stmt.stmts:
            yield from _iter_lines(s, names, dists, depth)
        return
    if isinstance(stmt, Skip):
        yield pad + "skip"
    elif isinstance(stmt, Assign):
        yield f"{pad}{names[stmt.var]} := {_fmt_affine(stmt.expr, names)}"
    elif isinstance(stmt, AssignSample):
        spec = dists[stmt.dist]
        draw = f"sample({spec.id})"
        if stmt.scale != 1:
            draw = f"{stmt.scale}*{draw}" if stmt.scale > 0 else f"({stmt.scale})*{draw}"
        if stmt.base.coeffs or stmt.base.const:
            draw = f"{_fmt_affine(stmt.base, names)} + {draw}"
        yield f"{pad}{names[stmt.var]} := {draw}"
    elif isinstance(stmt, AssignNdet):
        yield f"{pad}{names[stmt.var]} := ndet({format_domain(stmt.domain)})"
    elif isinstance(stmt, While):
        yield f"{pad}while {_fmt_guard(stmt.guard, names)} do"
        yield from _body_lines(stmt.body, names, dists, depth + 1)
        yield pad + "od"
    elif isinstance(stmt, (If, IfProb, IfStar)):
        if isinstance(stmt, If):
            head = _fmt_guard(stmt.guard, names)
        elif isinstance(stmt, IfProb):
            head = f"prob({stmt.prob})"
        else:
            head = "*"
        yield f"{pad}if {head} then"
        yield from _body_lines(stmt.then, names, dists, depth + 1)
        yield pad + "else"
        yield from _body_lines(stmt.orelse, names, dists, depth + 1)
        yield pad + "fi"
    else:
        raise TypeError(f"unknown statement {stmt!r}")


def _body_lines(stmt: Stmt, names, dists, depth: int) -> Iterator[str]:
    lines = list(_iter_lines(stmt, names, dists, depth))
    if not lines:
        # an empty branch prints as skip, which builds an equivalent pCFG
        lines = ["    " * depth + "skip"]
    yield from lines


def pretty(ast: Ast) -> str:
    """Source text that parses back to ``ast``."""
    lines = [f"{name} := {value}" for name, value in ast.preamble]
    lines.extend(_iter_lines(ast.body, ast.vars, ast.dists, 0))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# fragments used by the file formats


def _fragment_parser(text: str) -> _Parser:
    parser = _Parser(text)
    parser.toks = [t for t in parser.toks if t.kind != "nl"]
    return parser


def _finish(parser: _Parser, what: str) -> None:
    if parser.tok.kind != "eof":
        raise parser.error(f"trailing input after {what}: {parser.tok.text!r}")


def parse_affine(text: str, names: Sequence[str]) -> AffineExpr:
    parser = _fragment_parser(text)
    lin = parser.aexpr()
    _finish(parser, "expression")
    return _Resolver(names).lin(lin)


def parse_plp(text: str, names: Sequence[str]) -> Plp:
    parser = _fragment_parser(text)
    f = parser.bexpr()
    _finish(parser, "predicate")
    return _Resolver(names).guard(f)


def parse_domain(text: str) -> tuple[Interval, ...]:
    parser = _fragment_parser(text)
    dom = parser.domain()
    _finish(parser, "domain")
    return dom


def parse_distribution(text: str) -> DistributionSpec:
    parser = _fragment_parser(text)
    spec = parser.distribution()
    _finish(parser, "distribution")
    return spec


def format_domain(domain: Sequence[Interval]) -> str:
    pieces = []
    for iv in domain:
        kind = "Int" if iv.integral else "Real"
        if iv.lo is None and iv.hi is None:
            pieces.append(kind)
        else:
            lo = "-inf" if iv.lo is None else str(iv.lo)
            hi = "inf" if iv.hi is None else str(iv.hi)
            pieces.append(f"{kind}[{lo}, {hi}]")
    return " or ".join(pieces)
