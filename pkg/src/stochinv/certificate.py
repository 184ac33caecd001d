"""Certificates and stochastic invariants, with their text formats.

Certificate file::

    kind RepSM
    vars x
    eps 1
    c 13
    m0 -3429
    eta l0 = 7*x - 3499
    eta l1 = 7*x - 3500
    eta l2 = 7*x - 3500
    invariant
      l0: true
      l1: true
      l2: true
    end
    target
      l0: x > 500
      l1: false
      l2: false
    end

Stochastic invariant file::

    vars x y
    p 1/100000
    pi
      l2: x >= 1
      ...
    end

Predicate blocks list every location explicitly.  Numbers are exact
rationals (``1/4``, ``0.25`` and ``2.5e-3`` are all accepted).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterator, Mapping, Sequence

from .frontend import FrontendError, parse_affine, parse_plp
from .pcfg import FormatError
from .polyhedra import AffineExpr, Plp

__all__ = [
    "Certificate",
    "Kind",
    "StochasticInvariant",
    "format_certificate",
    "format_stochastic_invariant",
    "parse_certificate",
    "parse_stochastic_invariant",
]


class Kind(enum.Enum):
    RSM = "RSM"
    REPSM = "RepSM"


@dataclass(frozen=True)
class Certificate:
    """A linear supermartingale together with the sets it talks about.

    ``target`` is the set ``C``: reached with probability one for an RSM,
    repelled from for a RepSM.  ``c`` is ``None`` when no difference bound
    is claimed.
    """

    kind: Kind
    vars: tuple[str, ...]
    eta: Mapping[str, AffineExpr]
    eps: Fraction
    c: Fraction | None
    invariant: Mapping[str, Plp]
    target: Mapping[str, Plp]
    m0: Fraction

    def scaled(self, k) -> "Certificate":
        """``k * eta`` with ``eps`` and ``c`` scaled alike."""
        k = Fraction(k)
        return replace(
            self,
            eta={loc: e * k for loc, e in self.eta.items()},
            eps=self.eps * k,
            c=None if self.c is None else self.c * k,
            m0=self.m0 * k,
        )


@dataclass(frozen=True)
class StochasticInvariant:
    """``pi`` is violated with probability at most ``p`` under every
    scheduler."""

    pi: Mapping[str, Plp]
    p: float | Fraction
    vars: tuple[str, ...] = ()
    note: str = field(default="", compare=False)

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError(f"probability {self.p} outside [0, 1]")


# ---------------------------------------------------------------------------
# reading


def _number(text: str, lineno: int) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise FormatError(lineno, f"not a number: {text.strip()!r}") from None


def _lines(text: str) -> Iterator[tuple[int, str]]:
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def _block(it: Iterator[tuple[int, str]], names: Sequence[str], start: int) -> dict[str, Plp]:
    out: dict[str, Plp] = {}
    for lineno, line in it:
        if line == "end":
            return out
        loc, sep, body = line.partition(":")
        loc = loc.strip()
        if not sep or not loc:
            raise FormatError(lineno, "expected '<loc>: <predicate>'")
        if loc in out:
            raise FormatError(lineno, f"location {loc!r} listed twice")
        try:
            out[loc] = parse_plp(body.strip(), names)
        except FrontendError as exc:
            raise FormatError(lineno, str(exc)) from None
    raise FormatError(start, "block is missing its 'end'")


def parse_certificate(text: str) -> Certificate:
    fields: dict[str, object] = {}
    eta: dict[str, AffineExpr] = {}
    names: tuple[str, ...] | None = None
    it = _lines(text)
    for lineno, line in it:
        key, _, rest = line.partition(" ")
        rest = rest.strip()
        if key == "vars":
            names = tuple(rest.split())
        elif key == "kind":
            try:
                fields["kind"] = Kind(rest)
            except ValueError:
                raise FormatError(lineno, f"unknown certificate kind {rest!r}") from None
        elif key in ("eps", "m0"):
            fields[key] = _number(rest, lineno)
        elif key == "c":
            fields["c"] = None if rest == "-" else _number(rest, lineno)
        elif key == "eta":
            if names is None:
                raise FormatError(lineno, "vars must precede eta")
            loc, sep, expr = rest.partition("=")
            if not sep:
                raise FormatError(lineno, "expected: eta <loc> = <expr>")
            try:
                eta[loc.strip()] = parse_affine(expr.strip(), names)
            except FrontendError as exc:
                raise FormatError(lineno, str(exc)) from None
        elif key in ("invariant", "target"):
            if names is None:
                raise FormatError(lineno, "vars must precede predicate blocks")
            fields[key] = _block(it, names, lineno)
        else:
            raise FormatError(lineno, f"unknown field {key!r}")
    missing = [k for k in ("kind", "eps", "m0", "target") if k not in fields]
    if names is None:
        missing.insert(0, "vars")
    if missing:
        raise FormatError(0, f"certificate lacks {', '.join(missing)}")
    target = fields["target"]
    invariant = fields.get("invariant") or {loc: Plp.true() for loc in eta}
    return Certificate(
        kind=fields["kind"],
        vars=names,
        eta=eta,
        eps=fields["eps"],
        c=fields.get("c"),
        invariant=invariant,
        target=target,
        m0=fields["m0"],
    )


def parse_stochastic_invariant(text: str) -> StochasticInvariant:
    names: tuple[str, ...] | None = None
    p: Fraction | None = None
    pi: dict[str, Plp] | None = None
    it = _lines(text)
    for lineno, line in it:
        key, _, rest = line.partition(" ")
        if key == "vars":
            names = tuple(rest.split())
        elif key == "p":
            p = _number(rest, lineno)
            if not 0 <= p <= 1:
                raise FormatError(lineno, f"probability {p} outside [0, 1]")
        elif key == "pi":
            if names is None:
                raise FormatError(lineno, "vars must precede the pi block")
            pi = _block(it, names, lineno)
        else:
            raise FormatError(lineno, f"unknown field {key!r}")
    if names is None or p is None or pi is None:
        raise FormatError(0, "stochastic invariant needs vars, p and pi")
    return StochasticInvariant(pi, p, names)


# ---------------------------------------------------------------------------
# writing


def _fmt_block(title: str, lpm: Mapping[str, Plp], names: Sequence[str]) -> list[str]:
    return [title, *(f"  {loc}: {plp.format(names)}" for loc, plp in lpm.items()), "end"]


def format_certificate(cert: Certificate) -> str:
    names = cert.vars
    lines = [
        f"kind {cert.kind.value}",
        f"vars {' '.join(names)}",
        f"eps {cert.eps}",
        f"c {'-' if cert.c is None else cert.c}",
        f"m0 {cert.m0}",
    ]
    lines += [f"eta {loc} = {e.format(names)}" for loc, e in cert.eta.items()]
    lines += _fmt_block("invariant", cert.invariant, names)
    lines += _fmt_block("target", cert.target, names)
    return "\n".join(lines) + "\n"


def format_stochastic_invariant(si: StochasticInvariant) -> str:
    p = si.p if isinstance(si.p, Fraction) else repr(float(si.p))
    lines = [f"vars {' '.join(si.vars)}", f"p {p}"]
    lines += _fmt_block("pi", si.pi, si.vars)
    return "\n".join(lines) + "\n"
