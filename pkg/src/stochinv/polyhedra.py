"""Rational affine algebra, linear predicates and the Farkas encoding.

Program variables are addressed by index.  A :class:`Constraint` means
``expr <= 0`` or ``expr < 0``; an :class:`Assertion` is a conjunction of
constraints and a :class:`Plp` a disjunction of assertions.  Template
expressions (:class:`TemplateAffine`) carry polynomial coefficients over
named unknowns and are what the Farkas encoding consumes.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Mapping, Sequence

from . import lp

__all__ = [
    "AffineExpr",
    "And",
    "Assertion",
    "Atom",
    "BlowupLimit",
    "Constraint",
    "FarkasRow",
    "Formula",
    "Not",
    "NotPolyhedral",
    "Or",
    "Plp",
    "Poly",
    "TemplateAffine",
    "TrueF",
    "FalseF",
    "farkas_rows",
    "find_point",
    "infimum",
    "is_satisfiable",
    "negate_lpm",
    "to_dnf",
]

DEFAULT_DNF_CAP = 256


class BlowupLimit(Exception):
    pass


class NotPolyhedral(Exception):
    pass


def _fr(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


# ---------------------------------------------------------------------------
# affine expressions over program variables


class AffineExpr:
    """``const + sum(coeffs[i] * x_i)`` with exact rational coefficients."""

    __slots__ = ("const", "coeffs", "_hash")

    def __init__(self, const=0, coeffs: Mapping[int, object] | None = None):
        self.const = _fr(const)
        items = []
        if coeffs:
            for i, a in coeffs.items():
                a = _fr(a)
                if a:
                    items.append((int(i), a))
        items.sort()
        self.coeffs: tuple[tuple[int, Fraction], ...] = tuple(items)
        self._hash = None

    @classmethod
    def var(cls, i: int, coeff=1) -> "AffineExpr":
        return cls(0, {i: coeff})

    @classmethod
    def constant(cls, c) -> "AffineExpr":
        return cls(c)

    def terms(self) -> dict[int, Fraction]:
        return dict(self.coeffs)

    def coeff(self, i: int) -> Fraction:
        for j, a in self.coeffs:
            if j == i:
                return a
        return Fraction(0)

    @property
    def is_constant(self) -> bool:
        return not self.coeffs

    def variables(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.coeffs)

    def __add__(self, other) -> "AffineExpr":
        if not isinstance(other, AffineExpr):
            return AffineExpr(self.const + _fr(other), dict(self.coeffs))
        terms = dict(self.coeffs)
        for i, a in other.coeffs:
            terms[i] = terms.get(i, Fraction(0)) + a
        return AffineExpr(self.const + other.const, terms)

    __radd__ = __add__

    def __neg__(self) -> "AffineExpr":
        return AffineExpr(-self.const, {i: -a for i, a in self.coeffs})

    def __sub__(self, other) -> "AffineExpr":
        return self + (-other if isinstance(other, AffineExpr) else -_fr(other))

    def __rsub__(self, other) -> "AffineExpr":
        return (-self) + other

    def __mul__(self, k) -> "AffineExpr":
        k = _fr(k)
        return AffineExpr(self.const * k, {i: a * k for i, a in self.coeffs})

    __rmul__ = __mul__

    def evaluate(self, point: Sequence) -> Fraction:
        total = self.const
        for i, a in self.coeffs:
            total += a * point[i]
        return total

    def substitute(self, j: int, expr: "AffineExpr") -> "AffineExpr":
        """Replace ``x_j`` by ``expr``."""
        a = self.coeff(j)
        if not a:
            return self
        rest = AffineExpr(self.const, {i: c for i, c in self.coeffs if i != j})
        return rest + expr * a

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, AffineExpr)
            and self.const == other.const
            and self.coeffs == other.coeffs
        )

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.const, self.coeffs))
        return self._hash

    def __repr__(self) -> str:
        return f"AffineExpr({self.format()})"

    def format(self, names: Sequence[str] | None = None) -> str:
        parts: list[str] = []
        for i, a in self.coeffs:
            name = names[i] if names is not None else f"x{i}"
            mag = abs(a)
            term = name if mag == 1 else f"{mag}*{name}"
            parts.append(("- " if a < 0 else "+ ") + term)
        if self.const or not parts:
            parts.append(("- " if self.const < 0 else "+ ") + str(abs(self.const)))
        text = " ".join(parts)
        return text[2:] if text.startswith("+ ") else "-" + text[2:]


# ---------------------------------------------------------------------------
# constraints, assertions, PLPs


@dataclass(frozen=True)
class Constraint:
    """``expr <= 0`` (or ``expr < 0`` when ``strict``)."""

    expr: AffineExpr
    strict: bool = False

    @classmethod
    def le(cls, lhs, rhs) -> "Constraint":
        return cls(_aff(lhs) - _aff(rhs), False)

    @classmethod
    def ge(cls, lhs, rhs) -> "Constraint":
        return cls(_aff(rhs) - _aff(lhs), False)

    @classmethod
    def lt(cls, lhs, rhs) -> "Constraint":
        return cls(_aff(lhs) - _aff(rhs), True)

    @classmethod
    def gt(cls, lhs, rhs) -> "Constraint":
        return cls(_aff(rhs) - _aff(lhs), True)

    def negate(self) -> "Constraint":
        return Constraint(-self.expr, not self.strict)

    def closure(self) -> "Constraint":
        return Constraint(self.expr, False) if self.strict else self

    def holds(self, point: Sequence) -> bool:
        v = self.expr.evaluate(point)
        return v < 0 if self.strict else v <= 0

    def format(self, names: Sequence[str] | None = None) -> str:
        """Render as ``lhs <= rhs`` with the constant moved right."""
        lhs = AffineExpr(0, dict(self.expr.coeffs))
        rhs = -self.expr.const
        op = "<" if self.strict else "<="
        if not lhs.coeffs:
            return f"0 {op} {rhs}"
        # prefer a positive leading coefficient
        if lhs.coeffs[0][1] < 0:
            op = ">" if self.strict else ">="
            return f"{(-lhs).format(names)} {op} {-rhs}"
        return f"{lhs.format(names)} {op} {rhs}"


def _aff(v) -> AffineExpr:
    return v if isinstance(v, AffineExpr) else AffineExpr(v)


@dataclass(frozen=True)
class Assertion:
    """Conjunction of constraints; the empty conjunction is ``true``."""

    constraints: tuple[Constraint, ...] = ()

    def __init__(self, constraints: Iterable[Constraint] = ()):
        object.__setattr__(self, "constraints", tuple(constraints))

    def __and__(self, other: "Assertion") -> "Assertion":
        return Assertion(self.constraints + other.constraints)

    def __iter__(self) -> Iterator[Constraint]:
        return iter(self.constraints)

    def __len__(self) -> int:
        return len(self.constraints)

    def holds(self, point: Sequence) -> bool:
        return all(c.holds(point) for c in self.constraints)

    def closure(self) -> "Assertion":
        return Assertion(c.closure() for c in self.constraints)

    @property
    def has_strict(self) -> bool:
        return any(c.strict for c in self.constraints)

    def format(self, names: Sequence[str] | None = None) -> str:
        if not self.constraints:
            return "true"
        return " and ".join(c.format(names) for c in self.constraints)


@dataclass(frozen=True)
class Plp:
    """Disjunction of assertions; the empty disjunction is ``false``."""

    disjuncts: tuple[Assertion, ...] = ()

    def __init__(self, disjuncts: Iterable[Assertion] = ()):
        object.__setattr__(self, "disjuncts", tuple(disjuncts))

    @classmethod
    def true(cls) -> "Plp":
        return cls((Assertion(),))

    @classmethod
    def false(cls) -> "Plp":
        return cls(())

    @classmethod
    def of(cls, *constraints: Constraint) -> "Plp":
        return cls((Assertion(constraints),))

    def __iter__(self) -> Iterator[Assertion]:
        return iter(self.disjuncts)

    def __len__(self) -> int:
        return len(self.disjuncts)

    def holds(self, point: Sequence) -> bool:
        return any(a.holds(point) for a in self.disjuncts)

    def conjoin(self, other: "Plp", cap: int = DEFAULT_DNF_CAP) -> "Plp":
        if len(self) * len(other) > cap:
            raise BlowupLimit(f"{len(self) * len(other)} disjuncts exceed cap {cap}")
        return Plp(a & b for a in self.disjuncts for b in other.disjuncts)

    def negate(self, cap: int = DEFAULT_DNF_CAP) -> "Plp":
        return to_dnf(Not(_plp_formula(self)), cap)

    @property
    def is_polyhedral(self) -> bool:
        return len(self.disjuncts) == 1

    @property
    def is_trivially_true(self) -> bool:
        return any(not a.constraints for a in self.disjuncts)

    def format(self, names: Sequence[str] | None = None) -> str:
        if not self.disjuncts:
            return "false"
        if len(self.disjuncts) == 1:
            return self.disjuncts[0].format(names)
        return " or ".join(
            f"({a.format(names)})" if len(a) > 1 else a.format(names) for a in self.disjuncts
        )


# ---------------------------------------------------------------------------
# propositional formulas and DNF


class Formula:
    pass


@dataclass(frozen=True)
class Atom(Formula):
    constraint: Constraint


@dataclass(frozen=True)
class And(Formula):
    parts: tuple[Formula, ...]


@dataclass(frozen=True)
class Or(Formula):
    parts: tuple[Formula, ...]


@dataclass(frozen=True)
class Not(Formula):
    part: Formula


@dataclass(frozen=True)
class TrueF(Formula):
    pass


@dataclass(frozen=True)
class FalseF(Formula):
    pass


def _plp_formula(plp: Plp) -> Formula:
    return Or(tuple(And(tuple(Atom(c) for c in a.constraints)) for a in plp.disjuncts))


def _nnf(f: Formula, negated: bool) -> Formula:
    if isinstance(f, Atom):
        return Atom(f.constraint.negate()) if negated else f
    if isinstance(f, TrueF):
        return FalseF() if negated else f
    if isinstance(f, FalseF):
        return TrueF() if negated else f
    if isinstance(f, Not):
        return _nnf(f.part, not negated)
    if isinstance(f, And):
        parts = tuple(_nnf(p, negated) for p in f.parts)
        return Or(parts) if negated else And(parts)
    if isinstance(f, Or):
        parts = tuple(_nnf(p, negated) for p in f.parts)
        return And(parts) if negated else Or(parts)
    if isinstance(f, Plp):
        return _nnf(_plp_formula(f), negated)
    raise TypeError(f"not a formula: {f!r}")


def to_dnf(formula: Formula | Plp, cap: int = DEFAULT_DNF_CAP) -> Plp:
    """Equivalent disjunctive normal form; raises :class:`BlowupLimit` when
    more than ``cap`` disjuncts would be produced."""

    def go(f: Formula) -> list[tuple[Constraint, ...]]:
        if isinstance(f, Atom):
            return [(f.constraint,)]
        if isinstance(f, TrueF):
            return [()]
        if isinstance(f, FalseF):
            return []
        if isinstance(f, Or):
            out: list[tuple[Constraint, ...]] = []
            for p in f.parts:
                out.extend(go(p))
                if len(out) > cap:
                    raise BlowupLimit(f"more than {cap} disjuncts")
            return out
        if isinstance(f, And):
            acc: list[tuple[Constraint, ...]] = [()]
            for p in f.parts:
                sub = go(p)
                if len(acc) * len(sub) > cap:
                    raise BlowupLimit(f"more than {cap} disjuncts")
                acc = [a + b for a in acc for b in sub]
            return acc
        raise TypeError(f"unexpected node {f!r}")

    if isinstance(formula, Plp):
        formula = _plp_formula(formula)
    disjuncts = go(_nnf(formula, False))
    seen: set = set()
    out = []
    for d in disjuncts:
        # drop duplicate constraints inside a disjunct, keep order
        uniq = tuple(dict.fromkeys(d))
        if uniq not in seen:
            seen.add(uniq)
            out.append(Assertion(uniq))
    return Plp(out)


def negate_lpm(lpm: Mapping[str, Plp]) -> dict[str, Plp]:
    """Location-wise complement of a polyhedral predicate map."""
    out = {}
    for loc, plp in lpm.items():
        if len(plp) == 0:
            out[loc] = Plp.true()
            continue
        if not plp.is_polyhedral:
            raise NotPolyhedral(f"predicate at {loc} has {len(plp)} disjuncts")
        (conj,) = plp.disjuncts
        out[loc] = Plp(Assertion((c.negate(),)) for c in dict.fromkeys(conj.constraints))
    return out


# ---------------------------------------------------------------------------
# satisfiability


def _dimension(constraints: Iterable[Constraint]) -> int:
    n = 0
    for c in constraints:
        for i, _ in c.expr.coeffs:
            n = max(n, i + 1)
    return n


def find_point(assertion: Assertion | Iterable[Constraint], nvars: int | None = None):
    """A rational point satisfying ``assertion`` exactly (strict constraints
    strictly), or ``None``.

    Strict constraints ``e < 0`` become ``e + delta <= 0`` and ``delta`` is
    maximized (capped at 1); the assertion is satisfiable iff the optimum is
    positive, in which case the optimal point is a strict witness.
    """
    constraints = list(assertion)
    n = _dimension(constraints) if nvars is None else nvars
    prob = lp.LpProblem()
    names = [f"x{i}" for i in range(n)]
    for name in names:
        prob.add_var(name)
    strict = any(c.strict for c in constraints)
    if strict:
        prob.add_var("delta", hi=1)
    for c in constraints:
        coeffs: dict[str, Fraction] = {names[i]: a for i, a in c.expr.coeffs}
        if c.strict:
            coeffs["delta"] = Fraction(1)
        if not coeffs:
            if c.expr.const > 0 or (c.strict and c.expr.const >= 0):
                return None
            continue
        prob.add_row(coeffs, "<=", -c.expr.const)
    if strict:
        prob.set_objective({"delta": -1})
    out = lp.solve(prob)
    if out.status is lp.LpStatus.INFEASIBLE:
        return None
    if out.status is lp.LpStatus.UNBOUNDED:
        raise lp.LpError("internal error: satisfiability LP unbounded")
    if strict and out.assignment["delta"] <= 0:
        return None
    point = tuple(out.assignment[name] for name in names)
    if not all(c.holds(point) for c in constraints):
        raise lp.LpError("internal error: witness does not satisfy assertion")
    return point


def is_satisfiable(assertion: Assertion | Iterable[Constraint], nvars: int | None = None) -> bool:
    return find_point(assertion, nvars) is not None


def infimum(expr: AffineExpr, assertion: Assertion | Iterable[Constraint], nvars: int | None = None) -> Fraction | None:
    """Exact infimum of ``expr`` over the closure of ``assertion``; ``None``
    when unbounded below.  Raises ``ValueError`` on an empty closure."""
    constraints = list(assertion)
    n = max(_dimension(constraints), _dimension([Constraint(expr)])) if nvars is None else nvars
    prob = lp.LpProblem()
    names = [f"x{i}" for i in range(n)]
    for name in names:
        prob.add_var(name)
    for c in constraints:
        coeffs = {names[i]: a for i, a in c.expr.coeffs}
        if coeffs:
            prob.add_row(coeffs, "<=", -c.expr.const)
        elif c.expr.const > 0:
            raise ValueError("empty premise")
    prob.set_objective({names[i]: a for i, a in expr.coeffs}, expr.const)
    out = lp.solve(prob)
    if out.status is lp.LpStatus.INFEASIBLE:
        raise ValueError("empty premise")
    if out.status is lp.LpStatus.UNBOUNDED:
        return None
    return out.value


# ---------------------------------------------------------------------------
# polynomials over unknowns and template expressions


Monomial = tuple[str, ...]


class Poly:
    """Sparse polynomial with rational coefficients over named unknowns.

    Monomials are sorted tuples of unknown names; ``()`` is the constant
    monomial.  In the linear synthesis path every polynomial has degree at
    most one; products of a multiplier with a symbolic predicate coefficient
    are the only degree-two terms ever formed.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[Monomial, object] | None = None):
        self.terms: dict[Monomial, Fraction] = {}
        if terms:
            for m, a in terms.items():
                a = _fr(a)
                if a:
                    self.terms[m] = a

    @classmethod
    def const(cls, c) -> "Poly":
        return cls({(): c})

    @classmethod
    def sym(cls, name: str, coeff=1) -> "Poly":
        return cls({(name,): coeff})

    @property
    def constant(self) -> Fraction:
        return self.terms.get((), Fraction(0))

    @property
    def degree(self) -> int:
        return max((len(m) for m in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def symbols(self) -> set[str]:
        return {s for m in self.terms for s in m}

    def __add__(self, other) -> "Poly":
        if not isinstance(other, Poly):
            other = Poly.const(other)
        out = dict(self.terms)
        for m, a in other.terms.items():
            out[m] = out.get(m, Fraction(0)) + a
        return Poly(out)

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly({m: -a for m, a in self.terms.items()})

    def __sub__(self, other) -> "Poly":
        if not isinstance(other, Poly):
            other = Poly.const(other)
        return self + (-other)

    def __mul__(self, other) -> "Poly":
        if not isinstance(other, Poly):
            k = _fr(other)
            return Poly({m: a * k for m, a in self.terms.items()})
        out: dict[Monomial, Fraction] = {}
        for m1, a1 in self.terms.items():
            for m2, a2 in other.terms.items():
                m = tuple(sorted(m1 + m2))
                out[m] = out.get(m, Fraction(0)) + a1 * a2
        return Poly(out)

    __rmul__ = __mul__

    def evaluate(self, assignment: Mapping[str, Fraction]) -> Fraction:
        total = Fraction(0)
        for m, a in self.terms.items():
            v = a
            for s in m:
                v *= assignment[s]
            total += v
        return total

    def linear_coeffs(self) -> dict[str, Fraction]:
        if self.degree > 1:
            raise ValueError("polynomial is not linear")
        return {m[0]: a for m, a in self.terms.items() if m}

    def __eq__(self, other) -> bool:
        if not isinstance(other, Poly):
            other = Poly.const(other)
        return self.terms == other.terms

    def __repr__(self) -> str:
        return f"Poly({self.terms!r})"


class TemplateAffine:
    """Affine expression over program variables with :class:`Poly`
    coefficients: ``const + sum(coeffs[i] * x_i)``."""

    __slots__ = ("const", "coeffs")

    def __init__(self, const: Poly | None = None, coeffs: Mapping[int, Poly] | None = None):
        self.const = const if const is not None else Poly()
        self.coeffs: dict[int, Poly] = {}
        if coeffs:
            for i, p in coeffs.items():
                if not p.is_zero():
                    self.coeffs[i] = p

    @classmethod
    def from_affine(cls, e: AffineExpr) -> "TemplateAffine":
        return cls(Poly.const(e.const), {i: Poly.const(a) for i, a in e.coeffs})

    @classmethod
    def generic(cls, const_sym: str, coeff_syms: Sequence[str]) -> "TemplateAffine":
        return cls(Poly.sym(const_sym), {i: Poly.sym(s) for i, s in enumerate(coeff_syms)})

    def coeff(self, i: int) -> Poly:
        return self.coeffs.get(i, Poly())

    def __add__(self, other) -> "TemplateAffine":
        if isinstance(other, AffineExpr):
            other = TemplateAffine.from_affine(other)
        elif isinstance(other, Poly):
            other = TemplateAffine(other)
        elif not isinstance(other, TemplateAffine):
            other = TemplateAffine(Poly.const(other))
        coeffs = dict(self.coeffs)
        for i, p in other.coeffs.items():
            coeffs[i] = coeffs[i] + p if i in coeffs else p
        return TemplateAffine(self.const + other.const, coeffs)

    __radd__ = __add__

    def __neg__(self) -> "TemplateAffine":
        return TemplateAffine(-self.const, {i: -p for i, p in self.coeffs.items()})

    def __sub__(self, other) -> "TemplateAffine":
        if isinstance(other, AffineExpr):
            other = TemplateAffine.from_affine(other)
        elif isinstance(other, Poly):
            other = TemplateAffine(other)
        elif not isinstance(other, TemplateAffine):
            other = TemplateAffine(Poly.const(other))
        return self + (-other)

    def __mul__(self, k) -> "TemplateAffine":
        return TemplateAffine(self.const * k, {i: p * k for i, p in self.coeffs.items()})

    __rmul__ = __mul__

    def substitute(self, j: int, expr: AffineExpr) -> "TemplateAffine":
        """Replace program variable ``x_j`` by the affine ``expr``."""
        a = self.coeffs.get(j)
        if a is None:
            return self
        coeffs = {i: p for i, p in self.coeffs.items() if i != j}
        out = TemplateAffine(self.const, coeffs)
        return out + TemplateAffine(a * expr.const, {i: a * c for i, c in expr.coeffs})

    def instantiate(self, assignment: Mapping[str, Fraction]) -> AffineExpr:
        return AffineExpr(
            self.const.evaluate(assignment),
            {i: p.evaluate(assignment) for i, p in self.coeffs.items()},
        )

    def at(self, point: Sequence) -> Poly:
        """Value at a concrete program point, as a polynomial in unknowns."""
        total = self.const
        for i, p in self.coeffs.items():
            total = total + p * _fr(point[i])
        return total

    @property
    def degree(self) -> int:
        return max([self.const.degree] + [p.degree for p in self.coeffs.values()])

    def __repr__(self) -> str:
        return f"TemplateAffine({self.const!r}, {self.coeffs!r})"


# ---------------------------------------------------------------------------
# Farkas encoding


@dataclass(frozen=True)
class FarkasRow:
    """``poly == 0`` or ``poly <= 0`` over unknowns and multipliers."""

    poly: Poly
    sense: str  # "==" or "<="


def farkas_rows(
    premise: Sequence[Constraint | TemplateAffine],
    conclusion: TemplateAffine,
    fresh: Callable[[], str],
) -> tuple[list[FarkasRow], list[str]]:
    """Encode ``forall x. premise(x) => conclusion(x) <= 0``.

    Each premise row ``p_k(x) <= 0`` (strictness dropped, i.e. its closure
    is used) gets a multiplier ``lam_k >= 0`` named by ``fresh()``.  The rows
    returned state ``sum_k lam_k * P_k = t`` on every variable coefficient
    and ``t_0 - sum_k lam_k * p_k0 <= 0`` on the constant, where
    ``p_k(x) = p_k0 + P_k . x`` and ``t`` is the conclusion.  Any solution
    makes the implication valid on the closure of the premise.
    """
    rows_t: list[TemplateAffine] = []
    for p in premise:
        if isinstance(p, Constraint):
            rows_t.append(TemplateAffine.from_affine(p.expr))
        else:
            rows_t.append(p)
    lams = [fresh() for _ in rows_t]
    lam_polys = [Poly.sym(name) for name in lams]
    var_ids: set[int] = set(conclusion.coeffs)
    for r in rows_t:
        var_ids.update(r.coeffs)
    out: list[FarkasRow] = []
    for i in sorted(var_ids):
        poly = -conclusion.coeff(i)
        for lam, r in zip(lam_polys, rows_t):
            c = r.coeffs.get(i)
            if c is not None:
                poly = poly + lam * c
        if not poly.is_zero():
            out.append(FarkasRow(poly, "=="))
    poly = conclusion.const
    for lam, r in zip(lam_polys, rows_t):
        if not r.const.is_zero():
            poly = poly - lam * r.const
    if not poly.is_zero() or not lams:
        out.append(FarkasRow(poly, "<="))
    return out, lams

