"""Supermartingale obligations and their synthesis by linear programming.

Every condition a linear ranking or repulsing supermartingale must meet is
an implication ``premise(x) => conclusion(x) <= 0`` whose premise is a
conjunction of linear constraints over the program variables (plus at most
one fresh variable standing for a sampled or nondeterministically chosen
value) and whose conclusion is affine in ``x`` with coefficients drawn from
the template unknowns.  :func:`obligations` enumerates them; the Farkas
encoding turns each into linear rows over the unknowns and fresh
multipliers, and the resulting LP is solved exactly.

The same enumeration, fed a concrete expression map, is what the checker
verifies, so synthesizer and checker agree on what is being claimed.
"""

from __future__ import annotations

import enum
import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from . import lp
from .bounds import reach_bound
from .certificate import Certificate, Kind
from .pcfg import (
    AffineUpdate,
    ChooseUpdate,
    Identity,
    LocKind,
    Pcfg,
    SampleUpdate,
    Transition,
)
from .polyhedra import (
    AffineExpr,
    Assertion,
    Constraint,
    FarkasRow,
    Plp,
    Poly,
    TemplateAffine,
    farkas_rows,
    is_satisfiable,
    negate_lpm,
)

__all__ = [
    "DEFAULT_SWEEP",
    "ObKind",
    "Obligation",
    "QuadraticSystem",
    "SweepPoint",
    "SynthStatus",
    "SynthesisResult",
    "System",
    "gen_quadratic_system",
    "gen_repsm_system",
    "gen_rsm_system",
    "obligations",
    "preexp_obligations",
    "synthesize_repsm",
    "synthesize_rsm",
    "template_eta",
]

log = logging.getLogger(__name__)

DEFAULT_SWEEP = 1000
M0_FLOOR = Fraction(-(10**9))


class ObKind(enum.Enum):
    NONNEG = "nonnegativity"
    DECREASE = "decrease"
    DIFF_UP = "difference-upper"
    DIFF_DOWN = "difference-lower"


@dataclass(frozen=True)
class Obligation:
    """``premise => conclusion <= 0`` at location ``loc``.

    Premise constraints range over the program variables and, when
    ``fresh`` is set, the extra variable with index ``nvars``.
    """

    kind: ObKind
    loc: str
    premise: tuple[Constraint | TemplateAffine, ...]
    conclusion: TemplateAffine
    edge: Transition | None = None
    fresh: str | None = None

    def describe(self, names: Sequence[str]) -> str:
        text = f"{self.kind.value} at {self.loc}"
        if self.edge is not None:
            t = self.edge
            text += f" via {t.source}->{t.target}"
            upd = _describe_update(t, names)
            if upd:
                text += f" ({upd})"
        return text


def _describe_update(t: Transition, names: Sequence[str]) -> str:
    if isinstance(t.update, Identity):
        return ""
    var = names[t.var] if t.var < len(names) else f"x{t.var}"
    u = t.update
    if isinstance(u, AffineUpdate):
        return f"{var} := {u.expr.format(names)}"
    if isinstance(u, SampleUpdate):
        return f"{var} := sample {u.dist}"
    return f"{var} := ndet"


# ---------------------------------------------------------------------------
# enumeration


def template_eta(pcfg: Pcfg, prefix: str = "") -> dict[str, TemplateAffine]:
    """``b_l + a1_l*x1 + ... `` at every location, unknowns named after
    the location."""
    out = {}
    for loc in pcfg.loc_ids:
        out[loc] = TemplateAffine.generic(
            f"{prefix}b_{loc}", [f"{prefix}a{i + 1}_{loc}" for i in range(pcfg.nvars)]
        )
    return out


def _as_template(eta: Mapping[str, AffineExpr | TemplateAffine]) -> dict[str, TemplateAffine]:
    return {
        loc: e if isinstance(e, TemplateAffine) else TemplateAffine.from_affine(e)
        for loc, e in eta.items()
    }


def _interval_rows(lo, hi, idx: int) -> tuple[Constraint, ...]:
    rows = []
    if lo is not None:
        rows.append(Constraint(AffineExpr(lo, {idx: -1}), False))
    if hi is not None:
        rows.append(Constraint(AffineExpr(-hi, {idx: 1}), False))
    return tuple(rows)


def _shift_support(assertion: Assertion, idx: int) -> tuple[Constraint, ...]:
    return tuple(
        Constraint(AffineExpr(c.expr.const, {idx: c.expr.coeff(0)}), c.strict) for c in assertion
    )


def _post_cases(
    pcfg: Pcfg,
    t: Transition,
    eta_t: Mapping[str, TemplateAffine],
    *,
    expectation: bool,
) -> list[tuple[tuple[Constraint, ...], TemplateAffine]]:
    """Value of ``eta`` at the target of ``t`` as (extra premise, value)
    pairs; the value is universally quantified over each extra premise.

    With ``expectation`` a sampled value is replaced by its mean, otherwise
    it ranges over the distribution's support.  A nondeterministic choice
    always ranges over its domain.
    """
    target = eta_t[t.target]
    u = t.update
    idx = pcfg.nvars
    if isinstance(u, Identity):
        return [((), target)]
    if isinstance(u, AffineUpdate):
        return [((), target.substitute(t.var, u.expr))]
    if isinstance(u, SampleUpdate):
        d = pcfg.dists[u.dist]
        if expectation:
            return [((), target.substitute(t.var, u.base + u.scale * d.mean))]
        value = target.substitute(t.var, u.base + AffineExpr.var(idx, u.scale))
        return [(_shift_support(disj, idx), value) for disj in d.support]
    if isinstance(u, ChooseUpdate):
        value = target.substitute(t.var, AffineExpr.var(idx))
        return [(_interval_rows(iv.lo, iv.hi, idx), value) for iv in u.domain]
    raise TypeError(f"unknown update {u!r}")


def _fresh_name(t: Transition) -> str | None:
    if isinstance(t.update, SampleUpdate):
        return f"draw from {t.update.dist}"
    if isinstance(t.update, ChooseUpdate):
        return "chosen value"
    return None


def preexp_obligations(
    pcfg: Pcfg,
    eta: Mapping[str, AffineExpr | TemplateAffine],
    loc: str,
    premise: Assertion | Sequence[Constraint],
    eps=0,
) -> list[Obligation]:
    """Obligations stating ``preexp(eta)(loc, x) <= eta(loc, x) - eps`` on
    ``premise``.

    Probabilistic locations give one weighted sum (updates on their edges
    substituted summand by summand); nondeterministic locations one
    obligation per successor; deterministic ones one per guard disjunct.
    A chosen value is quantified over its domain, which is equivalent to
    bounding the maximum.
    """
    eta_t = _as_template(eta)
    here = eta_t[loc]
    base = tuple(premise)
    kind = pcfg.location(loc).kind
    out: list[Obligation] = []
    edges = pcfg.outgoing(loc)
    if kind is LocKind.PROB:
        total = TemplateAffine()
        for t in edges:
            if isinstance(t.update, ChooseUpdate):
                raise ValueError(f"nondeterministic assignment on a probabilistic edge out of {loc}")
            ((_, value),) = _post_cases(pcfg, t, eta_t, expectation=True)
            total = total + value * t.prob
        out.append(Obligation(ObKind.DECREASE, loc, base, total - here + eps))
        return out
    for t in edges:
        guards = [()] if kind is LocKind.NONDET else [tuple(g) for g in t.guard]
        for g in guards:
            for extra, value in _post_cases(pcfg, t, eta_t, expectation=True):
                out.append(
                    Obligation(
                        ObKind.DECREASE, loc, base + g + extra, value - here + eps, t, _fresh_name(t)
                    )
                )
    return out


def _difference_obligations(
    pcfg: Pcfg, eta_t: Mapping[str, TemplateAffine], loc: str, premise: tuple, c
) -> list[Obligation]:
    out = []
    here = eta_t[loc]
    for t in pcfg.outgoing(loc):
        if t.source == t.target and isinstance(t.update, Identity):
            continue
        guards = [()] if t.guard is None else [tuple(g) for g in t.guard]
        for g in guards:
            for extra, value in _post_cases(pcfg, t, eta_t, expectation=False):
                prem = premise + g + extra
                fresh = _fresh_name(t)
                out.append(Obligation(ObKind.DIFF_UP, loc, prem, value - here - c, t, fresh))
                out.append(Obligation(ObKind.DIFF_DOWN, loc, prem, here - value - c, t, fresh))
    return out


def _nvars_with_fresh(pcfg: Pcfg) -> int:
    return pcfg.nvars + 1


def _satisfiable(premise: Iterable, nvars: int) -> bool:
    rows = [p for p in premise if isinstance(p, Constraint)]
    return is_satisfiable(rows, nvars)


def obligations(
    pcfg: Pcfg,
    eta: Mapping[str, AffineExpr | TemplateAffine],
    kind: Kind,
    invariant: Mapping[str, Plp],
    target: Mapping[str, Plp],
    eps=0,
    c=None,
    *,
    cap: int = 256,
    drop_vacuous: bool = True,
    stopped: bool = True,
) -> list[Obligation]:
    """All obligations for ``eta`` to be an ``eps``-LRSM (``kind=RSM``) or
    ``eps``-LRepSM (``kind=REPSM``) for ``target`` supported by
    ``invariant``, with ``c``-bounded differences when ``c`` is given.

    With ``stopped`` (the default) differences are bounded only on steps
    taken outside ``target``: every bound derived from the certificate is
    about the process stopped on entering ``target``, so later steps never
    enter the argument.  ``stopped=False`` bounds every step under the
    invariant.

    Strict premise constraints are kept as written; the Farkas encoding and
    the checker both work on their closure.  Premises with no strict
    solution are dropped as vacuous.
    """
    eta_t = _as_template(eta)
    out: list[Obligation] = []
    for loc in pcfg.locations:
        inv = invariant.get(loc.id, Plp.true())
        tgt = target.get(loc.id, Plp.false())
        in_c = inv.conjoin(tgt, cap)
        out_c = inv.conjoin(tgt.negate(cap), cap)
        if kind is Kind.REPSM:
            for disj in in_c:
                out.append(Obligation(ObKind.NONNEG, loc.id, tuple(disj), -eta_t[loc.id]))
            if not loc.terminal:
                for disj in out_c:
                    out += preexp_obligations(pcfg, eta_t, loc.id, disj, eps)
        else:
            for disj in out_c:
                out.append(Obligation(ObKind.NONNEG, loc.id, tuple(disj), -eta_t[loc.id]))
                out += preexp_obligations(pcfg, eta_t, loc.id, disj, eps)
        if c is not None:
            for disj in out_c if stopped else inv:
                out += _difference_obligations(pcfg, eta_t, loc.id, tuple(disj), c)
    if drop_vacuous:
        n = _nvars_with_fresh(pcfg)
        out = [ob for ob in out if _satisfiable(ob.premise, n)]
    return out


# ---------------------------------------------------------------------------
# linear systems


@dataclass
class System:
    """An LP over template unknowns and Farkas multipliers."""

    problem: lp.LpProblem
    eta: dict[str, TemplateAffine]
    m0: Poly
    obligations: list[Obligation]
    eps: Fraction
    c_symbol: str | None
    multipliers: list[str] = field(default_factory=list)

    def instantiate(self, assignment: Mapping[str, Fraction]) -> dict[str, AffineExpr]:
        return {loc: t.instantiate(assignment) for loc, t in self.eta.items()}


def _row(problem: lp.LpProblem, row: FarkasRow) -> None:
    coeffs = row.poly.linear_coeffs()
    if not coeffs:
        # A constant row: either trivially true or a contradiction that the
        # LP must see, expressed on an always-present dummy.
        const = row.poly.constant
        ok = const == 0 if row.sense == "==" else const <= 0
        if not ok:
            problem.add_row({"_zero": 1}, "==", 1)
        return
    problem.add_row(coeffs, row.sense, -row.poly.constant)


def _build_system(
    pcfg: Pcfg,
    kind: Kind,
    invariant: Mapping[str, Plp],
    target: Mapping[str, Plp],
    eps,
    c,
    stopped: bool = True,
) -> System:
    eps = Fraction(eps)
    eta_t = template_eta(pcfg)
    c_symbol = None
    c_term = c
    if c == "symbolic":
        c_symbol = "c"
        c_term = Poly.sym("c")
    elif c is not None:
        c_term = Fraction(c)
    obs = obligations(pcfg, eta_t, kind, invariant, target, eps, c_term, stopped=stopped)
    problem = lp.LpProblem()
    problem.add_var("_zero", lo=0, hi=0)
    for t in eta_t.values():
        for s in sorted(t.const.symbols().union(*(p.symbols() for p in t.coeffs.values()))):
            problem.add_var(s)
    if c_symbol:
        problem.add_var(c_symbol, lo=eps)
    counter = itertools.count()
    multipliers: list[str] = []

    def fresh() -> str:
        name = f"lam{next(counter)}"
        problem.add_var(name, lo=0)
        multipliers.append(name)
        return name

    for ob in obs:
        rows, _ = farkas_rows(ob.premise, ob.conclusion, fresh)
        for r in rows:
            _row(problem, r)
    m0 = eta_t[pcfg.init_loc].at(pcfg.init_val)
    return System(problem, eta_t, m0, obs, eps, c_symbol, multipliers)


def gen_repsm_system(
    pcfg: Pcfg,
    invariant: Mapping[str, Plp],
    target: Mapping[str, Plp],
    eps=1,
    c="symbolic",
    stopped: bool = True,
) -> System:
    """LP whose solutions are ``eps``-LRepSMs for ``target`` supported by
    ``invariant``.  ``c`` is a fixed difference bound, ``"symbolic"`` for an
    LP variable ``c >= eps``, or ``None`` to omit difference bounds."""
    return _build_system(pcfg, Kind.REPSM, invariant, target, eps, c, stopped)


def gen_rsm_system(
    pcfg: Pcfg,
    invariant: Mapping[str, Plp],
    target: Mapping[str, Plp],
    eps=1,
    c=None,
    stopped: bool = True,
) -> System:
    """LP whose solutions are ``eps``-LRSMs for ``target`` supported by
    ``invariant``."""
    return _build_system(pcfg, Kind.RSM, invariant, target, eps, c, stopped)


# ---------------------------------------------------------------------------
# synthesis


class SynthStatus(enum.Enum):
    CERTIFICATE = "certificate"
    TRIVIAL_ZERO = "trivial-zero"
    TRIVIAL_ONE = "trivial-one"
    NO_CERTIFICATE = "no-certificate"


@dataclass(frozen=True)
class SweepPoint:
    j: int
    c: Fraction
    m0: Fraction | None
    p: float | None


@dataclass
class SynthesisResult:
    status: SynthStatus
    certificate: Certificate | None = None
    bound: float | Fraction | None = None
    message: str = ""
    sweep: list[SweepPoint] = field(default_factory=list)
    j: int | None = None

    @property
    def ok(self) -> bool:
        return self.status is not SynthStatus.NO_CERTIFICATE


def _init_in(lpm: Mapping[str, Plp], pcfg: Pcfg) -> bool:
    plp = lpm.get(pcfg.init_loc)
    return plp is not None and plp.holds(pcfg.init_val)


def _sweep_chunk(problem: lp.LpProblem, values: list[Fraction]) -> list[lp.LpOutcome]:
    return lp.sweep(problem, "c", values)


def _run_sweep(problem: lp.LpProblem, values: list[Fraction], jobs: int) -> list[lp.LpOutcome]:
    if jobs <= 1 or len(values) < 2 * jobs:
        return lp.sweep(problem, "c", values)
    size = -(-len(values) // jobs)
    chunks = [values[k : k + size] for k in range(0, len(values), size)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_sweep_chunk, [problem] * len(chunks), chunks))
    return [o for part in parts for o in part]


def synthesize_repsm(
    pcfg: Pcfg,
    invariant: Mapping[str, Plp],
    pi: Mapping[str, Plp],
    *,
    sweep: int = DEFAULT_SWEEP,
    eps=1,
    jobs: int = 1,
    stopped: bool = True,
) -> SynthesisResult:
    """Bound the probability that ``pi`` is ever violated.

    Synthesizes an ``eps``-LRepSM for the complement of ``pi`` supported by
    the pure invariant ``invariant``: first the least difference bound
    ``c_min``, then for ``c = c_min + j`` (``j = 0..sweep``) the least
    initial value, keeping the ``j`` whose closed-form bound is smallest.
    """
    violation = negate_lpm(pi)
    nvars = pcfg.nvars
    if all(
        not is_satisfiable(d, nvars)
        for loc in pcfg.loc_ids
        for d in invariant.get(loc, Plp.true()).conjoin(violation.get(loc, Plp.false()))
    ):
        return SynthesisResult(SynthStatus.TRIVIAL_ZERO, bound=0, message="no invariant configuration violates the predicate")
    if _init_in(violation, pcfg):
        return SynthesisResult(SynthStatus.TRIVIAL_ONE, bound=1, message="the initial configuration violates the predicate")
    system = gen_repsm_system(pcfg, invariant, violation, eps, "symbolic", stopped)
    problem = system.problem
    problem.set_objective({"c": 1})
    first = lp.solve(problem)
    if not first.optimal:
        return SynthesisResult(SynthStatus.NO_CERTIFICATE, message=f"difference-bound LP is {first.status.value}")
    c_min = first.value
    m0_coeffs = system.m0.linear_coeffs()
    problem.set_objective(m0_coeffs, system.m0.constant)
    values = [c_min + j for j in range(sweep + 1)]
    outcomes = _run_sweep(problem, values, jobs)
    if any(o.status is lp.LpStatus.UNBOUNDED for o in outcomes):
        log.warning("initial value unbounded below; re-solving with m0 >= %s", M0_FLOOR)
        problem.add_row(m0_coeffs, ">=", M0_FLOOR - system.m0.constant)
        outcomes = _run_sweep(problem, values, jobs)
    points: list[SweepPoint] = []
    best: tuple[float, int] | None = None
    for j, (cj, o) in enumerate(zip(values, outcomes)):
        if not o.optimal:
            points.append(SweepPoint(j, cj, None, None))
            continue
        m0 = o.value
        p = reach_bound(eps, cj, m0) if m0 < 0 else None
        points.append(SweepPoint(j, cj, m0, p))
        if p is not None and (best is None or p < best[0]):
            best = (p, j)
    if best is None:
        return SynthesisResult(SynthStatus.NO_CERTIFICATE, message="every optimal initial value is nonnegative", sweep=points)
    p, j = best
    outcome = outcomes[j]
    cert = Certificate(
        kind=Kind.REPSM,
        vars=pcfg.vars,
        eta=system.instantiate(outcome.assignment),
        eps=Fraction(eps),
        c=values[j],
        invariant=dict(invariant),
        target=violation,
        m0=outcome.value,
    )
    _recheck(pcfg, cert, stopped)
    return SynthesisResult(SynthStatus.CERTIFICATE, cert, p, sweep=points, j=j)


def synthesize_rsm(
    pcfg: Pcfg,
    invariant: Mapping[str, Plp],
    target: Mapping[str, Plp],
    *,
    eps=1,
    c=None,
) -> SynthesisResult:
    """An ``eps``-LRSM for ``target`` with the least initial value.

    ``bound`` is the expected-time bound ``m0 / eps`` as the classical
    result states it; :func:`stochinv.verdicts.expected_time_bound` gives
    the version that also accounts for negative values on entering the
    target.
    """
    system = gen_rsm_system(pcfg, invariant, target, eps, c)
    problem = system.problem
    m0_coeffs = system.m0.linear_coeffs()
    if not _init_in(target, pcfg):
        problem.add_row(m0_coeffs, ">=", -system.m0.constant)
    problem.set_objective(m0_coeffs, system.m0.constant)
    outcome = lp.solve(problem)
    if outcome.status is lp.LpStatus.UNBOUNDED:
        log.warning("initial value unbounded below; re-solving with m0 >= %s", M0_FLOOR)
        problem.add_row(m0_coeffs, ">=", M0_FLOOR - system.m0.constant)
        outcome = lp.solve(problem)
    if not outcome.optimal:
        return SynthesisResult(SynthStatus.NO_CERTIFICATE, message=f"ranking LP is {outcome.status.value}")
    cert = Certificate(
        kind=Kind.RSM,
        vars=pcfg.vars,
        eta=system.instantiate(outcome.assignment),
        eps=Fraction(eps),
        c=None if c is None else Fraction(c),
        invariant=dict(invariant),
        target=dict(target),
        m0=outcome.value,
    )
    _recheck(pcfg, cert)
    bound = Fraction(0) if _init_in(target, pcfg) else outcome.value / cert.eps
    return SynthesisResult(SynthStatus.CERTIFICATE, cert, bound)


def _recheck(pcfg: Pcfg, cert: Certificate, stopped: bool = True) -> None:
    from .check import check_certificate

    report = check_certificate(pcfg, cert, stopped=stopped)
    if not report.valid:
        raise AssertionError(
            "synthesized certificate failed the independent check:\n" + report.format(pcfg.vars)
        )


# ---------------------------------------------------------------------------
# joint system with a symbolic stochastic invariant


@dataclass
class QuadraticSystem:
    """Constraints over unknowns; only multiplier times invariant-coefficient
    products are nonlinear."""

    declarations: list[str]
    nonneg: list[str]
    rows: list[tuple[Poly, str]]
    strict: list[tuple[Poly, str]]
    si_symbols: list[str]

    def to_sexpr(self) -> str:
        lines = [f"(declare {s})" for s in self.declarations]
        lines += [f"(assert (>= {s} 0))" for s in self.nonneg]
        for poly, sense in self.rows:
            op = "=" if sense == "==" else sense
            lines.append(f"(assert ({op} {_sexpr(poly)} 0))")
        for poly, sense in self.strict:
            lines.append(f"(assert ({sense} {_sexpr(poly)} 0))")
        return "\n".join(lines) + ("\n" if lines else "")

    @property
    def max_degree(self) -> int:
        return max((p.degree for p, _ in self.rows + self.strict), default=0)

    def monomials(self) -> set[tuple[str, ...]]:
        return {m for p, _ in self.rows + self.strict for m in p.terms}


def _num(a: Fraction) -> str:
    if a.denominator == 1:
        return str(a.numerator)
    return f"(/ {a.numerator} {a.denominator})"


def _sexpr(poly: Poly) -> str:
    terms = []
    for mono, a in sorted(poly.terms.items()):
        factors = ([] if a == 1 else [_num(a)]) + list(mono)
        if not factors:
            factors = [_num(a)]
        terms.append(factors[0] if len(factors) == 1 else f"(* {' '.join(factors)})")
    if not terms:
        return "0"
    return terms[0] if len(terms) == 1 else f"(+ {' '.join(terms)})"


def _si_template(pcfg: Pcfg, shape: Mapping[str, int]) -> dict[str, list[TemplateAffine]]:
    out = {}
    for loc in pcfg.loc_ids:
        out[loc] = [
            TemplateAffine.generic(
                f"si_b_{loc}_{k}", [f"si_a{i + 1}_{loc}_{k}" for i in range(pcfg.nvars)]
            )
            for k in range(shape.get(loc, 0))
        ]
    return out


def gen_quadratic_system(
    pcfg: Pcfg,
    target: Mapping[str, Plp],
    shape: Mapping[str, int],
    pure_invariant: Mapping[str, Plp],
    eps=1,
) -> QuadraticSystem:
    """Joint constraints for a symbolic predicate map ``SI`` (``shape[loc]``
    conjuncts ``s_k(x) <= 0`` per location) such that

    * an ``eps``-LRSM for ``target`` exists supported by ``SI`` and the
      pure invariant, and
    * an ``eps``-LRepSM with negative initial value exists for the
      complement of ``SI`` supported by the pure invariant.

    Solving it is out of scope; the result is exported as S-expressions.
    """
    si = _si_template(pcfg, shape)
    counter = itertools.count()
    lams: list[str] = []

    def fresh() -> str:
        name = f"lam{next(counter)}"
        lams.append(name)
        return name

    rows: list[tuple[Poly, str]] = []
    strict: list[tuple[Poly, str]] = []
    n = _nvars_with_fresh(pcfg)

    def encode(obs: Iterable[Obligation]) -> None:
        for ob in obs:
            if not _satisfiable(ob.premise, n):
                continue
            farkas, _ = farkas_rows(ob.premise, ob.conclusion, fresh)
            for r in farkas:
                rows.append((r.poly, r.sense))

    # ranking part: premises gain the symbolic conjuncts
    rsm_eta = template_eta(pcfg, "rsm_")
    for ob in obligations(pcfg, rsm_eta, Kind.RSM, pure_invariant, target, eps, drop_vacuous=False):
        encode([_with_si(ob, si[ob.loc])])

    # repulsing part: target is the complement of SI, one disjunct per conjunct
    rep_eta = template_eta(pcfg, "rep_")
    c = Poly.sym("c")
    rep_obs: list[Obligation] = []
    for loc in pcfg.locations:
        inv = pure_invariant.get(loc.id, Plp.true())
        for disj in inv:
            base = tuple(disj)
            for s in si[loc.id]:
                rep_obs.append(Obligation(ObKind.NONNEG, loc.id, base + (-s,), -rep_eta[loc.id]))
            if not loc.terminal:
                rep_obs += preexp_obligations(pcfg, rep_eta, loc.id, base + tuple(si[loc.id]), eps)
            rep_obs += _difference_obligations(pcfg, rep_eta, loc.id, base + tuple(si[loc.id]), c)
    encode(rep_obs)
    has_violation = any(si[loc] for loc in si)
    if has_violation:
        m0 = rep_eta[pcfg.init_loc].at(pcfg.init_val)
        strict.append((m0, "<"))
    symbols: set[str] = set()
    for poly, _ in rows + strict:
        symbols |= poly.symbols()
    if "c" in symbols:
        rows.append((Poly.const(eps) - c, "<="))
    si_symbols = sorted(s for s in symbols if s.startswith("si_"))
    ordered = si_symbols + sorted(s for s in symbols if not s.startswith(("si_", "lam")))
    ordered += [s for s in lams if s in symbols]
    return QuadraticSystem(ordered, [s for s in lams if s in symbols], rows, strict, si_symbols)


def _with_si(ob: Obligation, conjuncts: list[TemplateAffine]) -> Obligation:
    if not conjuncts:
        return ob
    return Obligation(ob.kind, ob.loc, ob.premise + tuple(conjuncts), ob.conclusion, ob.edge, ob.fresh)
