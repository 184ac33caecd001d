"""Verdicts derived from validated certificates.

Every function here re-checks the certificates it is handed with the exact
checker before concluding anything, so a verdict other than ``Unknown``
always carries witnesses that pass :mod:`stochinv.check`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .bounds import PreconditionViolated, first_nonempty_step, reach_bound
from .certificate import Certificate, Kind, StochasticInvariant
from .check import CheckReport, check_certificate
from .pcfg import AffineUpdate, ChooseUpdate, Identity, Pcfg, SampleUpdate, Transition
from .polyhedra import AffineExpr, Constraint, Plp, find_point, infimum, is_satisfiable, negate_lpm
from .synth import _interval_rows, _shift_support

__all__ = [
    "DMismatch",
    "EntailmentFails",
    "InvalidCertificate",
    "Verdict",
    "VerdictKind",
    "check_persistence",
    "expected_time_bound",
    "lpm_entails",
    "make_stochastic_invariant",
    "refute_as_termination",
    "refute_finite_termination",
    "termination_lower_bound",
    "termination_verdict",
]

# Justification tags: short names of the argument each verdict rests on.
TAG_UNION = "ranking-with-stochastic-invariants"
TAG_NOT_AS = "repulsing-non-termination"
TAG_INFINITE = "repulsing-infinite-expected-time"
TAG_PERSIST = "ranking-and-repulsing-persistence"


class InvalidCertificate(ValueError):
    def __init__(self, message: str, report: CheckReport | None = None):
        super().__init__(message)
        self.report = report


class EntailmentFails(ValueError):
    def __init__(self, loc: str, witness: tuple[Fraction, ...]):
        super().__init__(f"at {loc} the stochastic invariants do not entail the support, e.g. at {witness}")
        self.loc = loc
        self.witness = witness


class DMismatch(ValueError):
    pass


class VerdictKind(enum.Enum):
    NOT_AS_TERMINATING = "NotAsTerminating"
    INFINITE_EXPECTED_TIME = "InfiniteExpectedTime"
    PERSISTENT = "Persistent"
    TERMINATION_LOWER_BOUND = "TerminationLowerBound"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    witness: tuple[Certificate, ...] = ()
    justification: str = ""
    value: Fraction | float | None = None
    expression: str = ""
    reason: str = ""
    notes: tuple[str, ...] = field(default=(), compare=False)

    @property
    def known(self) -> bool:
        return self.kind is not VerdictKind.UNKNOWN

    def report(self, paths: Sequence[str] = ()) -> str:
        lines = [f"verdict: {self.kind.value}"]
        if self.justification:
            lines.append(f"justification: {self.justification}")
        for p in paths:
            lines.append(f"certificate: {p}")
        if self.value is not None:
            lines.append(f"value: {float(self.value):.6g}")
        if self.expression:
            lines.append(f"expression: {self.expression}")
        if self.reason:
            lines.append(f"reason: {self.reason}")
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines)


def _unknown(reason: str, *witness: Certificate) -> Verdict:
    return Verdict(VerdictKind.UNKNOWN, tuple(witness), reason=reason)


def _validate(pcfg: Pcfg, cert: Certificate, kind: Kind) -> None:
    if cert.kind is not kind:
        raise InvalidCertificate(f"expected a {kind.value} certificate, got {cert.kind.value}")
    report = check_certificate(pcfg, cert)
    if not report.valid:
        raise InvalidCertificate("certificate fails the exact check:\n" + report.format(pcfg.vars), report)


# ---------------------------------------------------------------------------
# predicate-map entailment


def lpm_entails(
    stronger: Mapping[str, Plp], weaker: Mapping[str, Plp], locs: Sequence[str], nvars: int
) -> tuple[str, tuple[Fraction, ...]] | None:
    """``None`` when ``stronger(l)`` implies ``weaker(l)`` at every location,
    otherwise a location and a point of ``stronger(l)`` outside ``weaker(l)``.

    Decided by emptiness of each disjunct of ``stronger(l) and not weaker(l)``.
    """
    for loc in locs:
        lhs = stronger.get(loc, Plp.true())
        rhs = weaker.get(loc, Plp.true())
        for disj in lhs.conjoin(rhs.negate()):
            point = find_point(disj, nvars)
            if point is not None:
                return loc, point
    return None


def _conjoin_all(lpms: Sequence[Mapping[str, Plp]], locs: Sequence[str]) -> dict[str, Plp]:
    out = {loc: Plp.true() for loc in locs}
    for lpm in lpms:
        for loc in locs:
            out[loc] = out[loc].conjoin(lpm.get(loc, Plp.true()))
    return out


def _covers(pcfg: Pcfg, cert: Certificate, region: Mapping[str, Plp]) -> str | None:
    """Location where ``region`` within the invariant escapes ``cert.target``."""
    bad = lpm_entails(_conjoin_all([cert.invariant, region], pcfg.loc_ids), cert.target, pcfg.loc_ids, pcfg.nvars)
    return None if bad is None else bad[0]


# ---------------------------------------------------------------------------
# stochastic invariants and their combination


def make_stochastic_invariant(
    pcfg: Pcfg, cert: Certificate | None, pi: Mapping[str, Plp]
) -> StochasticInvariant:
    """``(pi, p)`` where ``p`` bounds the probability of ever leaving ``pi``.

    ``cert`` must be a repulsing certificate whose target contains every
    invariant configuration violating ``pi``.  When no such configuration
    exists ``p = 0`` and ``cert`` may be ``None``.
    """
    violation = negate_lpm(pi)
    inv = cert.invariant if cert is not None else {}
    if all(
        not is_satisfiable(d, pcfg.nvars)
        for loc in pcfg.loc_ids
        for d in inv.get(loc, Plp.true()).conjoin(violation.get(loc, Plp.false()))
    ):
        return StochasticInvariant(dict(pi), Fraction(0), pcfg.vars, note="violation set is empty")
    if cert is None:
        raise InvalidCertificate("a certificate is needed when the predicate can be violated")
    _validate(pcfg, cert, Kind.REPSM)
    loc = _covers(pcfg, cert, violation)
    if loc is not None:
        raise InvalidCertificate(f"the certificate's target misses violations of the predicate at {loc}")
    if cert.c is None:
        raise InvalidCertificate("the certificate claims no difference bound")
    try:
        p = reach_bound(cert.eps, cert.c, cert.m0)
    except PreconditionViolated as exc:
        raise InvalidCertificate(str(exc)) from None
    a = first_nonempty_step(cert.c, cert.m0)
    note = (
        f"p = exp(eps*m0/(c+eps)^2) * gamma^A / (1 - gamma), gamma = exp(-eps^2/(2*(c+eps)^2)), "
        f"eps = {cert.eps}, c = {cert.c}, m0 = {cert.m0}, A = {a}"
    )
    return StochasticInvariant(dict(pi), p, pcfg.vars, note=note)


def termination_lower_bound(
    invariants: Sequence[StochasticInvariant],
    rsm: Certificate,
    pcfg: Pcfg | None = None,
) -> Fraction:
    """``max(0, 1 - sum p_j)``: a lower bound on the probability of reaching
    the ranking certificate's target, exact in rational arithmetic.

    The conjunction of the invariants' predicates must entail the set that
    supports ``rsm``.  The certificate itself is re-checked only when
    ``pcfg`` is given.
    """
    if rsm.kind is not Kind.RSM:
        raise InvalidCertificate("expected a ranking certificate")
    if rsm.eps <= 0:
        raise InvalidCertificate("a ranking certificate needs eps > 0")
    locs = list(pcfg.loc_ids) if pcfg is not None else list(rsm.eta)
    nvars = pcfg.nvars if pcfg is not None else len(rsm.vars)
    both = _conjoin_all([si.pi for si in invariants], locs)
    bad = lpm_entails(both, rsm.invariant, locs, nvars)
    if bad is not None:
        raise EntailmentFails(*bad)
    if pcfg is not None:
        _validate(pcfg, rsm, Kind.RSM)
    # Float probabilities convert exactly, so the subtraction never rounds up.
    total = sum((Fraction(si.p) for si in invariants), Fraction(0))
    return max(Fraction(0), 1 - total)


def termination_verdict(invariants: Sequence[StochasticInvariant], rsm: Certificate, pcfg: Pcfg | None = None) -> Verdict:
    b = termination_lower_bound(invariants, rsm, pcfg)
    terms = " - ".join(str(Fraction(si.p)) for si in invariants)
    return Verdict(
        VerdictKind.TERMINATION_LOWER_BOUND,
        (rsm,),
        TAG_UNION,
        b,
        f"max(0, 1{' - ' + terms if terms else ''}) = {b}",
    )


# ---------------------------------------------------------------------------
# refutations


def _refutation_setup(pcfg: Pcfg, cert: Certificate) -> Verdict | None:
    if cert.kind is not Kind.REPSM:
        return _unknown("a repulsing certificate is required", cert)
    report = check_certificate(pcfg, cert)
    if not report.valid:
        return _unknown("certificate fails the exact check:\n" + report.format(pcfg.vars), cert)
    terminal = {loc.id: (Plp.true() if loc.terminal else Plp.false()) for loc in pcfg.locations}
    loc = _covers(pcfg, cert, terminal)
    if loc is not None:
        return _unknown(f"the target does not contain the terminal configurations at {loc}", cert)
    return None


def refute_as_termination(pcfg: Pcfg, cert: Certificate) -> Verdict:
    """``NotAsTerminating`` when a repulsing certificate for a superset of
    the terminal configurations has ``eps > 0``, ``c > 0`` and ``m0 < 0``:
    termination then has probability strictly below one."""
    early = _refutation_setup(pcfg, cert)
    if early is not None:
        return early
    if cert.eps <= 0:
        return _unknown("eps must be positive", cert)
    if cert.c is None or cert.c <= 0:
        return _unknown("a positive difference bound is required", cert)
    if cert.m0 >= 0:
        return _unknown(f"initial value {cert.m0} is not negative", cert)
    p = reach_bound(cert.eps, cert.c, cert.m0)
    detail = f"eps = {cert.eps}, c = {cert.c}, m0 = {cert.m0}"
    if p < 1:
        return Verdict(VerdictKind.NOT_AS_TERMINATING, (cert,), TAG_NOT_AS, p, f"P(terminate) <= {p:.6g} from {detail}")
    return Verdict(VerdictKind.NOT_AS_TERMINATING, (cert,), TAG_NOT_AS, None, f"P(terminate) < 1 from {detail}")


def refute_finite_termination(pcfg: Pcfg, cert: Certificate) -> Verdict:
    """``InfiniteExpectedTime`` when a repulsing certificate with ``eps >= 0``
    and bounded differences starts below zero."""
    early = _refutation_setup(pcfg, cert)
    if early is not None:
        return early
    if cert.c is None or cert.c <= 0:
        return _unknown("a positive difference bound is required", cert)
    if cert.m0 >= 0:
        return _unknown(f"initial value {cert.m0} is not negative", cert)
    return Verdict(
        VerdictKind.INFINITE_EXPECTED_TIME,
        (cert,),
        TAG_INFINITE,
        None,
        f"E[T] = inf since eta(init) = {cert.m0} < 0 while eta >= 0 on termination",
    )


# ---------------------------------------------------------------------------
# persistence


def _d_region(repsm: Certificate, k: Fraction, locs: Sequence[str]) -> dict[str, Plp]:
    out = {}
    for loc in locs:
        below = Plp.of(Constraint(repsm.eta[loc] - AffineExpr.constant(k)))
        out[loc] = repsm.invariant.get(loc, Plp.true()).conjoin(below)
    return out


def check_persistence(pcfg: Pcfg, repsm: Certificate, rsm: Certificate, k) -> Verdict:
    """``Persistent`` when ``repsm`` repels from the complement of the
    persistent set and ``rsm`` reaches ``D = {eta_repsm <= K} within I``
    with ``K < 0``.

    ``rsm.target`` must describe ``D`` exactly (mutual entailment at every
    location), otherwise :class:`DMismatch` is raised.
    """
    k = Fraction(k)
    locs = pcfg.loc_ids
    if any(loc not in repsm.eta for loc in locs):
        raise InvalidCertificate("repulsing certificate is incomplete")
    d = _d_region(repsm, k, locs)
    for a, b in ((d, rsm.target), (rsm.target, d)):
        bad = lpm_entails(a, b, locs, pcfg.nvars)
        if bad is not None:
            raise DMismatch(f"ranking target differs from eta <= {k} within the invariant at {bad[0]}, e.g. at {bad[1]}")
    if repsm.kind is not Kind.REPSM or rsm.kind is not Kind.RSM:
        return _unknown("need one repulsing and one ranking certificate", repsm, rsm)
    for cert in (repsm, rsm):
        report = check_certificate(pcfg, cert)
        if not report.valid:
            return _unknown(f"{cert.kind.value} certificate fails the exact check:\n" + report.format(pcfg.vars), repsm, rsm)
    if repsm.eps <= 0 or rsm.eps <= 0:
        return _unknown("both certificates need eps > 0", repsm, rsm)
    if repsm.c is None or repsm.c <= 0:
        return _unknown("the repulsing certificate needs a positive difference bound", repsm, rsm)
    if k >= 0:
        return _unknown(f"K = {k} is not negative", repsm, rsm)
    if lpm_entails(rsm.invariant, repsm.invariant, locs, pcfg.nvars) is not None:
        return _unknown("the ranking certificate relies on a weaker invariant than the repulsing one", repsm, rsm)
    return Verdict(
        VerdictKind.PERSISTENT,
        (repsm, rsm),
        TAG_PERSIST,
        None,
        f"D = {{eta <= {k}}} reached almost surely; leaving D is repelled with eps = {repsm.eps}, c = {repsm.c}",
    )


# ---------------------------------------------------------------------------
# expected time


def _successor_cases(pcfg: Pcfg, t: Transition) -> list[tuple[AffineExpr | None, tuple[Constraint, ...]]]:
    """Value assigned by ``t`` (``None`` for no change) in terms of the
    state and one fresh variable, with the constraints on that variable."""
    u = t.update
    idx = pcfg.nvars
    if isinstance(u, Identity):
        return [(None, ())]
    if isinstance(u, AffineUpdate):
        return [(u.expr, ())]
    if isinstance(u, SampleUpdate):
        expr = u.base + AffineExpr.var(idx, u.scale)
        return [(expr, _shift_support(disj, idx)) for disj in pcfg.dists[u.dist].support]
    if isinstance(u, ChooseUpdate):
        return [(AffineExpr.var(idx), _interval_rows(iv.lo, iv.hi, idx)) for iv in u.domain]
    raise TypeError(f"unknown update {u!r}")


def _after(expr: AffineExpr, var: int, value: AffineExpr | None) -> AffineExpr:
    return expr if value is None else expr.substitute(var, value)


def expected_time_bound(pcfg: Pcfg, rsm: Certificate, *, validate: bool = True) -> Fraction | float:
    """Upper bound ``(m0 + K) / eps`` on the expected time to reach the
    target, where ``-K`` bounds ``eta`` from below on the configurations
    through which the target is entered (``K >= 0``).

    Returns ``0`` when the initial configuration is already in the target
    and ``math.inf`` when ``eta`` is unbounded below on entry.
    """
    if validate:
        _validate(pcfg, rsm, Kind.RSM)
    if rsm.eps <= 0:
        raise InvalidCertificate("a ranking certificate needs eps > 0")
    init = pcfg.initial
    if rsm.target.get(init.loc, Plp.false()).holds(init.val) and rsm.invariant.get(init.loc, Plp.true()).holds(init.val):
        return Fraction(0)
    n = pcfg.nvars + 1
    lowest: Fraction | None = Fraction(0)
    for loc in pcfg.locations:
        inv = rsm.invariant.get(loc.id, Plp.true())
        outside = inv.conjoin(rsm.target.get(loc.id, Plp.false()).negate())
        for t in pcfg.outgoing(loc.id):
            landing = rsm.target.get(t.target, Plp.false())
            guards = [()] if t.guard is None else [tuple(g) for g in t.guard]
            for value, extra in _successor_cases(pcfg, t):
                eta_next = _after(rsm.eta[t.target], t.var, value)
                for disj in outside:
                    for g in guards:
                        for land in landing:
                            moved = tuple(Constraint(_after(c.expr, t.var, value), c.strict) for c in land)
                            premise = tuple(disj) + g + extra + moved
                            if not is_satisfiable(premise, n):
                                continue
                            low = infimum(eta_next, premise, n)
                            if low is None:
                                return math.inf
                            lowest = min(lowest, low)
    k = -lowest
    return (rsm.m0 + k) / rsm.eps
