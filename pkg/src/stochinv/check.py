"""Independent verification of supermartingale certificates.

Each obligation ``premise => e <= 0`` with a concrete ``e`` is refuted by
searching for a point of ``premise`` with ``e > 0``.  The search runs on the
closure of the premise first, matching the relaxation used in synthesis;
a violation that only lives on the boundary of a strict premise is not a
real counterexample and is reported as a note instead.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from . import lp
from .certificate import Certificate, Kind
from .pcfg import Pcfg
from .polyhedra import AffineExpr, Constraint, find_point
from .synth import ObKind, Obligation, obligations

__all__ = [
    "CheckReport",
    "SpotReport",
    "Violation",
    "check_certificate",
    "check_repsm",
    "check_rsm",
    "spot_check",
]


@dataclass(frozen=True)
class Violation:
    """One obligation that fails, with an exact witness.

    ``excess`` is how far the conclusion is above zero at ``witness``.
    """

    obligation: Obligation | None
    witness: tuple[Fraction, ...]
    excess: Fraction
    region: tuple[Constraint, ...] = ()
    message: str = ""

    def describe(self, names: Sequence[str]) -> str:
        if self.obligation is None:
            return self.message
        ob = self.obligation
        point = ", ".join(f"{n}={v}" for n, v in zip(_names(names, ob), self.witness))
        text = f"{ob.describe(names)}: violated at {point} by {self.excess}"
        if ob.kind in (ObKind.DIFF_UP, ObKind.DIFF_DOWN):
            text += " (step changes eta by more than c)"
        return text


def _names(names: Sequence[str], ob: Obligation | None) -> list[str]:
    out = list(names)
    if ob is not None and ob.fresh:
        out.append("v")
    return out


@dataclass
class CheckReport:
    valid: bool
    violations: list[Violation] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    checked: int = 0

    def format(self, names: Sequence[str]) -> str:
        lines = [f"obligations checked: {self.checked}", "result: " + ("valid" if self.valid else "INVALID")]
        for v in self.violations:
            lines.append("violation: " + v.describe(names))
            if v.obligation is not None:
                region = " and ".join(c.format(_names(names, v.obligation)) for c in v.region)
                lines.append(f"  region: {region or 'every state'}")
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines)

    def rows(self, names: Sequence[str]) -> list[dict[str, str]]:
        """One row per violation, for tabular output."""
        out = []
        for v in self.violations:
            ob = v.obligation
            out.append(
                {
                    "kind": ob.kind.value if ob else "structure",
                    "location": ob.loc if ob else "",
                    "edge": f"{ob.edge.source}->{ob.edge.target}" if ob and ob.edge else "",
                    "witness": " ".join(str(x) for x in v.witness),
                    "excess": str(v.excess),
                }
            )
        return out


def _concrete(ob: Obligation) -> AffineExpr:
    return ob.conclusion.instantiate({})


def _nvars(pcfg: Pcfg) -> int:
    return pcfg.nvars + 1


def _check_one(ob: Obligation, n: int) -> tuple[Violation | None, str | None]:
    e = _concrete(ob)
    premise = [p for p in ob.premise if isinstance(p, Constraint)]
    negated = Constraint(-e, True)
    closure = [c.closure() for c in premise]
    if find_point(closure + [negated], n) is None:
        return None, None
    point = find_point(premise + [negated], n)
    if point is None:
        return None, "boundary-relaxed: fails only on the boundary of a strict premise"
    witness = point if ob.fresh else point[: n - 1]
    excess = e.evaluate(point)
    region = tuple(c for c in premise + [negated] if not c.expr.is_constant)
    # A witness must violate exactly what it claims to.
    assert all(c.holds(point) for c in premise) and excess > 0
    return Violation(ob, tuple(witness), excess, region), None


def check_certificate(pcfg: Pcfg, cert: Certificate, *, stopped: bool = True) -> CheckReport:
    """Check every obligation of ``cert`` exactly.

    ``stopped`` selects where differences must be bounded; see
    :func:`stochinv.synth.obligations`.
    """
    report = CheckReport(valid=True)
    missing = [loc for loc in pcfg.loc_ids if loc not in cert.eta]
    if missing:
        report.violations.append(
            Violation(None, (), Fraction(0), message=f"eta is undefined at {', '.join(missing)}")
        )
        report.valid = False
        return report
    if tuple(cert.vars) != tuple(pcfg.vars):
        report.notes.append(f"certificate variables {cert.vars} differ from the program's {pcfg.vars}")
    m0 = cert.eta[pcfg.init_loc].evaluate(pcfg.init_val)
    if m0 != cert.m0:
        report.violations.append(
            Violation(None, pcfg.init_val, m0 - cert.m0, message=f"m0 is {cert.m0} but eta at the initial configuration is {m0}")
        )
    if cert.eps < 0:
        report.violations.append(Violation(None, (), cert.eps, message="eps is negative"))
    if cert.c is not None and cert.c < cert.eps:
        report.violations.append(Violation(None, (), cert.c, message=f"c = {cert.c} is below eps = {cert.eps}"))
    obs = obligations(pcfg, cert.eta, cert.kind, cert.invariant, cert.target, cert.eps, cert.c, stopped=stopped)
    n = _nvars(pcfg)
    for ob in obs:
        violation, note = _check_one(ob, n)
        if violation is not None:
            report.violations.append(violation)
        if note is not None:
            report.notes.append(f"{ob.describe(pcfg.vars)}: {note}")
    report.checked = len(obs)
    report.valid = not report.violations
    return report


def check_repsm(pcfg: Pcfg, cert: Certificate, *, stopped: bool = True) -> CheckReport:
    if cert.kind is not Kind.REPSM:
        raise ValueError("expected a repulsing certificate")
    return check_certificate(pcfg, cert, stopped=stopped)


def check_rsm(pcfg: Pcfg, cert: Certificate, *, stopped: bool = True) -> CheckReport:
    if cert.kind is not Kind.RSM:
        raise ValueError("expected a ranking certificate")
    return check_certificate(pcfg, cert, stopped=stopped)


# ---------------------------------------------------------------------------
# randomized cross-check


@dataclass
class SpotReport:
    samples: int
    violations: int
    per_obligation: list[tuple[str, int, int]] = field(default_factory=list)
    first_witness: tuple[Fraction, ...] | None = None

    def format(self) -> str:
        lines = [f"samples: {self.samples}", f"violations: {self.violations}"]
        for desc, k, bad in self.per_obligation:
            if bad:
                lines.append(f"  {desc}: {bad}/{k}")
        return "\n".join(lines)


def _vertices(premise: list[Constraint], n: int, box: Fraction, rng: random.Random) -> list[tuple[Fraction, ...]]:
    """Points of ``closure(premise)`` within the box, found by optimizing
    random directions."""
    base = lp.LpProblem()
    names = [f"x{i}" for i in range(n)]
    for name in names:
        base.add_var(name, lo=-box, hi=box)
    for c in premise:
        coeffs = {names[i]: a for i, a in c.expr.coeffs}
        if coeffs:
            base.add_row(coeffs, "<=", -c.expr.const)
        elif c.expr.const > 0:
            return []
    directions = []
    for i in range(n):
        directions += [{names[i]: 1}, {names[i]: -1}]
    for _ in range(n + 2):
        directions.append({name: rng.randint(-5, 5) for name in names})
    points = []
    for d in directions:
        base.set_objective(d)
        out = lp.solve(base)
        if out.optimal:
            points.append(tuple(out.assignment[name] for name in names))
    return list(dict.fromkeys(points))


def spot_check(
    pcfg: Pcfg,
    cert: Certificate,
    samples: int = 10_000,
    seed: int = 0,
    box=1000,
    *,
    stopped: bool = True,
) -> SpotReport:
    """Evaluate every obligation at random exact points of its premise
    (clipped to ``[-box, box]``) and count the failures."""
    rng = random.Random(seed)
    box = Fraction(box)
    obs = obligations(pcfg, cert.eta, cert.kind, cert.invariant, cert.target, cert.eps, cert.c, stopped=stopped)
    n = _nvars(pcfg)
    report = SpotReport(0, 0)
    if not obs:
        return report
    per = max(1, samples // len(obs))
    for ob in obs:
        premise = [p for p in ob.premise if isinstance(p, Constraint)]
        e = _concrete(ob)
        verts = _vertices(premise, n, box, rng)
        k = bad = 0
        if verts:
            for _ in range(per):
                weights = [rng.randint(0, 64) for _ in verts]
                if not any(weights):
                    weights[0] = 1
                total = sum(weights)
                point = tuple(
                    sum((Fraction(w, total) * v[i] for w, v in zip(weights, verts)), Fraction(0))
                    for i in range(n)
                )
                if not all(c.holds(point) for c in premise):
                    continue
                k += 1
                if e.evaluate(point) > 0:
                    bad += 1
                    if report.first_witness is None:
                        report.first_witness = point
        report.per_obligation.append((ob.describe(pcfg.vars), k, bad))
        report.samples += k
        report.violations += bad
    return report
