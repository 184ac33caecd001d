"""Exact rational linear programming.

A dense-tableau two-phase primal simplex over ``gmpy2.mpq``.  Problems are
always minimizations.  A problem may mark one variable as a *parameter*:
its column is moved to the right-hand side so the same tableau can be
re-optimized for many parameter values with the dual simplex, which is how
the difference-bound sweep during synthesis stays cheap.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Mapping, Sequence

from gmpy2 import mpq

__all__ = [
    "LpError",
    "LpOutcome",
    "LpProblem",
    "LpStatus",
    "SizeLimit",
    "dump",
    "residuals",
    "solve",
    "sweep",
]

ZERO = mpq(0)
ONE = mpq(1)

#: Default cap on rows * columns of the standard-form tableau.
DEFAULT_SIZE_CAP = 20_000_000

# Consecutive degenerate pivots tolerated under Dantzig pricing before the
# solver falls back to Bland's rule for the rest of the degenerate run.
_DEGENERATE_STREAK = 50


class LpError(Exception):
    pass


class SizeLimit(LpError):
    pass


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LpOutcome:
    status: LpStatus
    value: Fraction | None = None
    assignment: Mapping[str, Fraction] = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def _q(v) -> mpq:
    if isinstance(v, Fraction):
        return mpq(v.numerator, v.denominator)
    return mpq(v)


def _frac(v: mpq) -> Fraction:
    return Fraction(int(v.numerator), int(v.denominator))


@dataclass
class _Row:
    coeffs: dict[str, Fraction]
    sense: str
    rhs: Fraction


class LpProblem:
    """A linear program ``min c.y + c0`` subject to rows and variable bounds.

    Variables are declared with optional lower/upper bounds (``None`` means
    unbounded).  Rows are ``sum(a_v * v) <sense> rhs`` with sense one of
    ``<=``, ``>=``, ``==``.
    """

    def __init__(self) -> None:
        self.bounds: dict[str, tuple[Fraction | None, Fraction | None]] = {}
        self.rows: list[_Row] = []
        self.objective: dict[str, Fraction] = {}
        self.objective_const = Fraction(0)

    def add_var(self, name: str, lo=None, hi=None) -> str:
        if name in self.bounds:
            raise LpError(f"duplicate variable {name!r}")
        lo = None if lo is None else Fraction(lo)
        hi = None if hi is None else Fraction(hi)
        self.bounds[name] = (lo, hi)
        return name

    def has_var(self, name: str) -> bool:
        return name in self.bounds

    def add_row(self, coeffs: Mapping[str, object], sense: str, rhs=0) -> None:
        if sense not in ("<=", ">=", "=="):
            raise LpError(f"bad row sense {sense!r}")
        clean: dict[str, Fraction] = {}
        for name, a in coeffs.items():
            if name not in self.bounds:
                raise LpError(f"row references undeclared variable {name!r}")
            a = Fraction(a)
            if a:
                clean[name] = clean.get(name, Fraction(0)) + a
        self.rows.append(_Row({k: v for k, v in clean.items() if v}, sense, Fraction(rhs)))

    def set_objective(self, coeffs: Mapping[str, object], const=0) -> None:
        for name in coeffs:
            if name not in self.bounds:
                raise LpError(f"objective references undeclared variable {name!r}")
        self.objective = {k: Fraction(v) for k, v in coeffs.items() if v}
        self.objective_const = Fraction(const)

    def copy(self) -> "LpProblem":
        other = LpProblem()
        other.bounds = dict(self.bounds)
        other.rows = [_Row(dict(r.coeffs), r.sense, r.rhs) for r in self.rows]
        other.objective = dict(self.objective)
        other.objective_const = self.objective_const
        return other

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.rows), len(self.bounds)


def residuals(problem: LpProblem, assignment: Mapping[str, Fraction]) -> list[Fraction]:
    """Signed slack of each row; a feasible point has all entries ``>= 0``
    and exactly ``0`` on equality rows."""
    out = []
    for row in problem.rows:
        lhs = sum((a * assignment[v] for v, a in row.coeffs.items()), Fraction(0))
        if row.sense == "<=":
            out.append(row.rhs - lhs)
        elif row.sense == ">=":
            out.append(lhs - row.rhs)
        else:
            out.append(lhs - row.rhs)
    return out


def _is_feasible_point(problem: LpProblem, assignment: Mapping[str, Fraction]) -> bool:
    for name, (lo, hi) in problem.bounds.items():
        v = assignment[name]
        if lo is not None and v < lo:
            return False
        if hi is not None and v > hi:
            return False
    for row, r in zip(problem.rows, residuals(problem, assignment)):
        if row.sense == "==":
            if r != 0:
                return False
        elif r < 0:
            return False
    return True


# ---------------------------------------------------------------------------
# standard form


class _StandardForm:
    """``A z = b + t d, z >= 0`` with a map back to the problem variables."""

    def __init__(self, problem: LpProblem, param: str | None, t0: Fraction, cap: int):
        self.param = param
        cols: list[str] = []
        # var -> list of (column, sign); value = offset + sum(sign * z_col)
        self.recover: dict[str, tuple[Fraction, list[tuple[int, int]]]] = {}
        extra_rows: list[tuple[dict[int, Fraction], Fraction]] = []
        for name, (lo, hi) in problem.bounds.items():
            if name == param:
                continue
            if lo is not None:
                cols.append(name)
                self.recover[name] = (lo, [(len(cols) - 1, 1)])
                if hi is not None:
                    if hi < lo:
                        raise _TriviallyInfeasible
                    extra_rows.append(({len(cols) - 1: Fraction(1)}, hi - lo))
            elif hi is not None:
                cols.append(name)
                self.recover[name] = (hi, [(len(cols) - 1, -1)])
            else:
                cols.append(name + "+")
                cols.append(name + "-")
                self.recover[name] = (Fraction(0), [(len(cols) - 2, 1), (len(cols) - 1, -1)])
        self.n_struct = len(cols)

        # rows as (coeff map over columns, sense, b, d)
        rows: list[tuple[dict[int, Fraction], str, Fraction, Fraction]] = []
        for row in problem.rows:
            cmap: dict[int, Fraction] = {}
            b = row.rhs
            d = Fraction(0)
            for name, a in row.coeffs.items():
                if name == param:
                    d -= a
                    continue
                offset, parts = self.recover[name]
                b -= a * offset
                for col, sign in parts:
                    cmap[col] = cmap.get(col, Fraction(0)) + sign * a
            cmap = {k: v for k, v in cmap.items() if v}
            rows.append((cmap, row.sense, b, d))
        for cmap, hi in extra_rows:
            rows.append((cmap, "<=", hi, Fraction(0)))

        n_slack = sum(1 for r in rows if r[1] != "==")
        total_cols = self.n_struct + n_slack
        if len(rows) * max(total_cols, 1) > cap:
            raise SizeLimit(f"tableau {len(rows)} x {total_cols} exceeds cap {cap}")

        self.rows = rows
        self.total_cols = total_cols

        # objective over columns
        self.cost: dict[int, Fraction] = {}
        self.cost_const = problem.objective_const
        self.cost_param = Fraction(0)
        for name, c in problem.objective.items():
            if name == param:
                self.cost_param += c
                continue
            offset, parts = self.recover[name]
            self.cost_const += c * offset
            for col, sign in parts:
                self.cost[col] = self.cost.get(col, Fraction(0)) + sign * c
        self.t0 = t0


class _TriviallyInfeasible(Exception):
    pass


class _Tableau:
    """Dense simplex tableau with two right-hand-side columns ``b`` and ``d``.

    Column ``n`` holds ``b``, column ``n + 1`` holds ``d``; the effective
    right-hand side at parameter ``t`` is ``b + t * d``.
    """

    def __init__(self, sf: _StandardForm, rule: str):
        self.sf = sf
        self.rule = rule
        self.dead_rows: list[tuple[mpq, mpq]] = []
        self.t = _q(sf.t0)
        n = sf.total_cols
        self.n_real = n
        rows: list[list] = []
        basis: list[int] = []
        slack = sf.n_struct
        needs_art: list[int] = []
        for cmap, sense, b, d in sf.rows:
            row = [ZERO] * (n + 2)
            for col, a in cmap.items():
                row[col] = _q(a)
            s_col = None
            if sense == "<=":
                row[slack] = ONE
                s_col = slack
                slack += 1
            elif sense == ">=":
                row[slack] = -ONE
                s_col = slack
                slack += 1
            row[n] = _q(b)
            row[n + 1] = _q(d)
            if row[n] + self.t * row[n + 1] < 0:
                row = [-v if v else ZERO for v in row]
            if s_col is not None and row[s_col] == ONE:
                basis.append(s_col)
            else:
                basis.append(-1)
                needs_art.append(len(rows))
            rows.append(row)
        # artificial columns are appended after the real ones
        n_art = len(needs_art)
        self.n = n + n_art
        if n_art:
            for row in rows:
                rhs_b, rhs_d = row[n], row[n + 1]
                row[n:] = [ZERO] * n_art + [rhs_b, rhs_d]
            for k, i in enumerate(needs_art):
                rows[i][n + k] = ONE
                basis[i] = n + k
        self.rows = rows
        self.basis = basis
        self.obj: list = [ZERO] * (self.n + 2)
        self.banned: set[int] = set()

    # -- helpers -----------------------------------------------------------

    @property
    def B(self) -> int:
        return self.n

    def rhs(self, i: int) -> mpq:
        row = self.rows[i]
        d = row[self.n + 1]
        return row[self.n] + self.t * d if d else row[self.n]

    def pivot(self, r: int, q: int) -> None:
        rows = self.rows
        prow = rows[r]
        piv = prow[q]
        if piv != ONE:
            inv = ONE / piv
            prow = [v * inv if v else ZERO for v in prow]
            rows[r] = prow
        nz = [j for j, v in enumerate(prow) if v]
        for i, row in enumerate(rows):
            if i == r:
                continue
            f = row[q]
            if f:
                for j in nz:
                    row[j] = row[j] - f * prow[j]
        obj = self.obj
        f = obj[q]
        if f:
            for j in nz:
                obj[j] = obj[j] - f * prow[j]
        self.basis[r] = q

    def _set_objective(self, cost: Mapping[int, mpq]) -> None:
        obj = [ZERO] * (self.n + 2)
        for j, c in cost.items():
            obj[j] = c
        for i, bj in enumerate(self.basis):
            f = obj[bj]
            if f:
                row = self.rows[i]
                for j, v in enumerate(row):
                    if v:
                        obj[j] = obj[j] - f * v
        self.obj = obj

    def _entering(self, bland: bool) -> int | None:
        obj = self.obj
        banned = self.banned
        best = None
        best_val = ZERO
        for j in range(self.n):
            v = obj[j]
            if v < 0 and j not in banned:
                if bland:
                    return j
                if v < best_val:
                    best, best_val = j, v
        return best

    def _leaving(self, q: int) -> tuple[int | None, bool]:
        best = None
        best_ratio = None
        best_basis = None
        for i, row in enumerate(self.rows):
            a = row[q]
            if a > 0:
                ratio = self.rhs(i) / a
                if (
                    best is None
                    or ratio < best_ratio
                    or (ratio == best_ratio and self.basis[i] < best_basis)
                ):
                    best, best_ratio, best_basis = i, ratio, self.basis[i]
        return best, (best is not None and best_ratio == 0)

    def primal(self) -> bool:
        """Run primal simplex on the current objective; False if unbounded."""
        streak = 0
        while True:
            bland = self.rule == "bland" or streak >= _DEGENERATE_STREAK
            q = self._entering(bland)
            if q is None:
                return True
            r, degenerate = self._leaving(q)
            if r is None:
                return False
            streak = streak + 1 if degenerate else 0
            self.pivot(r, q)

    def dual(self) -> bool:
        """Run dual simplex from a dual-feasible basis; False if infeasible."""
        streak = 0
        n = self.n
        banned = self.banned
        while True:
            bland = self.rule == "bland" or streak >= _DEGENERATE_STREAK
            r = None
            r_val = None
            for i in range(len(self.rows)):
                v = self.rhs(i)
                if v < 0:
                    if bland:
                        if r is None or self.basis[i] < self.basis[r]:
                            r, r_val = i, v
                    elif r_val is None or v < r_val:
                        r, r_val = i, v
            if r is None:
                return True
            row = self.rows[r]
            q = None
            q_ratio = None
            obj = self.obj
            for j in range(n):
                a = row[j]
                if a < 0 and j not in banned:
                    ratio = obj[j] / -a
                    if q is None or ratio < q_ratio:
                        q, q_ratio = j, ratio
            if q is None:
                return False
            streak = streak + 1 if q_ratio == 0 else 0
            self.pivot(r, q)

    def drop_artificials(self) -> None:
        n_real = self.n_real
        keep: list[int] = []
        for i, bj in enumerate(self.basis):
            if bj < n_real:
                keep.append(i)
                continue
            row = self.rows[i]
            q = next((j for j in range(n_real) if row[j]), None)
            if q is None:
                self.dead_rows.append((row[self.n], row[self.n + 1]))
                continue
            self.pivot(i, q)
            keep.append(i)
        n = self.n
        self.rows = [self.rows[i][:n_real] + self.rows[i][n : n + 2] for i in keep]
        self.basis = [self.basis[i] for i in keep]
        self.obj = self.obj[:n_real] + self.obj[n : n + 2]
        self.n = n_real

    def dead_rows_ok(self) -> bool:
        return all(b + self.t * d == 0 for b, d in self.dead_rows)

    def column_values(self) -> list[mpq]:
        vals = [ZERO] * self.n
        for i, bj in enumerate(self.basis):
            vals[bj] = self.rhs(i)
        return vals


def _outcome(tab: _Tableau, problem: LpProblem) -> LpOutcome:
    sf = tab.sf
    vals = tab.column_values()
    assignment: dict[str, Fraction] = {}
    t = _frac(tab.t)
    for name in problem.bounds:
        if name == sf.param:
            assignment[name] = t
            continue
        offset, parts = sf.recover[name]
        v = offset
        for col, sign in parts:
            v += sign * _frac(vals[col])
        assignment[name] = v
    value = problem.objective_const + sum(
        (c * assignment[v] for v, c in problem.objective.items()), Fraction(0)
    )
    if not _is_feasible_point(problem, assignment):
        raise LpError("internal error: simplex returned an infeasible point")
    return LpOutcome(LpStatus.OPTIMAL, value, assignment)


def _prepare(problem: LpProblem, param: str | None, t0, rule: str, cap: int):
    """Phase 1 and phase 2 at ``t0``; returns (tableau or None, outcome)."""
    try:
        sf = _StandardForm(problem, param, Fraction(t0), cap)
    except _TriviallyInfeasible:
        return None, LpOutcome(LpStatus.INFEASIBLE)
    tab = _Tableau(sf, rule)
    n_art = tab.n - tab.n_real
    if n_art:
        tab._set_objective({j: ONE for j in range(tab.n_real, tab.n)})
        tab.primal()
        phase1 = -(tab.obj[tab.n] + tab.t * tab.obj[tab.n + 1])
        if phase1 > 0:
            return None, LpOutcome(LpStatus.INFEASIBLE)
        tab.drop_artificials()
        if not tab.dead_rows_ok():
            return None, LpOutcome(LpStatus.INFEASIBLE)
    tab._set_objective({j: _q(c) for j, c in sf.cost.items()})
    if not tab.primal():
        return None, LpOutcome(LpStatus.UNBOUNDED)
    return tab, _outcome(tab, problem)


def solve(problem: LpProblem, *, rule: str = "dantzig", size_cap: int = DEFAULT_SIZE_CAP) -> LpOutcome:
    """Solve ``problem`` exactly.

    ``rule`` selects pricing: ``"bland"`` uses Bland's rule throughout,
    ``"dantzig"`` uses most-negative reduced cost and switches to Bland's
    rule during long degenerate runs, so it cannot cycle either.
    """
    if rule not in ("bland", "dantzig"):
        raise LpError(f"unknown pivot rule {rule!r}")
    _, outcome = _prepare(problem, None, 0, rule, size_cap)
    return outcome


def sweep(
    problem: LpProblem,
    param: str,
    values: Sequence,
    *,
    rule: str = "dantzig",
    size_cap: int = DEFAULT_SIZE_CAP,
) -> list[LpOutcome]:
    """Solve ``problem`` with variable ``param`` fixed to each of ``values``.

    The first value is solved from scratch; later values reuse the optimal
    basis and restore primal feasibility with the dual simplex.  Results are
    identical to solving each fixed problem independently, up to the choice
    among alternative optima.
    """
    if param not in problem.bounds:
        raise LpError(f"unknown parameter {param!r}")
    lo, hi = problem.bounds[param]
    values = [Fraction(v) for v in values]
    out: list[LpOutcome] = []
    tab = None
    for t in values:
        if (lo is not None and t < lo) or (hi is not None and t > hi):
            out.append(LpOutcome(LpStatus.INFEASIBLE))
            continue
        if tab is None:
            tab, outcome = _prepare(problem, param, t, rule, size_cap)
            out.append(outcome)
            continue
        tab.t = _q(t)
        if not tab.dead_rows_ok() or not tab.dual():
            out.append(LpOutcome(LpStatus.INFEASIBLE))
            continue
        out.append(_outcome(tab, problem))
    return out


def dump(problem: LpProblem, stream: io.TextIOBase | None = None) -> str:
    """Plain-text rendering ``min c.y s.t. rows`` for debugging."""

    def lin(coeffs: Mapping[str, Fraction]) -> str:
        if not coeffs:
            return "0"
        parts = []
        for name, a in coeffs.items():
            sign = "-" if a < 0 else "+"
            mag = abs(a)
            term = name if mag == 1 else f"{mag}*{name}"
            parts.append(f"{sign} {term}")
        text = " ".join(parts)
        return text[2:] if text.startswith("+ ") else "-" + text[2:]

    lines = [f"min {lin(problem.objective)} + {problem.objective_const}", "s.t."]
    for row in problem.rows:
        lines.append(f"  {lin(row.coeffs)} {row.sense} {row.rhs}")
    bounds = []
    for name, (lo, hi) in problem.bounds.items():
        if lo is None and hi is None:
            bounds.append(f"  {name} free")
        else:
            lo_s = "-inf" if lo is None else str(lo)
            hi_s = "+inf" if hi is None else str(hi)
            bounds.append(f"  {lo_s} <= {name} <= {hi_s}")
    if bounds:
        lines.append("bounds")
        lines.extend(bounds)
    text = "\n".join(lines) + "\n"
    if stream is not None:
        stream.write(text)
    return text
