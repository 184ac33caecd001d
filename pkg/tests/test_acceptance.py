"""Acceptance criteria, one test (or group) per criterion.

Every test records its outcome through ``conftest.record`` before
asserting, so the terminal summary prints one PASS/FAIL line per criterion
even when an assertion fails.
"""

import math
import random
import time
import timeit
from fractions import Fraction

import numpy as np
import pytest

from stochinv import sim
from stochinv.bounds import (
    REL_MARGIN,
    azuma_tails,
    first_nonempty_step,
    log_azuma_tail,
    log_reach_bound,
    reach_bound,
)
from stochinv.certificate import parse_certificate
from stochinv.check import check_certificate, check_repsm, check_rsm
from stochinv.lp import LpProblem, LpStatus, residuals, solve
from stochinv.pcfg import parse_lpm
from stochinv.polyhedra import Plp, negate_lpm
from stochinv.synth import ObKind, SynthStatus, synthesize_repsm
from stochinv.verdicts import (
    VerdictKind,
    check_persistence,
    expected_time_bound,
    make_stochastic_invariant,
    refute_as_termination,
    refute_finite_termination,
    termination_lower_bound,
)

from conftest import corpus_text, load_cert, load_lpm, load_pcfg, load_si, record
from oracles import log_gamma_mp, step_differences, vertex_minimum, walk_expected_steps
from test_verdicts import persistence_pair

PUBLISHED_REPULSE_BOUND = 5.06e-6
REPULSE_STEPS = [("l0", "l1", 1, 0), ("l0", "l2", 1, 0), ("l1", "l0", 1, -2), ("l1", "l0", 1, 1)]
REPULSE_ETA = {"l0": (7, -3499), "l1": (7, -3500), "l2": (7, -3500)}


def test_criterion_1_closed_form_bound():
    p = reach_bound(1, 13, -3429)
    per_call = min(timeit.repeat(lambda: reach_bound(1, 13, -3429), number=200, repeat=5)) / 200
    rel = abs(p - PUBLISHED_REPULSE_BOUND) / PUBLISHED_REPULSE_BOUND
    ok = 4.6e-6 <= p <= 5.6e-6 and rel <= 0.10 and per_call < 1e-3
    record(1, ok, f"p = {p:.6g} (published 5.06e-6, rel. diff {rel:.2%}), {per_call * 1e6:.1f} us per call")
    assert ok


def test_criterion_2_certificate_discrimination():
    pcfg = load_pcfg("repulse_walk.pcfg")
    diffs = step_differences(REPULSE_STEPS, REPULSE_ETA)
    oracle_c = max(abs(d) for _, d in diffs.values())
    worst = max(diffs, key=lambda k: abs(diffs[k][1]))
    text = corpus_text("repulse_walk.cert")
    good = check_repsm(pcfg, parse_certificate(text))
    bad = check_repsm(pcfg, parse_certificate(text.replace("c 13", "c 12")))
    named = [
        (v.obligation.edge.source, v.obligation.edge.target, v.describe(pcfg.vars))
        for v in bad.violations
        if v.obligation is not None and v.obligation.edge is not None
    ]
    ok = (
        oracle_c == 13
        and worst == ("l1", "l0", 1, -2)
        and good.valid
        and not bad.valid
        and len(named) == 1
        and named[0][:2] == ("l1", "l0")
        and "x - 2" in named[0][2]
    )
    record(2, ok, f"oracle max |difference| = {oracle_c} on l1->l0 (x - 2); c=13 valid={good.valid}, c=12 rejected on {named}")
    assert ok


def test_criterion_3_rsm_checking():
    pcfg = load_pcfg("asym_walk.pcfg")
    tight = check_rsm(pcfg, load_cert("asym_walk.cert"))
    loose = check_rsm(pcfg, load_cert("asym_walk_loose.cert"))
    (v,) = loose.violations
    # substitution oracle: eta(l1) = x - 1/4 under I(l1) = x >= 0
    mismatches = []
    for k in range(-64, 65):
        x = Fraction(k, 64)
        expected = x >= 0 and x - Fraction(1, 4) < 0
        if all(c.holds((x,)) for c in v.region) != expected:
            mismatches.append(x)
    ok = tight.valid and not loose.valid and v.obligation.kind is ObKind.NONNEG and v.obligation.loc == "l1" and not mismatches
    record(3, ok, f"tight certificate valid={tight.valid}; loose witness region at l1 matches [0, 1/4) on 129 probe points, mismatches {mismatches}")
    assert ok


SMOKE_REFERENCE = {"two_dim_walk": 2.4e-11, "three_dim_walk": 4.4e-17}


def _synth(name):
    pcfg = load_pcfg(f"{name}.app")
    inv = load_lpm(f"{name}.inv.lpm", pcfg, Plp.true())
    pi = load_lpm(f"{name}.pi.lpm", pcfg, Plp.true())
    t0 = time.perf_counter()
    res = synthesize_repsm(pcfg, inv, pi, sweep=1000, eps=1, jobs=1)
    return pcfg, res, time.perf_counter() - t0


def test_criterion_4_end_to_end_synthesis():
    pcfg, res, secs = _synth("bounded_walk")
    valid = res.status is SynthStatus.CERTIFICATE and check_certificate(pcfg, res.certificate).valid
    ok = valid and res.bound <= 5.1e-4 and secs <= 300
    parts = [f"bounded walk p = {res.bound:.3g} (c = {res.certificate.c}, m0 = {res.certificate.m0}) in {secs:.1f} s, valid={valid}"]
    for name, ref in SMOKE_REFERENCE.items():
        pcfg, res, secs = _synth(name)
        valid = res.status is SynthStatus.CERTIFICATE and check_certificate(pcfg, res.certificate).valid
        ok = ok and valid and res.bound <= 1
        parts.append(f"{name} p = {res.bound:.3g} (reference {ref:g}) in {secs:.1f} s, valid={valid}")
    record(4, ok, "; ".join(parts))
    assert ok


def test_criterion_5_union_bound():
    bound = termination_lower_bound([load_si("iprime.si"), load_si("pi.si")], load_cert("two_walks.cert"))
    ok = bound == Fraction(99_999, 100_000)
    record(5, ok, f"lower bound = {bound}")
    assert ok


def test_criterion_6_refutations():
    finite = refute_finite_termination(load_pcfg("symmetric_collapsed.pcfg"), load_cert("symmetric.cert"))
    as_term = refute_as_termination(load_pcfg("drift_collapsed.pcfg"), load_cert("drift.cert"))
    est = sim.estimate(load_pcfg("drift_walk.app"), runs=10_000, max_steps=100_000, seed=6)
    censored = est.censored / est.runs
    ok = (
        finite.kind is VerdictKind.INFINITE_EXPECTED_TIME
        and as_term.kind is VerdictKind.NOT_AS_TERMINATING
        and censored > 0.5
    )
    record(6, ok, f"symmetric walk {finite.kind.value}; drift walk {as_term.kind.value}; censored fraction {censored:.4f} over 1e4 runs x 1e5 steps")
    assert ok


@pytest.mark.parametrize("n", [0, 5, -3])
def test_criterion_7_persistence(n):
    repsm, rsm = persistence_pair(n)
    verdict = check_persistence(load_pcfg("persistence_loop.pcfg"), repsm, rsm, -1)
    ok = verdict.kind is VerdictKind.PERSISTENT
    record(7, ok, f"n = {n}: {verdict.kind.value}")
    assert ok


def _random_triples(count, seed):
    rng = random.Random(seed)
    out = []
    while len(out) < count:
        c = Fraction(rng.randint(1, 10_000), 100)
        eps = Fraction(rng.randint(1, int(c * 100)), 100)
        m0 = -Fraction(rng.randint(100, 1_000_000 - 1), 100)
        out.append((eps, c, m0))
    return out


def test_criterion_8_geometric_identity():
    n_max = 100_000
    failures, converged = [], 0
    for eps, c, m0 in _random_triples(100, seed=8):
        a = first_nonempty_step(c, m0)
        ns = np.arange(a, n_max + 1)
        tails = azuma_tails(eps, c, m0, ns)
        if float(np.sum(tails)) > reach_bound(eps, c, m0, clamp=False):
            failures.append((eps, c, m0, "sum exceeds bound"))
            continue
        closed = log_reach_bound(eps, c, m0)
        if closed <= -700 or a > n_max:
            continue
        # partial sum up to n_max plus the closed-form remainder beyond it
        plain = (tails - 5e-324) / (1 + REL_MARGIN)
        remainder = math.exp(log_azuma_tail(eps, c, m0, n_max + 1)) / -math.expm1(float(log_gamma_mp(eps, c)))
        if not math.isclose(math.fsum(plain) + remainder, math.exp(closed), rel_tol=1e-12):
            failures.append((eps, c, m0, "partial sum does not converge"))
        converged += 1
    ok = not failures
    record(8, ok, f"100 seeded triples, tails never exceed the bound; convergence checked on {converged} with representable closed forms; failures {failures}")
    assert ok


def _random_lp(rng):
    n = rng.randint(1, 3)
    p0 = [Fraction(rng.randint(-20, 20), 4) for _ in range(n)]
    rows, eqs = [], []
    for _ in range(rng.randint(1, 5)):
        a = [Fraction(rng.randint(-5, 5)) for _ in range(n)]
        rows.append((a, sum(ai * xi for ai, xi in zip(a, p0)) + rng.randint(0, 4)))
    if rng.random() < 0.4:
        a = [Fraction(rng.randint(-3, 3)) for _ in range(n)]
        eqs.append((a, sum(ai * xi for ai, xi in zip(a, p0))))
    cost = [Fraction(rng.randint(-5, 5)) for _ in range(n)]
    return n, rows, eqs, cost


def test_criterion_9_lp_exactness():
    rng = random.Random(9)
    box = 10
    mismatches, bad_residuals = [], 0
    for k in range(50):
        n, rows, eqs, cost = _random_lp(rng)
        prob = LpProblem()
        names = [f"y{i}" for i in range(n)]
        for name in names:
            prob.add_var(name, lo=-box, hi=box)
        for a, b in rows:
            prob.add_row(dict(zip(names, a)), "<=", b)
        for a, b in eqs:
            prob.add_row(dict(zip(names, a)), "==", b)
        prob.set_objective(dict(zip(names, cost)))
        out = solve(prob)
        ref_rows = list(rows)
        for a, b in eqs:
            ref_rows += [(a, b), ([-v for v in a], -b)]
        for i in range(n):
            e = [Fraction(int(i == j)) for j in range(n)]
            ref_rows += [(e, Fraction(box)), ([-v for v in e], Fraction(box))]
        expected = vertex_minimum(cost, ref_rows)
        if out.status is not LpStatus.OPTIMAL or out.value != expected[0]:
            mismatches.append(k)
            continue
        res = residuals(prob, out.assignment)
        eq_res = [sum(ai * out.assignment[nm] for ai, nm in zip(a, names)) - b for a, b in eqs]
        if any(r < 0 for r in res) or any(r != 0 for r in eq_res):
            bad_residuals += 1
    ok = not mismatches and bad_residuals == 0
    record(9, ok, f"50 seeded systems: optimum mismatches {mismatches}, residual violations {bad_residuals}")
    assert ok


def test_criterion_10_empirical_soundness():
    pcfg = load_pcfg("repulse_walk.pcfg")
    pi = parse_lpm("l0: x <= 500", pcfg, Plp.true())
    si = make_stochastic_invariant(pcfg, load_cert("repulse_walk.cert"), pi)
    t0 = time.perf_counter()
    est = sim.estimate(pcfg, event=negate_lpm(pi), runs=1_000_000, max_steps=100_000, seed=10)
    secs = time.perf_counter() - t0
    lower, _ = sim.clopper_pearson(est.events, est.runs, 0.99, alternative="lower")
    ok = lower <= si.p and secs <= 600
    record(10, ok, f"{est.events} violations in 1e6 runs, 99% lower bound {lower:.3g} <= p = {si.p:.3g}, {secs:.1f} s ({sim.BACKEND} kernel)")
    assert ok


@pytest.fixture(scope="module")
def asym_walk_runs():
    pcfg = load_pcfg("asym_walk.pcfg")
    est = sim.estimate(pcfg, runs=100_000, max_steps=100_000, seed=11)
    return pcfg, est


def test_criterion_11_mean_in_range(asym_walk_runs):
    pcfg, est = asym_walk_runs
    mean = est.mean_steps_terminated
    ok = est.terminated == est.runs and 30 <= mean <= 45
    record(11, ok, f"mean termination steps {mean:.3f} over 1e5 runs, in [30, 45]")
    assert ok


@pytest.mark.xfail(strict=True, reason="the exact expected step count is 41, above the quoted bound of 40")
def test_criterion_11_mean_below_quoted_bound(asym_walk_runs):
    pcfg, est = asym_walk_runs
    mean = est.mean_steps_terminated
    se = est.steps.std() / math.sqrt(est.runs)
    exact = walk_expected_steps(10, Fraction(3, 4), 1)
    derived = expected_time_bound(pcfg, load_cert("asym_walk.cert"))
    quoted = load_cert("asym_walk.cert").m0 / load_cert("asym_walk.cert").eps
    below = mean < quoted + 3 * se
    record(11, below, f"mean {mean:.3f} (se {se:.3f}) vs quoted bound m0/eps = {quoted}; exact expectation {exact}, derived bound {derived}")
    assert below
