import io
import math
import os
import subprocess
import sys
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochinv import sim
from stochinv.frontend import parse_program
from stochinv.pcfg import build_pcfg, parse_lpm, parse_pcfg, terminal_lpm
from stochinv.polyhedra import Plp
from stochinv.sim import (
    ChooseRule,
    GuardGap,
    NondetRule,
    Outcome,
    SchedulerPolicy,
    SimulationError,
    UnboundedChoose,
    UnsupportedDistribution,
    _pykernel,
    clopper_pearson,
    compile_pcfg,
    estimate,
    run,
    run_batch,
)

from conftest import corpus_text, load_pcfg
from oracles import walk_expected_steps

compiled = pytest.importorskip("stochinv.sim._kernel", reason="compiled kernel not built")

STAR = """x, n := 0, 0
while n <= 9 do
    if * then x := x + 1 else x := x + 2 fi;
    n := n + 1
od
"""
CHOOSE = """x, n := 0, 0
while n <= 0 do
    x := ndet(Int[2, 5] or Real[10, 11]);
    n := n + 1
od
"""
PROGRAMS = [
    "asym_walk.pcfg",
    "repulse_walk.pcfg",
    "two_walks.pcfg",
    "drift_collapsed.pcfg",
    "persistence_loop.pcfg",
    "two_dim_walk.app",
    "three_dim_walk.app",
    "sampled_drift.app",
]


def _app(src):
    return build_pcfg(parse_program(src))


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(PROGRAMS), st.integers(0, 2**32), st.sampled_from([0, 1, 2]))
def test_kernels_agree(name, seed, rule):
    cp = compile_pcfg(load_pcfg(name))
    policy = SchedulerPolicy.scripted([1, 0, 1]) if rule == 2 else SchedulerPolicy(NondetRule(rule))
    a = _pykernel.run_replicas(cp, seed, 3, 20, 3000, *policy.args())
    b = compiled.run_replicas(cp, seed, 3, 20, 3000, *policy.args())
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([STAR, CHOOSE]), st.integers(0, 2**32), st.sampled_from([0, 1]), st.sampled_from([0, 1]))
def test_kernels_agree_on_nondeterminism(src, seed, nondet, choose):
    cp = compile_pcfg(_app(src))
    policy = SchedulerPolicy(NondetRule(nondet), ChooseRule(choose))
    bitgens = [np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0,))) for _ in range(2)]
    a = _pykernel.run_single(cp, bitgens[0], 1000, *policy.args())
    b = compiled.run_single(cp, bitgens[1], 1000, *policy.args())
    assert tuple(a[:3]) == tuple(b[:3]) and list(a[3]) == list(b[3])


def test_seed_determinism_and_replica_independence():
    pcfg = load_pcfg("asym_walk.pcfg")
    a = run_batch(pcfg, 400, 10_000, seed=9)
    b = run_batch(pcfg, 400, 10_000, seed=9)
    c = run_batch(pcfg, 400, 10_000, seed=10)
    assert np.array_equal(a[1], b[1]) and not np.array_equal(a[1], c[1])
    single = run(pcfg, seed=9, replica=17, max_steps=10_000)
    assert single.steps == a[1][17]


def test_parallel_batches_match_serial():
    pcfg = load_pcfg("repulse_walk.pcfg")
    serial = run_batch(pcfg, 300, 10_000, seed=4)
    parallel = run_batch(pcfg, 300, 10_000, seed=4, jobs=2)
    assert np.array_equal(serial[0], parallel[0]) and np.array_equal(serial[1], parallel[1])


def test_event_checked_before_first_step():
    pcfg = load_pcfg("asym_walk.pcfg")
    out = run(pcfg, event=parse_lpm("l0: x >= 10", pcfg), seed=0)
    assert out.kind is Outcome.EVENT and out.steps == 0


def test_censoring_and_termination():
    pcfg = load_pcfg("drift_collapsed.pcfg")
    out = run(pcfg, max_steps=50, seed=1)
    assert out.kind is Outcome.CENSORED and out.steps == 50
    done = run(load_pcfg("asym_walk.pcfg").with_init([0]), seed=1)
    assert done.kind is Outcome.TERMINATED and done.steps == 1 and done.loc == "l2"


def test_scripted_and_first_policies():
    pcfg = _app(STAR)
    first = run(pcfg, SchedulerPolicy(NondetRule.FIRST), seed=0)
    assert first.val == (10.0, 10.0)
    scripted = run(pcfg, SchedulerPolicy.scripted([1] * 4), seed=0)
    assert scripted.val == (14.0, 10.0)
    with pytest.raises(SimulationError):
        run(pcfg, SchedulerPolicy.scripted([2]), seed=0)
    with pytest.raises(ValueError):
        SchedulerPolicy(NondetRule.UNIFORM, script=(1,))


def test_choose_rules():
    pcfg = _app(CHOOSE)
    assert run(pcfg, SchedulerPolicy(choose=ChooseRule.ENDPOINT), seed=0).val[0] == 2.0
    for seed in range(30):
        x = run(pcfg, seed=seed).val[0]
        assert x in (2.0, 3.0, 4.0, 5.0) or 10.0 <= x <= 11.0


def test_unbounded_choose():
    pcfg = _app(CHOOSE.replace("Int[2, 5] or Real[10, 11]", "Real[0, inf]"))
    with pytest.raises(UnboundedChoose):
        run(pcfg, seed=0)
    assert run(pcfg, SchedulerPolicy(choose=ChooseRule.ENDPOINT), seed=0).val[0] == 0.0


def test_guard_gap():
    text = corpus_text("asym_walk.pcfg").replace("guard x < 1", "guard x < 0")
    pcfg = parse_pcfg(text).with_init([Fraction(1, 2)])
    with pytest.raises(GuardGap):
        run(pcfg, seed=0)


def test_unsupported_distribution():
    text = corpus_text("persistence_loop.pcfg").replace("dist d uniform(-2, 1)", "dist d mean -1/2 support v >= -2 and v <= 1")
    with pytest.raises(UnsupportedDistribution):
        compile_pcfg(parse_pcfg(text))


def _binom_tail_ge(k, n, p):
    return mpmath.fsum(mpmath.binomial(n, j) * p**j * (1 - p) ** (n - j) for j in range(k, n + 1))


@pytest.mark.parametrize("k, n", [(0, 50), (3, 50), (25, 50), (50, 50), (1, 1000)])
def test_clopper_pearson_against_binomial_tails(k, n):
    lo, hi = clopper_pearson(k, n, 0.95)
    with mpmath.workdps(30):
        if k > 0:
            assert math.isclose(float(_binom_tail_ge(k, n, mpmath.mpf(lo))), 0.025, rel_tol=1e-6)
        else:
            assert lo == 0
        if k < n:
            assert math.isclose(float(1 - _binom_tail_ge(k + 1, n, mpmath.mpf(hi))), 0.025, rel_tol=1e-6)
        else:
            assert hi == 1


def test_clopper_pearson_zero_successes_closed_form():
    lo, hi = clopper_pearson(0, 10**6, 0.99, alternative="upper")
    assert lo == 0 and math.isclose(hi, 1 - 0.01 ** (1e-6), rel_tol=1e-9)
    lo, hi = clopper_pearson(0, 10**6, 0.99, alternative="lower")
    assert (lo, hi) == (0.0, 1.0)


@given(st.integers(1, 500), st.data())
def test_clopper_pearson_brackets_frequency(n, data):
    k = data.draw(st.integers(0, n))
    lo, hi = clopper_pearson(k, n)
    assert 0 <= lo <= k / n <= hi <= 1


def test_clopper_pearson_errors():
    with pytest.raises(ValueError):
        clopper_pearson(5, 4)
    with pytest.raises(ValueError):
        clopper_pearson(1, 4, confidence=1.5)
    with pytest.raises(ValueError):
        clopper_pearson(1, 4, alternative="left")


def test_asym_walk_mean_close_to_exact_expectation():
    pcfg = load_pcfg("asym_walk.pcfg")
    est = estimate(pcfg, runs=20_000, max_steps=100_000, seed=3)
    exact = float(walk_expected_steps(10, Fraction(3, 4), 1))
    se = est.steps.std() / math.sqrt(est.runs)
    assert abs(est.mean_steps_terminated - exact) < 4 * se


def test_estimate_summary_and_csv():
    pcfg = load_pcfg("asym_walk.pcfg")
    est = estimate(pcfg, event=terminal_lpm(pcfg), runs=50, max_steps=10_000, seed=1)
    assert est.events == 50 and est.frequency == 1.0
    assert "mean steps to event" in est.summary() and not est.demonic
    buf = io.StringIO()
    sim.write_csv(buf, est.codes, est.steps)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "replica,outcome,steps" and len(lines) == 51
    assert lines[1].split(",")[1] == "event"
    assert estimate(_app(STAR), runs=5, max_steps=100, seed=0).demonic


def test_backend_is_reported():
    assert sim.BACKEND in ("cython", "python")
    assert sim.kernel is (compiled if sim.BACKEND == "cython" else _pykernel)


def test_partial_event_map():
    # unlisted locations never trigger; the event is checked before termination
    pcfg = load_pcfg("repulse_walk.pcfg")
    out = run(pcfg, event={"l2": Plp.true()}, seed=0)
    assert out.kind is Outcome.EVENT and out.loc == "l2"


def test_pure_python_fallback_selected_by_environment():
    env = dict(os.environ, STOCHINV_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "import stochinv.sim as s; print(s.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
