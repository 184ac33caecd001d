import math
from fractions import Fraction

import pytest

from stochinv.bounds import reach_bound
from stochinv.certificate import StochasticInvariant, parse_certificate
from stochinv.pcfg import parse_lpm, parse_pcfg
from stochinv.polyhedra import Plp
from stochinv.verdicts import (
    DMismatch,
    EntailmentFails,
    InvalidCertificate,
    VerdictKind,
    check_persistence,
    expected_time_bound,
    lpm_entails,
    make_stochastic_invariant,
    refute_as_termination,
    refute_finite_termination,
    termination_lower_bound,
    termination_verdict,
)

from conftest import corpus_text, load_cert, load_pcfg, load_si
from oracles import walk_expected_steps


def _aff(k):
    return "x" if k == 0 else (f"x + {k}" if k > 0 else f"x - {-k}")


def persistence_pair(n):
    """The loop's certificates for C_n = {x <= n}: eta = x - n repels from
    x > n and eta' = x - n + 1 reaches D = {x - n <= -1}."""
    rep = (
        f"kind RepSM\nvars x\neps 1/4\nc 2\nm0 {-n}\neta l0 = {_aff(-n)}\n"
        f"invariant\n  l0: true\nend\ntarget\n  l0: x > {n}\nend\n"
    )
    rsm = (
        f"kind RSM\nvars x\neps 1/4\nc -\nm0 {1 - n}\neta l0 = {_aff(1 - n)}\n"
        f"invariant\n  l0: true\nend\ntarget\n  l0: x <= {n - 1}\nend\n"
    )
    return parse_certificate(rep), parse_certificate(rsm)


def test_lpm_entails():
    pcfg = load_pcfg("asym_walk.pcfg")
    strong = parse_lpm("l0: x >= 2; l1: x >= 1", pcfg, Plp.true())
    weak = parse_lpm("l0: x >= 0; l1: x >= 0 or x <= -5", pcfg, Plp.true())
    assert lpm_entails(strong, weak, pcfg.loc_ids, 1) is None
    loc, point = lpm_entails(weak, strong, pcfg.loc_ids, 1)
    assert loc == "l0" and not strong["l0"].holds(point) and weak["l0"].holds(point)


def test_stochastic_invariant_from_repulse_walk():
    pcfg = load_pcfg("repulse_walk.pcfg")
    pi = parse_lpm("l0: x <= 500", pcfg, Plp.true())
    si = make_stochastic_invariant(pcfg, load_cert("repulse_walk.cert"), pi)
    assert si.p == reach_bound(1, 13, -3429)
    assert "A = 264" in si.note


def test_stochastic_invariant_needs_covering_target():
    pcfg = load_pcfg("repulse_walk.pcfg")
    pi = parse_lpm("l0: x <= 400", pcfg, Plp.true())
    with pytest.raises(InvalidCertificate):
        make_stochastic_invariant(pcfg, load_cert("repulse_walk.cert"), pi)


def test_stochastic_invariant_trivially_zero():
    pcfg = load_pcfg("repulse_walk.pcfg")
    si = make_stochastic_invariant(pcfg, None, parse_lpm("*: true", pcfg, Plp.true()))
    assert si.p == 0


def test_invalid_certificate_is_rejected():
    pcfg = load_pcfg("repulse_walk.pcfg")
    pi = parse_lpm("l0: x <= 500", pcfg, Plp.true())
    with pytest.raises(InvalidCertificate) as info:
        make_stochastic_invariant(pcfg, load_cert("repulse_walk_c12.cert"), pi)
    assert info.value.report is not None and not info.value.report.valid


def test_termination_lower_bound_is_exact():
    bound = termination_lower_bound([load_si("iprime.si"), load_si("pi.si")], load_cert("two_walks.cert"))
    assert bound == Fraction(99_999, 100_000)
    verdict = termination_verdict([load_si("iprime.si"), load_si("pi.si")], load_cert("two_walks.cert"))
    assert verdict.kind is VerdictKind.TERMINATION_LOWER_BOUND
    assert "99999/100000" in verdict.expression


def test_termination_lower_bound_floors_at_zero():
    si = StochasticInvariant(load_si("pi.si").pi, Fraction(3, 4))
    assert termination_lower_bound([si, si, load_si("iprime.si")], load_cert("two_walks.cert")) == 0


def test_termination_lower_bound_needs_entailment():
    with pytest.raises(EntailmentFails) as info:
        termination_lower_bound([load_si("iprime.si")], load_cert("two_walks.cert"))
    assert info.value.loc == "l2"


def test_termination_lower_bound_rechecks_with_pcfg():
    # the hand-written RSM is not nonnegative at l3 under the given invariant
    with pytest.raises(InvalidCertificate):
        termination_lower_bound([load_si("iprime.si"), load_si("pi.si")], load_cert("two_walks.cert"), load_pcfg("two_walks.pcfg"))


def test_refute_as_termination():
    verdict = refute_as_termination(load_pcfg("drift_collapsed.pcfg"), load_cert("drift.cert"))
    assert verdict.kind is VerdictKind.NOT_AS_TERMINATING
    assert verdict.justification == "repulsing-non-termination"


def test_refute_as_termination_needs_positive_eps():
    verdict = refute_as_termination(load_pcfg("symmetric_collapsed.pcfg"), load_cert("symmetric.cert"))
    assert verdict.kind is VerdictKind.UNKNOWN and "eps" in verdict.reason


def test_refute_finite_termination():
    verdict = refute_finite_termination(load_pcfg("symmetric_collapsed.pcfg"), load_cert("symmetric.cert"))
    assert verdict.kind is VerdictKind.INFINITE_EXPECTED_TIME


def test_refutation_unknown_on_invalid_certificate():
    pcfg = load_pcfg("symmetric_collapsed.pcfg")
    text = corpus_text("symmetric.cert").replace("x >= 0 or x = -1", "true")
    verdict = refute_finite_termination(pcfg, parse_certificate(text))
    assert verdict.kind is VerdictKind.UNKNOWN and "exact check" in verdict.reason


@pytest.mark.parametrize("n", [0, 5, -3])
def test_persistence(n):
    repsm, rsm = persistence_pair(n)
    verdict = check_persistence(load_pcfg("persistence_loop.pcfg"), repsm, rsm, -1)
    assert verdict.kind is VerdictKind.PERSISTENT


def test_persistence_needs_negative_k():
    repsm, rsm = persistence_pair(0)
    rsm_k0 = parse_certificate(corpus_text("persist_rsm.cert").replace("x <= -1", "x <= 0"))
    verdict = check_persistence(load_pcfg("persistence_loop.pcfg"), repsm, rsm_k0, 0)
    assert verdict.kind is VerdictKind.UNKNOWN


def test_persistence_d_mismatch():
    repsm, rsm = persistence_pair(0)
    with pytest.raises(DMismatch):
        check_persistence(load_pcfg("persistence_loop.pcfg"), repsm, rsm, -2)


def test_persistence_of_the_uniform_loop_fails_for_a_plain_sample():
    # x := sample(...) forgets x, so eta = x - n cannot decrease for n = -3
    pcfg = load_pcfg("persistence_loop.pcfg")
    text = corpus_text("persistence_loop.pcfg").replace("sample d plus x", "sample d")
    repsm, rsm = persistence_pair(-3)
    assert check_persistence(pcfg, repsm, rsm, -1).kind is VerdictKind.PERSISTENT
    assert check_persistence(parse_pcfg(text), repsm, rsm, -1).kind is VerdictKind.UNKNOWN


def test_expected_time_bound_asym_walk():
    pcfg = load_pcfg("asym_walk.pcfg")
    bound = expected_time_bound(pcfg, load_cert("asym_walk.cert"))
    assert bound == walk_expected_steps(10, Fraction(3, 4), 1) == 41


def test_expected_time_zero_when_starting_in_target():
    pcfg = load_pcfg("asym_walk.pcfg")
    text = corpus_text("asym_walk.cert").replace("  l0: false\n  l1: false", "  l0: true\n  l1: false")
    assert expected_time_bound(pcfg, parse_certificate(text), validate=False) == 0


def test_expected_time_unbounded_entry():
    pcfg = load_pcfg("asym_walk.pcfg")
    text = corpus_text("asym_walk.cert").replace("  l0: x >= 0\n", "  l0: true\n")
    assert expected_time_bound(pcfg, parse_certificate(text), validate=False) == math.inf


def test_verdict_report():
    verdict = refute_as_termination(load_pcfg("drift_collapsed.pcfg"), load_cert("drift.cert"))
    text = verdict.report(["drift.cert"])
    assert text.splitlines()[0] == "verdict: NotAsTerminating"
    assert "certificate: drift.cert" in text
