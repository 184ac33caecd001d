from fractions import Fraction

from hypothesis import given, settings
from hypothesis import strategies as st

from stochinv.bounds import reach_bound
from stochinv.certificate import Kind
from stochinv.check import check_certificate
from stochinv.pcfg import constant_lpm, parse_lpm, terminal_lpm
from stochinv.polyhedra import Plp
from stochinv.synth import (
    ObKind,
    SynthStatus,
    gen_quadratic_system,
    obligations,
    synthesize_repsm,
    synthesize_rsm,
    template_eta,
)
from stochinv.verdicts import expected_time_bound

from conftest import load_cert, load_lpm, load_pcfg


def _true(pcfg):
    return constant_lpm(pcfg, Plp.true())


def test_template_has_one_expression_per_location():
    pcfg = load_pcfg("two_dim_walk.app")
    eta = template_eta(pcfg)
    assert set(eta) == set(pcfg.loc_ids)


def test_obligation_kinds_for_repulse_walk():
    pcfg = load_pcfg("repulse_walk.pcfg")
    cert = load_cert("repulse_walk.cert")
    obs = obligations(pcfg, cert.eta, cert.kind, cert.invariant, cert.target, cert.eps, cert.c)
    kinds = {ob.kind for ob in obs}
    assert {ObKind.DIFF_UP, ObKind.DIFF_DOWN} <= kinds
    # the stopped condition skips difference bounds where l0 is already in the target
    stopped = sum(ob.kind is ObKind.DIFF_UP for ob in obs)
    full = obligations(pcfg, cert.eta, cert.kind, cert.invariant, cert.target, cert.eps, cert.c, stopped=False)
    assert sum(ob.kind is ObKind.DIFF_UP for ob in full) >= stopped


def test_repulse_walk_synthesis_beats_hand_certificate():
    pcfg = load_pcfg("repulse_walk.pcfg")
    pi = parse_lpm("l0: x <= 500", pcfg, Plp.true())
    res = synthesize_repsm(pcfg, _true(pcfg), pi, sweep=50)
    assert res.status is SynthStatus.CERTIFICATE
    cert = res.certificate
    assert check_certificate(pcfg, cert).valid
    assert res.bound == reach_bound(cert.eps, cert.c, cert.m0)
    assert res.bound <= reach_bound(1, 13, -3429)
    assert len(res.sweep) == 51
    assert res.sweep[0].c == min(pt.c for pt in res.sweep)


def test_trivial_outcomes():
    pcfg = load_pcfg("repulse_walk.pcfg")
    one = synthesize_repsm(pcfg, _true(pcfg), parse_lpm("l0: x <= 5", pcfg, Plp.true()), sweep=3)
    assert one.status is SynthStatus.TRIVIAL_ONE and one.bound == 1
    zero = synthesize_repsm(pcfg, _true(pcfg), _true(pcfg), sweep=3)
    assert zero.status is SynthStatus.TRIVIAL_ZERO and zero.bound == 0


def test_no_certificate_for_drift_away():
    # upward drift: nothing repels x from large values
    pcfg = load_pcfg("drift_collapsed.pcfg")
    pi = parse_lpm("l0: x <= 100", pcfg, Plp.true())
    res = synthesize_repsm(pcfg, _true(pcfg), pi, sweep=3)
    assert res.status is SynthStatus.NO_CERTIFICATE


def test_two_dim_walk_needs_stopped_differences():
    pcfg = load_pcfg("two_dim_walk.app")
    inv = load_lpm("two_dim_walk.inv.lpm", pcfg, Plp.true())
    pi = load_lpm("two_dim_walk.pi.lpm", pcfg, Plp.true())
    assert synthesize_repsm(pcfg, inv, pi, sweep=5, stopped=False).status is SynthStatus.NO_CERTIFICATE
    res = synthesize_repsm(pcfg, inv, pi, sweep=5)
    assert res.status is SynthStatus.CERTIFICATE
    assert check_certificate(pcfg, res.certificate).valid


def test_rsm_for_asym_walk():
    pcfg = load_pcfg("asym_walk.pcfg")
    inv = parse_lpm("l0: x >= 0; l1: x >= 1", pcfg, Plp.true())
    res = synthesize_rsm(pcfg, inv, terminal_lpm(pcfg), eps=Fraction(1, 4))
    assert res.status is SynthStatus.CERTIFICATE
    cert = res.certificate
    assert cert.kind is Kind.RSM and cert.m0 == 10
    assert check_certificate(pcfg, cert).valid
    assert res.bound == 40
    assert expected_time_bound(pcfg, cert) == 41


def test_rsm_infeasible_without_invariant():
    pcfg = load_pcfg("asym_walk.pcfg")
    assert synthesize_rsm(pcfg, _true(pcfg), terminal_lpm(pcfg)).status is SynthStatus.NO_CERTIFICATE


def test_sample_program_synthesis():
    pcfg = load_pcfg("sampled_drift.app")
    inv = parse_lpm("*: x >= -2", pcfg, Plp.true())
    # above 100 the walk drifts upwards, so nothing repels it from 200
    res = synthesize_repsm(pcfg, inv, parse_lpm("l0: x <= 200", pcfg, Plp.true()), sweep=10)
    assert res.status is SynthStatus.NO_CERTIFICATE
    res = synthesize_repsm(pcfg, inv, parse_lpm("*: x <= 100", pcfg, Plp.true()), sweep=10)
    assert res.status is SynthStatus.CERTIFICATE
    assert check_certificate(pcfg, res.certificate).valid
    assert res.bound <= 1


@settings(max_examples=25, deadline=None)
@given(st.fractions(min_value=Fraction(1, 10), max_value=50, max_denominator=10))
def test_scaled_certificates_stay_valid(k):
    for pcfg_name, cert_name in (("repulse_walk.pcfg", "repulse_walk.cert"), ("asym_walk.pcfg", "asym_walk.cert")):
        pcfg = load_pcfg(pcfg_name)
        cert = load_cert(cert_name).scaled(k)
        assert check_certificate(pcfg, cert).valid


def test_quadratic_system_shape():
    pcfg = load_pcfg("asym_walk.pcfg")
    system = gen_quadratic_system(pcfg, terminal_lpm(pcfg), {"l0": 1}, _true(pcfg))
    assert system.max_degree == 2
    assert system.si_symbols == ["si_a1_l0_0", "si_b_l0_0"]
    products = [m for m in system.monomials() if len(m) == 2]
    assert products and all(any(s in m for s in system.si_symbols) for m in products)
    text = system.to_sexpr()
    assert text.count("(declare ") == len(system.declarations)
    assert "(assert (< m0 0))" not in text or "m0" in system.declarations
