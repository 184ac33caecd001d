from fractions import Fraction

import pytest

from stochinv.frontend import parse_program
from stochinv.pcfg import (
    AffineUpdate,
    DanglingLocation,
    FormatError,
    LocKind,
    ProbSumNotOne,
    build_pcfg,
    format_pcfg,
    parse_lpm,
    parse_pcfg,
    terminal_lpm,
    validate_pcfg,
)
from stochinv.polyhedra import Plp

from conftest import CORPUS, corpus_text, load_pcfg

PCFGS = sorted(p.name for p in CORPUS.iterdir() if p.name.endswith((".app", ".pcfg")))


def test_asym_walk_builds_to_five_locations():
    pcfg = load_pcfg("asym_walk.app")
    assert len(pcfg.locations) == 5
    assert len(pcfg.transitions) == 7
    kinds = [loc.kind for loc in pcfg.locations]
    assert kinds.count(LocKind.PROB) == 1
    assert [loc.id for loc in pcfg.locations if loc.terminal] == ["l4"]
    term = pcfg.location("l4")
    (loop,) = pcfg.outgoing(term.id)
    assert loop.target == term.id


def test_repulse_walk_collapsed_updates():
    pcfg = load_pcfg("repulse_walk.pcfg")
    coin = pcfg.outgoing("l1")
    assert sorted(t.prob for t in coin) == [Fraction(1, 2)] * 2
    assert all(isinstance(t.update, AffineUpdate) for t in coin)


@pytest.mark.parametrize("name", PCFGS)
def test_corpus_is_well_formed(name):
    assert validate_pcfg(load_pcfg(name)) == []


@pytest.mark.parametrize("name", PCFGS)
def test_format_round_trip(name):
    pcfg = load_pcfg(name)
    again = parse_pcfg(format_pcfg(pcfg))
    assert again == pcfg


def test_prob_sum_not_one():
    text = corpus_text("asym_walk.pcfg").replace("prob 1/4", "prob 1/3")
    with pytest.raises(ProbSumNotOne) as info:
        parse_pcfg(text)
    assert info.value.loc == "l1"
    assert info.value.total == Fraction(3, 4) + Fraction(1, 3)


def test_dangling_location():
    text = corpus_text("asym_walk.pcfg") + "edge l1 l9 var x update id prob 0\n"
    with pytest.raises(DanglingLocation):
        parse_pcfg(text)


def test_format_error_has_line():
    with pytest.raises(FormatError) as info:
        parse_pcfg("vars x\nloc l0 det\nbogus line\n")
    assert info.value.line == 3


def test_guard_overlap_and_gap_reported():
    text = corpus_text("asym_walk.pcfg").replace("guard x < 1", "guard x < 2")
    rules = {d.rule for d in validate_pcfg(parse_pcfg(text))}
    assert "guard-overlap" in rules
    text = corpus_text("asym_walk.pcfg").replace("guard x < 1", "guard x < 0")
    rules = {d.rule for d in validate_pcfg(parse_pcfg(text))}
    assert "guard-gap" in rules


def test_lpm_defaults():
    pcfg = load_pcfg("bounded_walk.app")
    pi = parse_lpm(corpus_text("bounded_walk.pi.lpm"), pcfg)
    assert not pi["l1"].holds((Fraction(1001),))
    assert all(pi[loc].holds((Fraction(5000),)) for loc in pcfg.loc_ids if loc != "l1")
    lpm = parse_lpm("terminal: x <= 0", pcfg, Plp.true())
    for loc in pcfg.locations:
        assert lpm[loc.id].holds((Fraction(1),)) == (not loc.terminal)


def test_lpm_errors_carry_lines():
    pcfg = load_pcfg("bounded_walk.app")
    with pytest.raises(DanglingLocation):
        parse_lpm("l1: x >= 0\nl99: true", pcfg)
    with pytest.raises(FormatError) as info:
        parse_lpm("l1: x >= 0\nl1 x >= 1", pcfg)
    assert info.value.line == 2


def test_terminal_lpm():
    pcfg = load_pcfg("asym_walk.pcfg")
    lpm = terminal_lpm(pcfg)
    assert [loc for loc, plp in lpm.items() if plp.holds((Fraction(0),))] == ["l2"]


def test_sample_program_builds_sample_updates():
    pcfg = build_pcfg(parse_program(corpus_text("sampled_drift.app")))
    assert {d.id for d in pcfg.dists.values()} == {"uniform(-2, 1)", "uniform(-1, 2)"}
    assert validate_pcfg(pcfg) == []


def test_with_init():
    pcfg = load_pcfg("asym_walk.pcfg").with_init([3])
    assert pcfg.init_val == (Fraction(3),)
