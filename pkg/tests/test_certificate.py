from fractions import Fraction

import pytest

from stochinv.certificate import (
    Kind,
    StochasticInvariant,
    format_certificate,
    format_stochastic_invariant,
    parse_certificate,
    parse_stochastic_invariant,
)
from stochinv.pcfg import FormatError

from conftest import CORPUS, corpus_text

CERTS = sorted(p.name for p in CORPUS.iterdir() if p.name.endswith(".cert"))
SIS = sorted(p.name for p in CORPUS.iterdir() if p.name.endswith(".si"))


@pytest.mark.parametrize("name", CERTS)
def test_certificate_round_trip(name):
    cert = parse_certificate(corpus_text(name))
    assert parse_certificate(format_certificate(cert)) == cert


@pytest.mark.parametrize("name", SIS)
def test_stochastic_invariant_round_trip(name):
    si = parse_stochastic_invariant(corpus_text(name))
    assert parse_stochastic_invariant(format_stochastic_invariant(si)) == si


def test_fields():
    cert = parse_certificate(corpus_text("repulse_walk.cert"))
    assert cert.kind is Kind.REPSM
    assert (cert.eps, cert.c, cert.m0) == (1, 13, -3429)
    assert cert.eta["l0"].evaluate((Fraction(10),)) == -3429
    rsm = parse_certificate(corpus_text("asym_walk.cert"))
    assert rsm.kind is Kind.RSM and rsm.c is None and rsm.eps == Fraction(1, 4)


def test_scaled():
    cert = parse_certificate(corpus_text("repulse_walk.cert")).scaled(Fraction(1, 7))
    assert cert.c == Fraction(13, 7) and cert.m0 == Fraction(-3429, 7)
    assert cert.eta["l1"].evaluate((Fraction(0),)) == Fraction(-500)


def test_pi_si_value():
    si = parse_stochastic_invariant(corpus_text("pi.si"))
    assert si.p == Fraction(1, 100_000)


@pytest.mark.parametrize(
    "mutation",
    [
        ("eps 1\n", "eps one\n"),
        ("end\ntarget", "target"),
        ("kind RepSM", "kind Martingale"),
    ],
)
def test_format_errors(mutation):
    text = corpus_text("repulse_walk.cert").replace(*mutation, 1)
    with pytest.raises(FormatError):
        parse_certificate(text)


def test_probability_range():
    with pytest.raises(ValueError):
        StochasticInvariant({}, Fraction(3, 2))
