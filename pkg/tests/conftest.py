from __future__ import annotations

from importlib.resources import files

import pytest

from stochinv.certificate import parse_certificate, parse_stochastic_invariant
from stochinv.frontend import parse_program
from stochinv.pcfg import build_pcfg, parse_lpm, parse_pcfg

CORPUS = files("stochinv") / "corpus"

# criterion id -> [(passed, detail)] per checked part; filled by
# test_acceptance and printed at the end, one line per criterion
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(criterion, []).append((bool(passed), detail))


def corpus_text(name: str) -> str:
    return (CORPUS / name).read_text()


def load_pcfg(name: str):
    text = corpus_text(name)
    if name.endswith(".app"):
        return build_pcfg(parse_program(text))
    return parse_pcfg(text)


def load_cert(name: str):
    return parse_certificate(corpus_text(name))


def load_si(name: str):
    return parse_stochastic_invariant(corpus_text(name))


def load_lpm(name: str, pcfg, default):
    return parse_lpm(corpus_text(name), pcfg, default)


@pytest.fixture
def corpus():
    return CORPUS


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[k]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d if p else f"[failed] {d}" for p, d in parts)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")
