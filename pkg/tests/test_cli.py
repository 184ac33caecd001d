import subprocess
import sys

import pytest

from stochinv.cli import EXIT_LIMIT, EXIT_NONE, EXIT_OK, EXIT_PARSE, EXIT_USAGE, main

from conftest import CORPUS


def c(name):
    return str(CORPUS / name)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_bound(capsys):
    code, out, _ = run(capsys, "bound", "--eps", "1", "--c", "13", "--m0", "-3429")
    assert code == EXIT_OK and out.splitlines()[0] == "5.05148e-06"


def test_bound_tail(capsys):
    code, out, _ = run(capsys, "bound", "--eps", "1", "--c", "13", "--m0", "-3429", "--n", "300")
    assert code == EXIT_OK and "after 300 steps" in out


def test_bound_precondition(capsys):
    assert run(capsys, "bound", "--eps", "1", "--c", "13", "--m0", "5")[0] == EXIT_USAGE


def test_usage_errors(capsys):
    assert run(capsys, "bound", "--eps", "1")[0] == EXIT_USAGE
    assert run(capsys, "frobnicate")[0] == EXIT_USAGE
    assert run(capsys, "bound", "--eps", "x", "--c", "1", "--m0", "-1")[0] == EXIT_USAGE


def test_missing_file(capsys):
    code, _, err = run(capsys, "parse", "/nonexistent.app")
    assert code == EXIT_PARSE and "cannot read" in err


def test_parse_error(capsys, tmp_path):
    bad = tmp_path / "bad.app"
    bad.write_text("x := 1\nwhile x >= do od\n")
    code, _, err = run(capsys, "parse", str(bad))
    assert code == EXIT_PARSE and "2:" in err


def test_parse_and_build(capsys, tmp_path):
    code, out, _ = run(capsys, "parse", c("asym_walk.app"))
    assert code == EXIT_OK and out.startswith("x := 10")
    target = tmp_path / "asym.pcfg"
    code, out, _ = run(capsys, "build", c("asym_walk.app"), "-o", str(target))
    assert code == EXIT_OK and target.read_text().startswith("vars x")


def test_check_valid_and_invalid(capsys):
    code, out, _ = run(capsys, "check", "--pcfg", c("repulse_walk.pcfg"), "--cert", c("repulse_walk.cert"))
    assert code == EXIT_OK and "result: valid" in out
    code, out, _ = run(capsys, "check", "--pcfg", c("repulse_walk.pcfg"), "--cert", c("repulse_walk_c12.cert"))
    assert code == EXIT_NONE and "l1->l0" in out


def test_check_csv(capsys):
    code, out, _ = run(capsys, "check", "--pcfg", c("asym_walk.pcfg"), "--cert", c("asym_walk_loose.cert"), "--format", "csv")
    assert code == EXIT_NONE
    assert out.splitlines()[0] == "kind,location,edge,witness,excess"


def test_spot_check(capsys):
    code, out, _ = run(capsys, "spot-check", "--pcfg", c("repulse_walk.pcfg"), "--cert", c("repulse_walk.cert"), "--samples", "200", "--seed", "1")
    assert code == EXIT_OK and "violations: 0" in out
    assert run(capsys, "spot-check", "--pcfg", c("repulse_walk.pcfg"), "--cert", c("repulse_walk.cert"))[0] == EXIT_USAGE


def test_synth_repsm(capsys, tmp_path):
    out_cert = tmp_path / "ex1.cert"
    out_si = tmp_path / "ex1.si"
    code, out, _ = run(
        capsys, "synth-repsm", "--pcfg", c("bounded_walk.app"), "--invariant", c("bounded_walk.inv.lpm"),
        "--pi", c("bounded_walk.pi.lpm"), "--sweep", "20", "-o", str(out_cert), "--si", str(out_si),
    )
    assert code == EXIT_OK and "stochastic invariant: p =" in out
    code, out, _ = run(capsys, "check", "--pcfg", c("bounded_walk.app"), "--cert", str(out_cert))
    assert code == EXIT_OK


def test_synth_repsm_no_certificate(capsys, tmp_path):
    pi = tmp_path / "pi.lpm"
    pi.write_text("l0: x <= 100\n")
    code, out, _ = run(capsys, "synth-repsm", "--pcfg", c("drift_collapsed.pcfg"), "--pi", str(pi), "--sweep", "2", "-o", str(tmp_path / "x.cert"))
    assert code == EXIT_NONE and "no certificate" in out


def test_synth_rsm(capsys, tmp_path):
    inv = tmp_path / "inv.lpm"
    inv.write_text("l0: x >= 0\nl1: x >= 1\n")
    code, out, _ = run(capsys, "synth-rsm", "--pcfg", c("asym_walk.pcfg"), "--invariant", str(inv), "--eps", "1/4", "-o", str(tmp_path / "r.cert"))
    assert code == EXIT_OK and "<= 41" in out


def test_verdict_commands(capsys):
    code, out, _ = run(capsys, "combine", "--rsm", c("two_walks.cert"), "--stochinv", f"{c('iprime.si')},{c('pi.si')}")
    assert code == EXIT_OK and "value: 0.99999" in out
    code, out, _ = run(capsys, "refute-as", "--pcfg", c("drift_collapsed.pcfg"), "--cert", c("drift.cert"))
    assert code == EXIT_OK and "NotAsTerminating" in out
    code, out, _ = run(capsys, "refute-finite", "--pcfg", c("symmetric_collapsed.pcfg"), "--cert", c("symmetric.cert"))
    assert code == EXIT_OK and "InfiniteExpectedTime" in out
    code, out, _ = run(capsys, "refute-as", "--pcfg", c("symmetric_collapsed.pcfg"), "--cert", c("symmetric.cert"))
    assert code == EXIT_NONE and "Unknown" in out
    code, out, _ = run(capsys, "persistence", "--pcfg", c("persistence_loop.pcfg"), "--repsm", c("persist_repsm.cert"), "--rsm", c("persist_rsm.cert"), "--K", "-1")
    assert code == EXIT_OK and "Persistent" in out
    code, out, _ = run(capsys, "expected-time", "--pcfg", c("asym_walk.pcfg"), "--cert", c("asym_walk.cert"))
    assert code == EXIT_OK and "exact: 41" in out


def test_combine_invalid_rsm(capsys):
    code, _, err = run(capsys, "combine", "--rsm", c("two_walks.cert"), "--stochinv", f"{c('iprime.si')},{c('pi.si')}", "--pcfg", c("two_walks.pcfg"))
    assert code == EXIT_NONE and "l3" in err


def test_simulate(capsys):
    code, out, _ = run(capsys, "simulate", "--pcfg", c("asym_walk.pcfg"), "--runs", "200", "--max-steps", "10000", "--seed", "1")
    assert code == EXIT_OK and "terminated: 200" in out and "backend:" in out
    code, out, _ = run(capsys, "simulate", "--pcfg", c("asym_walk.pcfg"), "--runs", "3", "--max-steps", "10000", "--seed", "1", "--format", "csv")
    assert out.splitlines()[0] == "replica,outcome,steps" and len(out.splitlines()) == 4
    assert run(capsys, "simulate", "--pcfg", c("asym_walk.pcfg"), "--runs", "3", "--max-steps", "10")[0] == EXIT_USAGE


def test_export_quad(capsys, tmp_path):
    target = tmp_path / "q.smt"
    code, out, err = run(capsys, "export-quad", "--pcfg", c("asym_walk.pcfg"), "--template", "l0=1", "-o", str(target))
    assert code == EXIT_OK and "degree: 2" in err
    assert target.read_text().startswith("(declare ")
    assert run(capsys, "export-quad", "--pcfg", c("asym_walk.pcfg"), "--template", "l9=1")[0] == EXIT_PARSE


def test_limit_exit_code(capsys, monkeypatch):
    from stochinv import lp

    def too_big(*args, **kwargs):
        raise lp.SizeLimit("tableau exceeds the size cap")

    monkeypatch.setattr(lp, "solve", too_big)
    code, _, err = run(capsys, "synth-rsm", "--pcfg", c("asym_walk.pcfg"), "-o", "/dev/null")
    assert code == EXIT_LIMIT and "limit" in err


def test_console_script():
    out = subprocess.run([sys.executable, "-m", "stochinv.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "synth-repsm" in out.stdout


@pytest.mark.parametrize("cmd", ["check", "refute-as", "persistence", "simulate", "export-quad"])
def test_subcommand_help(cmd):
    out = subprocess.run([sys.executable, "-m", "stochinv.cli", cmd, "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "--pcfg" in out.stdout
