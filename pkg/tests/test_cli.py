from __future__ import annotations

import io
import subprocess
import sys

import pytest

from conftest import parity_game, zero_game
from cryptofolk.cli import run_cli
from cryptofolk.game import serialize_stage_game


def _cli(*argv: str) -> tuple[int, str, str]:
    out, err = io.StringIO(), io.StringIO()
    code = run_cli(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "zero.game").write_text(serialize_stage_game(zero_game()))
    (d / "parity.game").write_text(serialize_stage_game(parity_game()))
    for name, extra in [("ne", []), ("sp", ["--subgame-perfect"]), ("broken", ["--prf", "constant"])]:
        code, _, err = _cli("compile", str(d / "parity.game"), "-q", "n", "-o", str(d / f"{name}.bundle"), *extra)
        assert code == 0, err
    return d


def test_analyze_zero_game(files):
    code, out, _ = _cli("analyze", str(files / "zero.game"))
    assert code == 0
    assert [ln for ln in out.splitlines() if ln.startswith("minimax")] == [
        "minimax 0 0/1", "minimax 1 0/1", "minimax 2 0/1"]


def test_compile_to_stdout_matches_file(files):
    code, out, _ = _cli("compile", str(files / "parity.game"), "-q", "n", "-o", "-")
    assert code == 0 and out == (files / "ne.bundle").read_text()


def test_simulate_is_deterministic(files):
    paths = [files / f"run{k}.txt" for k in range(2)]
    for p in paths:
        code, _, _ = _cli("simulate", str(files / "sp.bundle"), "--seed", "7", "--horizon", "150",
                          "--deviator", "once:4", "--player", "1", "-o", str(p))
        assert code == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert "phase 3" in paths[0].read_text()


def test_simulate_resume(files):
    hist = files / "hist.txt"
    hist.write_text("1 0 0\n0 0 0\n")
    mem = files / "mem.txt"
    mem.write_text("-\nzz\n-\n")
    code, _, err = _cli("simulate", str(files / "sp.bundle"), "--resume-history", str(hist),
                        "--memory", str(mem), "--horizon", "5")
    assert code == 2 and "hex" in err
    mem.write_text("-\n00ff\n-\n")
    code, out, _ = _cli("simulate", str(files / "sp.bundle"), "--resume-history", str(hist),
                        "--memory", str(mem), "--horizon", "5")
    assert code == 0 and "start 2" in out


def test_verify_reference_passes(files):
    code, out, _ = _cli("verify", str(files / "ne.bundle"), "--runs", "100", "--player", "0",
                        "--spec", "once:0", "--spec", "never")
    rows = out.splitlines()
    assert rows[0] == "spec player gain radius bound verdict"
    assert [r.split()[0] for r in rows[1:3]] == ["never", "once:0"]
    assert rows[-1] == "summary 2/2 passed" and code == 0


def test_verify_broken_prf_fails(files):
    code, out, _ = _cli("verify", str(files / "broken.bundle"), "--runs", "100", "--player", "0",
                        "--spec", "predictor:constant")
    assert code == 1 and " FAIL" in out


@pytest.mark.parametrize("control, expected", [
    ("prf-reference", 0), ("prf-counter", 1), ("pke-reference", 0), ("pke-identity", 1)])
def test_attack_crypto(control, expected):
    code, out, _ = _cli("attack-crypto", "--control", control, "--trials", "300")
    assert code == expected
    assert out.count("yes") == 2


@pytest.mark.parametrize("argv", [
    [], ["frobnicate"], ["verify"], ["compile", "x.game"], ["attack-crypto", "--control", "rsa"]])
def test_usage_errors(argv):
    code, _, err = _cli(*argv)
    assert code == 2
    assert "usage" in err.lower() or "error" in err.lower()


def test_missing_file(files):
    code, _, err = _cli("analyze", str(files / "nope.game"))
    assert code == 2 and "cannot read" in err


def test_bad_game_file(files):
    bad = files / "bad.game"
    bad.write_text("game x\nplayers 3\n")
    code, _, _ = _cli("analyze", str(bad))
    assert code == 2


def test_module_entry_point(files):
    proc = subprocess.run([sys.executable, "-m", "cryptofolk", "analyze", str(files / "zero.game")],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "minimax 0 0/1" in proc.stdout
