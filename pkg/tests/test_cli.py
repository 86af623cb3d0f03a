import subprocess
import sys
from pathlib import Path

import pytest

from nomamatch.cli import main

GOLDEN = Path(__file__).parent / "golden"
EXAMPLE = Path(__file__).parents[1] / "src" / "nomamatch" / "data" / "paper_example.scn"

SINGLETONS = """\
nomamatch-scenario 1 vehicles 1 channels 1
agent v1 RANKED
c1
agent c1 RANKED
v1
"""


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def singletons(tmp_path):
    p = tmp_path / "s.scn"
    p.write_text(SINGLETONS)
    return p


def test_allocate_golden_trace(capsys):
    code, out, _ = run(capsys, "allocate", EXAMPLE, "--trace")
    assert code == 0
    assert out == (GOLDEN / "allocate_example_trace.txt").read_text()


def test_allocate_check_golden(capsys):
    code, out, _ = run(capsys, "allocate", EXAMPLE, "--check-golden")
    assert code == 0
    assert out.splitlines()[:2] == ["status: ConvergedConsistent", "iterations: 3"]
    assert out.endswith("golden: match\n")


def test_allocate_empty_scenario(tmp_path, capsys):
    p = tmp_path / "e.scn"
    p.write_text("nomamatch-scenario 1 vehicles 0 channels 0\n")
    code, out, _ = run(capsys, "allocate", p)
    assert code == 0
    assert out == "status: ConvergedConsistent\niterations: 1\nmatching:\n"


def test_allocate_cycle_exits_1(tmp_path, capsys):
    p = tmp_path / "c.scn"
    p.write_text("nomamatch-scenario 1 vehicles 2 channels 2\nagent v1 RANKED\nc1\n"
                 "agent v2 RANKED\nc1 c2\nagent c1 RANKED\nv1 v2\nagent c2 RANKED\nv2\n")
    code, out, _ = run(capsys, "allocate", p)
    assert code == 1
    assert "status: CycleDetected" in out


def test_unknown_agent_is_input_error_with_line(tmp_path, capsys):
    p = tmp_path / "u.scn"
    p.write_text(SINGLETONS.replace("\nv1\n", "\nv7\n"))
    code, _, err = run(capsys, "allocate", p)
    assert code == 2
    assert "line 5: unknown agent v7" in err


def test_missing_file_is_input_error(tmp_path, capsys):
    code, _, err = run(capsys, "allocate", tmp_path / "nope.scn")
    assert code == 2 and err.startswith("error:")


def test_verify_levels_on_example(tmp_path, capsys):
    m = tmp_path / "m.txt"
    m.write_text("v1 c1\nv2 c1\nv2 c2\nv3 c2\nv3 c3\nv4 c3\n")
    for level in ("ir", "pairwise", "setwise", "core"):
        code, out, _ = run(capsys, "verify", EXAMPLE, m, "--level", level)
        assert code == 0, out
        assert out == f"{level}: holds\n"


def test_verify_reports_block(singletons, tmp_path, capsys):
    m = tmp_path / "m.txt"
    m.write_text("")
    code, out, _ = run(capsys, "verify", singletons, m, "--level", "pairwise")
    assert code == 1
    assert "PairwiseBlock: coalition {v1,c1}" in out


def test_verify_inconsistent_matching(singletons, tmp_path, capsys):
    m = tmp_path / "m.txt"
    m.write_text("v1: c1\n")
    code, _, err = run(capsys, "verify", singletons, m)
    assert code == 2
    assert "disagree" in err


def test_verify_oversized(tmp_path, capsys):
    scn = tmp_path / "big.scn"
    assert run(capsys, "generate", "--vehicles", 7, "--channels", 6, "--seed", 1, "-o", scn)[0] == 0
    m = tmp_path / "m.txt"
    m.write_text("")
    code, _, _ = run(capsys, "verify", scn, m, "--level", "core")
    assert code == 3


def test_enumerate_golden(capsys):
    code, out, _ = run(capsys, "enumerate", GOLDEN / "random_2x2.scn")
    assert code == 0
    assert out == (GOLDEN / "enumerate_random_2x2.txt").read_text()


def test_enumerate_hierarchy(tmp_path, capsys):
    for seed in range(10):
        scn = tmp_path / f"{seed}.scn"
        run(capsys, "generate", "--vehicles", 2, "--channels", 2, "--seed", seed,
            "--model", "ranked-unrestricted", "-o", scn)
        code, out, _ = run(capsys, "enumerate", scn)
        assert code == 0
        rows = [line.split() for line in out.splitlines()[1:17]]
        for ir, ps, ss, core, fix, *_ in rows:
            assert ss <= ps <= ir
            assert core <= ir


def test_enumerate_too_large(tmp_path, capsys):
    scn = tmp_path / "big.scn"
    run(capsys, "generate", "--vehicles", 5, "--channels", 5, "-o", scn)
    assert run(capsys, "enumerate", scn)[0] == 3
    assert run(capsys, "spne", scn)[0] == 3


def test_check_prefs_responsive(tmp_path, capsys):
    scn = tmp_path / "r.scn"
    run(capsys, "generate", "--vehicles", 3, "--channels", 3, "--seed", 5, "-o", scn)
    code, out, _ = run(capsys, "check-prefs", scn)
    assert code == 0
    assert out.count("substitutable: yes") >= 6
    assert " substitutable: no" not in out


def test_check_prefs_flags_complements(tmp_path, capsys):
    scn = tmp_path / "x.scn"
    scn.write_text("nomamatch-scenario 1 vehicles 1 channels 3\nagent v1 RANKED\nc1 c2\nc1\n"
                   "agent c1 RANKED\nv1\nagent c2 RANKED\nv1\nagent c3 RANKED\nv1\n")
    code, out, _ = run(capsys, "check-prefs", scn)
    assert code == 1
    assert "v1 substitutable: no" in out
    assert "witness: c2 chosen from {c1,c2} but not from {c2}" in out
    assert "partial ranking: 2 of 7" in out


def test_spne(tmp_path, capsys):
    scn = tmp_path / "s.scn"
    run(capsys, "generate", "--vehicles", 2, "--channels", 2, "--seed", 3, "-o", scn)
    code, out, _ = run(capsys, "spne", scn)
    assert code == 0
    assert "equal: yes" in out


def test_generate_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.scn", tmp_path / "b.scn"
    for target in (a, b):
        assert run(capsys, "generate", "--vehicles", 3, "--channels", 2, "--seed", 8, "--golden", "-o", target)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert "golden" in a.read_text()
    geo = run(capsys, "generate", "--vehicles", 3, "--channels", 2, "--geo", "--seed", 2)[1]
    assert geo == run(capsys, "generate", "--vehicles", 3, "--channels", 2, "--geo", "--seed", 2)[1]
    assert run(capsys, "generate", "--vehicles", 2, "--channels", 2, "--geo", "--exponent", 1)[0] == 2


def test_commands_do_not_touch_inputs(singletons, capsys):
    before = singletons.read_bytes()
    for cmd in ("allocate", "enumerate", "check-prefs", "spne"):
        run(capsys, cmd, singletons)
    assert singletons.read_bytes() == before


def test_help_documents_exit_codes():
    res = subprocess.run([sys.executable, "-m", "nomamatch", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for line in ("0  success", "1  verification failed", "2  input error", "3  size guard"):
        assert line in res.stdout
