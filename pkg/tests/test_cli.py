import io
import json
import subprocess
import sys

import pytest

from conftest import CORPUS_DIR, PROCESS_DIR, corpus_paths
from treemeasure.cli import run
from treemeasure.formula import parse_smt2

REACH = str(CORPUS_DIR / "reach.aut")
SAFETY = str(CORPUS_DIR / "safety_half.aut")


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run([str(a) for a in argv], stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def test_measure_all_accept():
    assert call("measure", CORPUS_DIR / "all_accept.aut") == (0, "measure = 1 (exact fixpoint)\n", "")


def test_measure_all_reject():
    code, out, _ = call("measure", CORPUS_DIR / "all_reject.aut")
    assert (code, out) == (0, "measure = 0 (exact fixpoint)\n")


def test_compare_reach_gt():
    assert call("compare", REACH, "1/2", "--rel", "gt", "--budget", "10")[:2] == (0, "GT\n")


def test_compare_safety_half_unknown():
    code, out, _ = call("compare", SAFETY, "1/2", "--rel", "eq", "--budget", "40")
    assert code == 2
    assert out.startswith("UNKNOWN (interval [0, 0.5")
    assert out.rstrip().endswith("); try emit-formula")


def test_compare_json():
    code, out, _ = call("compare", SAFETY, "3/5", "--rel", "lt", "--budget", "40", "--json")
    data = json.loads(out)
    assert code == 0 and data["verdict"] == "LT" and data["holds"] is True


def test_compare_eq_certified():
    assert call("compare", CORPUS_DIR / "all_accept.aut", "1", "--rel", "eq")[:2] == (0, "EQ\n")


def test_enclose_and_measure_bounds():
    code, out, _ = call("enclose", SAFETY, "--budget", "40")
    assert code == 0 and out.startswith("interval [0, 0.5")
    code, out, _ = call("measure", REACH, "--budget", "25")
    assert out == "measure >= 0.999999999999 (lower bound)\n"


def test_measure_json_and_report():
    code, out, _ = call("measure", SAFETY, "--budget", "8", "--json")
    data = json.loads(out)
    assert data["N"] == 4 and data["tag"] == "upper"
    code, out, _ = call("measure", SAFETY, "--budget", "8", "--report", "--mode", "float")
    assert "stage 4 S" in out and out.rstrip().endswith("[float]")


def test_process_flag():
    proc = PROCESS_DIR / "reach_all_b.proc"
    assert call("measure", REACH, "--process", proc)[:2] == (0, "measure = 0 (exact fixpoint)\n")
    assert call("compare", REACH, "0", "--rel", "eq", "--process", proc)[:2] == (0, "EQ\n")


@pytest.mark.parametrize("path", corpus_paths(), ids=lambda p: p.stem)
def test_exit_codes_over_corpus(path):
    assert call("validate", path)[0] == 0
    assert call("measure", path, "--budget", "10")[0] == 0
    code, out, _ = call("compare", path, "1/2", "--budget", "10")
    assert (code == 2) == out.startswith("UNKNOWN")
    assert out.split()[0] in {"LT", "GT", "EQ", "UNKNOWN"}


def test_output_is_deterministic(tmp_path):
    for argv in (("measure", SAFETY, "--json"), ("enclose", REACH), ("emit-formula", REACH),
                 ("oracle", "sample", SAFETY, "--samples", "300", "--depth", "6", "--seed", "4")):
        assert call(*argv) == call(*argv)
    one = call("oracle", "sample", SAFETY, "--samples", "300", "--depth", "6", "--threads", "1")
    four = call("oracle", "sample", SAFETY, "--samples", "300", "--depth", "6", "--threads", "4")
    assert one == four


def test_threads_environment(monkeypatch):
    monkeypatch.setenv("TREEMEASURE_THREADS", "2")
    code, out, _ = call("oracle", "sample", REACH, "--samples", "100", "--depth", "6")
    assert code == 0 and json.loads(out)["lo"] == 1.0


def test_emit_formula_to_file(tmp_path):
    target = tmp_path / "reach.smt2"
    code, out, _ = call("emit-formula", REACH, "-o", target)
    assert code == 0
    assert f"z3 {target}" in out
    assert parse_smt2(target.read_text()).quantifier_pattern() == "EAEA"


def test_emit_formula_stats():
    code, out, _ = call("emit-formula", REACH, "--compare", "1/2", "--rel", "gt", "--stats")
    data = json.loads(out)
    assert code == 0 and set(data) == {"atoms", "variables", "blocks", "bytes"} and data["blocks"] == 4


def test_emit_formula_size_guard():
    code, out, err = call("emit-formula", SAFETY, "--cap", "100")
    assert code == 1 and out == "" and "above the cap" in err


def test_oracle_enum():
    code, out, _ = call("oracle", "enum", REACH, "--base", "q_acc", "--steps", "2")
    assert code == 0
    assert out.splitlines() == ["P={} 0", "P={q_r} 0", "P={q_acc} 1/8", "P={q_r,q_acc} 7/8"]
    code, out, _ = call("oracle", "enum", REACH, "--base", "empty", "--steps", "1", "--json")
    assert json.loads(out)["{}"] == "1"


def test_validate_non_weak(tmp_path):
    bad = tmp_path / "bad.aut"
    bad.write_text("alphabet: a\nstates: p q\ninitial: p\npriority: p 0 q 1\n"
                   "delta: p a = (L q)\ndelta: q a = (L q) & (R q)\n")
    code, out, _ = call("validate", bad)
    assert code == 1 and out.startswith("not weak:")
    assert call("measure", bad)[0] == 1


@pytest.mark.parametrize("argv", [
    (),
    ("measure",),
    ("frobnicate", REACH),
    ("measure", REACH, "--budget", "0"),
    ("measure", REACH, "--epsilon", "-1"),
    ("oracle", "sample", REACH, "--samples", "0"),
    ("compare", REACH, "one-half"),
    ("measure", REACH, "--mode", "interval"),
])
def test_usage_errors(argv):
    code, out, err = call(*argv)
    assert code == 1 and out == ""
    assert err.startswith("usage:")


def test_input_errors(tmp_path):
    assert call("measure", tmp_path / "missing.aut")[0] == 1
    broken = tmp_path / "broken.aut"
    broken.write_text("alphabet: a\nstates q\n")
    code, _, err = call("measure", broken)
    assert code == 1 and err.startswith("error:")
    assert call("compare", REACH, "3/2")[0] == 1


def test_json_output_to_file(tmp_path):
    target = tmp_path / "out.json"
    code, out, _ = call("enclose", SAFETY, "--json", "-o", target)
    assert code == 0 and out == ""
    assert json.loads(target.read_text())["mode"] == "enclosure"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "treemeasure", "measure", str(CORPUS_DIR / "all_accept.aut")],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout == "measure = 1 (exact fixpoint)\n"
