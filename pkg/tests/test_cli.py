import io
import json
import subprocess
import sys

import pytest

from gaugeflat.cli import main
from gaugeflat.report import CHECKS, Report, emit_structured, emit_text
from gaugeflat.scenario import load_corpus


def run(*argv):
    out, err = io.BytesIO(), io.StringIO()
    code = main(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def structured(*argv):
    code, out, err = run(*argv, "--format", "structured")
    return code, json.loads(out)


def checks(doc, i=0):
    return {c["name"]: c for c in doc["reports"][i]["checks"]}


def test_ranks_without_scenario():
    code, doc = structured("ranks", "--n", "1", "--r", "1")
    assert code == 0
    info = doc["reports"][0]["info"]
    assert info["ranks.M_lemma"] == 4
    assert info["ranks.M_prop"] == 42
    assert checks(doc)["ranks.composition"]["value"] == 0


def test_flatten_x1dx1():
    code, doc = structured("flatten", "--scenario", "x1dx1")
    assert code == 0
    c = checks(doc)
    assert c["flatten.lemma_identity"]["value"] <= 1e-9
    assert c["flatten.lemma_identity"]["samples"] == 100
    assert all(v["passed"] for v in c.values())


def test_invert_flat_scenario():
    code, doc = structured("invert", "--scenario", "zero_n2_r2", "--rk4-steps", "1024")
    assert code == 0
    c = checks(doc)
    for name in ("invert.ch_positive", "invert.ch_degree0", "invert.induced_V", "invert.ss_block_V", "invert.ss_block_W"):
        assert c[name]["value"] <= 1e-10, name


def test_text_output():
    code, out, _ = run("flatten", "--scenario", "x1dx1", "--samples", "10")
    text = out.decode()
    assert code == 0
    assert text.startswith("== flatten x1dx1")
    assert "PASS  flatten.lemma_identity" in text
    assert text.rstrip().endswith("checks)")


def test_header_lists_defaults():
    _, doc = structured("ranks", "--n", "2", "--r", "1")
    assert doc["defaults"] == {k: v[0] for k, v in CHECKS.items()}


def test_tolerance_override_causes_failure():
    code, doc = structured("flatten", "--scenario", "x1dx1", "--samples", "10", "--tol", "flatten.lemma_identity=0")
    c = checks(doc)["flatten.lemma_identity"]
    assert c["value"] > 0  # rounding residual
    assert code == 1
    assert not c["passed"]
    assert doc["passed"] is False
    assert c["tolerance"] == 0


def test_failed_check_exit_code():
    code, doc = structured("flatten", "--scenario", "x1dx1", "--samples", "10", "--tol", "flatten.min_abs_det_g=1e9")
    assert code == 1
    assert checks(doc)["flatten.min_abs_det_g"]["passed"] is False


def test_scenario_tolerances(tmp_path):
    d = load_corpus("x1dx1").to_dict()
    d["settings"]["tolerances"] = {"flatten.min_h": 1e9}
    p = tmp_path / "s.json"
    p.write_text(json.dumps(d))
    code, doc = structured("flatten", "--scenario", str(p), "--samples", "5")
    assert code == 1
    assert checks(doc)["flatten.min_h"]["tolerance"] == 1e9


def test_empty_report():
    out = emit_structured([Report("verify", "empty")])
    doc = json.loads(out)
    assert doc["reports"][0]["checks"] == []
    assert doc["passed"] is True
    assert b"result: PASS (0/0 checks)" in emit_text([Report("verify", "empty")])


def test_non_finite_value_fails():
    r = Report("x", "y")
    c = r.check("flatten.lemma_identity", float("nan"))
    assert not c.passed and c.value is None and "non-finite" in c.message
    json.loads(emit_structured([r]))


@pytest.mark.parametrize(
    "argv,msg",
    [
        (["flatten"], "needs --scenario"),
        (["ranks"], "--n and --r"),
        (["flatten", "--scenario", "nope.json"], "cannot read"),
        (["flatten", "--scenario", "x1dx1", "--tol", "bogus=1"], "unknown check"),
        (["flatten", "--scenario", "x1dx1", "--tol", "flatten.min_h"], "NAME=VALUE"),
        (["flatten", "--scenario", "x1dx1", "--tol", "flatten.min_h=abc"], "not a number"),
        (["flatten", "--scenario", "x1dx1", "--samples", "0"], "positive"),
        (["holonomy", "--scenario", "x1dx1", "--rk4-steps", "8"], "at least 16"),
        (["g-invert", "--scenario", "x1dx1"], "no structure"),
    ],
)
def test_usage_errors(argv, msg):
    code, out, err = run(*argv)
    assert code == 2
    assert msg in err
    assert out == b""


def test_argparse_errors(capsys):
    assert run("bogus")[0] == 2
    assert run("flatten", "--format", "xml")[0] == 2
    assert run("flatten", "--jet-order", "4")[0] == 2


def test_parse_error_location(tmp_path):
    d = load_corpus("x1dx1").to_dict()
    d["connection"] = [[["x1 * (2 +"]]]
    p = tmp_path / "s.json"
    p.write_text(json.dumps(d))
    code, _, err = run("flatten", "--scenario", str(p))
    assert code == 2
    assert "position" in err


def test_list():
    code, out, _ = run("--list")
    assert code == 0
    assert b"x1dx1" in out.split()


def test_venice_parity_flags():
    code, doc = structured("venice", "--scenario", "abelian_vortex", "--samples", "20")
    assert code == 0
    info = doc["reports"][0]["info"]
    assert info["venice.doubling_flagged_j"] == [1]
    assert checks(doc)["venice.dual_parity_j1"]["value"] <= 1e-10


def test_g_invert_so2():
    code, doc = structured("g-invert", "--scenario", "so2_n1", "--samples", "30", "--rk4-steps", "1024")
    assert code == 0
    assert doc["reports"][0]["info"]["ginvert.inverse_rank"] == 14


def test_holonomy_group_checks():
    code, doc = structured("holonomy", "--scenario", "sp2_n2", "--rk4-steps", "1024")
    assert code == 0
    c = checks(doc)
    assert c["holonomy.group_form"]["value"] <= 1e-6
    assert "holonomy.group_det" not in c


def test_deterministic_bytes():
    argv = ["verify", "--scenario", "abelian_vortex", "--samples", "20", "--rk4-steps", "512", "--format", "structured"]
    a, b = run(*argv), run(*argv)
    assert a[0] == b[0] == 0
    assert a[1] == b[1]
    assert b"wall_time" not in a[1]
    timed = run(*argv, "--timing")[1]
    assert b"wall_time" in timed


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "gaugeflat", "ranks", "--n", "2", "--r", "3"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "ranks.composition" in proc.stdout
