import json

import pytest
from click.testing import CliRunner

from causal_recourse.cli import FIXTURES, main

INSTANCE = "carowner=0,defensiveness=-0.5,minivan=-0.6,Y=-0.75"


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(main, [str(a) for a in args], catch_exceptions=False)


# --- sample ----------------------------------------------------------------------

def test_sample_insurance(runner):
    r = invoke(runner, "--seed", 7, "sample", "builtin:insurance", "-n", 1000)
    assert r.exit_code == 0
    lines = r.stdout.splitlines()
    assert len(lines) == 1001
    assert sorted(lines[0].split(",")) == ["Y", "carowner", "minivan"]


def test_sample_is_byte_identical(runner, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    invoke(runner, "sample", "builtin:fig2", "-n", 50, "--seed", 3, "--out", a)
    invoke(runner, "sample", "builtin:fig2", "-n", 50, "--seed", 3, "--out", b)
    assert a.read_bytes() == b.read_bytes()


def test_sample_usage_errors(runner):
    assert invoke(runner, "sample", "builtin:fig2", "-n", 0, "--seed", 1).exit_code == 2
    assert invoke(runner, "sample", "builtin:fig2", "-n", 5).exit_code == 2


def test_sample_include_latent(runner):
    r = invoke(runner, "sample", "builtin:insurance", "-n", 2, "--seed", 1, "--include-latent")
    assert "defensiveness" in r.stdout.splitlines()[0]


def test_parse_error_exit_code(runner, tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("format_version: 1\nnodes: [\n")
    r = invoke(runner, "sample", bad, "-n", 5, "--seed", 1)
    assert r.exit_code == 3
    assert "line" in r.stderr


# --- stability -------------------------------------------------------------------

@pytest.mark.parametrize("args, golden", [
    ((), "fig2_left_stability.json"),
    (("--unobserved", "X2,X8"), "fig2_right_stability.json"),
])
def test_stability_goldens(runner, args, golden):
    r = invoke(runner, "stability", "builtin:fig2", *args)
    assert r.exit_code == 0
    assert r.stdout == (FIXTURES / golden).read_text()


def test_stability_text_and_empty_targets(runner):
    r = invoke(runner, "--format", "text", "stability", "builtin:fig2")
    assert "X6  unstable" in r.stdout
    r = invoke(runner, "stability", "builtin:fig2", "--targets", "")
    assert json.loads(r.stdout)["verdicts"] == {}


def test_stability_bad_node(runner):
    assert invoke(runner, "stability", "builtin:fig2", "--targets", "X99").exit_code == 4
    assert invoke(runner, "stability", "builtin:fig2", "--conditioning", "Y").exit_code == 4


# --- counterfactual --------------------------------------------------------------

def test_counterfactual(runner):
    r = invoke(runner, "counterfactual", "builtin:insurance", "--instance", INSTANCE, "--action", "carowner=1")
    rec = json.loads(r.stdout)
    assert rec["counterfactual"]["Y"] == 0.25
    assert rec["counterfactual"]["minivan"] == -0.6


def test_counterfactual_validation(runner):
    r = invoke(runner, "counterfactual", "builtin:insurance", "--instance", INSTANCE, "--action", "Y=1")
    assert r.exit_code == 4
    r = invoke(runner, "counterfactual", "builtin:insurance", "--instance", "carowner", "--action", "")
    assert r.exit_code == 3


# --- recourse --------------------------------------------------------------------

def recourse(runner, *extra):
    return invoke(runner, "--seed", 1, "recourse", "builtin:insurance", "--instance", INSTANCE,
                  "--threshold", 0, "--fit", 10000, *extra)


def test_recourse_regimes(runner):
    ar = json.loads(recourse(runner, "--regime", "AR").stdout)["result"]
    ear = json.loads(recourse(runner, "--regime", "EAR").stdout)["result"]
    assert list(ar["action"]) == ["minivan"] and ar["meaningful"] is False
    assert ear["action"] == {"carowner": 1.0} and ear["meaningful"] is True


def test_recourse_null_action(runner):
    r = invoke(runner, "--seed", 1, "recourse", "builtin:insurance", "--instance", INSTANCE,
               "--threshold", -5, "--fit", 1000)
    assert json.loads(r.stdout)["result"]["action"] == {}


def test_no_recourse_exit_code(runner):
    r = recourse(runner, "--regime", "EAR", "--threshold", 50)
    assert r.exit_code == 5
    assert json.loads(r.stdout)["result"]["found"] is False


def test_recourse_needs_one_predictor_source(runner, tmp_path):
    r = invoke(runner, "--seed", 1, "recourse", "builtin:insurance", "--instance", INSTANCE, "--threshold", 0)
    assert r.exit_code == 2


def test_saved_predictor_reproduces_result(runner, tmp_path):
    saved = tmp_path / "p.json"
    first = recourse(runner, "--save-predictor", saved).stdout
    again = invoke(runner, "--seed", 1, "recourse", "builtin:insurance", "--instance", INSTANCE,
                   "--threshold", 0, "--predictor", saved).stdout
    assert json.loads(first)["result"] == json.loads(again)["result"]


def test_verify_round_trip(runner, tmp_path):
    rec_path = tmp_path / "r.json"
    r = recourse(runner, "--regime", "MAR", "--verify", "--out", rec_path)
    assert r.exit_code == 0
    assert json.loads(rec_path.read_text())["verification"]["ok"] is True
    ok = invoke(runner, "verify", rec_path)
    assert ok.exit_code == 0 and json.loads(ok.stdout)["ok"] is True

    rec = json.loads(rec_path.read_text())
    rec["result"]["cost"] += 1.0
    rec_path.write_text(json.dumps(rec))
    bad = invoke(runner, "verify", rec_path)
    assert bad.exit_code == 6
    assert any("cost" in s for s in json.loads(bad.stdout)["mismatches"])


def test_verify_malformed(runner, tmp_path):
    p = tmp_path / "junk.json"
    p.write_text("{}")
    assert invoke(runner, "verify", p).exit_code == 3


def test_recourse_text_output(runner):
    r = recourse(runner, "--regime", "EAR", "--format", "text")
    assert r.stdout.startswith("[EAR] do(carowner:=1)")


def test_grid_override(runner):
    r = recourse(runner, "--regime", "AR", "--grid", "minivan=5", "--grid", "carowner=0,1")
    assert json.loads(r.stdout)["problem"]["action_grid"]["minivan"] == [5.0]


# --- experiment ------------------------------------------------------------------

def test_bundled_experiment(runner, tmp_path):
    log = tmp_path / "agents.csv"
    r = invoke(runner, "experiment", "builtin:insurance", "--log", log)
    assert r.exit_code == 0
    rec = json.loads(r.stdout)
    assert list(rec["regimes"]) == ["AR", "MAR", "EAR"]
    assert rec["regimes"]["AR"]["gaming_rate"] > rec["regimes"]["EAR"]["gaming_rate"] == 0.0
    assert log.read_text().startswith("agent,regime,")


def test_experiment_is_repeatable(runner, tmp_path):
    cfg = tmp_path / "exp.yaml"
    cfg.write_text("format_version: 1\nscm: builtin:insurance\ninputs: [carowner, minivan]\n"
                   "n: 300\nseed: 5\nthreshold: 0.5\n")
    a = invoke(runner, "experiment", cfg).stdout
    b = invoke(runner, "experiment", cfg).stdout
    assert a == b
    assert invoke(runner, "experiment", cfg, "--seed", 6).stdout != a


def test_experiment_config_error(runner, tmp_path):
    cfg = tmp_path / "exp.yaml"
    cfg.write_text("format_version: 1\nscm: builtin:insurance\ninputs: [carowner]\nthreshold: 0.5\n")
    assert invoke(runner, "experiment", cfg).exit_code == 3
    assert invoke(runner, "experiment", "builtin:nothing").exit_code == 3
