import csv
import json
import math
import subprocess
import sys

import pytest

from ergoshift.cli import (
    EXIT_ERROR,
    EXIT_OK,
    EXIT_UNDECIDED,
    OUT_ENV,
    ConfigError,
    load_config,
    main,
    resolve_params,
    run_experiment,
)
from ergoshift.experiments import ANCHORS, OUT_OF_SCOPE, REGISTRY, covered_anchors, experiment_ids

REQUIRED_IDS = ["torus-orbit", "lil-iid", "lil-coboundary", "rate-theorem3a", "sde-ou-decay",
                "chaos-example1", "chaos-example2", "chaos-example3", "chaos-example4",
                "schauder-roundtrip", "dirichlet-example"]

SMALL_OU = ["--param", "n_outer=50", "--param", "n_inner=4", "--param", "n_max=3", "--param", "step=0.0625"]


def test_list_includes_required_ids(capsys):
    assert main(["list"]) == EXIT_OK
    listed = [line.split()[0] for line in capsys.readouterr().out.splitlines()]
    for eid in REQUIRED_IDS:
        assert eid in listed
    assert listed == experiment_ids()


def test_ids_unique_and_anchored():
    ids = experiment_ids()
    assert len(ids) == len(set(ids))
    for exp in REGISTRY.values():
        assert exp.anchors and set(exp.anchors) <= set(ANCHORS)


def test_every_anchor_covered_or_out_of_scope():
    assert set(ANCHORS) <= covered_anchors() | set(OUT_OF_SCOPE)
    assert not set(OUT_OF_SCOPE) & set(ANCHORS)
    assert covered_anchors() <= set(ANCHORS)


def _as_text(v):
    return json.dumps(v) if isinstance(v, bool) else str(v)


@pytest.mark.parametrize("eid", list(REGISTRY))
def test_config_roundtrip_key_value(eid, tmp_path):
    exp = REGISTRY[eid]
    path = tmp_path / "cfg.txt"
    lines = ["# defaults written back"] + [f"{k} = {_as_text(v)}" for k, v in exp.params.items()]
    path.write_text("\n".join(lines) + "\n")
    assert resolve_params(exp, load_config(str(path))) == exp.params


@pytest.mark.parametrize("eid", list(REGISTRY))
def test_config_roundtrip_json(eid, tmp_path):
    exp = REGISTRY[eid]
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(exp.params))
    assert resolve_params(exp, load_config(str(path))) == exp.params


def test_unknown_key_rejected(tmp_path, capsys):
    code = main(["run", "--experiment", "torus-orbit", "--param", "bogus=1", "--out", str(tmp_path)])
    assert code == EXIT_ERROR
    assert "unknown parameter" in capsys.readouterr().err
    with pytest.raises(ConfigError):
        resolve_params(REGISTRY["torus-orbit"], {"bogus": 1})


@pytest.mark.parametrize("args", [
    ["run", "--experiment", "no-such-experiment"],
    ["run", "--experiment", "lil-iid", "--param", "N=abc"],
    ["run", "--experiment", "lil-iid", "--param", "N"],
    ["run", "--experiment", "lil-iid", "--param", "N=2.5"],
])
def test_invalid_input_exit_one(args, tmp_path, capsys):
    assert main(args + ["--out", str(tmp_path)]) == EXIT_ERROR
    assert capsys.readouterr().err.startswith("ergoshift: error:")


def test_malformed_config_file(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("N 100\n")
    assert main(["run", "--experiment", "lil-iid", "--config", str(path), "--out", str(tmp_path)]) == EXIT_ERROR


def test_integer_parameters_accept_exponent_notation():
    assert resolve_params(REGISTRY["lil-iid"], {"N": "1e4"})["N"] == 10_000


def test_artifacts_written(tmp_path):
    rep = run_experiment("torus-orbit", 0, {}, tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["experiment"] == "torus-orbit" and manifest["seed"] == 0
    assert manifest["params"] == REGISTRY["torus-orbit"].params
    assert set(manifest["versions"]) >= {"ergoshift", "numpy", "scipy", "python"}
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["verdicts"] == rep["verdicts"]
    with open(tmp_path / "results.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) > 1


def test_torus_orbit_bound(tmp_path):
    run_experiment("torus-orbit", 0, {}, tmp_path)
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["summary"]["bound"] == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    assert report["verdicts"] == ["member"]


def test_chaos_example2_non_member(tmp_path):
    code = main(["run", "--experiment", "chaos-example2", "--param", "beta=0.75", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert json.loads((tmp_path / "report.json").read_text())["verdicts"] == ["non-member"]


@pytest.mark.parametrize("eid, params", [
    ("lil-iid", {"N": 5000}),
    ("brownian-scaling", {"paths": 200}),
    ("sde-ou-decay", {"n_outer": 50, "n_inner": 4, "n_max": 3, "step": 0.0625}),
])
def test_results_byte_identical_for_same_seed(eid, params, tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    c = tmp_path / "c"
    run_experiment(eid, 7, params, a)
    run_experiment(eid, 7, params, b)
    run_experiment(eid, 8, params, c)
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
    assert (a / "results.csv").read_bytes() != (c / "results.csv").read_bytes()
    assert b"\r" not in (a / "results.csv").read_bytes()


def test_env_var_sets_output_directory(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    assert main(["run", "--experiment", "torus-orbit"]) == EXIT_OK
    assert (tmp_path / "env" / "report.json").exists()


def test_explicit_out_beats_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    assert main(["run", "--experiment", "torus-orbit", "--out", str(tmp_path / "cli")]) == EXIT_OK
    assert (tmp_path / "cli" / "report.json").exists()
    assert not (tmp_path / "env").exists()


def test_decide_flag_exit_two_on_undecided(tmp_path):
    base = ["run", "--experiment", "sde-ou-decay", *SMALL_OU, "--out", str(tmp_path)]
    assert main(base) == EXIT_OK
    assert main(base + ["--decide"]) == EXIT_UNDECIDED
    assert json.loads((tmp_path / "report.json").read_text())["undecided"]


def test_decide_flag_exit_zero_when_decided(tmp_path):
    assert main(["run", "--experiment", "torus-orbit", "--decide", "--out", str(tmp_path)]) == EXIT_OK


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ergoshift", "run", "--experiment", "criteria-martingale",
                           "--out", str(tmp_path)], capture_output=True, text=True, check=False)
    assert proc.returncode == EXIT_OK
    assert json.loads(proc.stdout)["out"] == str(tmp_path)
