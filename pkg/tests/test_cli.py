import csv
import json

import pytest

from sepcert.cli import OUTPUT_ENV, SCHEMA_VERSION, run


def load(path, name):
    return json.loads((path / f"{name}_report.json").read_text())


def checks(report):
    return {c["check_id"]: c for c in report["checks"]}


def test_no_arguments_prints_usage(capsys):
    assert run([]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_subcommand():
    assert run(["quadrature"]) == 2


@pytest.mark.parametrize("argv", [["flow", "--rel-tol", "abc"], ["flow", "--rel-tol", "-1"],
                                  ["flow", "--rel-tol", "1e-2"], ["superint3", "--k", "1,2"],
                                  ["cofactor", "--region", "1,-1,0.1,2"], ["sepcurve", "--n", "0"]])
def test_bad_configuration(argv, tmp_path):
    assert run(argv + ["--out-dir", str(tmp_path)]) == 2


def test_superint3_calogero(tmp_path):
    code = run(["superint3", "--potential", "calogero", "--k", "1,1,1", "--seed", "7", "--out-dir", str(tmp_path)])
    rep = load(tmp_path, "superint3")
    assert code == 0 and rep["passed"]
    c = checks(rep)
    assert c["rank.max"]["value"] == 4 and c["rank.min"]["value"] == 4
    assert sum(1 for k in c if k.startswith("drift.")) == 5
    assert (tmp_path / "superint3_calogero_trajectory.csv").exists()


def test_report_schema(tmp_path):
    run(["henon-heiles", "--points", "10", "--out-dir", str(tmp_path)])
    rep = load(tmp_path, "henon_heiles")
    assert rep["schema_version"] == SCHEMA_VERSION
    assert rep["subcommand"] == "henon-heiles"
    for c in rep["checks"]:
        assert set(c) == {"check_id", "value", "tolerance", "relation", "pass"}
    assert rep["config"]["seed"] == 0


def test_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(["superint3", "--potential", "new", "--k", "1,2,3", "--seed", "3", "--points", "5",
                    "--bracket-points", "10", "--t-end", "1", "--out-dir", str(d)]) == 0
    assert (a / "superint3_report.json").read_bytes() == (b / "superint3_report.json").read_bytes()
    assert (a / "superint3_new_trajectory.csv").read_bytes() == (b / "superint3_new_trajectory.csv").read_bytes()


def test_seed_changes_samples(tmp_path):
    run(["sepcurve", "--points", "10", "--grid", "16", "--seed", "1", "--out-dir", str(tmp_path / "a")])
    run(["sepcurve", "--points", "10", "--grid", "16", "--seed", "2", "--out-dir", str(tmp_path / "b")])
    ta = json.loads((tmp_path / "a" / "sepcurve_tables.json").read_text())
    tb = json.loads((tmp_path / "b" / "sepcurve_tables.json").read_text())
    assert ta["coefficients"][0]["lambda"] != tb["coefficients"][0]["lambda"]


def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert run(["cofactor", "--grid", "11", "--t-end", "2"]) == 0
    assert (tmp_path / "env" / "cofactor_report.json").exists()
    rows = list(csv.reader(open(tmp_path / "env" / "cofactor_grid.csv")))
    assert len(rows) == 1 + 11 * 11


def test_out_dir_flag_overrides_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    run(["--out-dir", str(tmp_path / "flag"), "henon-heiles", "--points", "5"])
    assert (tmp_path / "flag" / "henon_heiles_report.json").exists()
    assert not (tmp_path / "env").exists()


def test_benenti_passes(tmp_path):
    assert run(["benenti", "--samples", "30", "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "benenti_brackets.csv").exists()


def test_sepcurve_passes_for_three_dofs(tmp_path):
    assert run(["sepcurve", "--n", "3", "--m", "0", "--k", "3", "--points", "40", "--out-dir", str(tmp_path)]) == 0


def test_flow_exit_code_follows_checks(tmp_path):
    code = run(["flow", "--t-end", "20", "--out-dir", str(tmp_path)])
    c = checks(load(tmp_path, "flow"))
    assert c["energy.drift"]["pass"] and c["time_reversal"]["pass"]
    assert code == (0 if c["order.halving_ratio"]["pass"] else 1)
    assert (tmp_path / "flow_oscillator.csv").exists()


def test_stackel_fit_quadrupole(tmp_path):
    code = run(["stackel-fit", "--G", "1", "--D", "0.1", "--r-min", "0.8", "--r-max", "2.5",
                "--out-dir", str(tmp_path)])
    rep = load(tmp_path, "stackel_fit")
    assert (tmp_path / "stackel_elliptic_objective.csv").exists()
    assert 0.19 <= rep["data"]["c2_star"] <= 0.21
    assert code == 0
