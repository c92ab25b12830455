"""Command-line driver: manifests, determinism, config errors and exit codes."""

import json
import math

import numpy as np
import pytest

from meanfield import cli, io
from meanfield.config import load_config


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def _run(tmp_path, name, *argv):
    out = tmp_path / name
    code = cli.main([*argv, "--out", str(out)])
    return code, out


def test_solve_at_zero_lambda_gives_zero_field(tmp_path):
    code, out = _run(tmp_path, "solve", "solve", "--h", "0.0625", "--lambda", "0")
    assert code == 0
    man = _manifest(out)
    assert man["passed"] and man["command"] == "solve"
    fields = [a for a in man["artifacts"] if a["path"].endswith(".csv")]
    assert len(fields) == 1
    rows = io.read_csv(out / fields[0]["path"])
    assert rows and all(float(r["value"]) == 0.0 for r in rows)


def test_manifest_checksums_match_files(tmp_path):
    _, out = _run(tmp_path, "solve", "solve", "--h", "0.0625", "--lambda", "2")
    man = io.RunManifest(**{k: v for k, v in _manifest(out).items() if k != "passed"})
    assert man.artifacts and man.verify(out) == []


def test_rerun_is_byte_identical(tmp_path):
    args = ["continue", "--h", "0.0625", "--lambda-range", "0", "4", "--seed", "7"]
    _, a = _run(tmp_path, "a", *args)
    _, b = _run(tmp_path, "b", *args)
    ma, mb = _manifest(a), _manifest(b)
    assert ma["config"] == mb["config"] and ma["seed"] == mb["seed"] == 7
    assert [(x["path"], x["sha256"]) for x in ma["artifacts"]] == [(x["path"], x["sha256"]) for x in mb["artifacts"]]


def test_rerun_from_manifest_config(tmp_path):
    _, a = _run(tmp_path, "a", "mt-check", "--h", "0.125", "--set", "sweep.n_fields=20", "--seed", "3")
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(_manifest(a)["config"]))
    _, b = _run(tmp_path, "b", "mt-check", "--config", str(cfg_path))
    assert [x["sha256"] for x in _manifest(a)["artifacts"]] == [x["sha256"] for x in _manifest(b)["artifacts"]]


def test_invalid_config_reports_field_path(tmp_path, capsys):
    code, out = _run(tmp_path, "bad", "solve", "--set", "domain.h=-1")
    assert code == 2
    err = capsys.readouterr().err
    assert "domain.h" in err
    assert not out.exists()


def test_unknown_field_rejected(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"solver": {"tolerance": 1e-8}}))
    code, _ = _run(tmp_path, "bad", "solve", "--config", str(cfg))
    assert code == 2
    assert "solver.tolerance" in capsys.readouterr().err


def test_unreadable_config_exit_two(tmp_path):
    code, _ = _run(tmp_path, "bad", "solve", "--config", str(tmp_path / "missing.json"))
    assert code == 2


def test_overrides_and_shortcuts():
    cfg = load_config(None, cli._overrides(cli._parser().parse_args(
        ["solve", "--h", "0.03125", "--measure", "uniform", "--lambda", "5", "--set", "solver.max_iter=7", "--set", "domain.kind=rectangle"]
    )))
    assert cfg.domain.h == 0.03125 and cfg.domain.kind == "rectangle"
    assert cfg.measure.kind == "uniform"
    assert cfg.lam == pytest.approx(5 * math.pi)
    assert cfg.solver.max_iter == 7


def test_json_measure_shortcut():
    m = '{"kind": "general", "atoms": [[0.9, 0.5], [1.0, 0.5]]}'
    cfg = load_config(None, cli._overrides(cli._parser().parse_args(["solve", "--measure", m])))
    meas = cfg.measure.build()
    assert meas.total_mass() == pytest.approx(1.0)
    assert meas.mass_at_one() == pytest.approx(0.5)


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "root"))
    assert cli.main(["solve", "--h", "0.125", "--lambda", "0"]) == 0
    runs = list((tmp_path / "root").glob("solve-*"))
    assert len(runs) == 1 and (runs[0] / "manifest.json").exists()


def test_numerical_failure_recorded(tmp_path):
    # the disk branch folds below 9 pi, so no solution exists there
    code, out = _run(tmp_path, "fail", "solve", "--h", "0.0625", "--lambda", "9")
    assert code == 1
    man = _manifest(out)
    assert not man["passed"] and man["error"]


def test_continue_writes_branch_table(tmp_path):
    code, out = _run(tmp_path, "br", "continue", "--h", "0.0625", "--lambda-range", "0", "6")
    assert code == 0
    rows = io.read_csv(out / "branch.csv")
    assert {"lambda", "residual", "u_max", "nu_total", "log_I"} <= set(rows[0])
    assert float(rows[-1]["lambda_over_pi"]) == pytest.approx(6.0)
    assert len(list((out / "fields").glob("entry_*.csv"))) == len(rows)
    assert (out / "branch.svg").read_text().startswith("<svg")


def test_blowup_from_saved_branch(tmp_path):
    _, br = _run(tmp_path, "br", "continue", "--h", "0.0625", "--lambda-range", "4", "7.5")
    code, out = _run(tmp_path, "bu", "blowup", "--branch", str(br / "manifest.json"), "--regime", "nondeg")
    man = _manifest(out)
    assert man["error"] is None
    assert man["checks"]["peaks_found"]["passed"]
    assert (out / "blowup.json").exists() and (out / "rescaled_peak0.csv").exists()


def test_green_check_passes(tmp_path):
    code, out = _run(tmp_path, "g", "green-check", "--h", "0.03125")
    assert code == 0
    assert _manifest(out)["checks"]["robin_function"]["passed"]


def test_degree_one_point(tmp_path):
    code, out = _run(tmp_path, "deg", "degree", "--k", "1", "--seed", "1")
    assert code == 0
    assert json.loads((out / "degree.json").read_text())["degree"] != 0


def test_energy_and_sweep_tables(tmp_path):
    code, out = _run(tmp_path, "e", "energy", "--domain", "annulus", "--h", "0.0625", "--lambda", "4")
    assert code == 0
    row = io.read_csv(out / "energy.csv")[0]
    assert np.isfinite(float(row["J"]))
    code, out = _run(tmp_path, "s", "testfn-sweep", "--domain", "annulus", "--h", "0.03125", "--lambda", "4")
    assert code in (0, 1)
    header = (out / "sweep.csv").read_text().splitlines()[0].split(",")
    assert header[:6] == ["r", "L", "energy", "log_integral", "upper_log_integral", "J"]
    assert (out / "sweep.svg").exists()


def test_exit_code_tracks_checks(tmp_path):
    # an unreachable margin makes the minmax check fail while the run succeeds
    code, out = _run(tmp_path, "mm", "minmax", "--domain", "annulus", "--h", "0.0625", "--lambda", "12", "--k", "1",
                     "--set", "analysis.min_margin=1e9", "--set", "sweep.n_radial=3", "--set", "sweep.n_angular=4")
    man = _manifest(out)
    assert man["error"] is None
    assert not man["checks"]["boundary_margin"]["passed"]
    assert code == 1


@pytest.mark.slow
def test_quantize_pipeline(tmp_path):
    code, out = _run(tmp_path, "q", "quantize", "--h", "0.03125", "--lambda-range", "0", "7.8")
    man = _manifest(out)
    assert man["error"] is None
    mass = man["results"]["quantization"]["extrapolated_masses"][0]
    assert mass == pytest.approx(8 * math.pi, rel=0.05)
    assert code == 0
