import csv
import json

import pytest

from mlsg.cli import EXIT_CONFIG, EXIT_EXISTENCE, EXIT_OK, EXIT_VERIFY, main


def _write(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def _run(*argv):
    return main([*argv, "--quiet"])


def test_solve_baseline(tmp_path):
    out = tmp_path / "o"
    assert _run("solve", "--out", str(out), "--mesh-steps", "1000") == EXIT_OK
    rows = list(csv.reader((out / "riccati.csv").open()))
    assert rows[0] == ["t", "P2", "P1", "P0", "N2", "N1", "N0"]
    assert float(rows[1][0]) == 0.0
    assert rows[-1] == ["1", "0", "0", "0", "0", "0", "0"]
    assert (out / "strategies.csv").exists()
    assert json.loads((out / "existence.json").read_text())["existence_ok"] is True
    vals = list(csv.reader((out / "values.csv").open()))
    assert vals[0] == ["t", "x", "V_s", "V_b"] and len(vals) == 6


def test_invalid_model_exits_64(tmp_path, capsys):
    cfg = _write(tmp_path, "c.json", {"model": {"gamma_w": 0}})
    assert _run("solve", "--config", cfg, "--out", str(tmp_path / "o")) == EXIT_CONFIG
    assert "gamma_w" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["solve"],
    ["solve", "--out", "x", "--mesh-steps", "5"],
    ["simulate", "--out", "x"],
    ["sweep", "--out", "x"],
    ["frobnicate"],
])
def test_config_errors_exit_64(tmp_path, monkeypatch, argv):
    monkeypatch.chdir(tmp_path)
    assert _run(*argv) == EXIT_CONFIG


def test_bad_json_exits_64(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{model: 1")
    assert _run("solve", "--config", str(path), "--out", str(tmp_path)) == EXIT_CONFIG


def test_blowup_exits_2_with_eta(tmp_path):
    cfg = _write(tmp_path, "c.json", {"model": {"delta": 1000.0}, "mesh": {"n_steps": 2000}})
    out = tmp_path / "o"
    assert _run("solve", "--config", cfg, "--out", str(out)) == EXIT_EXISTENCE
    rep = json.loads((out / "existence.json").read_text())
    assert rep["blow_up"] is True and rep["eta"] < 1.0


def test_verify_baseline_passes(tmp_path):
    out = tmp_path / "o"
    assert _run("verify", "--out", str(out), "--mesh-steps", "2000") == EXIT_OK
    rep = json.loads((out / "verify_report.json").read_text())
    names = [c["name"] for c in rep["checks"]]
    assert names == ["terminal_conditions", "riccati_residual", "hjb_residual", "hjb_matches_riccati",
                     "hamiltonian_nash", "concavity"]
    assert rep["passed"]


def test_verify_without_spillover(tmp_path):
    cfg = _write(tmp_path, "c.json", {"model": {"gamma_x": 0.0}, "mesh": {"n_steps": 500}})
    assert _run("verify", "--config", cfg, "--out", str(tmp_path / "o")) == EXIT_OK


def test_verify_rejects_corrupted_solution(tmp_path):
    good = tmp_path / "g"
    assert _run("solve", "--out", str(good), "--mesh-steps", "1000") == EXIT_OK
    rows = list(csv.reader((good / "riccati.csv").open()))
    rows[300][3] = repr(float(rows[300][3]) * 1.01)
    bad = tmp_path / "bad.csv"
    with bad.open("w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    out = tmp_path / "o"
    assert _run("verify", "--out", str(out), "--solution", str(bad)) == EXIT_VERIFY
    rep = json.loads((out / "verify_report.json").read_text())
    failed = {c["name"] for c in rep["checks"] if not c["passed"]}
    assert "riccati_residual" in failed


def test_verify_with_sim_block(tmp_path):
    cfg = _write(tmp_path, "c.json", {"mesh": {"n_steps": 1000},
                                      "sim": {"n_paths": 4000, "n_steps": 200, "seed": 5}})
    out = tmp_path / "o"
    code = _run("verify", "--config", cfg, "--out", str(out))
    rep = json.loads((out / "verify_report.json").read_text())
    names = [c["name"] for c in rep["checks"]]
    assert names[-2:] == ["feynman_kac", "deviation"]
    assert code == EXIT_OK, [c for c in rep["checks"] if not c["passed"]]


def test_simulate_single_noise_free_path(tmp_path):
    cfg = _write(tmp_path, "c.json", {"mesh": {"n_steps": 500},
                                      "sim": {"n_paths": 1, "n_steps": 50, "sigma_scale": 0.0}})
    out = tmp_path / "o"
    assert _run("simulate", "--config", cfg, "--out", str(out)) == EXIT_OK
    res = json.loads((out / "sim_result.json").read_text())
    assert res["j_s_se"] == 0.0 and res["config"]["n_paths"] == 1
    lines = (out / "paths.csv").read_text().splitlines()
    assert len(lines) == 1 + 51


def test_flags_override_config(tmp_path):
    cfg = _write(tmp_path, "c.json", {"mesh": {"n_steps": 500}, "sim": {"n_paths": 7, "n_steps": 20, "seed": 1}})
    out = tmp_path / "o"
    assert _run("simulate", "--config", cfg, "--out", str(out), "--paths", "3", "--seed", "9") == EXIT_OK
    echo = json.loads((out / "sim_result.json").read_text())["config"]
    assert echo["n_paths"] == 3 and echo["seed"] == 9


def test_sweep_writes_csv_and_plots(tmp_path):
    cfg = _write(tmp_path, "c.json", {"mesh": {"n_steps": 200},
                                      "sweep": {"parameter": "c0", "values": [1, 1.5, 2, 2.5],
                                                "outputs": ["w_x", "w_0"]}})
    out = tmp_path / "o"
    assert _run("sweep", "--config", cfg, "--out", str(out)) == EXIT_OK
    rows = list(csv.reader((out / "sweep_c0.csv").open()))[1:]
    assert sorted({r[0] for r in rows}) == ["1", "1.5", "2", "2.5"]
    assert (out / "fig_w_x_c0.svg").exists() and (out / "fig_w_0_c0.svg").exists()


def test_sweep_with_no_outputs_writes_nothing(tmp_path):
    cfg = _write(tmp_path, "c.json", {"sweep": {"parameter": "c0", "values": [1], "outputs": []}})
    out = tmp_path / "o"
    assert _run("sweep", "--config", cfg, "--out", str(out)) == EXIT_OK
    assert list(out.iterdir()) == []


def test_sweep_with_blowup_exits_2(tmp_path):
    cfg = _write(tmp_path, "c.json", {"mesh": {"n_steps": 1000},
                                      "sweep": {"parameter": "delta", "values": [0.1, 1000], "outputs": ["i_b0"]}})
    assert _run("sweep", "--config", cfg, "--out", str(tmp_path / "o")) == EXIT_EXISTENCE
