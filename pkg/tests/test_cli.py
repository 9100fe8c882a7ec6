import json

import numpy as np
import pytest

from uio_lab import cli, modelfile, scenarios


def _export(tmp_path, name):
    path = tmp_path / f"{name}.json"
    assert cli.main(["scenario", "export", name, "-o", str(path)]) == 0
    return path


def _small_model(tmp_path, **overrides):
    doc = {
        "name": "small",
        "A": [[0.0, 1.0], [-2.0, -3.0]],
        "C": [[1.0, 0.0], [0.0, 1.0]],
        "E": [[0.0], [1.0]],
        "poles": [-2.0, -4.0],
        "sim": {"x0": [1.0, -1.0], "t_end": 1.0},
    }
    doc.update(overrides)
    path = tmp_path / "small.json"
    path.write_text(json.dumps(doc))
    return path


def _infeasible_model(tmp_path):
    doc = {
        "A": [[1.0, 0.0], [0.0, 1.0]],
        "C": [[1.0, 0.0]],
        "E": [[0.0], [1.0]],
        "poles": [-2.0, -4.0],
        "sim": {"x0": [0.0, 0.0]},
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    return path


# ---------------------------------------------------------------- scenario


def test_scenario_export_round_trip(tmp_path):
    for name in scenarios.SCENARIO_NAMES:
        path = _export(tmp_path, name)
        back = modelfile.load_model(path)
        orig = scenarios.builtin_scenario(name)
        assert np.array_equal(back.system.A, orig.system.A)
        assert back.cfg.control_mode == orig.cfg.control_mode


def test_scenario_export_unknown_name(tmp_path, capsys):
    rc = cli.main(["scenario", "export", "nope", "-o", str(tmp_path / "x.json")])
    assert rc == cli.EXIT_BAD_INPUT
    assert "example1" in capsys.readouterr().err


# ------------------------------------------------------------------- check


def test_check_feasible(tmp_path, capsys):
    path = _export(tmp_path, "example1")
    assert cli.main(["check", str(path)]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "exists" in out


def test_check_infeasible(tmp_path, capsys):
    path = _infeasible_model(tmp_path)
    assert cli.main(["check", str(path)]) == cli.EXIT_INFEASIBLE
    out = capsys.readouterr().out
    assert "rank" in out


# ------------------------------------------------------------------ design


def test_design_writes_deterministic_json(tmp_path, capsys):
    path = _export(tmp_path, "example1")
    out1 = tmp_path / "g1.json"
    out2 = tmp_path / "g2.json"
    assert cli.main(["design", str(path), "-o", str(out1)]) == 0
    assert cli.main(["design", str(path), "-o", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    doc = json.loads(out1.read_text())
    for key in ("F", "T", "K", "H", "K1", "K2", "eig_F", "residuals"):
        assert key in doc
    F = np.array(doc["F"])
    ev = sorted(pair[0] for pair in doc["eig_F"])
    assert ev == sorted(np.linalg.eigvals(F).real.tolist())


def test_design_stdout(tmp_path, capsys):
    path = _export(tmp_path, "example1")
    capsys.readouterr()  # drop the export confirmation
    assert cli.main(["design", str(path)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert np.array(doc["H"]).shape == (3, 2)


def test_design_infeasible(tmp_path, capsys):
    path = _infeasible_model(tmp_path)
    assert cli.main(["design", str(path)]) == cli.EXIT_INFEASIBLE
    assert "rank" in capsys.readouterr().err


def test_design_unwritable_output(tmp_path, capsys):
    path = _export(tmp_path, "example1")
    rc = cli.main(["design", str(path), "-o", str(tmp_path / "no_dir" / "g.json")])
    assert rc == cli.EXIT_WRITE_FAILURE


# ---------------------------------------------------------------- simulate


def test_simulate_summary_and_csv(tmp_path, capsys):
    path = _small_model(tmp_path)
    csv = tmp_path / "traj.csv"
    assert cli.main(["simulate", str(path), "--csv", str(csv)]) == 0
    out = capsys.readouterr().out
    assert "samples" in out

    lines = csv.read_text().splitlines()
    # header + nsteps + 1 samples
    assert len(lines) == 1 + 1001
    n, m, r, q = 2, 2, 0, 1
    assert len(lines[0].split(",")) == 1 + 3 * n + m + r + 2 * q
    row = lines[1].split(",")
    assert float(row[0]) == 0.0


def test_simulate_strict_on_fine_grid(tmp_path):
    path = _small_model(tmp_path)
    assert cli.main(["simulate", str(path), "--strict"]) == 0


def test_simulate_plot(tmp_path):
    path = _small_model(tmp_path)
    svg = tmp_path / "traj.svg"
    assert cli.main(["simulate", str(path), "--plot", str(svg)]) == 0
    data = svg.read_bytes()
    assert len(data) > 1000
    assert b"<svg" in data[:500]


def test_simulate_unstable_plant(tmp_path, capsys):
    path = _small_model(
        tmp_path,
        A=[[50.0]],
        C=[[1.0]],
        E=[[1.0]],
        poles=[-2.0],
        sim={"x0": [1.0], "t_end": 20.0, "dt": 1e-2},
    )
    assert cli.main(["simulate", str(path)]) == cli.EXIT_INFEASIBLE
    assert "non-finite" in capsys.readouterr().err


def test_simulate_csv_write_failure(tmp_path):
    path = _small_model(tmp_path)
    rc = cli.main(["simulate", str(path), "--csv", str(tmp_path / "no" / "x.csv")])
    assert rc == cli.EXIT_WRITE_FAILURE


# -------------------------------------------------------------- bad input


def test_truncated_json_is_bad_input(tmp_path, capsys):
    path = tmp_path / "trunc.json"
    path.write_text('{"A": [[0.0]]')
    assert cli.main(["check", str(path)]) == cli.EXIT_BAD_INPUT
    assert "line" in capsys.readouterr().err


def test_missing_file_is_bad_input(tmp_path, capsys):
    assert cli.main(["check", str(tmp_path / "ghost.json")]) == cli.EXIT_BAD_INPUT


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
    assert "0.1.0" in capsys.readouterr().out
