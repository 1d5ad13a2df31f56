import csv
import json

from typer.testing import CliRunner

from spheregate.cli import app

runner = CliRunner()


def write_config(tmp_path, data):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(data))
    return str(path)


def read_rows(path):
    with path.open() as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def test_layout_prints_pairs_and_margins(tmp_path):
    cfg = write_config(tmp_path, {"drive": {"chi": 10}})
    result = runner.invoke(app, ["layout", "--config", cfg])
    assert result.exit_code == 0, result.output
    desc = json.loads(result.output)
    assert len(desc["controls"]) == 6
    assert len(desc["pairs"]) == 15
    assert abs(desc["controls"][0]["theta_deg"] - 68.28) < 0.01
    assert {p["unit_type"] for p in desc["pairs"]} == {"linear", "acute", "obtuse"}


def test_gate_writes_deterministic_files(tmp_path):
    cfg = write_config(tmp_path, {"gate": {"mode": "nojump"}})
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        result = runner.invoke(app, ["gate", "-k", "1", "--config", cfg, "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "F_2 =" in result.output
        outputs.append(out)
    for fname in ("gate_k1.csv", "gate.json"):
        assert (outputs[0] / fname).read_bytes() == (outputs[1] / fname).read_bytes()
    first_line = (outputs[0] / "gate_k1.csv").read_text().splitlines()[0]
    assert first_line.startswith("# frequencies in MHz")
    rows = read_rows(outputs[0] / "gate_k1.csv")
    assert [r["input_bits"] for r in rows] == ["00", "01", "10", "11", "average"]
    record = json.loads((outputs[0] / "gate.json").read_text())
    assert record["command"] == "gate"
    assert record["summary"]["controls"] == 1
    assert "gate_k1.csv" in record["files"]


def test_output_env_var_wins(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, {"gate": {"mode": "nojump"}})
    env_dir = tmp_path / "env"
    monkeypatch.setenv("SPHEREGATE_OUT", str(env_dir))
    result = runner.invoke(app, ["gate", "-k", "1", "--config", cfg, "--out", str(tmp_path / "flag")])
    assert result.exit_code == 0, result.output
    assert (env_dir / "gate_k1.csv").exists()
    assert not (tmp_path / "flag").exists()


def test_gate_rejects_too_many_controls(tmp_path):
    result = runner.invoke(app, ["gate", "-k", "8", "--out", str(tmp_path)])
    assert result.exit_code == 1
    assert "error" in result.output


def test_bad_config_exits_with_error(tmp_path):
    cfg = write_config(tmp_path, {"drive": {"omega": 1.0}})
    result = runner.invoke(app, ["layout", "--config", cfg])
    assert result.exit_code == 1
    assert "omega" in result.output


def test_truth_table_in_the_ideal_limit(tmp_path):
    cfg = write_config(
        tmp_path,
        {
            "gate": {"chi": 10, "mode": "nojump"},
            "overrides": {"zero_decay": True, "zero_ucc": True, "uct_scale": 40},
        },
    )
    result = runner.invoke(app, ["truth-table", "-k", "2", "--config", cfg, "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    rows = {r["input_bits"]: r for r in read_rows(tmp_path / "truth_table_k2.csv")}
    assert len(rows) == 8
    assert rows["111"]["output_bits"] == "110"
    assert rows["110"]["output_bits"] == "111"
    assert rows["011"]["output_bits"] == "011"
    assert all(float(r["population"]) > 0.999 for r in rows.values())


def test_sweep_h_on_a_short_grid(tmp_path):
    cfg = write_config(
        tmp_path,
        {"sweep": {"parameter": "h", "start": 0.3, "stop": 0.4, "points": 2}, "solver": {"mode": "nojump"}},
    )
    result = runner.invoke(app, ["sweep-h", "--config", cfg, "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    rows = read_rows(tmp_path / "sweep_h.csv")
    assert [float(r["h_over_R"]) for r in rows] == [0.3, 0.4]
    for r in rows:
        assert 0.0 < float(r["F3_av"]) <= 1.0
        assert float(r["F3_av_stderr"]) == 0.0
    assert (tmp_path / "sweep_h.gp").exists()
    record = json.loads((tmp_path / "sweep-h.json").read_text())
    best = record["summary"]["argmax_h_over_R"]
    assert min(abs(best - 0.3), abs(best - 0.4)) < 1e-9
    assert record["failures"] == []


def test_seventh_on_a_small_ring(tmp_path):
    cfg = write_config(
        tmp_path,
        {"geometry": {"ring_size": 1}, "gate": {"chi": 10, "mode": "nojump"}, "seventh": {"samples": 2}},
    )
    result = runner.invoke(app, ["seventh", "--config", cfg, "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    rows = read_rows(tmp_path / "seventh.csv")
    assert [r["sample"] for r in rows] == ["0", "1", "mean", "std", "analytic"]
    for r in rows[:2]:
        assert float(r["nearest_um"]) > 14900 ** (1 / 6)
        assert float(r["max_ucc_MHz"]) < 1.0
        assert 0.0 < float(r["F"]) <= 1.0


def test_sweep_chi_on_two_points(tmp_path):
    cfg = write_config(
        tmp_path,
        {
            "sweep": {"parameter": "chi", "start": 1.0, "stop": 10.0, "points": 2, "heights": [0.37]},
            "solver": {"mode": "nojump"},
        },
    )
    result = runner.invoke(app, ["sweep-chi", "--config", cfg, "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    with (tmp_path / "sweep_chi.csv").open() as fh:
        header = next(line for line in fh if not line.startswith("#")).strip()
    assert header == "chi,F3_av_h0.37,F3_av_h0.37_stderr"
    rows = read_rows(tmp_path / "sweep_chi.csv")
    assert [float(r["chi"]) for r in rows] == [1.0, 10.0]
    low, high = (float(r["F3_av_h0.37"]) for r in rows)
    assert 0.98 < low <= 1.0
    assert high >= low
    assert (tmp_path / "sweep_chi.gp").exists()
    record = json.loads((tmp_path / "sweep-chi.json").read_text())
    assert record["summary"]["max_chi"] == 10.0
