import csv
import json
import shutil
from pathlib import Path

import pytest
import yaml

from capa_doa.harness.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL = {
    "aperture": {"lx": 1.0, "ly": 1.0},
    "wavelength": 0.1,
    "noise_density": 1e-3,
    "snapshots": 8,
    "convention": "A",
    "quadrature_order": 8,
    "rng_seed": 3,
    "spda": {"dipole_length": 0.004},
    "targets": [{"angles_deg": [30.0, 40.0]}],
}


def write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return str(path)


def run(*argv):
    return main([str(a) for a in argv])


def test_simulate_csv_layout(tmp_path):
    cfg = write(tmp_path, "s.yaml", SMALL)
    out = tmp_path / "field.csv"
    assert run("simulate", "--config", cfg, "--out", out) == EXIT_OK
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["point", "x_m", "y_m", "weight", "t", "re", "im"]
    assert len(rows) == 1 + 64 * 8
    meta = json.loads((tmp_path / "field.csv.meta.json").read_text())
    assert set(meta) == {"command", "config_hash", "master_seed", "version"}
    assert meta["master_seed"] == 3


def test_music_json(tmp_path):
    cfg = write(tmp_path, "s.yaml", dict(SMALL, noise_density=0.0))
    out = tmp_path / "est.json"
    assert run("music", "--config", cfg, "--out", out) == EXIT_OK
    (rec,) = json.loads(out.read_text())
    assert rec["alpha_deg"] == pytest.approx(30.0, abs=0.1)
    assert rec["phi_deg"] == pytest.approx(40.0, abs=0.1)


def test_crlb_report_has_baseline(tmp_path):
    cfg = write(tmp_path, "s.yaml", SMALL)
    out = tmp_path / "crlb.json"
    assert run("crlb", "--config", cfg, "--out", out) == EXIT_OK
    rep = json.loads(out.read_text())
    assert rep["crlb_known"]["alpha_rad2"][0] <= rep["crlb_unknown"]["alpha_rad2"][0]
    assert rep["meta"]["spda_baseline"]["convention"] == "B"


def test_crlb_csv_format(tmp_path):
    cfg = write(tmp_path, "s.yaml", SMALL)
    out = tmp_path / "crlb.csv"
    assert run("crlb", "--config", cfg, "--out", out, "--format", "csv") == EXIT_OK
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["target", "regime", "crlb_alpha_rad2", "crlb_phi_rad2"]
    assert [r[1] for r in rows[1:]] == ["known", "unknown"]


def test_sweep_json(tmp_path):
    exp = {"scenario": SMALL, "sweep": {"variable": "snapshots", "values": [8, 16]}, "trials": 2}
    cfg = write(tmp_path, "e.yaml", exp)
    out = tmp_path / "sweep.json"
    assert run("sweep", "--config", cfg, "--out", out, "--format", "json") == EXIT_OK
    data = json.loads(out.read_text())
    assert data["param"] == "snapshots" and len(data["rows"]) == 2
    assert data["rows"][0]["trials"] + data["rows"][0]["failures"] == 2


def test_surface_without_config(tmp_path):
    out = tmp_path / "surf.csv"
    assert run("crlb-surface", "--out", out) == EXIT_OK
    rows = list(csv.reader(out.open()))
    assert len(rows) == 1 + 180 * 90


@pytest.mark.parametrize("argv", [
    ("music",),
    ("music", "--config", "/nonexistent.yaml"),
    ("sweep", "--config", "{cfg}", "--trials", "0"),
    ("music", "--config", "{cfg}", "--seed", "-1"),
    ("crlb", "--config", "{bad}"),
])
def test_config_errors_exit_2(tmp_path, argv, capsys):
    cfg = write(tmp_path, "s.yaml", SMALL)
    bad = write(tmp_path, "b.yaml", dict(SMALL, snapshots="many"))
    argv = [a.format(cfg=cfg, bad=bad) for a in argv]
    assert run(*argv, "--out", tmp_path / "x") == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_invalid_yaml_exit_2(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("aperture: [1, 2\n", encoding="utf-8")
    assert run("music", "--config", path) == EXIT_CONFIG


def test_numeric_error_exit_3(tmp_path, capsys):
    # noiseless data from one source cannot support two signal eigenfunctions
    exp = {"scenario": dict(SMALL, noise_density=0.0), "estimator": {"m_targets": 2}}
    cfg = write(tmp_path, "e.yaml", exp)
    assert run("music", "--config", cfg, "--out", tmp_path / "x.json") == EXIT_NUMERIC
    assert "numeric error" in capsys.readouterr().err


def test_seed_override_changes_output(tmp_path):
    cfg = write(tmp_path, "s.yaml", SMALL)
    assert run("simulate", "--config", cfg, "--out", tmp_path / "a.csv") == EXIT_OK
    assert run("simulate", "--config", cfg, "--out", tmp_path / "b.csv", "--seed", "4") == EXIT_OK
    assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "b.csv").read_bytes()
    meta = json.loads((tmp_path / "b.csv.meta.json").read_text())
    assert meta["master_seed"] == 4


def test_shipped_configs_load(tmp_path):
    from capa_doa.harness.config import load_config

    for path in sorted(CONFIGS.glob("*.yaml")):
        cfg = load_config(path)
        assert cfg.scene.m >= 1


def test_relative_scenario_path(tmp_path):
    shutil.copy(CONFIGS / "single_target.yaml", tmp_path / "single_target.yaml")
    exp = {"scenario": "single_target.yaml", "trials": 1}
    cfg = write(tmp_path, "e.yaml", exp)
    assert run("crlb", "--config", cfg, "--out", tmp_path / "c.json") == EXIT_OK
