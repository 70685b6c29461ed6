"""CLI: schema enforcement, determinism, manifests, exit codes."""

import json
import os
import subprocess
import sys

import pytest

from relsemi.cli import main


def run_cli(args):
    return main(args)


def write_cfg(tmp_path, name, cfg):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


BASE_ESTIMATE = {
    "t": 1.0, "m": 1.0, "mode": "spinless",
    "g": {"kind": "gaussian", "sigma": 1.0},
    "discretization": {"n_subordinator_steps": 16, "bm_max_step": 0.1},
}


def test_estimate_runs_and_writes(tmp_path):
    cfg = write_cfg(tmp_path, "c.json", BASE_ESTIMATE)
    out = tmp_path / "out"
    rc = run_cli(["estimate", "--config", cfg, "--seed", "5",
                  "--samples", "20000", "--out", str(out)])
    assert rc == 0
    assert (out / "results.csv").exists()
    assert (out / "manifest.json").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 5
    assert manifest["config"]["samples"] == 20000


def test_estimate_deterministic_across_threads(tmp_path):
    cfg = write_cfg(tmp_path, "c.json", BASE_ESTIMATE)
    outs = []
    for i, threads in enumerate((1, 4)):
        out = tmp_path / f"out{i}"
        rc = run_cli(["estimate", "--config", cfg, "--seed", "7",
                      "--samples", "20000", "--threads", str(threads),
                      "--out", str(out)])
        assert rc == 0
        outs.append((out / "results.csv").read_bytes())
    assert outs[0] == outs[1]


def test_estimate_repeat_run_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, "c.json", BASE_ESTIMATE)
    blobs = []
    for i in range(2):
        out = tmp_path / f"rep{i}"
        assert run_cli(["estimate", "--config", cfg, "--seed", "7",
                        "--samples", "20000", "--out", str(out)]) == 0
        blobs.append((out / "results.csv").read_bytes())
    assert blobs[0] == blobs[1]


def test_manifest_round_trip(tmp_path):
    cfg = write_cfg(tmp_path, "c.json", BASE_ESTIMATE)
    out1 = tmp_path / "a"
    assert run_cli(["estimate", "--config", cfg, "--seed", "9",
                    "--samples", "20000", "--out", str(out1)]) == 0
    out2 = tmp_path / "b"
    assert run_cli(["estimate", "--config", str(out1 / "manifest.json"),
                    "--out", str(out2)]) == 0
    assert (out1 / "results.csv").read_bytes() == \
        (out2 / "results.csv").read_bytes()


def test_missing_required_key_exit_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "c.json", {"m": 1.0})
    rc = run_cli(["estimate", "--config", cfg, "--out",
                  str(tmp_path / "o")])
    assert rc == 2
    assert "'t'" in capsys.readouterr().err


def test_unknown_key_exit_2(tmp_path, capsys):
    cfg = dict(BASE_ESTIMATE)
    cfg["typo_key"] = 1
    rc = run_cli(["estimate", "--config", write_cfg(tmp_path, "c.json", cfg),
                  "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "typo_key" in capsys.readouterr().err


def test_unknown_family_exit_2(tmp_path, capsys):
    cfg = dict(BASE_ESTIMATE)
    cfg["fields"] = {"V": {"family": "cubic"}}
    rc = run_cli(["estimate", "--config", write_cfg(tmp_path, "c.json", cfg),
                  "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "cubic" in capsys.readouterr().err


def test_numerical_failure_exit_3(tmp_path, capsys):
    cfg = {
        "lattice": {"n": 6, "L": 6.0, "spin": False}, "m": 1.0,
        "fields": {"V": {"family": "harmonic", "omega": 1.0}},
        "window": [0.1, 0.2],   # far too narrow: < 8 shells
    }
    rc = run_cli(["decay", "--config", write_cfg(tmp_path, "c.json", cfg),
                  "--out", str(tmp_path / "o")])
    assert rc == 3
    assert "shells" in capsys.readouterr().err


def test_oracle_suite(tmp_path):
    cfg = {
        "lattice": {"n": 5, "L": 5.0, "spin": False}, "m": 1.0,
        "fields": {"V": {"family": "harmonic", "omega": 1.0}},
        "export_spectrum": True,
    }
    out = tmp_path / "o"
    rc = run_cli(["oracle", "--config", write_cfg(tmp_path, "c.json", cfg),
                  "--out", str(out)])
    assert rc == 0
    assert (out / "spectrum.csv").exists()
    rows = (out / "results.csv").read_text().splitlines()
    assert rows[0].startswith("E,residual")


def test_decay_suite(tmp_path):
    cfg = {
        "lattice": {"n": 10, "L": 8.0, "spin": False}, "m": 1.0,
        "fields": {"V": {"family": "harmonic", "omega": 1.0}},
        "window": [0.5, 4.2],
    }
    out = tmp_path / "o"
    rc = run_cli(["decay", "--config", write_cfg(tmp_path, "c.json", cfg),
                  "--out", str(out)])
    assert rc == 0
    assert (out / "profile.csv").exists()


def test_martingale_suite(tmp_path):
    cfg = {
        "lattice": {"n": 8, "L": 8.0, "spin": False}, "m": 1.0,
        "mode": "spinless", "t": 0.5,
        "fields": {"V": {"family": "harmonic", "omega": 1.0}},
        "t_list": [0.0, 0.25], "x": [0.5, 0.0, 0.0], "samples": 20000,
        "discretization": {"n_subordinator_steps": 16, "bm_max_step": 0.1},
    }
    out = tmp_path / "o"
    rc = run_cli(["martingale", "--config",
                  write_cfg(tmp_path, "c.json", cfg), "--out", str(out)])
    assert rc == 0
    lines = (out / "results.csv").read_text().splitlines()
    assert len(lines) == 3   # header + two t values


def test_diamagnetic_suite(tmp_path):
    cfg = {
        "t": 0.5, "m": 2.0, "mode": "spin", "samples": 20000,
        "fields": {"b": {"family": "constant_b", "b": [0.3, 0.4, 0.5]},
                   "a": {"family": "linear_gauge", "b": [0.3, 0.4, 0.5]}},
        "f": {"kind": "gaussian", "sigma": 1.0},
        "g": {"kind": "gaussian", "sigma": 1.0},
        "discretization": {"n_subordinator_steps": 16, "bm_max_step": 0.1},
    }
    out = tmp_path / "o"
    rc = run_cli(["diamagnetic", "--config",
                  write_cfg(tmp_path, "c.json", cfg), "--out", str(out)])
    assert rc == 0
    text = (out / "results.csv").read_text()
    assert "verdict" in text and "true" in text


def test_validate_suite_small(tmp_path):
    out = tmp_path / "o"
    rc = run_cli(["validate", "--samples", "20000", "--seed", "3",
                  "--out", str(out)])
    assert rc == 0
    rows = (out / "results.csv").read_text().splitlines()
    assert rows[0].startswith("check,passed")
    assert len(rows) > 30


def test_console_entry_point(tmp_path):
    # the installed script surface, end to end in a subprocess
    out = tmp_path / "o"
    cfg = write_cfg(tmp_path, "c.json", BASE_ESTIMATE)
    proc = subprocess.run(
        [sys.executable, "-m", "relsemi.cli", "estimate", "--config", cfg,
         "--samples", "5000", "--out", str(out)],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert "estimate:" in proc.stdout


def test_out_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("RELSEMI_OUT", str(tmp_path / "envout"))
    cfg = write_cfg(tmp_path, "c.json", BASE_ESTIMATE)
    rc = run_cli(["estimate", "--config", cfg, "--samples", "5000"])
    assert rc == 0
    assert (tmp_path / "envout" / "results.csv").exists()
