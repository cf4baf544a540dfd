#!/usr/bin/env python3
"""Configuration layering and end-to-end command runs."""

import csv
import json
import os

import pytest

from curvedhz.cli import EXIT_ERROR, EXIT_OK, main
from curvedhz.config import RunConfig, parse_config, read_config_file
from curvedhz.errors import ConfigError
from curvedhz.mesh import unit_square_mesh, write_gmsh

THREE_LEAF_MSH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "meshes", "three_leaf_0.msh")


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for var in ("HZ_WORKERS", "HZ_LOG_DIR", "HZ_OUTPUT_DIR"):
        monkeypatch.delenv(var, raising=False)


def _dirs(tmp_path, name="out"):
    return ["--output-dir", str(tmp_path / name), "--log-dir", str(tmp_path / "logs")]


# ============================================================================
# CONFIG
# ============================================================================

def test_defaults():
    config = parse_config(["study"])
    assert config == RunConfig(command="study")
    assert config.geometric_orders == [1, 2, 3]


def test_flags():
    config = parse_config(["study", "--chart", "three_leaf", "--k", "4", "--m", "3", "--enriched",
                           "--levels", "5", "--initial-h", "0.25", "--rate-tolerance", "0.35"])
    assert (config.chart, config.k, config.m, config.enriched) == ("three_leaf", 4, 3, True)
    assert config.levels == 5 and config.initial_h == 0.25 and config.rate_tolerance == 0.35


def test_k2_rejected():
    with pytest.raises(ConfigError, match="k >= 3"):
        parse_config(["solve", "--k", "2"])


def test_study_needs_three_levels():
    with pytest.raises(ConfigError):
        parse_config(["study", "--levels", "2"])


def test_file_then_flags(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("# disk run\nk = 4\nm = 3\nenriched = true\nworkers = 2\n")
    config = parse_config(["study", "--config", str(path), "--m", "2"])
    assert config.k == 4
    assert config.m == 2
    assert config.enriched is True
    assert config.workers == 2


def test_flag_overrides_boolean_from_file(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("enriched = true\nsvg = true\n")
    config = parse_config(["study", "--config", str(path), "--no-enriched"])
    assert config.enriched is False
    assert config.svg is True
    assert parse_config(["study", "--config", str(path)]).enriched is True


def test_environment_below_file(tmp_path, monkeypatch):
    monkeypatch.setenv("HZ_WORKERS", "7")
    monkeypatch.setenv("HZ_LOG_DIR", "elsewhere")
    path = tmp_path / "run.conf"
    path.write_text("workers = 3\n")
    config = parse_config(["study"], config_file=str(path))
    assert config.workers == 3
    assert config.log_dir == "elsewhere"


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        read_config_file(str(tmp_path / "missing.conf"))
    bad = tmp_path / "bad.conf"
    bad.write_text("colour = blue\n")
    with pytest.raises(ConfigError, match="unknown config key"):
        read_config_file(str(bad))
    bad.write_text("k = three\n")
    with pytest.raises(ConfigError, match="invalid value"):
        read_config_file(str(bad))


# ============================================================================
# COMMANDS
# ============================================================================

def test_usage_errors_exit_one(tmp_path):
    assert main(["explode"]) == EXIT_ERROR
    assert main(["solve", "--k", "2"] + _dirs(tmp_path)) == EXIT_ERROR


def test_solve_patch_on_square(tmp_path):
    argv = ["solve", "--chart", "none", "--solution", "linear_patch", "--m", "1", "--initial-h", "1.0"]
    assert main(argv + _dirs(tmp_path)) == EXIT_OK
    with open(tmp_path / "out" / "solve_none_k3_m1.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 1
    assert int(rows[0]["n_triangles"]) == 2
    assert float(rows[0]["err_sigma"]) <= 1e-9


def test_solve_is_deterministic(tmp_path):
    argv = ["solve", "--chart", "circle", "--m", "2", "--initial-h", "1.0"]
    assert main(argv + _dirs(tmp_path, "a")) == EXIT_OK
    assert main(argv + _dirs(tmp_path, "b")) == EXIT_OK
    a = (tmp_path / "a" / "solve_circle_k3_m2.csv").read_bytes()
    b = (tmp_path / "b" / "solve_circle_k3_m2.csv").read_bytes()
    assert a == b


def test_mismatched_mesh_exits_one(tmp_path):
    msh = tmp_path / "square.msh"
    msh.write_text(write_gmsh(unit_square_mesh(2)))
    assert main(["solve", "--chart", "circle", "--msh", str(msh)] + _dirs(tmp_path)) == EXIT_ERROR


def test_mesh_report(tmp_path):
    assert main(["mesh-report", "--chart", "circle", "--initial-h", "0.5"] + _dirs(tmp_path)) == EXIT_OK
    with open(tmp_path / "out" / "mesh_report_circle_k3_m2.json") as f:
        report = json.load(f)
    assert report["n_triangles"] == 25
    assert report["boundary_shape_ok"] is True
    assert report["offending_triangles"] == []


def test_geometry_report(tmp_path):
    argv = ["geometry", "--chart", "circle", "--initial-h", "0.5", "--levels", "3", "--m-list", "1,2"]
    assert main(argv + _dirs(tmp_path)) == EXIT_OK
    with open(tmp_path / "out" / "geometry_circle.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["m", "level", "h", "sup_F_minus_I", "sup_Psi_minus_I"]
    assert len(rows) == 1 + 2 * 3 + 2


def test_infsup_command(tmp_path):
    argv = ["infsup", "--chart", "circle", "--initial-h", "1.0", "--levels", "1"]
    assert main(argv + _dirs(tmp_path)) == EXIT_OK
    with open(tmp_path / "out" / "infsup_circle_k3_m2.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 1
    assert float(rows[0]["beta_h"]) > 0


def test_three_leaf_needs_a_mesh_file(tmp_path):
    assert main(["study", "--chart", "three_leaf", "--levels", "3"] + _dirs(tmp_path)) == EXIT_ERROR


def test_mesh_report_checked_in_three_leaf(tmp_path):
    argv = ["mesh-report", "--chart", "three_leaf", "--msh", THREE_LEAF_MSH]
    assert main(argv + _dirs(tmp_path)) == EXIT_OK
    with open(tmp_path / "out" / "mesh_report_three_leaf_0_k3_m2.json") as f:
        report = json.load(f)
    assert report["n_triangles"] == 90
    assert report["boundary_shape_ok"] is True
    assert report["degenerate_triangles"] == []
