from __future__ import annotations

import copy
import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest
import yaml

from ergoswarm.cli import main, parse_values
from ergoswarm.config import load_config, parse_config, set_path
from ergoswarm.errors import ConfigError
from ergoswarm.experiments import METRICS_COLUMNS, OUTPUT_ROOT_ENV, SCHEMA_VERSION
from ergoswarm.plotting import heatmap_grids

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

BASE = {
    "world": {"width": 3, "height": 3, "weights": {"background": 1.0}},
    "swarm": {"agents": 1, "t_final": 10, "tau_gp": 2, "tau_p": 2},
    "belief": {"lengthscale": 1.0},
    "policy": {"mode": "metropolis"},
    "run": {"seeds": 1},
}


def variant(**edits) -> dict:
    raw = copy.deepcopy(BASE)
    for dotted, value in edits.items():
        raw = set_path(raw, dotted.replace("__", "."), value)
    return raw


def write_cfg(tmp_path: Path, raw: dict, name: str = "cfg.yaml") -> Path:
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw, sort_keys=False))
    return path


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.name)
def test_shipped_configs_parse(path):
    cfg = load_config(path)
    assert cfg.graph.n_accessible > 0
    assert cfg.rois


def test_weights_dsl():
    raw = variant()
    raw["world"]["nofly"] = [[1, 1]]
    raw["world"]["weights"] = {
        "background": 1.0,
        "rois": [
            {"shape": "rect", "x": [0, 1], "y": [0, 0], "weight": 5.0},
            {"shape": "cells", "cells": [[2, 2]], "weight": 7.0},
        ],
    }
    raw["world"]["roi_cells"] = [[[0, 0], [1, 0]], [[2, 2]]]
    cfg = parse_config(raw)
    np.testing.assert_array_equal(cfg.info.weights, [5, 5, 1, 1, 1, 1, 1, 1, 7])
    assert not cfg.graph.accessible[4]
    assert cfg.rois == ((0, 1), (8,))


def test_blob_and_quantile_rois():
    raw = variant(world__width=6, world__height=6)
    raw["world"]["weights"] = {
        "background": 1.0,
        "rois": [
            {"shape": "gaussian-blob", "center": [0, 0], "sigma": 0.7, "peak": 5.0},
            {"shape": "gaussian-blob", "center": [5, 5], "sigma": 0.7, "peak": 5.0},
        ],
    }
    cfg = parse_config(raw)
    assert cfg.info.weights[0] == pytest.approx(6.0)
    assert len(cfg.rois) == 2 and 0 in cfg.rois[0] and 35 in cfg.rois[1]


def test_schedule_parses():
    raw = variant()
    raw["world"]["schedule"] = [
        {"time": 3, "kind": "relocate", "source": [[0, 0]], "dest": [[2, 2]]},
        {"time": 5, "kind": "expand", "source": [[1, 1]], "alpha": 0.5},
        {"time": 7, "kind": "replace", "weights": {"values": [1.0] * 9}},
    ]
    cfg = parse_config(raw)
    assert cfg.schedule.times == [3, 5, 7]
    assert cfg.schedule.at(3).dest == (8,)


def test_global_comm_radius():
    assert parse_config(variant(swarm__r_comm="global")).swarm.r_comm == math.inf


def test_sweep_axis_tau_sets_both_periods():
    raw = set_path(BASE, "tau", 50)
    assert raw["swarm"]["tau_gp"] == raw["swarm"]["tau_p"] == 50
    assert BASE["swarm"]["tau_gp"] == 2


def test_parse_values():
    assert parse_values("1, 5,global") == [1, 5, "global"]
    assert parse_values("0.5,10") == [0.5, 10]


@pytest.mark.parametrize(
    "edits, field",
    [
        ({"swarm__tau_gp": 0}, "swarm.tau_gp"),
        ({"swarm__tau_p": -3}, "swarm.tau_p"),
        ({"swarm__agents": 0}, "swarm.agents"),
        ({"swarm__t_final": "ten"}, "swarm.t_final"),
        ({"swarm__planner": "random"}, "swarm.planner"),
        ({"swarm__warp": 9}, "swarm.warp"),
        ({"belief__lengthscale": 0.0}, "belief.lengthscale"),
        ({"belief__noise_variance": -1.0}, "belief.noise_variance"),
        ({"policy__mode": "remc"}, "policy.mode"),
        ({"policy__slem_tol": 0.0}, "policy.slem_tol"),
        ({"run__seeds": 0}, "run.seeds"),
        ({"world__roi_quantile": 1.5}, "world.roi_quantile"),
        ({"world__nofly": [[1, 0], [0, 1]]}, "world.nofly"),
        ({"world__nofly": [[7, 0]]}, "world.nofly"),
        ({"swarm__initial_positions": [[1, 1]], "world__nofly": [[1, 1]]}, "swarm.initial_positions"),
    ],
)
def test_validation_errors_name_the_field(edits, field):
    with pytest.raises(ConfigError) as err:
        parse_config(variant(**edits))
    assert err.value.field == field or err.value.field.startswith(field)


def test_unknown_section_rejected():
    raw = variant()
    raw["extras"] = {}
    with pytest.raises(ConfigError):
        parse_config(raw)


def test_late_event_rejected():
    raw = variant()
    raw["world"]["schedule"] = [{"time": 99, "kind": "replace", "weights": {"background": 2.0}}]
    with pytest.raises(ConfigError) as err:
        parse_config(raw)
    assert err.value.field == "world.schedule"


def test_cli_run_minimal(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(CONFIGS / "minimal.yaml"), "--out", str(out)]) == 0
    with open(out / "seed_0" / "metrics.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == METRICS_COLUMNS
    assert len(rows) - 1 == 10
    summary = json.loads((out / "seed_0" / "summary.json").read_text())
    assert summary["schema_version"] == SCHEMA_VERSION
    assert summary["steps"] == 10 and summary["map_drift"] == 0.0
    assert (out / "config.yaml").read_text() == (CONFIGS / "minimal.yaml").read_text()
    assert (out / "runs.csv").exists()


def test_cli_run_is_byte_deterministic(tmp_path):
    raw = variant(swarm__agents=2, swarm__r_sense=1.0, swarm__t_final=60, run__seeds=[3, 4], run__trajectory=True)
    cfg = write_cfg(tmp_path, raw)
    for name in ("a", "b"):
        assert main(["run", str(cfg), "--out", str(tmp_path / name)]) == 0
    for seed in (3, 4):
        for f in ("metrics.csv", "summary.json", "trajectory.csv", "final_maps.csv"):
            a = (tmp_path / "a" / f"seed_{seed}" / f).read_bytes()
            assert a == (tmp_path / "b" / f"seed_{seed}" / f).read_bytes()


def test_parallel_workers_match_serial(tmp_path):
    raw = variant(swarm__t_final=40, run__seeds=[0, 1, 2])
    serial = write_cfg(tmp_path, raw, "serial.yaml")
    parallel = write_cfg(tmp_path, set_path(raw, "run.workers", 2), "parallel.yaml")
    assert main(["run", str(serial), "--out", str(tmp_path / "s")]) == 0
    assert main(["run", str(parallel), "--out", str(tmp_path / "p")]) == 0
    for seed in (0, 1, 2):
        a = (tmp_path / "s" / f"seed_{seed}" / "metrics.csv").read_bytes()
        assert a == (tmp_path / "p" / f"seed_{seed}" / "metrics.csv").read_bytes()


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path, variant(swarm__tau_gp=0))
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 1
    line = capsys.readouterr().err.strip()
    assert line.startswith("error: ")
    payload = json.loads(line[len("error: ") :])
    assert payload["kind"] == "ConfigError" and payload["field"] == "swarm.tau_gp"


def test_cli_missing_file_is_config_error(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.yaml")]) == 1
    assert capsys.readouterr().err.startswith("error: ")


def test_cli_runtime_error_exit_code(tmp_path, capsys):
    raw = variant()
    raw["world"]["nofly"] = [[2, 2]]
    raw["world"]["schedule"] = [{"time": 4, "kind": "relocate", "source": [[0, 0]], "dest": [[2, 2]]}]
    cfg = write_cfg(tmp_path, raw)
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 2
    payload = json.loads(capsys.readouterr().err.strip()[len("error: ") :])
    assert payload["kind"] == "SimulationError" and payload["step"] == 4


def test_output_root_env(tmp_path, monkeypatch):
    raw = variant(run__output_dir="rel/out")
    cfg = write_cfg(tmp_path, raw)
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "root"))
    assert main(["run", str(cfg)]) == 0
    assert (tmp_path / "root" / "rel" / "out" / "seed_0" / "metrics.csv").exists()


def test_sweep_order_does_not_matter(tmp_path):
    cfg = write_cfg(tmp_path, variant(swarm__t_final=40, swarm__agents=2, run__seeds=[0, 1]))
    assert main(["sweep", str(cfg), "--axis", "swarm.r_comm", "--values", "0,1,global", "--out", str(tmp_path / "f")]) == 0
    assert main(["sweep", str(cfg), "--axis", "swarm.r_comm", "--values", "global,1,0", "--out", str(tmp_path / "r")]) == 0
    for label in ("0", "1", "global"):
        for seed in (0, 1):
            rel = Path(f"swarm.r_comm={label}") / f"seed_{seed}" / "metrics.csv"
            assert (tmp_path / "f" / rel).read_bytes() == (tmp_path / "r" / rel).read_bytes()
    with open(tmp_path / "f" / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["value"] for r in rows] == ["0", "1", "global"]
    assert all(r["n_seeds"] == "2" for r in rows)


def test_single_value_sweep_matches_run(tmp_path):
    cfg = write_cfg(tmp_path, variant(swarm__t_final=30, swarm__tau_gp=5))
    assert main(["run", str(cfg), "--out", str(tmp_path / "run")]) == 0
    assert main(["sweep", str(cfg), "--axis", "swarm.tau_gp", "--values", "5", "--out", str(tmp_path / "sw")]) == 0
    a = (tmp_path / "run" / "seed_0" / "metrics.csv").read_bytes()
    assert a == (tmp_path / "sw" / "swarm.tau_gp=5" / "seed_0" / "metrics.csv").read_bytes()


def test_compare_writes_tables(tmp_path):
    raw = variant(swarm__t_final=50, run__seeds=[0, 1])
    raw["world"]["roi_cells"] = [[[2, 2]], [[0, 0]]]
    cfg = write_cfg(tmp_path, raw)
    out = tmp_path / "cmp"
    assert main(["compare", str(cfg), "--out", str(out)]) == 0
    with open(out / "table_coverage.csv") as fh:
        cov = list(csv.DictReader(fh))
    assert [r["variant"] for r in cov] == ["ergodic", "greedy"]
    with open(out / "table_roi.csv") as fh:
        roi = list(csv.DictReader(fh))
    assert len(roi) == 4 and all(r["runs"] == "2" for r in roi)
    with open(out / "curves.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["k", "ergodic_regret", "greedy_regret", "ergodic_belief_error", "greedy_belief_error"]
    assert main(["plot", str(out)]) == 0
    assert (out / "comparison.png").exists()


def test_debug_dumps(tmp_path):
    cfg = write_cfg(tmp_path, variant(run__debug=True))
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 0
    d = tmp_path / "o" / "seed_0"
    assert (d / "posterior.csv").exists()
    P = np.loadtxt(d / "policy_agent0.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(P.sum(axis=0), 1.0, atol=1e-12)


def test_plot_empty_dir_fails_without_writing(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["plot", str(empty)]) == 2
    assert list(empty.iterdir()) == []
    assert capsys.readouterr().err.startswith("error: ")


def test_plot_one_chart_per_metric(tmp_path):
    out = tmp_path / "o"
    assert main(["run", str(CONFIGS / "minimal.yaml"), "--out", str(out)]) == 0
    assert main(["plot", str(out)]) == 0
    pngs = sorted(p.name for p in (out / "seed_0").glob("*.png"))
    assert pngs == sorted([f"{c}.png" for c in METRICS_COLUMNS[1:]] + ["heatmaps.png"])


def test_converged_heatmap_matches_truth(tmp_path):
    raw = variant(world__width=4, world__height=4, swarm__t_final=1500, swarm__r_sense=1.0, swarm__beta=0.5)
    raw["swarm"].update(tau_gp=25, tau_p=25)
    raw["belief"] = {"lengthscale": 1.0, "signal_variance": 4.0, "noise_variance": 0.01, "prior_mean": 1.0, "noise_std": 0.1}
    raw["world"]["weights"] = {"background": 1.0, "rois": [{"shape": "rect", "x": [2, 3], "y": [2, 3], "weight": 4.0}]}
    cfg = write_cfg(tmp_path, raw)
    out = tmp_path / "o"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    grids = heatmap_grids(out / "seed_0" / "final_maps.csv")
    truth = grids["true_target"].filled(0.0)
    belief = grids["team_belief"].filled(0.0)
    assert np.abs(belief / belief.sum() - truth / truth.sum()).sum() < 0.2
