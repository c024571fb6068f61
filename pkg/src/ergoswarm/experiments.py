"""Seeded runs, sweeps and planner comparisons, with their on-disk artifacts.

Layout of a run directory::

    <out>/config.yaml               verbatim copy of the source config
    <out>/runs.csv                  one summary row per seed
    <out>/seed_<s>/metrics.csv      k, regret_running, empirical_error, belief_error, kl_alignment
    <out>/seed_<s>/summary.json
    <out>/seed_<s>/trajectory.csv   k, agent, region, empirical_error, belief_error (optional)
    <out>/seed_<s>/posterior.csv    final per-agent GP mean/std (debug only)
    <out>/seed_<s>/policy_agent<m>.csv  final dense transition matrix (debug only)

Every byte is a function of (config, seed); nothing time-dependent is written.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import metrics
from .belief import fit_posterior
from .config import ExperimentConfig, parse_config, set_path
from .engine import StepRecord, Swarm

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
METRICS_COLUMNS = ("k", "regret_running", "empirical_error", "belief_error", "kl_alignment")
TRAJECTORY_COLUMNS = ("k", "agent", "region", "empirical_error", "belief_error")
RUNS_COLUMNS = (
    "seed",
    "final_regret",
    "final_empirical_error",
    "final_belief_error",
    "mean_kl_alignment",
    "coverage_time",
    "map_drift",
)
OUTPUT_ROOT_ENV = "ERGOSWARM_OUTPUT_ROOT"


def fmt(x: float | int | None) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if math.isnan(x):
        return ""
    return repr(float(x))


def resolve_output(cfg: ExperimentConfig, override: str | os.PathLike | None = None) -> Path:
    out = Path(override if override is not None else cfg.run.output_dir)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


@dataclass
class RunResult:
    seed: int
    records: list[StepRecord]
    table: metrics.MetricTable
    summary: dict[str, Any]
    sim: Swarm


def simulate(cfg: ExperimentConfig, seed: int) -> tuple[list[StepRecord], Swarm]:
    sim = Swarm(cfg.graph, cfg.info, cfg.schedule, cfg.with_seed(seed), cfg.belief, cfg.policy)
    records = [sim.record()]
    while not sim.done:
        records.append(sim.step())
    return records, sim


def summarize(cfg: ExperimentConfig, seed: int, records: Sequence[StepRecord], table: metrics.MetricTable) -> dict:
    final_regret = float(table.regret_running[-1]) if len(records) > 1 else None
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "steps": len(records),
        "coverage_time": metrics.coverage_time(records, cfg.graph),
        "roi_discovery": metrics.time_to_roi(records, cfg.rois),
        "rois": [list(r) for r in cfg.rois],
        "map_drift": metrics.map_drift([r.true_target for r in records]).v_hat,
        "final_regret": final_regret,
        "final_empirical_error": float(table.empirical_error[-1]),
        "final_belief_error": float(table.belief_error[-1]),
        "mean_kl_alignment": float(np.mean(table.kl_alignment)),
        "config": cfg.raw,
    }


def execute(cfg: ExperimentConfig, seed: int) -> RunResult:
    records, sim = simulate(cfg, seed)
    table = metrics.metric_table(records)
    return RunResult(seed, records, table, summarize(cfg, seed, records, table), sim)


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def write_run(out: Path, cfg: ExperimentConfig, result: RunResult) -> Path:
    d = out / f"seed_{result.seed}"
    d.mkdir(parents=True, exist_ok=True)
    t = result.table
    _write_csv(
        d / "metrics.csv",
        METRICS_COLUMNS,
        (
            (fmt(int(k)), fmt(r), fmt(e), fmt(b), fmt(kl))
            for k, r, e, b, kl in zip(t.k, t.regret_running, t.empirical_error, t.belief_error, t.kl_alignment)
        ),
    )
    (d / "summary.json").write_text(json.dumps(result.summary, indent=2, sort_keys=True) + "\n")
    if cfg.run.trajectory:
        _write_csv(
            d / "trajectory.csv",
            TRAJECTORY_COLUMNS,
            (
                (rec.k, m, region, fmt(t.empirical_error[i]), fmt(t.belief_error[i]))
                for i, rec in enumerate(result.records)
                for m, region in enumerate(rec.positions)
            ),
        )
    # Final true map / team belief / team empirical, for heatmaps.
    last = result.records[-1]
    _write_csv(
        d / "final_maps.csv",
        ("region", "x", "y", "accessible", "true_target", "team_belief", "team_empirical"),
        (
            (i, *cfg.graph.cell(i), int(cfg.graph.accessible[i]), fmt(last.true_target[i]), fmt(last.team_belief[i]), fmt(last.team_empirical[i]))
            for i in range(cfg.graph.n_regions)
        ),
    )
    if cfg.run.debug:
        rows = []
        for agent in result.sim.agents:
            post = fit_posterior(agent.dataset, cfg.belief.kernel, cfg.graph)
            rows.extend((agent.id, i, fmt(post.mean[i]), fmt(post.std[i])) for i in range(cfg.graph.n_regions))
        _write_csv(d / "posterior.csv", ("agent", "region", "mean", "std"), rows)
        for agent in result.sim.agents:
            _write_csv(
                d / f"policy_agent{agent.id}.csv",
                [f"from_{i}" for i in range(cfg.graph.n_regions)],
                ([fmt(v) for v in row] for row in agent.policy),
            )
    return d


def _runs_row(summary: dict) -> tuple:
    return (
        summary["seed"],
        fmt(summary["final_regret"]),
        fmt(summary["final_empirical_error"]),
        fmt(summary["final_belief_error"]),
        fmt(summary["mean_kl_alignment"]),
        fmt(summary["coverage_time"]),
        fmt(summary["map_drift"]),
    )


def _run_one(raw: dict, seed: int, out: str) -> dict:
    cfg = parse_config(raw)
    result = execute(cfg, seed)
    write_run(Path(out), cfg, result)
    return result.summary


def run_seeds(cfg: ExperimentConfig, out: Path, seeds: Sequence[int] | None = None) -> list[dict]:
    """Run every seed into ``out`` and return their summaries in seed order."""
    seeds = list(cfg.run.seeds if seeds is None else seeds)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.run.workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=cfg.run.workers) as pool:
            summaries = list(pool.map(_run_one, [cfg.raw] * len(seeds), seeds, [str(out)] * len(seeds)))
    else:
        summaries = []
        for seed in seeds:
            log.info("seed %d -> %s", seed, out)
            result = execute(cfg, seed)
            write_run(out, cfg, result)
            summaries.append(result.summary)
    _write_csv(out / "runs.csv", RUNS_COLUMNS, (_runs_row(s) for s in summaries))
    return summaries


def _write_source(cfg: ExperimentConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    text = cfg.source_text
    if not text:
        import yaml

        text = yaml.safe_dump(cfg.raw, sort_keys=False)
    (out / "config.yaml").write_text(text)


def cmd_run(cfg: ExperimentConfig, out: Path) -> list[dict]:
    _write_source(cfg, out)
    return run_seeds(cfg, out)


def _agg(values) -> tuple[str, str]:
    mean, std, _ = metrics.mean_std(values)
    return fmt(mean), fmt(std)


SWEEP_COLUMNS = (
    "value",
    "n_seeds",
    "final_regret_mean",
    "final_regret_std",
    "final_belief_error_mean",
    "final_belief_error_std",
    "mean_kl_alignment_mean",
    "mean_kl_alignment_std",
    "coverage_success_rate",
    "coverage_time_mean",
    "coverage_time_std",
)


def value_label(value: Any) -> str:
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    return str(value)


def cmd_sweep(cfg: ExperimentConfig, out: Path, axis: str, values: Sequence[Any]) -> dict[str, list[dict]]:
    """Run every seed at every axis value; write ``sweep.csv`` with mean and std per value."""
    _write_source(cfg, out)
    results: dict[str, list[dict]] = {}
    rows = []
    for value in values:
        sub = parse_config(set_path(cfg.raw, axis, value))
        label = value_label(value)
        summaries = run_seeds(sub, out / f"{axis}={label}", cfg.run.seeds)
        results[label] = summaries
        covered = [s["coverage_time"] for s in summaries]
        rows.append(
            (
                label,
                len(summaries),
                *_agg(s["final_regret"] for s in summaries),
                *_agg(s["final_belief_error"] for s in summaries),
                *_agg(s["mean_kl_alignment"] for s in summaries),
                fmt(sum(c is not None for c in covered) / len(covered)),
                *_agg(covered),
            )
        )
    _write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)
    return results


DEFAULT_VARIANTS = ({"label": "ergodic", "planner": "ergodic"}, {"label": "greedy", "planner": "greedy"})


def cmd_compare(cfg: ExperimentConfig, out: Path) -> dict[str, list[dict]]:
    """Run each planner variant on identical worlds and seeds.

    Writes ``table_coverage.csv`` (success rate, mean/std coverage step),
    ``table_roi.csv`` (per-ROI discovery mean/std; never-reached runs are
    excluded from the mean and counted in ``reached``) and ``curves.csv``
    (seed-mean regret and belief error per step and variant).
    """
    _write_source(cfg, out)
    variants = cfg.run.compare or DEFAULT_VARIANTS
    results: dict[str, list[dict]] = {}
    curves: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    cov_rows, roi_rows = [], []
    for variant in variants:
        raw = cfg.raw
        for key, value in variant.items():
            if key != "label":
                raw = set_path(raw, f"swarm.{key}", value)
        sub = parse_config(raw)
        label = str(variant["label"])
        vout = out / label
        summaries = run_seeds(sub, vout, cfg.run.seeds)
        results[label] = summaries
        cov = [s["coverage_time"] for s in summaries]
        success = sum(c is not None for c in cov) / len(cov)
        cov_rows.append((label, fmt(success), *_agg(cov)))
        for i in range(len(cfg.rois)):
            times = [s["roi_discovery"][i] for s in summaries]
            roi_rows.append((i, label, *_agg(times), sum(t is not None for t in times), len(times)))
        regrets, beliefs = [], []
        for seed in cfg.run.seeds:
            with open(vout / f"seed_{seed}" / "metrics.csv") as fh:
                rows = list(csv.DictReader(fh))
            regrets.append([float(r["regret_running"]) if r["regret_running"] else np.nan for r in rows])
            beliefs.append([float(r["belief_error"]) for r in rows])
        curves[label] = (np.mean(regrets, axis=0), np.mean(beliefs, axis=0))
    _write_csv(out / "table_coverage.csv", ("variant", "success_rate", "timestep_mean", "timestep_std"), cov_rows)
    _write_csv(out / "table_roi.csv", ("roi", "variant", "mean", "std", "reached", "runs"), roi_rows)
    labels = list(curves)
    n = min(len(c[0]) for c in curves.values())
    _write_csv(
        out / "curves.csv",
        ("k", *[f"{lab}_regret" for lab in labels], *[f"{lab}_belief_error" for lab in labels]),
        (
            (k, *[fmt(curves[lab][0][k]) for lab in labels], *[fmt(curves[lab][1][k]) for lab in labels])
            for k in range(n)
        ),
    )
    return results
