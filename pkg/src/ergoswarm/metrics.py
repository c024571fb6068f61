"""Evaluation quantities computed from a recorded run."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .engine import StepRecord
from .world import EnvironmentGraph

KL_FLOOR = 1e-12


def l1(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(np.asarray(a) - np.asarray(b)).sum())


def belief_error(team_belief: np.ndarray, true_target: np.ndarray) -> float:
    return l1(team_belief, true_target)


def empirical_error(team_empirical: np.ndarray, true_target: np.ndarray) -> float:
    return l1(team_empirical, true_target)


def regret(records: Sequence[StepRecord], K: int | None = None) -> float:
    """Time-averaged L1 gap between team visitation and target over ``k = 1..K``."""
    if K is None:
        K = len(records) - 1
    if not 1 <= K <= len(records) - 1:
        raise ValueError(f"K must lie in [1, {len(records) - 1}]")
    return sum(empirical_error(r.team_empirical, r.true_target) for r in records[1 : K + 1]) / K


def running_regret(errors: Sequence[float]) -> np.ndarray:
    """Running regret for every ``K``; entry 0 is NaN (no steps averaged yet)."""
    e = np.asarray(errors, dtype=float)
    out = np.full(e.size, np.nan)
    if e.size > 1:
        out[1:] = np.cumsum(e[1:]) / np.arange(1, e.size)
    return out


def kl_alignment(beliefs: Sequence[np.ndarray]) -> float:
    """Mean KL divergence (nats) of each agent's belief from the team mean belief."""
    B = np.maximum(np.asarray(beliefs, dtype=float), KL_FLOOR)
    ref = np.maximum(np.mean(beliefs, axis=0), KL_FLOOR)
    return float(np.mean(np.sum(B * np.log(B / ref), axis=1)))


def time_to_roi(records: Iterable[StepRecord], rois: Sequence[Iterable[int]]) -> list[int | None]:
    """First step at which any agent stands inside each ROI, or ``None``."""
    sets = [frozenset(roi) for roi in rois]
    found: list[int | None] = [None] * len(sets)
    for rec in records:
        for i, cells in enumerate(sets):
            if found[i] is None and any(p in cells for p in rec.positions):
                found[i] = rec.k
        if all(f is not None for f in found):
            break
    return found


def coverage_time(records: Iterable[StepRecord], graph: EnvironmentGraph) -> int | None:
    """First step by which every accessible region has been visited."""
    remaining = set(graph.accessible_ids.tolist())
    for rec in records:
        remaining.difference_update(rec.positions)
        if not remaining:
            return rec.k
    return None


@dataclass(frozen=True)
class DriftSummary:
    v_hat: float


def map_drift(true_targets: Sequence[np.ndarray]) -> DriftSummary:
    """Average per-step L1 change of the target over ``K = len - 1`` steps."""
    K = len(true_targets) - 1
    if K < 1:
        return DriftSummary(0.0)
    total = 0.0
    for prev, cur in zip(true_targets, true_targets[1:]):
        if cur is not prev:
            total += l1(cur, prev)
    return DriftSummary(total / K)


def rois_from_threshold(weights: np.ndarray, graph: EnvironmentGraph, quantile: float = 0.9) -> list[list[int]]:
    """Connected groups of accessible cells at or above the weight quantile.

    Groups are ordered by their first (lowest) region id.
    """
    acc = graph.accessible
    w = np.asarray(weights, dtype=float)
    theta = np.quantile(w[acc], quantile)
    mask = (w >= theta) & acc & (w > 0)
    labels, n = ndimage.label(mask.reshape(graph.height, graph.width))
    flat = labels.ravel()
    return [np.flatnonzero(flat == lab).tolist() for lab in range(1, n + 1)]


@dataclass(frozen=True)
class MetricTable:
    k: np.ndarray
    regret_running: np.ndarray
    empirical_error: np.ndarray
    belief_error: np.ndarray
    kl_alignment: np.ndarray


def metric_table(records: Sequence[StepRecord]) -> MetricTable:
    emp = np.array([empirical_error(r.team_empirical, r.true_target) for r in records])
    bel = np.array([belief_error(r.team_belief, r.true_target) for r in records])
    kl = np.array([kl_alignment(r.beliefs) for r in records])
    return MetricTable(
        k=np.array([r.k for r in records]),
        regret_running=running_regret(emp),
        empirical_error=emp,
        belief_error=bel,
        kl_alignment=kl,
    )


def mean_std(values: Iterable[float | None]) -> tuple[float | None, float | None, int]:
    """Mean and population std over the non-``None`` values, with their count."""
    vals = [float(v) for v in values if v is not None]
    if not vals:
        return None, None, 0
    if len(vals) == 1:
        return vals[0], None, 1
    return float(np.mean(vals)), float(np.std(vals)), len(vals)
