"""Static PNG figures from run artifacts."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import METRICS_COLUMNS  # noqa: E402

METRIC_TITLES = {
    "regret_running": "time-averaged regret",
    "empirical_error": "empirical L1 error",
    "belief_error": "belief L1 error",
    "kl_alignment": "KL to team mean belief",
}


class PlotError(Exception):
    pass


def _read_columns(path: Path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    return {key: np.array([float(r[key]) if r[key] != "" else np.nan for r in rows]) for key in rows[0]}


def heatmap_grids(final_maps: Path) -> dict[str, np.ma.MaskedArray]:
    """True target, team belief and team empirical as masked (height, width) grids."""
    cols = _read_columns(final_maps)
    width = int(cols["x"].max()) + 1
    height = int(cols["y"].max()) + 1
    mask = (cols["accessible"] == 0).reshape(height, width)
    return {
        name: np.ma.array(cols[name].reshape(height, width), mask=mask)
        for name in ("true_target", "team_belief", "team_empirical")
    }


def plot_metrics(metrics_csv: Path, out_dir: Path) -> list[Path]:
    cols = _read_columns(metrics_csv)
    written = []
    for name in METRICS_COLUMNS[1:]:
        if name not in cols or np.all(np.isnan(cols[name])):
            continue
        fig, ax = plt.subplots(figsize=(6, 3.2))
        ax.plot(cols["k"], cols[name], lw=1.2)
        ax.set_xlabel("step k")
        ax.set_ylabel(METRIC_TITLES[name])
        ax.grid(alpha=0.3)
        fig.tight_layout()
        path = out_dir / f"{name}.png"
        fig.savefig(path, dpi=110)
        plt.close(fig)
        written.append(path)
    return written


def plot_heatmaps(final_maps: Path, out_dir: Path) -> Path:
    grids = heatmap_grids(final_maps)
    vmax = max(float(g.max()) for g in grids.values())
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.4))
    for ax, (name, grid) in zip(axes, grids.items()):
        cmap = plt.get_cmap("YlOrBr").copy()
        cmap.set_bad("black")
        im = ax.imshow(grid, cmap=cmap, vmin=0.0, vmax=vmax, origin="upper")
        ax.set_title(name.replace("_", " "))
        ax.set_xticks([])
        ax.set_yticks([])
    fig.colorbar(im, ax=axes, shrink=0.8)
    path = out_dir / "heatmaps.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_curves(curves_csv: Path, out_dir: Path) -> Path:
    cols = _read_columns(curves_csv)
    fig, axes = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
    for key, values in cols.items():
        if key.endswith("_regret"):
            axes[0].plot(cols["k"], values, label=key[: -len("_regret")])
        elif key.endswith("_belief_error"):
            axes[1].plot(cols["k"], values, label=key[: -len("_belief_error")])
    axes[0].set_ylabel("regret")
    axes[1].set_ylabel("belief L1 error")
    axes[1].set_xlabel("step k")
    for ax in axes:
        ax.legend()
        ax.grid(alpha=0.3)
    fig.tight_layout()
    path = out_dir / "comparison.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_artifacts(artifact_dir: str | Path) -> list[Path]:
    """Render every figure the artifacts under ``artifact_dir`` support.

    Raises :class:`PlotError` before writing anything if there is nothing to plot.
    """
    root = Path(artifact_dir)
    if not root.is_dir():
        raise PlotError(f"{root} is not a directory")
    metric_files = sorted(root.rglob("metrics.csv"))
    curve_files = sorted(root.rglob("curves.csv"))
    if not metric_files and not curve_files:
        raise PlotError(f"no metrics.csv or curves.csv under {root}")
    written = []
    for m in metric_files:
        written += plot_metrics(m, m.parent)
        maps = m.parent / "final_maps.csv"
        if maps.exists():
            written.append(plot_heatmaps(maps, m.parent))
    for c in curve_files:
        written.append(plot_curves(c, c.parent))
    return written
