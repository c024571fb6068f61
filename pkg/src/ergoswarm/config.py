"""Declarative experiment configuration (YAML) and its validation.

A config has five sections: ``world``, ``swarm``, ``belief``, ``policy`` and
``run``. Cells are written as ``[x, y]`` pairs (column, row). Unknown keys are
rejected; every error names the offending dotted field.

World weights start from ``background`` (or a full row-major ``values`` list)
and are then modified by ``rois`` entries in order: ``rect`` and ``cells``
assign their weight, ``gaussian-blob`` adds a bump.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .baselines import PlannerKind
from .belief import KernelParams
from .engine import BeliefConfig, SwarmConfig
from .errors import ConfigError, ErgoswarmError
from .metrics import rois_from_threshold
from .policy import PolicyConfig, PolicyMode
from .world import EnvironmentGraph, EventKind, InfoMap, MapEvent, MapSchedule, blob_weights, build_grid

SECTIONS = ("world", "swarm", "belief", "policy", "run")

_KEYS = {
    "world": {"width", "height", "nofly", "weights", "schedule", "roi_cells", "roi_quantile"},
    "weights": {"background", "values", "rois"},
    "swarm": {"agents", "r_sense", "r_comm", "tau_gp", "tau_p", "t_final", "beta", "planner", "initial_positions"},
    "belief": {"lengthscale", "signal_variance", "noise_variance", "prior_mean", "eps", "n_max", "noise_std"},
    "policy": {"mode", "slem_tol", "slem_max_iters"},
    "run": {"seeds", "output_dir", "trajectory", "debug", "workers", "compare"},
}


@dataclass(frozen=True)
class RunSettings:
    seeds: tuple[int, ...] = (0,)
    output_dir: str = "runs/default"
    trajectory: bool = False
    debug: bool = False
    workers: int = 1
    compare: tuple[dict, ...] = ()


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    graph: EnvironmentGraph
    info: InfoMap
    schedule: MapSchedule
    swarm: SwarmConfig
    belief: BeliefConfig
    policy: PolicyConfig
    run: RunSettings
    rois: tuple[tuple[int, ...], ...]
    raw: dict = field(repr=False)
    source_text: str = field(default="", repr=False)

    def with_seed(self, seed: int) -> SwarmConfig:
        return replace(self.swarm, seed=seed)


def _section(raw: dict, name: str, required: bool = True) -> dict:
    sec = raw.get(name)
    if sec is None:
        if required:
            raise ConfigError(name, "missing section")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(name, "must be a mapping")
    return sec


def _reject_unknown(sec: dict, allowed: set[str], where: str) -> None:
    for key in sec:
        if key not in allowed:
            raise ConfigError(f"{where}.{key}", "unknown key")


def _num(sec: dict, key: str, where: str, default=None, kind=float, lo=None, lo_strict=False):
    val = sec.get(key, default)
    f = f"{where}.{key}"
    if val is None:
        raise ConfigError(f, "required")
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f, f"expected a number, got {val!r}")
    if kind is int:
        if float(val) != int(val):
            raise ConfigError(f, f"expected an integer, got {val!r}")
        val = int(val)
    else:
        val = float(val)
    if lo is not None and (val <= lo if lo_strict else val < lo):
        raise ConfigError(f, f"must be {'>' if lo_strict else '>='} {lo}, got {val}")
    return val


def _cell(graph: EnvironmentGraph, val: Any, f: str) -> int:
    if not (isinstance(val, (list, tuple)) and len(val) == 2 and all(isinstance(v, int) for v in val)):
        raise ConfigError(f, f"expected an [x, y] integer pair, got {val!r}")
    x, y = val
    if not (0 <= x < graph.width and 0 <= y < graph.height):
        raise ConfigError(f, f"cell {val} outside the {graph.width}x{graph.height} grid")
    return graph.region(x, y)


def _cells(graph: EnvironmentGraph, vals: Any, f: str) -> list[int]:
    if not isinstance(vals, list):
        raise ConfigError(f, "expected a list of [x, y] cells")
    return [_cell(graph, v, f"{f}[{i}]") for i, v in enumerate(vals)]


def _weights(graph: EnvironmentGraph, spec: Any, f: str) -> np.ndarray:
    if not isinstance(spec, dict):
        raise ConfigError(f, "must be a mapping")
    _reject_unknown(spec, _KEYS["weights"], f)
    n = graph.n_regions
    if "values" in spec:
        vals = spec["values"]
        if not isinstance(vals, list) or len(vals) != n:
            raise ConfigError(f"{f}.values", f"expected {n} row-major weights")
        w = np.array(vals, dtype=float)
    else:
        w = np.full(n, _num(spec, "background", f, default=1.0, lo=0.0))
    for i, roi in enumerate(spec.get("rois") or []):
        rf = f"{f}.rois[{i}]"
        if not isinstance(roi, dict):
            raise ConfigError(rf, "must be a mapping")
        shape = roi.get("shape")
        if shape == "rect":
            _reject_unknown(roi, {"shape", "x", "y", "weight"}, rf)
            xs, ys = roi.get("x"), roi.get("y")
            for name, rng_ in (("x", xs), ("y", ys)):
                if not (isinstance(rng_, list) and len(rng_) == 2):
                    raise ConfigError(f"{rf}.{name}", "expected an inclusive [lo, hi] range")
            cells = [[x, y] for y in range(ys[0], ys[1] + 1) for x in range(xs[0], xs[1] + 1)]
            w[_cells(graph, cells, rf)] = _num(roi, "weight", rf, lo=0.0)
        elif shape == "cells":
            _reject_unknown(roi, {"shape", "cells", "weight"}, rf)
            w[_cells(graph, roi.get("cells"), f"{rf}.cells")] = _num(roi, "weight", rf, lo=0.0)
        elif shape == "gaussian-blob":
            _reject_unknown(roi, {"shape", "center", "sigma", "peak"}, rf)
            c = roi.get("center")
            if not (isinstance(c, list) and len(c) == 2):
                raise ConfigError(f"{rf}.center", "expected [x, y]")
            w += blob_weights(graph, c, _num(roi, "sigma", rf, lo=0.0, lo_strict=True), _num(roi, "peak", rf, lo=0.0))
        else:
            raise ConfigError(f"{rf}.shape", f"unknown ROI shape {shape!r} (rect, cells, gaussian-blob)")
    if np.any(w < 0):
        raise ConfigError(f, "weights must be nonnegative")
    if not w[graph.accessible].sum() > 0:
        raise ConfigError(f, "accessible regions carry no weight")
    return w


def _schedule(graph: EnvironmentGraph, events: Any, f: str) -> MapSchedule:
    if events is None:
        return MapSchedule()
    if not isinstance(events, list):
        raise ConfigError(f, "expected a list of events")
    out = []
    for i, ev in enumerate(events):
        ef = f"{f}[{i}]"
        if not isinstance(ev, dict):
            raise ConfigError(ef, "must be a mapping")
        _reject_unknown(ev, {"time", "kind", "source", "dest", "alpha", "weights"}, ef)
        try:
            kind = EventKind(ev.get("kind"))
        except ValueError:
            raise ConfigError(f"{ef}.kind", f"unknown event kind {ev.get('kind')!r}") from None
        kwargs: dict[str, Any] = {"time": _num(ev, "time", ef, kind=int, lo=1), "kind": kind}
        if "source" in ev:
            kwargs["source"] = tuple(_cells(graph, ev["source"], f"{ef}.source"))
        if "dest" in ev:
            kwargs["dest"] = tuple(_cells(graph, ev["dest"], f"{ef}.dest"))
        if "alpha" in ev:
            kwargs["alpha"] = _num(ev, "alpha", ef)
        if "weights" in ev:
            kwargs["weights"] = tuple(_weights(graph, ev["weights"], f"{ef}.weights"))
        try:
            out.append(MapEvent(**kwargs))
        except ErgoswarmError as exc:
            raise ConfigError(ef, str(exc)) from None
    try:
        return MapSchedule(tuple(out))
    except ErgoswarmError as exc:
        raise ConfigError(f, str(exc)) from None


def _radius(sec: dict, key: str, where: str, default: float) -> float:
    val = sec.get(key, default)
    if val in ("global", "inf", math.inf):
        return math.inf
    return _num(sec, key, where, default=default, lo=0.0)


def parse_config(raw: dict, source_text: str = "") -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    _reject_unknown(raw, set(SECTIONS), "<root>")

    w = _section(raw, "world")
    _reject_unknown(w, _KEYS["world"], "world")
    width = _num(w, "width", "world", kind=int, lo=1)
    height = _num(w, "height", "world", kind=int, lo=1)
    probe = build_grid(width, height)
    nofly = _cells(probe, w.get("nofly") or [], "world.nofly")
    try:
        graph = build_grid(width, height, nofly)
    except ErgoswarmError as exc:
        raise ConfigError("world.nofly", str(exc)) from None
    weights = _weights(graph, w.get("weights", {"background": 1.0}), "world.weights")
    schedule = _schedule(graph, w.get("schedule"), "world.schedule")

    s = _section(raw, "swarm")
    _reject_unknown(s, _KEYS["swarm"], "swarm")
    agents = _num(s, "agents", "swarm", default=1, kind=int, lo=1)
    planner = s.get("planner", "ergodic")
    planners = planner if isinstance(planner, list) else [planner]
    for i, p in enumerate(planners):
        if p not in {k.value for k in PlannerKind}:
            raise ConfigError("swarm.planner", f"unknown planner {p!r}")
    if len(planners) not in (1, agents):
        raise ConfigError("swarm.planner", "give one planner or one per agent")
    init = s.get("initial_positions")
    if init is not None:
        init = tuple(_cells(graph, init, "swarm.initial_positions"))
        if len(init) != agents:
            raise ConfigError("swarm.initial_positions", f"expected {agents} positions")
        for r in init:
            if not graph.accessible[r]:
                raise ConfigError("swarm.initial_positions", f"cell {list(graph.cell(r))} is a no-fly region")
    t_final = _num(s, "t_final", "swarm", kind=int, lo=1)
    swarm = SwarmConfig(
        agents=agents,
        r_sense=_num(s, "r_sense", "swarm", default=0.0, lo=0.0),
        r_comm=_radius(s, "r_comm", "swarm", 1.0),
        tau_gp=_num(s, "tau_gp", "swarm", default=1, kind=int, lo=1),
        tau_p=_num(s, "tau_p", "swarm", default=1, kind=int, lo=1),
        t_final=t_final,
        beta=_num(s, "beta", "swarm", default=2.0, lo=0.0),
        initial_positions=init,
        planners=tuple(PlannerKind(p) for p in planners),
    )
    late = [t for t in schedule.times if t > t_final]
    if late:
        raise ConfigError("world.schedule", f"event times {late} beyond swarm.t_final={t_final}")

    b = _section(raw, "belief", required=False)
    _reject_unknown(b, _KEYS["belief"], "belief")
    kernel = KernelParams(
        lengthscale=_num(b, "lengthscale", "belief", default=1.0, lo=0.0, lo_strict=True),
        signal_variance=_num(b, "signal_variance", "belief", default=1.0, lo=0.0, lo_strict=True),
        noise_variance=_num(b, "noise_variance", "belief", default=0.01, lo=0.0),
        prior_mean=_num(b, "prior_mean", "belief", default=0.0),
    )
    belief = BeliefConfig(
        kernel=kernel,
        eps=_num(b, "eps", "belief", default=1e-6, lo=0.0, lo_strict=True),
        n_max=_num(b, "n_max", "belief", default=2000, kind=int, lo=0),
        noise_std=_num(b, "noise_std", "belief", default=0.1, lo=0.0),
    )

    p = _section(raw, "policy", required=False)
    _reject_unknown(p, _KEYS["policy"], "policy")
    mode = p.get("mode", "metropolis")
    if mode not in {m.value for m in PolicyMode}:
        raise ConfigError("policy.mode", f"unknown mode {mode!r} (metropolis, fast-mixing)")
    policy = PolicyConfig(
        mode=PolicyMode(mode),
        slem_tol=_num(p, "slem_tol", "policy", default=1e-9, lo=0.0, lo_strict=True),
        slem_max_iters=_num(p, "slem_max_iters", "policy", default=50, kind=int, lo=0),
    )

    r = _section(raw, "run", required=False)
    _reject_unknown(r, _KEYS["run"], "run")
    seeds = r.get("seeds", [0])
    if isinstance(seeds, int) and not isinstance(seeds, bool):
        if seeds < 1:
            raise ConfigError("run.seeds", "seed count must be >= 1")
        seeds = list(range(seeds))
    if not (isinstance(seeds, list) and seeds and all(isinstance(x, int) and not isinstance(x, bool) for x in seeds)):
        raise ConfigError("run.seeds", "expected a seed count or a nonempty list of integers")
    compare = r.get("compare") or []
    if not isinstance(compare, list):
        raise ConfigError("run.compare", "expected a list of variants")
    for i, variant in enumerate(compare):
        if not isinstance(variant, dict) or "label" not in variant:
            raise ConfigError(f"run.compare[{i}]", "each variant needs a label")
        _reject_unknown(variant, {"label"} | _KEYS["swarm"], f"run.compare[{i}]")
    run = RunSettings(
        seeds=tuple(seeds),
        output_dir=str(r.get("output_dir", "runs/default")),
        trajectory=bool(r.get("trajectory", False)),
        debug=bool(r.get("debug", False)),
        workers=_num(r, "workers", "run", default=1, kind=int, lo=1),
        compare=tuple(compare),
    )

    if "roi_cells" in w:
        groups = w["roi_cells"]
        if not isinstance(groups, list):
            raise ConfigError("world.roi_cells", "expected a list of cell lists")
        rois = tuple(tuple(_cells(graph, g, f"world.roi_cells[{i}]")) for i, g in enumerate(groups))
    else:
        q = _num(w, "roi_quantile", "world", default=0.9, lo=0.0)
        if q > 1:
            raise ConfigError("world.roi_quantile", "must lie in [0, 1]")
        rois = tuple(tuple(g) for g in rois_from_threshold(weights, graph, q))

    return ExperimentConfig(
        graph=graph,
        info=InfoMap(weights),
        schedule=schedule,
        swarm=swarm,
        belief=belief,
        policy=policy,
        run=run,
        rois=rois,
        raw=copy.deepcopy(raw),
        source_text=source_text,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML: {exc}") from None
    return parse_config(raw, text)


def set_path(raw: dict, dotted: str, value: Any) -> dict:
    """Copy of ``raw`` with ``dotted`` (e.g. ``swarm.tau_gp``) set to ``value``.

    ``swarm.tau`` (or ``tau``) sets both update periods at once.
    """
    out = copy.deepcopy(raw)
    if dotted in ("tau", "swarm.tau"):
        out.setdefault("swarm", {})["tau_gp"] = value
        out["swarm"]["tau_p"] = value
        return out
    parts = dotted.split(".")
    if len(parts) < 2 or parts[0] not in SECTIONS:
        raise ConfigError(dotted, "sweep axis must be a dotted path like swarm.r_comm")
    node = out
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(dotted, "path does not lead to a mapping")
    node[parts[-1]] = value
    return out
