"""Grid environment graph, information maps and their scheduled evolution.

Regions are indexed row-major: region ``i`` sits at column ``i % width`` and
row ``i // width``. Coordinates are cell centers in cell units.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import AllBlocked, DisconnectedWorld, InvalidEvent, ZeroMass


@dataclass(frozen=True, eq=False)
class EnvironmentGraph:
    width: int
    height: int
    coords: np.ndarray  # (R, 2) cell centers, (x, y)
    neighbor_lists: tuple[tuple[int, ...], ...]
    nofly: frozenset[int]
    accessible: np.ndarray = field(repr=False)  # (R,) bool

    @property
    def n_regions(self) -> int:
        return self.width * self.height

    @property
    def accessible_ids(self) -> np.ndarray:
        return np.flatnonzero(self.accessible)

    @property
    def n_accessible(self) -> int:
        return int(self.accessible.sum())

    @property
    def edges(self) -> list[tuple[int, int]]:
        """Undirected edges as ``(i, j)`` pairs with ``i < j``."""
        return [(i, j) for i, nbrs in enumerate(self.neighbor_lists) for j in nbrs if i < j]

    def neighbors(self, region: int) -> tuple[int, ...]:
        return self.neighbor_lists[region]

    def degree(self, region: int) -> int:
        return len(self.neighbor_lists[region])

    def max_degree(self) -> int:
        return max(len(n) for n in self.neighbor_lists)

    def region(self, x: int, y: int) -> int:
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise ValueError(f"cell ({x}, {y}) outside {self.width}x{self.height} grid")
        return y * self.width + x

    def cell(self, region: int) -> tuple[int, int]:
        return region % self.width, region // self.width

    def adjacency(self) -> np.ndarray:
        """Dense symmetric 0/1 adjacency matrix (no self-loops)."""
        A = np.zeros((self.n_regions, self.n_regions))
        for i, j in self.edges:
            A[i, j] = A[j, i] = 1.0
        return A

    def diameter_length(self) -> float:
        """Euclidean length of the grid diagonal; any radius at least this is global."""
        return float(np.hypot(self.width - 1, self.height - 1))


def _grid_neighbors(width: int, height: int, i: int) -> Iterable[int]:
    x, y = i % width, i // width
    if y > 0:
        yield i - width
    if x > 0:
        yield i - 1
    if x < width - 1:
        yield i + 1
    if y < height - 1:
        yield i + width


def build_grid(width: int, height: int, nofly: Iterable[int] = ()) -> EnvironmentGraph:
    """Build a 4-connected grid graph with the given no-fly regions removed."""
    if width < 1 or height < 1:
        raise ValueError("grid dimensions must be >= 1")
    n = width * height
    blocked = frozenset(int(r) for r in nofly)
    bad = [r for r in blocked if not 0 <= r < n]
    if bad:
        raise ValueError(f"no-fly regions outside grid: {sorted(bad)}")
    if len(blocked) == n:
        raise AllBlocked("every cell is a no-fly region")

    accessible = np.ones(n, dtype=bool)
    accessible[list(blocked)] = False
    nbrs = []
    for i in range(n):
        if not accessible[i]:
            nbrs.append(())
            continue
        nbrs.append(tuple(j for j in _grid_neighbors(width, height, i) if accessible[j]))

    start = int(np.flatnonzero(accessible)[0])
    seen = {start}
    queue = deque([start])
    while queue:
        i = queue.popleft()
        for j in nbrs[i]:
            if j not in seen:
                seen.add(j)
                queue.append(j)
    if len(seen) != n - len(blocked):
        raise DisconnectedWorld(
            f"accessible regions split into components ({len(seen)} of {n - len(blocked)} reachable)"
        )

    idx = np.arange(n)
    coords = np.column_stack([idx % width + 0.5, idx // width + 0.5]).astype(float)
    coords.setflags(write=False)
    accessible.setflags(write=False)
    return EnvironmentGraph(width, height, coords, tuple(nbrs), blocked, accessible)


def ball(graph: EnvironmentGraph, center: int, delta: float) -> np.ndarray:
    """Accessible regions within Euclidean distance ``delta`` of ``center`` (sorted ids)."""
    d = np.linalg.norm(graph.coords - graph.coords[center], axis=1)
    inside = (d <= delta) & graph.accessible
    inside[center] = True
    return np.flatnonzero(inside)


@dataclass(frozen=True, eq=False)
class InfoMap:
    """Per-region nonnegative weights. No-fly regions may carry weight; it is ignored."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1:
            raise ValueError("weights must be one-dimensional")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


def target_distribution(info: InfoMap, graph: EnvironmentGraph) -> np.ndarray:
    w = np.where(graph.accessible, info.weights, 0.0)
    total = w.sum()
    if not total > 0:
        raise ZeroMass("information map has no mass on accessible regions")
    return w / total


class EventKind(str, Enum):
    RELOCATE = "relocate"
    EXPAND = "expand"
    REPLACE = "replace"


@dataclass(frozen=True)
class MapEvent:
    time: int
    kind: EventKind
    source: tuple[int, ...] = ()
    dest: tuple[int, ...] = ()
    alpha: float = 1.0
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", EventKind(self.kind))
        if self.time < 1:
            raise InvalidEvent("event times start at 1")
        if self.kind is EventKind.EXPAND and not 0 < self.alpha <= 1:
            raise InvalidEvent(f"spread fraction must lie in (0, 1], got {self.alpha}")
        if self.kind is EventKind.REPLACE and self.weights is None:
            raise InvalidEvent("replace event needs a weight vector")
        if self.kind is EventKind.RELOCATE and not (self.source and self.dest):
            raise InvalidEvent("relocate event needs source and destination cells")
        if self.kind is EventKind.EXPAND and not self.source:
            raise InvalidEvent("expand event needs source cells")


@dataclass(frozen=True)
class MapSchedule:
    events: tuple[MapEvent, ...] = ()

    def __post_init__(self):
        events = tuple(self.events)
        times = [e.time for e in events]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidEvent("event times must be strictly increasing")
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "_by_time", {e.time: e for e in events})

    @property
    def times(self) -> list[int]:
        return [e.time for e in self.events]

    def at(self, k: int) -> MapEvent | None:
        return self._by_time.get(k)

    def validate_horizon(self, horizon: int) -> None:
        late = [t for t in self.times if t > horizon]
        if late:
            raise InvalidEvent(f"event times {late} beyond horizon {horizon}")


def apply_event(info: InfoMap, event: MapEvent, graph: EnvironmentGraph) -> InfoMap:
    w = info.weights.copy()
    if event.kind is EventKind.RELOCATE:
        if any(not graph.accessible[r] for r in event.dest):
            raise InvalidEvent("relocation destination includes no-fly regions")
        src = list(set(event.source))
        dest = list(event.dest)
        moved = w[src].sum()
        w[src] = 0.0
        np.add.at(w, dest, moved / len(dest))
    elif event.kind is EventKind.EXPAND:
        base = info.weights
        for r in sorted(set(event.source)):
            for j in graph.neighbors(r):
                w[j] += event.alpha * base[r]
    else:
        new = np.asarray(event.weights, dtype=float)
        if new.shape != w.shape:
            raise InvalidEvent(f"replacement has {new.size} weights, grid has {w.size}")
        w = new
    return InfoMap(w)


def step_map(info: InfoMap, schedule: MapSchedule, k: int, graph: EnvironmentGraph) -> InfoMap:
    """Map at step ``k`` given the map at ``k - 1``."""
    if k < 1:
        raise ValueError("map steps start at k = 1")
    event = schedule.at(k)
    if event is None:
        return info
    return apply_event(info, event, graph)


def blob_weights(
    graph: EnvironmentGraph,
    center: Sequence[float],
    sigma: float,
    peak: float,
) -> np.ndarray:
    """Gaussian bump of height ``peak`` centred at cell coordinates ``center``."""
    c = np.asarray(center, dtype=float) + 0.5
    d2 = ((graph.coords - c) ** 2).sum(axis=1)
    return peak * np.exp(-d2 / (2.0 * sigma**2))
