"""Comparison planners that plug into the swarm engine in place of the ergodic chain.

``GREEDY`` is a one-step GP-UCB hill climber standing in for a greedy
coverage planner; ``UNIFORM`` is a lazy uniform random walk used as a control.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .world import EnvironmentGraph


class PlannerKind(str, Enum):
    ERGODIC = "ergodic"
    GREEDY = "greedy"
    UNIFORM = "uniform"


def _options(graph: EnvironmentGraph, x: int) -> list[int]:
    return sorted((x, *graph.neighbors(x)))


def greedy_step(agent, graph: EnvironmentGraph) -> int:
    """Move to the highest-UCB region among the current cell and its neighbors.

    Ties go to the lowest region id.
    """
    options = _options(graph, agent.position)
    phi = agent.belief.phi_ucb
    return options[int(np.argmax(phi[options]))]


def uniform_step(agent, graph: EnvironmentGraph, rng: np.random.Generator) -> int:
    options = _options(graph, agent.position)
    return options[int(rng.integers(len(options)))]
