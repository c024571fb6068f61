"""Synchronous multi-agent loop: move, sense, share, refit beliefs, rebuild policies.

Time indexing: record ``k`` describes positions ``x_k``, the true map at ``k``,
visit counts over ``x_0..x_k`` and beliefs after any refit at ``k``. Step ``k``
(for ``k >= 1``) first samples ``x_k`` from the policy held at ``k - 1``, then
advances the true map, senses it, shares observations and, on schedule, refits
and rebuilds. Step 0 only initializes (uniform belief, policy built from it).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import baselines
from .baselines import PlannerKind
from .belief import BeliefMap, Dataset, KernelParams, Observation, gp_ucb
from .errors import ErgoswarmError, SimulationError
from .policy import PolicyConfig, build_policy, column_cdf, sample_next
from .world import EnvironmentGraph, InfoMap, MapSchedule, ball, step_map, target_distribution

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BeliefConfig:
    kernel: KernelParams = KernelParams()
    eps: float = 1e-6
    n_max: int = 2000
    noise_std: float = 0.1

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be > 0")
        if self.n_max < 0:
            raise ValueError("n_max must be >= 0")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


@dataclass(frozen=True)
class SwarmConfig:
    agents: int = 1
    r_sense: float = 0.0
    r_comm: float = 1.0
    tau_gp: int = 1
    tau_p: int = 1
    t_final: int = 1000
    beta: float = 2.0
    initial_positions: tuple[int, ...] | None = None
    seed: int = 0
    planners: tuple[PlannerKind, ...] = (PlannerKind.ERGODIC,)

    def __post_init__(self):
        if self.agents < 1:
            raise ValueError("agents must be >= 1")
        if self.tau_gp < 1 or self.tau_p < 1:
            raise ValueError("update periods must be >= 1")
        if self.t_final < 1:
            raise ValueError("t_final must be >= 1")
        if self.r_sense < 0 or self.r_comm < 0:
            raise ValueError("radii must be >= 0")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        planners = tuple(PlannerKind(p) for p in self.planners)
        if len(planners) == 1:
            planners = planners * self.agents
        if len(planners) != self.agents:
            raise ValueError("need one planner or one planner per agent")
        object.__setattr__(self, "planners", planners)
        if self.initial_positions is not None:
            pos = tuple(int(p) for p in self.initial_positions)
            if len(pos) != self.agents:
                raise ValueError("need one initial position per agent")
            object.__setattr__(self, "initial_positions", pos)


@dataclass
class AgentState:
    id: int
    position: int
    dataset: Dataset
    belief: BeliefMap
    policy: np.ndarray
    visit_counts: np.ndarray
    rng: np.random.Generator
    planner: PlannerKind = PlannerKind.ERGODIC
    policy_cdf: np.ndarray | None = field(default=None, repr=False)

    def empirical(self, k: int) -> np.ndarray:
        return self.visit_counts / (k + 1)


@dataclass(frozen=True)
class StepRecord:
    k: int
    positions: tuple[int, ...]
    team_empirical: np.ndarray
    team_belief: np.ndarray
    true_target: np.ndarray
    beliefs: tuple[np.ndarray, ...]


def agent_rng(seed: int, agent_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0, agent_id)))


def init_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))


def sense(
    graph: EnvironmentGraph,
    info: InfoMap,
    agent: AgentState,
    k: int,
    noise_std: float,
    r_sense: float,
    rng: np.random.Generator,
    cells: np.ndarray | None = None,
) -> list[Observation]:
    """Noisy samples of the true weight at every region in the sensing ball."""
    if cells is None:
        cells = ball(graph, agent.position, r_sense)
    values = info.weights[cells]
    if noise_std > 0:
        values = values + rng.normal(0.0, noise_std, size=cells.size)
    return [Observation(int(r), float(v), k, agent.id) for r, v in zip(cells, values)]


def neighbor_sets(graph: EnvironmentGraph, positions: Sequence[int], r_comm: float) -> list[set[int]]:
    xy = graph.coords[np.asarray(positions, dtype=np.intp)]
    d = np.sqrt(((xy[:, None, :] - xy[None, :, :]) ** 2).sum(axis=-1))
    within = d <= r_comm
    np.fill_diagonal(within, False)
    return [set(np.flatnonzero(row).tolist()) for row in within]


def comm_neighbors(graph: EnvironmentGraph, agents: Sequence[AgentState], m: int, r_comm: float) -> set[int]:
    """Indices of agents within ``r_comm`` of agent index ``m`` (excluding ``m``)."""
    return neighbor_sets(graph, [a.position for a in agents], r_comm)[m]


def exchange(agents: Sequence[AgentState], observations: Sequence[list[Observation]], neighbors: Sequence[set[int]]) -> None:
    """Single-hop exchange of this step's observations.

    Each agent appends its own and its direct neighbors' current observations,
    in agent-index order, so agents with the same neighborhood append identical data.
    """
    for m, agent in enumerate(agents):
        for mu in sorted(neighbors[m] | {m}):
            agent.dataset.extend(observations[mu])


class Swarm:
    """One simulation run. Call :meth:`step` until :attr:`done`."""

    def __init__(
        self,
        graph: EnvironmentGraph,
        info: InfoMap,
        schedule: MapSchedule,
        swarm: SwarmConfig,
        belief: BeliefConfig = BeliefConfig(),
        policy: PolicyConfig = PolicyConfig(),
    ):
        schedule.validate_horizon(swarm.t_final)
        self.graph = graph
        self.schedule = schedule
        self.cfg = swarm
        self.belief_cfg = belief
        self.policy_cfg = policy
        self.k = 0
        self.info = info
        self.target = target_distribution(info, graph)
        self._balls: dict[int, np.ndarray] = {}

        positions = self._initial_positions()
        prior_ucb = belief.kernel.prior_mean + swarm.beta * math.sqrt(belief.kernel.signal_variance)
        uniform = BeliefMap(
            np.full(graph.n_regions, prior_ucb),
            np.where(graph.accessible, 1.0 / graph.n_accessible, 0.0),
        )
        P0 = build_policy(graph, uniform.rho, policy)
        cdf0 = column_cdf(P0)
        self._policy_source: dict[int, BeliefMap] = {}
        self.agents = []
        for m in range(swarm.agents):
            counts = np.zeros(graph.n_regions, dtype=np.int64)
            counts[positions[m]] += 1
            self.agents.append(
                AgentState(
                    id=m,
                    position=positions[m],
                    dataset=Dataset(n_max=belief.n_max),
                    belief=uniform,
                    policy=P0,
                    visit_counts=counts,
                    rng=agent_rng(swarm.seed, m),
                    planner=swarm.planners[m],
                    policy_cdf=cdf0,
                )
            )
            self._policy_source[m] = uniform
        self.team_counts = np.bincount(positions, minlength=graph.n_regions).astype(np.int64)

    def _initial_positions(self) -> list[int]:
        g = self.graph
        if self.cfg.initial_positions is not None:
            pos = list(self.cfg.initial_positions)
            for p in pos:
                if not (0 <= p < g.n_regions and g.accessible[p]):
                    raise ValueError(f"initial position {p} is not an accessible region")
            return pos
        acc = g.accessible_ids
        rng = init_rng(self.cfg.seed)
        replace = self.cfg.agents > acc.size
        return [int(r) for r in rng.choice(acc, size=self.cfg.agents, replace=replace)]

    @property
    def done(self) -> bool:
        return self.k >= self.cfg.t_final - 1

    def _ball(self, center: int) -> np.ndarray:
        cells = self._balls.get(center)
        if cells is None:
            cells = self._balls[center] = ball(self.graph, center, self.cfg.r_sense)
        return cells

    def record(self) -> StepRecord:
        beliefs = tuple(a.belief.rho for a in self.agents)
        M = len(self.agents)
        team_belief = beliefs[0] if M == 1 else np.mean(beliefs, axis=0)
        return StepRecord(
            k=self.k,
            positions=tuple(a.position for a in self.agents),
            team_empirical=self.team_counts / (M * (self.k + 1)),
            team_belief=team_belief,
            true_target=self.target,
            beliefs=beliefs,
        )

    def _move(self, agent: AgentState) -> int:
        if agent.planner is PlannerKind.ERGODIC:
            return sample_next(agent.policy, agent.position, agent.rng, agent.policy_cdf)
        if agent.planner is PlannerKind.GREEDY:
            return baselines.greedy_step(agent, self.graph)
        return baselines.uniform_step(agent, self.graph, agent.rng)

    def step(self) -> StepRecord:
        if self.done:
            raise RuntimeError("run already reached t_final")
        k = self.k + 1
        try:
            self._advance(k)
        except ErgoswarmError as exc:
            raise SimulationError(k, exc) from exc
        return self.record()

    def _advance(self, k: int) -> None:
        g, cfg = self.graph, self.cfg
        for agent in self.agents:
            agent.position = self._move(agent)
            agent.visit_counts[agent.position] += 1
            self.team_counts[agent.position] += 1
        self.k = k

        info = step_map(self.info, self.schedule, k, g)
        if info is not self.info:
            self.info = info
            self.target = target_distribution(info, g)
            log.debug("map changed at k=%d", k)

        noise = self.belief_cfg.noise_std
        observations = [
            sense(g, self.info, a, k, noise, cfg.r_sense, a.rng, self._ball(a.position)) for a in self.agents
        ]
        nbrs = neighbor_sets(g, [a.position for a in self.agents], cfg.r_comm)
        exchange(self.agents, observations, nbrs)

        if k % cfg.tau_gp == 0:
            for agent in self.agents:
                agent.belief = gp_ucb(agent.dataset, self.belief_cfg.kernel, cfg.beta, g, self.belief_cfg.eps)
        if k % cfg.tau_p == 0:
            for agent in self.agents:
                if agent.planner is not PlannerKind.ERGODIC:
                    continue
                # Rebuilding from an unchanged belief would reproduce the same matrix.
                if self._policy_source[agent.id] is agent.belief:
                    continue
                agent.policy = build_policy(g, agent.belief.rho, self.policy_cfg)
                agent.policy_cdf = column_cdf(agent.policy)
                self._policy_source[agent.id] = agent.belief


def run(
    graph: EnvironmentGraph,
    info: InfoMap,
    schedule: MapSchedule,
    swarm: SwarmConfig,
    belief: BeliefConfig = BeliefConfig(),
    policy: PolicyConfig = PolicyConfig(),
    sink: Callable[[StepRecord], None] | None = None,
) -> list[StepRecord]:
    """Run to ``t_final`` and return all records (``k = 0 .. t_final - 1``)."""
    sim = Swarm(graph, info, schedule, swarm, belief, policy)
    records = [sim.record()]
    if sink:
        sink(records[0])
    while not sim.done:
        rec = sim.step()
        records.append(rec)
        if sink:
            sink(rec)
    return records


def iter_run(sim: Swarm) -> Iterable[StepRecord]:
    yield sim.record()
    while not sim.done:
        yield sim.step()
