"""Decentralized ergodic coverage of unknown, time-varying information maps."""

from .baselines import PlannerKind, greedy_step, uniform_step
from .belief import (
    BeliefMap,
    Dataset,
    GPPosterior,
    KernelParams,
    Observation,
    fit_posterior,
    gp_ucb,
    normalize_belief,
    ucb_map,
)
from .engine import AgentState, BeliefConfig, StepRecord, Swarm, SwarmConfig, run
from .policy import (
    PolicyConfig,
    PolicyMode,
    fast_mixing_chain,
    metropolis_chain,
    sample_next,
    slem,
    stationary,
)
from .world import (
    EnvironmentGraph,
    InfoMap,
    MapEvent,
    MapSchedule,
    ball,
    build_grid,
    step_map,
    target_distribution,
)

__version__ = "0.1.0"
