"""Markov-chain policies with a prescribed stationary distribution.

Matrices are column-stochastic: ``P[j, i]`` is the probability of moving from
region ``i`` to region ``j``. Rows and columns of no-fly regions are zero.

A chain that is reversible with respect to ``rho`` on the graph is fully
described by symmetric edge flows ``q_ij = rho_i * P[j, i] = rho_j * P[i, j]``.
Any nonnegative flow vector with ``sum_j q_ij <= rho_i`` at every node yields a
valid chain (the slack becomes the self-loop), so the fast-mixing search runs
over flows and only has to enforce those inequalities.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import linalg

from .errors import NoConvergence, NotReversible, ZeroBeliefMass
from .world import EnvironmentGraph


class PolicyMode(str, Enum):
    METROPOLIS = "metropolis"
    FAST_MIXING = "fast-mixing"


@dataclass(frozen=True)
class PolicyConfig:
    mode: PolicyMode = PolicyMode.METROPOLIS
    slem_tol: float = 1e-9
    slem_max_iters: int = 100
    projection_sweeps: int = 50

    def __post_init__(self):
        object.__setattr__(self, "mode", PolicyMode(self.mode))
        if not self.slem_tol > 0:
            raise ValueError("slem_tol must be > 0")
        if self.slem_max_iters < 0:
            raise ValueError("slem_max_iters must be >= 0")


def _edge_array(graph: EnvironmentGraph) -> np.ndarray:
    edges = graph.edges
    return np.array(edges, dtype=np.intp).reshape(len(edges), 2)


def _check_target(graph: EnvironmentGraph, rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (graph.n_regions,):
        raise ValueError(f"target has shape {rho.shape}, expected ({graph.n_regions},)")
    acc = rho[graph.accessible]
    if np.any(~(acc > 0)):
        raise ZeroBeliefMass("target must be strictly positive on accessible regions")
    return rho


def metropolis_chain(graph: EnvironmentGraph, rho: np.ndarray) -> np.ndarray:
    """Metropolis-Hastings chain with uniform proposal ``1/d_max`` on graph neighbors."""
    rho = _check_target(graph, rho)
    n = graph.n_regions
    P = np.zeros((n, n))
    edges = _edge_array(graph)
    if len(edges):
        d_max = graph.max_degree()
        i, j = edges[:, 0], edges[:, 1]
        P[j, i] = np.minimum(1.0, rho[j] / rho[i]) / d_max
        P[i, j] = np.minimum(1.0, rho[i] / rho[j]) / d_max
    acc = graph.accessible_ids
    P[acc, acc] = 1.0 - P[:, acc].sum(axis=0)
    return P


def _flows_to_matrix(n: int, acc: np.ndarray, edges: np.ndarray, q: np.ndarray, rho: np.ndarray) -> np.ndarray:
    P = np.zeros((n, n))
    i, j = edges[:, 0], edges[:, 1]
    P[j, i] = q / rho[i]
    P[i, j] = q / rho[j]
    P[acc, acc] = np.maximum(1.0 - P[:, acc].sum(axis=0), 0.0)
    return P


class _FlowSpectrum:
    """SLEM and its subgradient as functions of edge flows on the accessible subgraph."""

    def __init__(self, graph: EnvironmentGraph, rho: np.ndarray, edges: np.ndarray):
        acc = graph.accessible_ids
        pos = np.full(graph.n_regions, -1)
        pos[acc] = np.arange(acc.size)
        self.a = pos[edges[:, 0]]
        self.b = pos[edges[:, 1]]
        r = rho[acc] / rho[acc].sum()
        self.r = r
        self.inv_sqrt = 1.0 / np.sqrt(r)
        self.top = np.sqrt(r)
        self.size = acc.size

    def symmetrized(self, q: np.ndarray) -> np.ndarray:
        a, b = self.a, self.b
        S = np.zeros((self.size, self.size))
        off = q * self.inv_sqrt[a] * self.inv_sqrt[b]
        S[a, b] = off
        S[b, a] = off
        out = np.bincount(a, weights=q, minlength=self.size) + np.bincount(b, weights=q, minlength=self.size)
        S[np.diag_indices(self.size)] = 1.0 - out / self.r
        return S

    def evaluate(self, q: np.ndarray) -> tuple[float, np.ndarray]:
        S = self.symmetrized(q) - np.outer(self.top, self.top)
        w, V = linalg.eigh(S, check_finite=False)
        if w[-1] >= -w[0]:
            value, u, sign = w[-1], V[:, -1], -1.0
        else:
            value, u, sign = -w[0], V[:, 0], 1.0
        proj = u[self.a] * self.inv_sqrt[self.a] - u[self.b] * self.inv_sqrt[self.b]
        return float(value), sign * proj**2


def _project_flows(q: np.ndarray, a: np.ndarray, b: np.ndarray, cap: np.ndarray, sweeps: int) -> np.ndarray:
    """Push ``q`` into ``{q >= 0, node sums <= cap}``.

    Alternating projection (halfspace per node, then clipping) for ``sweeps``
    rounds, stopping early once every node is within ``1e-3`` of its cap
    (relative), followed by a scaling pass that guarantees feasibility exactly.
    """
    size = cap.size
    deg = np.bincount(a, minlength=size) + np.bincount(b, minlength=size)
    deg = np.maximum(deg, 1)
    q = np.maximum(q, 0.0)
    for _ in range(sweeps):
        s = np.bincount(a, weights=q, minlength=size) + np.bincount(b, weights=q, minlength=size)
        excess = np.maximum(s - cap, 0.0)
        if np.all(excess <= 1e-3 * cap):
            break
        share = excess / deg
        q = np.maximum(q - share[a] - share[b], 0.0)
    s = np.bincount(a, weights=q, minlength=size) + np.bincount(b, weights=q, minlength=size)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(s > cap, cap / s, 1.0)
    return q * np.minimum(factor[a], factor[b])


def fast_mixing_chain(graph: EnvironmentGraph, rho: np.ndarray, config: PolicyConfig = PolicyConfig()) -> np.ndarray:
    """Reversible chain with stationary ``rho`` and SLEM no worse than Metropolis.

    Projected subgradient descent on the SLEM over edge flows, started from the
    Metropolis chain. Returns the Metropolis chain itself when no iterate beats it.
    """
    base = metropolis_chain(graph, rho)
    edges = _edge_array(graph)
    if config.slem_max_iters == 0 or len(edges) == 0:
        return base
    rho = np.asarray(rho, dtype=float)
    acc = graph.accessible_ids
    spec = _FlowSpectrum(graph, rho, edges)
    r, a, b = spec.r, spec.a, spec.b

    q = np.minimum(r[a], r[b]) / graph.max_degree()
    base_slem, g = spec.evaluate(q)
    best_q, best_slem = None, base_slem
    step0 = float(q.max())
    for t in range(config.slem_max_iters):
        norm = np.linalg.norm(g)
        if norm == 0.0:
            break
        q = _project_flows(q - step0 / np.sqrt(t + 1.0) * g / norm, a, b, r, config.projection_sweeps)
        value, g = spec.evaluate(q)
        if value < best_slem:
            best_q, best_slem = q.copy(), value
    if best_q is None:
        return base

    r_full = np.zeros(graph.n_regions)
    r_full[acc] = r
    P = _flows_to_matrix(graph.n_regions, acc, edges, best_q, r_full)
    if np.abs(P @ r_full - r_full).sum() > 1e-9 or best_slem > base_slem + config.slem_tol:
        return base
    return P


def build_policy(graph: EnvironmentGraph, rho: np.ndarray, config: PolicyConfig) -> np.ndarray:
    if config.mode is PolicyMode.FAST_MIXING:
        return fast_mixing_chain(graph, rho, config)
    return metropolis_chain(graph, rho)


def _support(P: np.ndarray) -> np.ndarray:
    return np.flatnonzero(P.sum(axis=0) > 0)


def slem(P: np.ndarray, rho: np.ndarray, tol: float = 1e-9) -> float:
    """Second-largest eigenvalue magnitude of a chain reversible w.r.t. ``rho``."""
    rho = np.asarray(rho, dtype=float)
    idx = _support(P)
    Ps = P[np.ix_(idx, idx)]
    r = rho[idx] / rho[idx].sum()
    flow = Ps * r[None, :]
    if np.abs(flow - flow.T).max() > tol:
        raise NotReversible("detailed balance violated")
    sq = np.sqrt(r)
    S = Ps * sq[None, :] / sq[:, None]
    S = 0.5 * (S + S.T) - np.outer(sq, sq)
    w = linalg.eigvalsh(S, check_finite=False)
    return float(np.clip(max(w[-1], -w[0]), 0.0, 1.0))


def stationary(P: np.ndarray, tol: float = 1e-13, max_iter: int = 1_000_000) -> np.ndarray:
    """Stationary distribution by power iteration.

    Starts from a fixed generic (pseudo-random) vector on the chain's support so
    that periodic chains with a uniform fixed point are still detected.
    """
    idx = _support(P)
    Ps = P[np.ix_(idx, idx)]
    pi = np.random.default_rng(0).uniform(0.5, 1.5, idx.size)
    pi /= pi.sum()
    for _ in range(max_iter):
        nxt = Ps @ pi
        if np.abs(nxt - pi).sum() < tol:
            out = np.zeros(P.shape[0])
            out[idx] = nxt / nxt.sum()
            return out
        pi = nxt
    raise NoConvergence(f"power iteration did not converge in {max_iter} iterations")


def column_cdf(P: np.ndarray) -> np.ndarray:
    return np.cumsum(P, axis=0)


def sample_next(P: np.ndarray, x: int, rng: np.random.Generator, cdf: np.ndarray | None = None) -> int:
    """Draw the next region from column ``x``; pass ``cdf=column_cdf(P)`` to reuse work."""
    col = cdf[:, x] if cdf is not None else np.cumsum(P[:, x])
    j = int(np.searchsorted(col, rng.random() * col[-1], side="right"))
    if j >= col.size:
        j = int(np.flatnonzero(P[:, x])[-1])
    return j
