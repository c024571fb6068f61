from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import power_iteration, random_grid, random_target, slem_dense

from ergoswarm.errors import NoConvergence, NotReversible, ZeroBeliefMass
from ergoswarm.policy import (
    PolicyConfig,
    PolicyMode,
    build_policy,
    column_cdf,
    fast_mixing_chain,
    metropolis_chain,
    sample_next,
    slem,
    stationary,
)
from ergoswarm.world import build_grid

FAST = PolicyConfig(mode=PolicyMode.FAST_MIXING)


def detailed_balance_gap(P, rho, graph):
    return max((abs(rho[i] * P[j, i] - rho[j] * P[i, j]) for i, j in graph.edges), default=0.0)


def check_sparsity(P, graph):
    allowed = graph.adjacency().astype(bool) | np.diag(graph.accessible)
    assert np.all(P[~allowed] == 0)
    assert np.all(P[~graph.accessible] == 0) and np.all(P[:, ~graph.accessible] == 0)


def test_cycle_uniform_metropolis():
    g = build_grid(2, 2)  # the 4-cycle
    P = metropolis_chain(g, np.full(4, 0.25))
    expected = np.array(
        [
            [0.0, 0.5, 0.5, 0.0],
            [0.5, 0.0, 0.0, 0.5],
            [0.5, 0.0, 0.0, 0.5],
            [0.0, 0.5, 0.5, 0.0],
        ]
    )
    np.testing.assert_allclose(P, expected)
    np.testing.assert_allclose(P @ np.full(4, 0.25), 0.25)
    # bipartite with no self-loops, so the chain is periodic
    with pytest.raises(NoConvergence):
        stationary(P, max_iter=10_000)
    assert slem(P, np.full(4, 0.25)) == pytest.approx(slem_dense(P, np.full(4, 0.25)), abs=1e-12)


def test_two_node_path():
    g = build_grid(2, 1)
    rho = np.array([2 / 3, 1 / 3])
    P = metropolis_chain(g, rho)
    # d_max = 1, so the proposal is 1 and the acceptance from node 0 is 1/2
    np.testing.assert_allclose(P, [[0.5, 1.0], [0.5, 0.0]])
    np.testing.assert_allclose(stationary(P), rho, atol=1e-12)
    np.testing.assert_allclose(power_iteration(P), rho, atol=1e-12)


def test_zero_mass_rejected():
    g = build_grid(3, 1)
    with pytest.raises(ZeroBeliefMass):
        metropolis_chain(g, np.array([0.5, 0.5, 0.0]))
    with pytest.raises(ZeroBeliefMass):
        fast_mixing_chain(g, np.array([0.5, 0.5, 0.0]), FAST)


def test_nofly_rows_and_columns_are_zero():
    g = build_grid(3, 3, nofly=[4])
    rho = random_target(np.random.default_rng(0), g)
    for P in (metropolis_chain(g, rho), fast_mixing_chain(g, rho, FAST)):
        check_sparsity(P, g)


def test_fast_mixing_zero_iterations_is_metropolis():
    g = build_grid(3, 3)
    rho = random_target(np.random.default_rng(1), g)
    P = fast_mixing_chain(g, rho, PolicyConfig(mode="fast-mixing", slem_max_iters=0))
    np.testing.assert_array_equal(P, metropolis_chain(g, rho))


def test_fast_mixing_improves_path():
    g = build_grid(3, 1)
    rho = np.full(3, 1 / 3)
    Pm, Pf = metropolis_chain(g, rho), fast_mixing_chain(g, rho, FAST)
    assert slem_dense(Pf, rho) <= slem_dense(Pm, rho) + 1e-12
    assert np.abs(Pf @ rho - rho).sum() <= 1e-9


def test_fast_mixing_strictly_improves_grid():
    g = build_grid(4, 4)
    rho = random_target(np.random.default_rng(2), g)
    assert slem(fast_mixing_chain(g, rho, FAST), rho) < slem(metropolis_chain(g, rho), rho) - 1e-3


def test_slem_examples():
    rho = np.array([0.5, 0.5])
    assert slem(np.full((2, 2), 0.5), rho) == pytest.approx(0.0, abs=1e-12)
    assert slem(np.eye(2), rho) == pytest.approx(1.0, abs=1e-12)


def test_slem_rejects_irreversible():
    P = np.array([[0.1, 0.6, 0.3], [0.3, 0.1, 0.6], [0.6, 0.3, 0.1]])
    with pytest.raises(NotReversible):
        slem(P, np.array([0.2, 0.3, 0.5]))


def test_stationary_doubly_stochastic_is_uniform():
    P = np.array([[0.2, 0.5, 0.3], [0.5, 0.3, 0.2], [0.3, 0.2, 0.5]])
    np.testing.assert_allclose(stationary(P), 1 / 3, atol=1e-12)


def test_stationary_permutation_does_not_converge():
    P = np.roll(np.eye(4), 1, axis=0)
    with pytest.raises(NoConvergence):
        stationary(P, max_iter=1000)


def test_sample_point_mass():
    P = np.array([[0.0, 0.0], [1.0, 1.0]])
    rng = np.random.default_rng(0)
    assert all(sample_next(P, 0, rng) == 1 for _ in range(100))


def test_sample_frequencies_match_column():
    g = build_grid(3, 3)
    rho = random_target(np.random.default_rng(4), g)
    P = metropolis_chain(g, rho)
    cdf = column_cdf(P)
    rng = np.random.default_rng(5)
    n = 100_000
    draws = np.array([sample_next(P, 4, rng, cdf) for _ in range(n)])
    freq = np.bincount(draws, minlength=9) / n
    p = P[:, 4]
    sigma = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(freq - p) <= 3 * sigma + 1e-12)
    assert set(np.flatnonzero(freq)) <= set(g.neighbors(4)) | {4}
    # chi-square against the column over its support
    support = p > 0
    chi2 = n * np.sum((freq[support] - p[support]) ** 2 / p[support])
    assert chi2 < 20.5  # 99.9% quantile for 4 degrees of freedom is 18.5


def test_sampling_reproducible():
    P = metropolis_chain(build_grid(3, 3), np.full(9, 1 / 9))
    a = [sample_next(P, 4, np.random.default_rng(9)) for _ in range(5)]
    b = [sample_next(P, 4, np.random.default_rng(9)) for _ in range(5)]
    assert a == b


def test_long_walk_matches_target():
    g = build_grid(5, 5, nofly=[12, 13])
    rho = random_target(np.random.default_rng(6), g)
    P = fast_mixing_chain(g, rho, FAST)
    cdf = column_cdf(P)
    rng = np.random.default_rng(7)
    counts = np.zeros(25)
    x = int(g.accessible_ids[0])
    for _ in range(100_000):
        x = sample_next(P, x, rng, cdf)
        counts[x] += 1
    assert np.abs(counts / counts.sum() - rho).sum() < 0.05


def test_scaling_target_by_power_of_two_is_bitwise_stable():
    g = build_grid(4, 3, nofly=[5])
    rho = random_target(np.random.default_rng(8), g)
    for mode in PolicyMode:
        cfg = PolicyConfig(mode=mode)
        a = build_policy(g, rho, cfg)
        scaled = rho * 8.0
        b = build_policy(g, scaled / scaled.sum(), cfg)
        assert a.tobytes() == b.tobytes()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_chains_reversible_and_stochastic(seed):
    rng = np.random.default_rng(seed)
    g = random_grid(rng)
    rho = random_target(rng, g)
    Pm = metropolis_chain(g, rho)
    Pf = fast_mixing_chain(g, rho, PolicyConfig(mode="fast-mixing", slem_max_iters=20))
    for P in (Pm, Pf):
        check_sparsity(P, g)
        assert np.all(P >= 0)
        np.testing.assert_allclose(P[:, g.accessible].sum(axis=0), 1.0, atol=1e-12)
        assert detailed_balance_gap(P, rho, g) <= 1e-12
        assert np.abs(P @ rho - rho).sum() <= 1e-9
    assert slem(Pf, rho) <= slem(Pm, rho) + 1e-9
    assert slem(Pm, rho) == pytest.approx(slem_dense(Pm, rho), abs=1e-9)
