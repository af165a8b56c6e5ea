"""
Unit tests for robustsbm.sbm: parameters, graphs, samplers and adversaries.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.stats import chisquare, poisson

from robustsbm.errors import (
    BudgetInfeasibleError,
    InvalidParameterError,
    InvalidProbabilityError,
    ShapeError,
    UnknownStrategyError,
)
from robustsbm.sbm import (
    AdversaryBudget,
    Graph,
    Partition,
    SbmParams,
    apply_monotone_adversary,
    apply_outlier_adversary,
    classify_edges,
    count_within_between,
    estimate_degree_params,
    flatten_to_simple,
    flattened_params,
    floor_budget,
    permute_vertices,
    sample_poisson_sbm,
    sample_sbm,
)


###############################################################################
# parameters and containers
###############################################################################
def test_params_derived_quantities() -> None:
    p = SbmParams(n=100, k=2, a=10, b=2)
    assert p.N == 200
    assert p.m == pytest.approx(1200.0)
    assert p.expected_edges == pytest.approx(990.0 + 200.0)
    assert p.degree_sum == pytest.approx(12.0)


@pytest.mark.parametrize("kwargs", [
    {"n": 10, "k": 2, "a": 1, "b": 2},
    {"n": 0, "k": 2, "a": 1, "b": 0},
    {"n": 10, "k": 0, "a": 1, "b": 0},
    {"n": 10, "k": 2, "a": 1, "b": -1},
])
def test_params_reject_invalid(kwargs) -> None:
    with pytest.raises(InvalidParameterError):
        SbmParams(**kwargs)


def test_graph_from_edges_canonicalises_and_validates() -> None:
    g = Graph.from_edges(4, [(2, 0), (1, 3), (0, 1)])
    assert g.pairs.tolist() == [[0, 1], [0, 2], [1, 3]]
    assert g.edge_count == 3
    with pytest.raises(InvalidParameterError):
        Graph.from_edges(4, [(1, 1)])
    with pytest.raises(InvalidParameterError):
        Graph.from_edges(4, [(0, 4)])
    with pytest.raises(InvalidParameterError):
        Graph.from_edges(4, [(0, 1), (1, 0)], simple=True)

    multi = Graph.from_edges(4, [(0, 1), (1, 0)], simple=False)
    assert multi.multiplicity.tolist() == [2]
    assert multi.edge_count == 2


def test_partition_balanced_check() -> None:
    p = Partition.planted(3, 2)
    assert p.labels.tolist() == [0, 0, 0, 1, 1, 1]
    assert p.n == 3
    with pytest.raises(ShapeError):
        Partition(np.array([0, 0, 0, 1]), 2, balanced=True)
    unbalanced = Partition(np.array([0, 0, 0, 1]), 2, balanced=False)
    assert unbalanced.sizes().tolist() == [3, 1]


def test_budget_invariants() -> None:
    with pytest.raises(InvalidParameterError):
        AdversaryBudget(epsilon=0.1, epsilon1=0.08, epsilon2=0.05)
    b = AdversaryBudget.split(0.05)
    assert b.epsilon1 + b.epsilon2 == pytest.approx(0.05)
    # 0.05 * 1200 must floor to 60, not 59
    assert AdversaryBudget(epsilon=0.05, epsilon1=0.05).outlier_caps(1200.0) == (60, 0)
    assert floor_budget(59.9999999999) == 60


###############################################################################
# samplers
###############################################################################
def test_zero_probabilities_give_empty_graph() -> None:
    g, planted = sample_sbm(SbmParams(3, 2, 0, 0), seed=123)
    assert g.vertex_count == 6
    assert g.pair_count == 0
    assert planted == Partition.planted(3, 2)


def test_probability_one_gives_complete_graph() -> None:
    g, _ = sample_sbm(SbmParams(2, 2, 2, 2), seed=5)
    assert g.pair_count == 6


def test_probability_above_one_rejected() -> None:
    with pytest.raises(InvalidProbabilityError):
        sample_sbm(SbmParams(2, 2, 3, 0), seed=0)


def test_sampler_is_reproducible() -> None:
    params = SbmParams(50, 3, 8, 2)
    g1, _ = sample_sbm(params, seed=42)
    g2, _ = sample_sbm(params, seed=42)
    g3, _ = sample_sbm(params, seed=43)
    assert g1 == g2
    assert g1 != g3


def test_mean_edge_count_matches_expectation() -> None:
    params = SbmParams(100, 2, 10, 2)
    counts = np.array([sample_sbm(params, seed=s)[0].edge_count for s in range(200)])
    var = 9900 * 0.1 * 0.9 + 10000 * 0.02 * 0.98
    sd_mean = math.sqrt(var / len(counts))
    assert abs(counts.mean() - params.expected_edges) < 4 * sd_mean


def test_single_pair_frequency_is_bernoulli() -> None:
    params = SbmParams(2, 2, 1.0, 0.5)
    trials = 10_000
    within = between = 0
    for s in range(trials):
        edges = sample_sbm(params, seed=s)[0].edge_set()
        within += (0, 1) in edges
        between += (0, 2) in edges
    for hits, p in ((within, 0.5), (between, 0.25)):
        assert abs(hits / trials - p) < 4 * math.sqrt(p * (1 - p) / trials)


def test_poisson_multiplicities_follow_poisson_pmf() -> None:
    params = SbmParams(100, 2, 8, 8)
    g, _ = sample_poisson_sbm(params, seed=11)
    assert not g.simple
    total = params.N * (params.N - 1) // 2
    mult = g.multiplicity
    observed = np.array([total - len(mult), np.sum(mult == 1), np.sum(mult >= 2)], dtype=float)
    rate = 0.08
    probs = np.array([poisson.pmf(0, rate), poisson.pmf(1, rate), poisson.sf(1, rate)])
    _, pvalue = chisquare(observed, probs * total)
    assert pvalue > 1e-3


def test_poisson_zero_rates_give_empty_multigraph() -> None:
    g, _ = sample_poisson_sbm(SbmParams(5, 2, 0, 0), seed=1)
    assert g.pair_count == 0 and not g.simple


def test_flatten_to_simple() -> None:
    multi = Graph.from_edges(4, [(0, 1), (0, 1), (0, 1), (2, 3)], simple=False)
    flat = flatten_to_simple(multi)
    assert flat.simple
    assert flat.multiplicity.tolist() == [1, 1]
    assert flat.edge_count == multi.pair_count
    simple = Graph.from_edges(4, [(0, 2)])
    assert flatten_to_simple(simple) == simple


def test_flattened_params_edge_probability() -> None:
    fp = flattened_params(SbmParams(100, 2, 8, 2))
    assert fp.p_in == pytest.approx(1 - math.exp(-0.08))
    assert fp.p_out == pytest.approx(1 - math.exp(-0.02))


def test_permute_vertices_preserves_structure() -> None:
    params = SbmParams(20, 2, 8, 1)
    g, planted = sample_sbm(params, seed=3)
    pg, pp = permute_vertices(g, planted, seed=9)
    assert pg.pair_count == g.pair_count
    assert count_within_between(pg, pp) == count_within_between(g, planted)
    assert pp.sizes().tolist() == [20, 20]


def test_estimate_degree_params_with_partition() -> None:
    params = SbmParams(200, 2, 20, 4)
    g, planted = sample_sbm(params, seed=8)
    a_hat, b_hat = estimate_degree_params(g, 200, 2, planted)
    assert a_hat == pytest.approx(20, rel=0.1)
    assert b_hat == pytest.approx(4, rel=0.2)
    d_hat, zero = estimate_degree_params(g, 200, 2)
    assert zero == 0.0
    assert d_hat == pytest.approx(2 * g.edge_count / 400)


###############################################################################
# adversaries
###############################################################################
def test_monotone_noop() -> None:
    g, planted = sample_sbm(SbmParams(20, 2, 6, 2), seed=1)
    assert apply_monotone_adversary(g, planted, 0, 0, seed=0) == g


def test_monotone_infeasible_reports_maximum() -> None:
    planted = Partition.planted(3, 2)
    complete_within = Graph.from_edges(6, [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)])
    with pytest.raises(BudgetInfeasibleError) as exc:
        apply_monotone_adversary(complete_within, planted, 1, 0, seed=0)
    assert exc.value.max_feasible == 0


def test_monotone_edits_are_legal() -> None:
    g, planted = sample_sbm(SbmParams(50, 2, 10, 2), seed=4)
    out = apply_monotone_adversary(g, planted, 100, 50, seed=7)
    assert out.edge_count == g.edge_count + 100 - 50
    before, after = g.edge_set(), out.edge_set()
    labels = planted.labels
    assert all(labels[u] == labels[v] for u, v in after - before)
    assert all(labels[u] != labels[v] for u, v in before - after)
    w0, b0 = count_within_between(g, planted)
    w1, b1 = count_within_between(out, planted)
    assert w1 >= w0 and b1 <= b0
    assert out.metadata["monotone_added"] == 100


def test_outlier_identity_at_zero_budget() -> None:
    params = SbmParams(30, 2, 8, 2)
    g, planted = sample_sbm(params, seed=2)
    out = apply_outlier_adversary(g, planted, AdversaryBudget(), params, "uniform", seed=0)
    assert out == g


def test_outlier_exact_additions() -> None:
    params = SbmParams(30, 2, 8, 2)
    g, planted = sample_sbm(params, seed=2)
    eps1 = 5 / params.m
    out = apply_outlier_adversary(g, planted, AdversaryBudget(epsilon=eps1, epsilon1=eps1), params, "uniform", seed=1)
    diff = out.edge_set() ^ g.edge_set()
    assert len(diff) == 5
    assert all(planted.labels[u] != planted.labels[v] for u, v in diff)
    assert out.metadata["outlier_added"] == 5


@pytest.mark.parametrize("strategy", ["uniform", "degree-targeted", "concentrated"])
def test_outlier_strategies_respect_caps(strategy: str) -> None:
    params = SbmParams(40, 2, 10, 2)
    g, planted = sample_sbm(params, seed=6)
    budget = AdversaryBudget.split(0.05)
    add_cap, remove_cap = budget.outlier_caps(params.m)
    out = apply_outlier_adversary(g, planted, budget, params, strategy, seed=3)
    added, removed = out.edge_set() - g.edge_set(), g.edge_set() - out.edge_set()
    labels = planted.labels
    assert len(added) == add_cap and len(removed) == remove_cap
    assert all(labels[u] != labels[v] for u, v in added)
    assert all(labels[u] == labels[v] for u, v in removed)
    assert out.metadata["outlier_strategy"] == strategy


def test_outlier_unknown_strategy() -> None:
    params = SbmParams(10, 2, 4, 1)
    g, planted = sample_sbm(params, seed=0)
    with pytest.raises(UnknownStrategyError):
        apply_outlier_adversary(g, planted, AdversaryBudget(), params, "worst-case", seed=0)


def test_classify_edges_rejects_mismatched_partition() -> None:
    g = Graph.from_edges(4, [(0, 1)])
    with pytest.raises(ShapeError):
        classify_edges(g, Partition.planted(3, 2))
