"""
Tests for greedy recovery, weak-to-strong rebalancing and the core diagnostics.
"""

from __future__ import annotations

import numpy as np
import pytest

from robustsbm.errors import InvalidParameterError, ShapeError
from robustsbm.recovery import (
    RHO_ALGORITHM,
    RHO_DEFINITION,
    CoreParams,
    WeakPartition,
    build_recovery_report,
    compute_cores,
    fill_clusters,
    greedy_recover,
    recover_partition,
    recovery_constant,
    weak_to_strong,
)
from robustsbm.sbm import Partition, SbmParams, sample_sbm
from robustsbm.sdp import Embedding, SolverConfig, planted_embedding, random_feasible_embedding, solve_sdp


def _cluster_lists(w: WeakPartition):
    return [c.tolist() for c in w.clusters]


###############################################################################
# greedy recovery
###############################################################################
@pytest.mark.parametrize("rho", [RHO_ALGORITHM, RHO_DEFINITION])
def test_planted_embedding_recovers_planted(rho: float) -> None:
    planted = Partition.planted(5, 3)
    w = greedy_recover(planted_embedding(planted), 5, rho)
    assert w.count == 3
    assert _cluster_lists(w) == [c.tolist() for c in planted.clusters()]


def test_identical_vectors() -> None:
    e = Embedding(np.tile([1.0, 0.0], (6, 1)))
    assert _cluster_lists(greedy_recover(e, 6)) == [[0, 1, 2, 3, 4, 5]]
    assert _cluster_lists(greedy_recover(e, 1)) == [[v] for v in range(6)]
    # truncation keeps the lowest ids
    assert _cluster_lists(greedy_recover(e, 4)) == [[0, 1, 2, 3], [4, 5]]


def test_greedy_output_is_a_partition_and_deterministic() -> None:
    rng = np.random.default_rng(3)
    X = rng.standard_normal((40, 4))
    X /= np.linalg.norm(X, axis=1)[:, None]
    e = Embedding(X)
    w = greedy_recover(e, 10, 0.4)
    assert sorted(np.concatenate(w.clusters).tolist()) == list(range(40))
    assert w.sizes().max() <= 10
    assert _cluster_lists(greedy_recover(e, 10, 0.4)) == _cluster_lists(w)


def test_greedy_rejects_bad_arguments() -> None:
    e = Embedding(np.eye(2))
    with pytest.raises(InvalidParameterError):
        greedy_recover(e, 0)
    with pytest.raises(InvalidParameterError):
        greedy_recover(e, 1, rho=0.0)


###############################################################################
# weak to strong
###############################################################################
def test_balanced_input_is_unchanged() -> None:
    planted = Partition.planted(4, 3)
    assert weak_to_strong(WeakPartition.from_partition(planted), 4, 3) == planted


def test_singleton_fills_deficient_cluster() -> None:
    w = WeakPartition((np.array([0, 1, 2]), np.array([3, 4]), np.array([5])), 6, n=3)
    p = weak_to_strong(w, 3, 2)
    assert p.labels.tolist() == [0, 0, 0, 1, 1, 1]


def test_weak_to_strong_keeps_largest_and_preserves_membership() -> None:
    clusters = (np.array([0, 5]), np.array([1, 2, 3]), np.array([4, 6, 7]), np.array([8]))
    w = WeakPartition(clusters, 9, n=3)
    p = weak_to_strong(w, 3, 3)
    # the three largest (sizes 3, 3, 2) in creation order become clusters 0, 1, 2
    labels = p.labels
    assert labels[[0, 5]].tolist() == [0, 0]
    assert labels[[1, 2, 3]].tolist() == [1, 1, 1]
    assert labels[[4, 6, 7]].tolist() == [2, 2, 2]
    assert labels[8] == 0
    assert p.sizes().tolist() == [3, 3, 3]


def test_weak_to_strong_tie_prefers_creation_order() -> None:
    w = WeakPartition((np.array([0, 1]), np.array([2, 3]), np.array([4, 5])), 6, n=3)
    p = weak_to_strong(w, 3, 2)
    assert p.labels.tolist() == [0, 0, 1, 1, 0, 1]


def test_weak_to_strong_shape_errors() -> None:
    w = WeakPartition.from_partition(Partition.planted(3, 2))
    with pytest.raises(ShapeError):
        weak_to_strong(w, 2, 2)
    with pytest.raises(ShapeError):
        fill_clusters([np.array([0, 1, 2])], np.array([], dtype=np.int64), 2, 3)


def test_weak_partition_validates_cover() -> None:
    with pytest.raises(ShapeError):
        WeakPartition((np.array([0, 1]), np.array([1, 2])), 3)
    with pytest.raises(ShapeError):
        WeakPartition((np.array([0]),), 2)
    with pytest.raises(ShapeError):
        WeakPartition((np.array([0, 1, 2]),), 3, n=2)


def test_recover_partition_on_feasible_embedding() -> None:
    planted = Partition.planted(6, 2)
    e = random_feasible_embedding(planted, spread=0.1, seed=1)
    weak, strong = recover_partition(e, 6, 2)
    assert strong.balanced and strong.k == 2
    report = build_recovery_report(e, weak, strong, planted, seeds={"solver": 1})
    d = report.to_dict()
    assert d["delta_strong"] == 0.0
    assert d["delta_weak"] == 0.0
    assert d["seeds"] == {"solver": 1}
    assert d["within_greedy_bound"]


###############################################################################
# cores
###############################################################################
def test_core_params_range() -> None:
    assert CoreParams(0.2).delta_cap == pytest.approx(1.2)
    for bad in (0.0, 1.0 / 3.0, -0.1):
        with pytest.raises(InvalidParameterError):
            CoreParams(bad)


def test_planted_embedding_cores() -> None:
    planted = Partition.planted(4, 3)
    rep = compute_cores(planted_embedding(planted), planted, CoreParams(RHO_DEFINITION))
    assert rep.in_core.all()
    assert rep.core_sizes.tolist() == [4, 4, 4]
    assert rep.outside_count == 0
    assert rep.well_separated_pairs == [(0, 1), (0, 2), (1, 2)]
    assert rep.separation_applicable
    assert rep.separation_holds
    assert rep.separation_subset == [0, 1, 2]


@pytest.mark.parametrize("seed", range(10))
def test_remote_vertex_count_within_markov_bound(seed: int) -> None:
    planted = Partition.planted(6, 3)
    e = random_feasible_embedding(planted, seed=seed)
    rep = compute_cores(e, planted, CoreParams(RHO_DEFINITION))
    assert rep.remote_holds
    assert rep.to_dict()["remote_holds"] is True


def test_separation_argument_not_applicable_at_algorithm_rho() -> None:
    planted = Partition.planted(4, 2)
    rep = compute_cores(planted_embedding(planted), planted, CoreParams(RHO_ALGORITHM))
    assert not rep.separation_applicable
    assert rep.separation_holds is None


def test_recovery_constants() -> None:
    assert recovery_constant(RHO_DEFINITION) == pytest.approx(25 + 6 / 0.56)
    assert recovery_constant(RHO_DEFINITION) < 36
    assert recovery_constant(RHO_ALGORITHM) is None


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(3))
def test_separated_subset_on_solver_output(seed: int) -> None:
    params = SbmParams(40, 3, 40, 1)
    g, planted = sample_sbm(params, seed=seed)
    e = solve_sdp(g, params, SolverConfig(seed=seed))
    rep = compute_cores(e, planted, CoreParams(RHO_DEFINITION))
    assert rep.separation_applicable
    assert rep.separation_min_size > 0
    assert rep.separation_holds, rep.to_dict()
    assert rep.separation_subset_separated
    assert rep.remote_holds
