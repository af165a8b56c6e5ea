"""
Tests for robustsbm.lower_bounds: Poisson overlaps, capped increments, the
lower-bound adversary, the distinguishing game and the bound evaluators.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.stats import chisquare, poisson

from robustsbm.errors import InvalidParameterError, ShapeError
from robustsbm.lower_bounds import (
    LbAdversaryConfig,
    PoissonPair,
    coupled_kappa_success,
    coupling_constants,
    coupling_overlap,
    distinguishing_game,
    kappa_cap,
    lb_adversary,
    lb_bound_values,
    poisson_median_holds,
    poisson_median_mass,
    poisson_tail_constant,
    sample_kappa_hat,
    suggest_rho,
    truncation_for,
)
from robustsbm.lower_bounds import _cross_count
from robustsbm.sbm import Partition, SbmParams, sample_poisson_sbm, sample_sbm


###############################################################################
# Poisson pairs and overlaps
###############################################################################
def test_overlap_of_equal_rates_is_exactly_one() -> None:
    for lam in (0.3, 1.0, 7.5, 40.0):
        assert coupling_overlap(PoissonPair(lam, lam)) == 1.0


def test_overlap_matches_factorial_sum() -> None:
    expected = sum(
        min(math.exp(-1) / math.factorial(k), math.exp(-4) * 4 ** k / math.factorial(k)) for k in range(61)
    )
    assert coupling_overlap(PoissonPair(1, 4)) == pytest.approx(expected, abs=1e-12)


def test_overlap_is_symmetric_and_shrinks_along_rays() -> None:
    assert coupling_overlap(PoissonPair.of(6, 2)) == coupling_overlap(PoissonPair.of(2, 6))
    for total in (4.0, 10.0, 30.0):
        gaps = np.linspace(0.0, total * 0.9, 25)
        values = [coupling_overlap(PoissonPair.of((total - d) / 2, (total + d) / 2)) for d in gaps]
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


def test_poisson_pair_validation() -> None:
    with pytest.raises(InvalidParameterError):
        PoissonPair(0.0, 1.0)
    with pytest.raises(InvalidParameterError):
        PoissonPair(3.0, 2.0)
    with pytest.raises(InvalidParameterError):
        PoissonPair(1.0, 10.0, truncation=5)
    p = PoissonPair(1.0, 10.0)
    assert poisson.sf(p.truncation, 10.0) < 1e-12
    assert p.truncation == truncation_for(10.0)
    assert p.support()[-1] == p.truncation


def test_coupling_constants_witness_the_lower_form() -> None:
    grid = [(x, y) for x in (1.0, 2.0, 5.0, 10.0, 20.0) for y in (1.0, 3.0, 8.0, 15.0, 30.0)]
    c1, c2 = coupling_constants(grid)
    assert c1 > 0 and c2 > 0
    for x, y in grid:
        overlap = coupling_overlap(PoissonPair.of(x, y))
        assert overlap >= c1 * math.exp(-c2 * (x - y) ** 2 / (x + y)) - 1e-12


###############################################################################
# capped increments
###############################################################################
def test_kappa_cap_below_one_forces_zero() -> None:
    assert kappa_cap(1.0, 1.4) == 0
    draws = sample_kappa_hat(1.0, 1.4, z=0, seed=3, size=1000)
    assert np.all(draws == 0)


def test_kappa_hat_respects_cap_and_shape() -> None:
    z = np.arange(12).reshape(3, 4)
    out = sample_kappa_hat(3.0, 5.0, z, seed=1)
    assert out.shape == (3, 4)
    assert out.max() <= 4
    single = sample_kappa_hat(3.0, 5.0, 7, seed=1)
    assert isinstance(single, int)
    with pytest.raises(InvalidParameterError):
        sample_kappa_hat(5.0, 5.0, 0)


def test_kappa_hat_matches_capped_pmf() -> None:
    draws = sample_kappa_hat(3.0, 5.0, z=0, seed=11, size=100_000)
    observed = np.bincount(draws, minlength=5).astype(float)
    probs = np.append(poisson.pmf(np.arange(4), 2.0), poisson.sf(3, 2.0))
    _, pvalue = chisquare(observed, probs * len(draws))
    assert pvalue > 1e-3


def test_coupled_success_at_least_half() -> None:
    rate, sd = coupled_kappa_success(3.0, 5.0, draws=100_000, seed=2)
    assert rate >= 0.5 - 3 * sd
    assert rate == pytest.approx(poisson.cdf(4, 2.0), abs=5 * sd)


###############################################################################
# lower-bound adversary
###############################################################################
def test_lb_config() -> None:
    cfg = LbAdversaryConfig(0.2, seed=4)
    assert cfg.side_size(50) == 10
    assert LbAdversaryConfig.from_dict(cfg.to_dict()) == cfg
    for bad in (0.0, 0.5, 0.7):
        with pytest.raises(InvalidParameterError):
            LbAdversaryConfig(bad)
    with pytest.raises(InvalidParameterError):
        LbAdversaryConfig(0.01).side_size(50)
    assert suggest_rho(0.1, 30, 5) == pytest.approx(0.1 * 35 / 100)


@pytest.mark.parametrize("seed", range(5))
def test_lb_adversary_adds_capped_increments(seed: int) -> None:
    params = SbmParams(50, 2, 20, 4)
    g, planted = sample_poisson_sbm(params, seed=seed)
    out = lb_adversary(g, planted, params, LbAdversaryConfig(0.2, seed=seed))
    md = out.metadata
    M = 0.2 * 0.8 * 50
    assert md["lb_M"] == pytest.approx(M)
    cap = math.floor(2 * (20 - 4) * M)
    assert 0 <= md["lb_added_left"] <= cap
    assert 0 <= md["lb_added_right"] <= cap
    assert out.edge_count - g.edge_count == md["lb_added_left"] + md["lb_added_right"]

    left, right = planted.clusters()
    assert _cross_count(out, left[:10], right[10:]) == md["lb_Z_left"] + md["lb_added_left"]
    assert _cross_count(out, right[:10], left[10:]) == md["lb_Z_right"] + md["lb_added_right"]
    # nothing lands inside a cluster
    assert _cross_count(out, left, left) == _cross_count(g, left, left)


def test_lb_adversary_equal_rates_leaves_graph() -> None:
    params = SbmParams(30, 2, 6, 6)
    g, planted = sample_poisson_sbm(params, seed=1)
    out = lb_adversary(g, planted, params, LbAdversaryConfig(0.3))
    assert out == g
    assert out.metadata["lb_added_left"] == 0 and out.metadata["lb_added_right"] == 0


def test_lb_adversary_preconditions() -> None:
    params = SbmParams(10, 3, 6, 1)
    g, planted = sample_poisson_sbm(params, seed=0)
    with pytest.raises(InvalidParameterError):
        lb_adversary(g, planted, params, LbAdversaryConfig(0.2))
    params2 = SbmParams(10, 2, 6, 1)
    simple, planted2 = sample_sbm(params2, seed=0)
    with pytest.raises(InvalidParameterError):
        lb_adversary(simple, planted2, params2, LbAdversaryConfig(0.2))
    multi, _ = sample_poisson_sbm(params2, seed=0)
    with pytest.raises(ShapeError):
        lb_adversary(multi, Partition.planted(5, 2), params2, LbAdversaryConfig(0.2))


@pytest.mark.slow
def test_lb_adversary_cross_count_law_over_many_seeds() -> None:
    # M = 0.2 * 0.8 * 10, so the L' x R'' count is Poisson(1.6) pushed towards Poisson(6.4)
    params = SbmParams(10, 2, 4, 1)
    M = 1.6
    lam1, lam2 = params.b * M, params.a * M
    totals = np.empty(10_000, dtype=np.int64)
    for seed in range(len(totals)):
        g, planted = sample_poisson_sbm(params, seed=seed)
        md = lb_adversary(g, planted, params, LbAdversaryConfig(0.2, seed=50_000 + seed)).metadata
        assert md["lb_M"] == pytest.approx(M)
        totals[seed] = md["lb_Z_left"] + md["lb_added_left"]

    # Z ~ Poisson(lam1) plus an independent increment min(Poisson(lam2 - lam1), cap)
    support = np.arange(64)
    cap = kappa_cap(lam1, lam2)
    inc = poisson.pmf(support, lam2 - lam1)
    inc[cap] += poisson.sf(cap, lam2 - lam1)
    inc[cap + 1:] = 0.0
    law = np.convolve(poisson.pmf(support, lam1), inc)[: len(support)]

    top = 14
    observed = np.bincount(np.minimum(totals, top), minlength=top + 1).astype(float)
    expected = np.append(law[:top], 1.0 - law[:top].sum()) * len(totals)
    _, pvalue = chisquare(observed, expected)
    assert pvalue > 1e-3

    counts = np.bincount(totals, minlength=len(support))[: len(support)] / len(totals)
    assert np.minimum(counts, poisson.pmf(support, lam2)).sum() >= 0.5


###############################################################################
# distinguishing game
###############################################################################
def test_game_with_equal_rates_is_a_coin_flip() -> None:
    r = distinguishing_game(5.0, 5.0, trials=200_000, seed=1)
    assert abs(r.error_rate - 0.5) <= 4 * math.sqrt(0.25 / r.trials)
    assert r.eta == 1.0


def test_game_with_far_rates_rarely_errs() -> None:
    r = distinguishing_game(1.0, 20.0, trials=100_000, seed=2)
    assert r.error_rate < 0.01


@pytest.mark.parametrize("l1, l2", [(4.0, 6.0), (1.0, 2.0), (10.0, 13.0)])
def test_game_error_above_overlap_bound(l1: float, l2: float) -> None:
    r = distinguishing_game(l1, l2, trials=200_000, seed=3)
    assert r.eta == pytest.approx(coupling_overlap(PoissonPair(l1, l2)))
    assert r.error_rate + 3 * r.std_error >= r.eta ** 4 / 2
    assert r.to_dict()["passed"] is True


def test_game_is_chunk_deterministic() -> None:
    a = distinguishing_game(2.0, 3.0, trials=70_000, seed=9)
    b = distinguishing_game(2.0, 3.0, trials=70_000, seed=9)
    assert a.errors == b.errors
    with pytest.raises(InvalidParameterError):
        distinguishing_game(1.0, 2.0, trials=0)


def test_game_with_a_zero_rate() -> None:
    r = distinguishing_game(0.0, 3.0, trials=10_000, seed=0)
    assert r.eta == pytest.approx(math.exp(-3.0))


###############################################################################
# bound evaluators and Poisson facts
###############################################################################
def test_lb_bound_values_examples() -> None:
    v = lb_bound_values(SbmParams(100, 2, 30, 5), epsilon=0.0, delta=0.1).values
    assert v["lb_pure_rhs"] == pytest.approx(math.sqrt(35 * math.log(10)))
    assert v["lb_pure_rhs"] == pytest.approx(8.977, abs=1e-3)
    assert v["lb_pure_rules_out"] is False
    assert v["lb_outlier_rhs"] == 0.0

    v1 = lb_bound_values(SbmParams(100, 2, 30, 5), epsilon=0.2, delta=1.0).values
    assert v1["lb_pure_rhs"] == 0.0
    assert v1["lb_outlier_rhs"] == pytest.approx(0.2 * 35)

    rep = lb_bound_values(SbmParams(100, 3, 30, 5), epsilon=0.0, delta=0.5)
    assert rep.flags == ["k_not_2"]
    with pytest.raises(InvalidParameterError):
        lb_bound_values(SbmParams(100, 2, 30, 5), epsilon=0.0, delta=0.0)


def test_poisson_median_fact_on_grid() -> None:
    for lam in np.round(np.arange(1, 501) * 0.1, 10):
        assert poisson_median_holds(float(lam)), lam
    assert poisson_median_mass(0.5) == 1.0


def test_poisson_tail_constant_is_witnessed() -> None:
    lams = np.linspace(1, 50, 50)
    ts = np.linspace(1, 5, 17)
    C = poisson_tail_constant(lams, ts)
    assert 0 < C < 10
    for lam in lams:
        for t in ts:
            tail = poisson.sf(math.ceil(lam + t * math.sqrt(lam)) - 1, lam)
            assert tail >= math.exp(-C * t * t) * (1 - 1e-9)
