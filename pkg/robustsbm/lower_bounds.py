"""
Constructive side of the two-community lower bounds.

Exact Poisson overlaps, the capped increment sampler used to make one Poisson
count look like another, the adversary that plants those increments into a
Poisson-model graph, and a Monte Carlo version of the pair-distinguishing game.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import poisson

from .errors import InvalidParameterError, ShapeError
from .metrics import BoundReport
from .sbm import Graph, Partition, SbmParams

log = logging.getLogger(__name__)

TAIL_MASS = 1e-12
# trials per independently seeded chunk in the distinguishing game
GAME_CHUNK = 1 << 16


# ---------- Poisson pairs ----------

def truncation_for(lam: float, tail: float = TAIL_MASS) -> int:
    """Smallest K with Pr(Poisson(lam) > K) < tail."""
    if lam <= 0:
        return 0
    K = int(poisson.isf(tail, lam))
    while poisson.sf(K, lam) >= tail:
        K += 1
    return K


@dataclass(frozen=True)
class PoissonPair:
    lambda1: float
    lambda2: float
    truncation: Optional[int] = None

    def __post_init__(self) -> None:
        l1, l2 = float(self.lambda1), float(self.lambda2)
        if not (l1 > 0 and l2 > 0) or not (math.isfinite(l1) and math.isfinite(l2)):
            raise InvalidParameterError(f"Poisson rates must be positive, got {l1}, {l2}")
        if l2 < l1:
            raise InvalidParameterError("lambda2 must be >= lambda1 (use PoissonPair.of to order them)")
        object.__setattr__(self, "lambda1", l1)
        object.__setattr__(self, "lambda2", l2)
        K = truncation_for(l2) if self.truncation is None else int(self.truncation)
        if poisson.sf(K, l2) >= TAIL_MASS:
            raise InvalidParameterError(f"truncation {K} leaves more than {TAIL_MASS:g} tail mass")
        object.__setattr__(self, "truncation", K)

    @classmethod
    def of(cls, x: float, y: float) -> "PoissonPair":
        lo, hi = sorted((float(x), float(y)))
        return cls(lo, hi)

    def support(self) -> np.ndarray:
        return np.arange(self.truncation + 1)


def coupling_overlap(p: PoissonPair) -> float:
    """Pr(P1 = P2) under the maximal coupling: sum_k min(pmf1(k), pmf2(k))."""
    if p.lambda1 == p.lambda2:
        return 1.0
    ks = p.support()
    return float(np.minimum(poisson.pmf(ks, p.lambda1), poisson.pmf(ks, p.lambda2)).sum())


# ---------- capped increments ----------

def _check_rates(lambda1: float, lambda2: float) -> float:
    if lambda1 < 0:
        raise InvalidParameterError(f"lambda1 must be nonnegative, got {lambda1}")
    if not lambda2 > lambda1:
        raise InvalidParameterError(f"need lambda2 > lambda1, got {lambda1}, {lambda2}")
    return float(lambda2) - float(lambda1)


def kappa_cap(lambda1: float, lambda2: float) -> int:
    return int(math.floor(2.0 * (lambda2 - lambda1)))


def sample_kappa_hat(lambda1: float, lambda2: float, z: Any, seed: Any = None, size: Optional[int] = None):
    """
    min(kappa, floor(2 (lambda2 - lambda1))) with kappa ~ Poisson(lambda2 - lambda1).

    kappa does not depend on the observed count z; z only fixes the output
    shape. ``seed`` may be a seed or a numpy Generator.
    """
    mu = _check_rates(lambda1, lambda2)
    rng = np.random.default_rng(seed)
    shape = size if size is not None else np.shape(z)
    kappa = rng.poisson(mu, size=shape if shape != () else None)
    out = np.minimum(kappa, kappa_cap(lambda1, lambda2))
    return int(out) if np.ndim(out) == 0 else out.astype(np.int64)


def coupled_kappa_success(lambda1: float, lambda2: float, draws: int, seed: Any = 0) -> Tuple[float, float]:
    """
    Monte Carlo estimate of Pr(P2 = P1 + kappa_hat(P1)) for the coupling
    P2 = P1 + kappa, kappa ~ Poisson(lambda2 - lambda1). Returns (rate, std error).
    """
    mu = _check_rates(lambda1, lambda2)
    if draws < 1:
        raise InvalidParameterError("draws must be >= 1")
    rng = np.random.default_rng(seed)
    p1 = rng.poisson(lambda1, size=draws)
    kappa = rng.poisson(mu, size=draws)
    p2 = p1 + kappa
    hat = np.minimum(kappa, kappa_cap(lambda1, lambda2))
    rate = float(np.mean(p2 == p1 + hat))
    return rate, math.sqrt(max(rate * (1.0 - rate), 0.0) / draws)


# ---------- the lower-bound adversary ----------

@dataclass(frozen=True)
class LbAdversaryConfig:
    rho_fraction: float
    seed: Any = 0

    def __post_init__(self) -> None:
        if not (0.0 < float(self.rho_fraction) < 0.5):
            raise InvalidParameterError(f"rho_fraction must lie in (0, 1/2), got {self.rho_fraction}")

    def side_size(self, n: int) -> int:
        s = int(math.floor(self.rho_fraction * n))
        if s < 1:
            raise InvalidParameterError(f"floor(rho * n) = 0 for rho={self.rho_fraction}, n={n}")
        return s

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "LbAdversaryConfig":
        return cls(rho_fraction=float(d["rho_fraction"]), seed=d.get("seed", 0))

    def to_dict(self) -> Dict[str, Any]:
        return {"rho_fraction": self.rho_fraction, "seed": self.seed}


def suggest_rho(epsilon: float, a: float, b: float) -> float:
    """rho = eps (a+b) / (4 (a-b)), so the adversary's 4 (a-b) rho n edges equal eps (a+b) n."""
    if a <= b:
        raise InvalidParameterError("suggest_rho needs a > b")
    if epsilon < 0:
        raise InvalidParameterError("epsilon must be nonnegative")
    return epsilon * (a + b) / (4.0 * (a - b))


def _cross_count(g: Graph, left: np.ndarray, right: np.ndarray) -> int:
    in_l = np.zeros(g.vertex_count, dtype=bool)
    in_r = np.zeros(g.vertex_count, dtype=bool)
    in_l[left] = True
    in_r[right] = True
    u, v = g.pairs[:, 0], g.pairs[:, 1]
    hit = (in_l[u] & in_r[v]) | (in_l[v] & in_r[u])
    return int(g.multiplicity[hit].sum())


def lb_adversary(g: Graph, planted: Partition, params: SbmParams, cfg: LbAdversaryConfig) -> Graph:
    """
    Plant capped Poisson increments between L' and R'' and between R' and L''.

    L' and R' are the first floor(rho n) ids of each side. With rho the
    effective fraction |L'| / n, the L' x R'' block has rho (1 - rho) n^2 pairs
    at rate b/n each, so its edge count is Poisson(b M) with M = rho (1 - rho) n.
    The increment turns it into something coupled to Poisson(a M).
    """
    if params.k != 2 or planted.k != 2:
        raise InvalidParameterError("the lower-bound adversary is defined for k = 2 only")
    if g.simple:
        raise InvalidParameterError("the lower-bound adversary needs a Poisson-model multigraph")
    if planted.vertex_count != g.vertex_count or g.vertex_count != params.N:
        raise ShapeError("graph, partition and parameters disagree on the vertex count")

    n = params.n
    s = cfg.side_size(n)
    rho = s / n
    M = rho * (1.0 - rho) * n
    lam1, lam2 = params.b * M, params.a * M
    left, right = planted.clusters()
    l1, l2 = left[:s], left[s:]
    r1, r2 = right[:s], right[s:]

    z_l = _cross_count(g, l1, r2)
    z_r = _cross_count(g, r1, l2)
    md = dict(g.metadata, lb_rho=rho, lb_M=M, lb_Z_left=z_l, lb_Z_right=z_r)
    if lam2 <= lam1:
        md.update(lb_added_left=0, lb_added_right=0)
        return g.with_metadata(**md)

    rng = np.random.default_rng(cfg.seed)
    kl = sample_kappa_hat(lam1, lam2, z_l, rng)
    kr = sample_kappa_hat(lam1, lam2, z_r, rng)
    new = [
        np.stack([rng.choice(l1, size=kl), rng.choice(r2, size=kl)], axis=1),
        np.stack([rng.choice(r1, size=kr), rng.choice(l2, size=kr)], axis=1),
    ]
    edges = np.concatenate([g.pairs] + new, axis=0)
    mult = np.concatenate([g.multiplicity, np.ones(kl + kr, dtype=np.int64)])
    md.update(lb_added_left=kl, lb_added_right=kr)
    log.debug("lower-bound adversary: rho=%.4f M=%.3f added %d + %d edges", rho, M, kl, kr)
    return Graph.from_edges(g.vertex_count, edges, mult, simple=False, metadata=md)


# ---------- distinguishing game ----------

@dataclass(frozen=True)
class GameResult:
    lambda1: float
    lambda2: float
    trials: int
    errors: int
    eta: float

    @property
    def error_rate(self) -> float:
        return self.errors / self.trials

    @property
    def std_error(self) -> float:
        r = self.error_rate
        return math.sqrt(max(r * (1.0 - r), 0.0) / self.trials)

    @property
    def half_width(self) -> float:
        return 3.0 * self.std_error

    @property
    def lower_bound(self) -> float:
        return self.eta ** 4 / 2.0

    @property
    def passed(self) -> bool:
        return self.error_rate + self.half_width >= self.lower_bound

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "trials": self.trials,
            "error_rate": self.error_rate,
            "std_error": self.std_error,
            "half_width": self.half_width,
            "eta": self.eta,
            "lower_bound": self.lower_bound,
            "passed": self.passed,
        }


def _game_chunk(lambda1: float, lambda2: float, size: int, rng: np.random.Generator) -> int:
    # truth True: first coordinates ~ D1 (pair one) and second ~ D1 (pair two)
    truth = rng.random(size) < 0.5
    lam_x = np.where(truth, lambda1, lambda2)
    lam_y = np.where(truth, lambda2, lambda1)
    x1 = rng.poisson(lam_x)
    y1 = rng.poisson(lam_y)
    y2 = rng.poisson(lam_y)
    x2 = rng.poisson(lam_x)
    # the pairs arrive as (x1, y1) and (y2, x2); log-likelihood ratio is
    # log(lambda2 / lambda1) * (y1 + y2 - x1 - x2)
    stat = (y1 + y2 - x1 - x2) * np.sign(lambda2 - lambda1)
    coin = rng.random(size) < 0.5
    guess = np.where(stat > 0, True, np.where(stat < 0, False, coin))
    return int(np.count_nonzero(guess != truth))


def distinguishing_game(lambda1: float, lambda2: float, trials: int, seed: Any = 0) -> GameResult:
    """
    Likelihood-ratio test deciding which coordinate of two Poisson pairs was
    drawn from Poisson(lambda1); ties are broken by a fair coin.

    Trials run in fixed-size chunks with seeds spawned from ``seed``, so the
    count does not depend on how chunks are scheduled.
    """
    if int(trials) < 1:
        raise InvalidParameterError("trials must be >= 1")
    if lambda1 < 0 or lambda2 < 0:
        raise InvalidParameterError("Poisson rates must be nonnegative")
    trials = int(trials)
    chunks = -(-trials // GAME_CHUNK)
    children = np.random.SeedSequence(seed).spawn(chunks)
    errors = 0
    for i, child in enumerate(children):
        size = min(GAME_CHUNK, trials - i * GAME_CHUNK)
        errors += _game_chunk(float(lambda1), float(lambda2), size, np.random.default_rng(child))
    eta = coupling_overlap(PoissonPair.of(lambda1, lambda2)) if min(lambda1, lambda2) > 0 else (
        1.0 if lambda1 == lambda2 else math.exp(-max(lambda1, lambda2))
    )
    result = GameResult(float(lambda1), float(lambda2), trials, errors, eta)
    if not result.passed:
        log.warning(
            "distinguishing game below eta^4/2: error %.5f +- %.5f < %.5f",
            result.error_rate, result.half_width, result.lower_bound,
        )
    return result


# ---------- bound values ----------

def lb_bound_values(params: SbmParams, epsilon: float, delta: float, C: float = 1.0) -> BoundReport:
    """
    Right-hand sides of the two impossibility conditions at constant C:
    (a - b) < C sqrt((a + b) ln(1/delta)) and (a - b) < C eps (a + b) / delta.
    """
    if not (0.0 < delta <= 1.0):
        raise InvalidParameterError(f"delta must lie in (0, 1], got {delta}")
    if epsilon < 0:
        raise InvalidParameterError("epsilon must be nonnegative")
    a, b = params.a, params.b
    gap = a - b
    pure = C * math.sqrt((a + b) * math.log(1.0 / delta))
    outlier = C * epsilon * (a + b) / delta
    report = BoundReport(
        values={
            "lb_gap": gap,
            "lb_pure_rhs": pure,
            "lb_outlier_rhs": outlier,
            "lb_C": C,
            "lb_pure_rules_out": gap < pure,
            "lb_outlier_rules_out": gap < outlier,
        }
    )
    if params.k != 2:
        report.flags.append("k_not_2")
    return report


# ---------- Poisson facts ----------

def poisson_median_mass(lam: float) -> float:
    """Pr(P >= floor(lam)) computed from the exact tail."""
    return float(poisson.sf(math.floor(lam) - 1, lam))


def poisson_median_holds(lam: float) -> bool:
    return poisson_median_mass(lam) >= 0.5


def poisson_tail_constant(lams: Iterable[float], ts: Iterable[float]) -> float:
    """
    Smallest C with Pr(P >= lam + t sqrt(lam)) >= exp(-C t^2) on the grid,
    i.e. max over the grid of -ln(tail) / t^2.
    """
    lam = np.asarray(list(lams), dtype=np.float64)[:, None]
    t = np.asarray(list(ts), dtype=np.float64)[None, :]
    if lam.size == 0 or t.size == 0:
        raise InvalidParameterError("empty grid")
    threshold = np.ceil(lam + t * np.sqrt(lam))
    log_tail = poisson.logsf(threshold - 1, lam)
    return float(np.max(-log_tail / t ** 2))


def coupling_constants(
    pairs: Sequence[Tuple[float, float]], c2_candidates: Optional[Sequence[float]] = None
) -> Tuple[float, float]:
    """
    A pair (C1, C2) with overlap >= C1 exp(-C2 (l1 - l2)^2 / (l1 + l2)) at every
    grid pair. For each candidate C2 the largest valid C1 is taken; the candidate
    whose bound is tightest on average across the grid wins.
    """
    if len(pairs) == 0:
        raise InvalidParameterError("empty grid")
    overlaps = np.array([coupling_overlap(PoissonPair.of(x, y)) for x, y in pairs])
    r = np.array([(x - y) ** 2 / (x + y) for x, y in pairs])
    cands = np.linspace(0.05, 5.0, 100) if c2_candidates is None else np.asarray(c2_candidates, dtype=np.float64)
    best: Optional[Tuple[float, float, float]] = None
    for c2 in cands:
        c1 = float(np.min(overlaps * np.exp(c2 * r)))
        tightness = float(np.mean(c1 * np.exp(-c2 * r) / overlaps))
        if best is None or tightness > best[0]:
            best = (tightness, c1, float(c2))
    return best[1], best[2]
