"""
Closeness to the planted partition, cut costs, bound evaluators and KL utilities.

Bound evaluators never raise for a regime violation: they return the value
together with flags naming the conditions that do not hold, so reports stay
complete for parameter sweeps that cross regime boundaries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidParameterError, ShapeError
from .sbm import Graph, Partition, SbmParams, classify_edges
from .sdp import Embedding, compute_diagnostics, sdp_objective

if TYPE_CHECKING:
    from .recovery import WeakPartition

# Grothendieck constant upper bound
KG_DEFAULT = 1.783
C0_DEFAULT = 11.0


# ---------- closeness ----------

@dataclass
class Closeness:
    delta: float
    sigma: np.ndarray  # planted cluster i -> recovered cluster sigma[i], -1 when unmatched
    overlap: int

    def to_dict(self) -> Dict[str, Any]:
        return {"delta": self.delta, "sigma": self.sigma.tolist(), "overlap": self.overlap}


def overlap_matrix(planted_labels: np.ndarray, labels: np.ndarray, k: int, k_other: int) -> np.ndarray:
    O = np.zeros((k, k_other), dtype=np.int64)
    np.add.at(O, (planted_labels, labels), 1)
    return O


def _match(O: np.ndarray, total: int) -> Closeness:
    rows, cols = linear_sum_assignment(O, maximize=True)
    keep = O[rows, cols] > 0
    rows, cols = rows[keep], cols[keep]
    sigma = np.full(O.shape[0], -1, dtype=np.int64)
    sigma[rows] = cols
    overlap = int(O[rows, cols].sum())
    return Closeness(delta=1.0 - overlap / total, sigma=sigma, overlap=overlap)


def closeness_strong(p: Partition, planted: Partition) -> Closeness:
    """Exact strong delta through an optimal assignment on the k x k overlap matrix."""
    if not (p.balanced and planted.balanced):
        raise ShapeError("strong closeness needs two balanced partitions")
    if p.vertex_count != planted.vertex_count or p.k != planted.k:
        raise ShapeError(
            f"partitions disagree: {p.vertex_count} vs {planted.vertex_count} vertices, k={p.k} vs k={planted.k}"
        )
    O = overlap_matrix(planted.labels, p.labels, planted.k, p.k)
    c = _match(O, planted.vertex_count)
    # a full permutation: unmatched planted clusters take the unused indices in order
    if np.any(c.sigma < 0):
        free = [j for j in range(p.k) if j not in set(c.sigma.tolist())]
        for i in np.flatnonzero(c.sigma < 0):
            c.sigma[i] = free.pop(0)
    return c


def closeness_weak(w: "WeakPartition", planted: Partition) -> Closeness:
    """Exact weak delta: maximum-weight partial matching between planted and recovered clusters."""
    if not planted.balanced:
        raise ShapeError("weak closeness needs a balanced planted partition")
    if w.vertex_count != planted.vertex_count:
        raise ShapeError(f"weak partition covers {w.vertex_count} vertices, planted has {planted.vertex_count}")
    n = planted.n
    sizes = w.sizes()
    if np.any(sizes > n):
        raise ShapeError(f"a recovered cluster has {int(sizes.max())} > n = {n} vertices")
    O = overlap_matrix(planted.labels, w.labels(), planted.k, w.count)
    return _match(O, planted.vertex_count)


# ---------- costs ----------

def cut_cost(g: Graph, p: Partition) -> int:
    """Edges (with multiplicity) whose endpoints carry different labels."""
    within = classify_edges(g, p)
    return int(g.multiplicity[~within].sum())


def within_cost(g: Graph, p: Partition) -> int:
    within = classify_edges(g, p)
    return int(g.multiplicity[within].sum())


# ---------- bound inputs ----------

@dataclass(frozen=True)
class BoundInputs:
    params: SbmParams
    epsilon: float = 0.0
    s: float = 1.0
    eta: Optional[float] = None
    C0: float = C0_DEFAULT
    delta0: Optional[float] = None
    KG: float = KG_DEFAULT
    c_regime: float = 1.0
    eta_open_interval: bool = False

    @property
    def c9(self) -> float:
        """Absolute constant of the alpha bound, taken at its stated maximum 6 K_G + 4."""
        return 6.0 * self.KG + 4.0

    @property
    def degree_sum(self) -> float:
        return self.params.degree_sum

    @property
    def gap(self) -> float:
        return self.params.a - self.params.b

    def eta_range(self) -> tuple:
        return 1.0 / self.degree_sum, 0.5

    def eta_in_range(self) -> bool:
        if self.eta is None or self.degree_sum <= 0:
            return False
        lo, hi = self.eta_range()
        if self.eta_open_interval:
            return lo < self.eta < hi
        return lo <= self.eta <= hi

    @classmethod
    def from_dict(cls, params: SbmParams, epsilon: float, d: Dict[str, Any]) -> "BoundInputs":
        d = d or {}
        return cls(
            params=params,
            epsilon=float(epsilon),
            s=float(d.get("s", 1.0)),
            eta=None if d.get("eta") is None else float(d["eta"]),
            C0=float(d.get("C0", C0_DEFAULT)),
            delta0=None if d.get("delta0") is None else float(d["delta0"]),
            KG=float(d.get("KG", KG_DEFAULT)),
            c_regime=float(d.get("c_regime", 1.0)),
            eta_open_interval=bool(d.get("eta_open_interval", False)),
        )


def _require_alpha_regime(b: BoundInputs) -> None:
    if not b.gap > 0:
        raise InvalidParameterError(f"alpha bound needs a > b (a={b.params.a}, b={b.params.b})")
    if b.s < 1.0:
        raise InvalidParameterError(f"alpha bound needs s >= 1, got {b.s}")
    if not b.degree_sum > b.C0:
        raise InvalidParameterError(f"alpha bound needs a + b(k-1) > C0 = {b.C0}, got {b.degree_sum}")


def alpha_bound(b: BoundInputs) -> float:
    """c9 sqrt(a + b(k-1)) s / (a - b) + (a + b(k-1)) eps / (a - b). Reported even when vacuous."""
    _require_alpha_regime(b)
    D = b.degree_sum
    return b.c9 * math.sqrt(D) * b.s / b.gap + D * b.epsilon / b.gap


def alpha_failure_probability(b: BoundInputs) -> float:
    """2 exp(-9 s^2 N / (4 + 8 s / sqrt(a + b(k-1))))."""
    return 2.0 * _tail(b.s, b.params.N, b.degree_sum)


def _tail(s: float, N: int, D: float) -> float:
    return math.exp(-9.0 * s * s * N / (4.0 + 8.0 * s / math.sqrt(D)))


def alpha_bound_eta(b: BoundInputs) -> float:
    """(a + b(k-1)) (eps + c sqrt(eta)) / (a - b) with c = c_regime."""
    _require_alpha_regime(b)
    if b.eta is None:
        raise InvalidParameterError("eta is required for the eta form of the alpha bound")
    if not b.eta_in_range():
        lo, hi = b.eta_range()
        brackets = "()" if b.eta_open_interval else "[]"
        raise InvalidParameterError(f"eta = {b.eta} outside {brackets[0]}{lo:.6g}, {hi}{brackets[1]}")
    return b.degree_sum * (b.epsilon + b.c_regime * math.sqrt(b.eta)) / b.gap


def alpha_eta_failure_probability(b: BoundInputs) -> float:
    """2 exp(-eta m)."""
    if b.eta is None:
        raise InvalidParameterError("eta is required")
    return 2.0 * math.exp(-b.eta * b.params.m)


@dataclass
class BoundReport:
    values: Dict[str, Optional[float]] = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.flags

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = dict(self.values)
        out["flags"] = list(self.flags)
        return out


def delta_bounds(b: BoundInputs) -> BoundReport:
    """
    Evaluate every delta-type bound at constant 1, plus the composed constants
    with fixed values (72 alpha for the greedy recovery, 144 alpha after the
    weak-to-strong transform, 4 delta0 for boosting).
    """
    rep = BoundReport()
    v = rep.values
    p = b.params
    D, gap, N = b.degree_sum, b.gap, p.N
    k, n = p.k, p.n

    if gap <= 0:
        rep.flags.append("a_not_greater_than_b")
    if D < b.C0:
        rep.flags.append("degree_below_C0")

    if gap > 0:
        v["robust_delta"] = math.sqrt(D) / gap + b.epsilon * D / gap
        v["robust_delta_prime"] = (
            (b.epsilon + math.sqrt(b.eta)) * D / gap if b.eta is not None else None
        )
        v["snr"] = gap * gap / D if D > 0 else None
    else:
        v["robust_delta"] = None
        v["robust_delta_prime"] = None
        v["snr"] = 0.0
    if b.eta is not None and not b.eta_in_range():
        rep.flags.append("eta_out_of_range")
    v["robust_failure"] = 2.0 * math.exp(-2.0 * N)

    try:
        ab = alpha_bound(b)
    except InvalidParameterError:
        ab = None
        rep.flags.append("alpha_bound_out_of_regime")
    v["alpha_bound"] = ab
    v["alpha_failure"] = alpha_failure_probability(b) if D > 0 else None
    v["greedy_72alpha"] = 72.0 * ab if ab is not None else None
    v["composed_144alpha"] = 144.0 * ab if ab is not None else None
    if ab is not None and ab > k - 1:
        rep.flags.append("alpha_bound_vacuous")
    if b.eta is not None:
        try:
            v["alpha_bound_eta"] = alpha_bound_eta(b)
        except InvalidParameterError:
            v["alpha_bound_eta"] = None
        v["alpha_eta_failure"] = alpha_eta_failure_probability(b)

    # boosting
    floor = k * math.exp(-gap * gap / (100.0 * p.a)) if p.a > 0 and gap > 0 else float(k)
    delta0 = floor if b.delta0 is None else max(b.delta0, floor)
    if b.delta0 is not None and b.delta0 < floor:
        rep.flags.append("delta0_below_floor")
    v["boosted_delta0_floor"] = floor
    v["boosted_delta0"] = delta0
    if floor >= 1.0:
        rep.flags.append("delta0_floor_vacuous")
    corruption = b.epsilon * p.m / (gap * k * n) if gap > 0 else None
    v["boosted_delta"] = delta0 + corruption if corruption is not None else None
    v["boost_delta"] = 4.0 * delta0 + 80.0 * corruption if corruption is not None else None
    v["boost_failure"] = math.exp(-delta0 * k * n / 6.0)
    v["boosted_failure"] = 3.0 * math.exp(-delta0 * k * n / 6.0)

    v["first_algorithm_condition"] = 1.0 if D >= b.C0 else 0.0
    robust = v["robust_delta"]
    second = D >= 2.0 * b.C0 and robust is not None and robust <= b.c_regime / k
    v["second_algorithm_condition"] = 1.0 if second else 0.0
    if not second:
        rep.flags.append("second_algorithm_regime_not_met")

    v["planted_cut_bound"] = planted_cut_bound(p, b.s)
    v["planted_cut_failure"] = _tail(b.s, N, D) if D > 0 else None
    return rep


def planted_cut_bound(params: SbmParams, s: float = 1.0) -> float:
    """b(k-1)N/2 + 2 sqrt(a + b(k-1)) N s."""
    N = params.N
    return params.b * (params.k - 1) * N / 2.0 + 2.0 * math.sqrt(params.degree_sum) * N * s


# ---------- Grothendieck residual ----------

@dataclass
class GrothendieckResidual:
    residual: float
    rhs: float
    s: float

    @property
    def violated(self) -> bool:
        return self.residual > self.rhs

    def to_dict(self) -> Dict[str, Any]:
        return {"grothendieck_residual": self.residual, "grothendieck_rhs": self.rhs, "grothendieck_s": self.s, "grothendieck_violated": self.violated}


def grothendieck_residual(
    g: Graph, planted: Partition, params: SbmParams, e: Embedding, s: float = 1.0, KG: float = KG_DEFAULT
) -> GrothendieckResidual:
    """
    |sum_{u<v} (a_uv - E a_uv) |u - v|^2| against 6 K_G sqrt(a + b(k-1)) N s.

    The expectation part is evaluated in closed form from the within/between
    block sums of the embedding, so no N x N expectation matrix is built.
    """
    if not g.simple:
        raise InvalidParameterError("the residual is defined on a simple (pre-adversary) graph")
    diag = compute_diagnostics(e, planted)
    k, n = planted.k, planted.n
    # unordered sums of |u - v|^2 equal ordered sums of 1/2 |u - v|^2
    within_sq = diag.alpha * k * n * n
    between_sq = (diag.beta * n * n * k * (k - 1)) if k > 1 else 0.0
    observed = 2.0 * sdp_objective(e, g)
    expected = params.p_in * within_sq + params.p_out * between_sq
    rhs = 6.0 * KG * math.sqrt(params.degree_sum) * params.N * s
    return GrothendieckResidual(residual=abs(observed - expected), rhs=rhs, s=float(s))


# ---------- KL utilities ----------

@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.probs, dtype=np.float64).reshape(-1).copy()
        if len(p) == 0:
            raise InvalidParameterError("distribution needs a non-empty support")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise InvalidParameterError("probabilities must be finite and nonnegative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise InvalidParameterError(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, size: int) -> "DiscreteDistribution":
        return cls(np.full(size, 1.0 / size))

    @classmethod
    def point_mass(cls, size: int, at: int) -> "DiscreteDistribution":
        p = np.zeros(size)
        p[at] = 1.0
        return cls(p)

    def __len__(self) -> int:
        return len(self.probs)

    def mass(self, event: Union[Sequence[int], np.ndarray]) -> float:
        idx = np.asarray(event)
        if idx.dtype == bool:
            return float(self.probs[idx].sum())
        return float(self.probs[idx.astype(np.int64)].sum()) if idx.size else 0.0


def _xlog2_ratio(q: np.ndarray, p: np.ndarray) -> float:
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    pos = q > 0
    if np.any(pos & (p <= 0)):
        return math.inf
    return float(np.sum(q[pos] * np.log2(q[pos] / p[pos])))


def kl_divergence(q: DiscreteDistribution, p: DiscreteDistribution) -> float:
    """sum q log2(q / p); +inf when q is not absolutely continuous w.r.t. p."""
    if len(q) != len(p):
        raise ShapeError(f"supports differ: {len(q)} vs {len(p)} points")
    return _xlog2_ratio(q.probs, p.probs)


def coarse_divergence(q: DiscreteDistribution, p: DiscreteDistribution, events: Sequence[int]) -> float:
    """
    sum_i Q(E_i) log2(Q(E_i) / P(E_i)) for the partition of the support given
    by ``events`` (one event label per support point). Never exceeds kl_divergence.
    """
    labels = np.asarray(events, dtype=np.int64)
    if len(labels) != len(q) or len(q) != len(p):
        raise ShapeError("event labels must cover the common support")
    qe = np.bincount(labels, weights=q.probs)
    pe = np.bincount(labels, weights=p.probs)
    return _xlog2_ratio(qe, pe)


def kl_event_bound(dkl, p_event):
    """
    max(2 dkl / (-log2 P(E) + 1), e sqrt(2 P(E))).

    The "+1" is log2(2), so the bound is consistent only with base-2 divergences
    such as kl_divergence above. Accepts scalars or broadcastable arrays.
    """
    dkl_a = np.asarray(dkl, dtype=np.float64)
    p_a = np.asarray(p_event, dtype=np.float64)
    if np.any(dkl_a < 0):
        raise InvalidParameterError("divergence must be nonnegative")
    if np.any((p_a <= 0) | (p_a > 1)):
        raise InvalidParameterError("event probability must lie in (0, 1]")
    out = np.maximum(2.0 * dkl_a / (-np.log2(p_a) + 1.0), math.e * np.sqrt(2.0 * p_a))
    return float(out) if out.ndim == 0 else out


def kl_pipeline_failure(lambda_: float, eta: float, m: float) -> float:
    """Failure probability for a graph distribution lambda*m-close in KL: max(2 lambda / eta, 2 e^{1 - eta m / 2})."""
    if eta <= 0:
        raise InvalidParameterError("eta must be positive")
    if lambda_ < 0:
        raise InvalidParameterError("lambda must be nonnegative")
    return max(2.0 * lambda_ / eta, 2.0 * math.exp(1.0 - eta * m / 2.0))
