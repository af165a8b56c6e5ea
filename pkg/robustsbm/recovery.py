"""
Greedy geometric recovery from an SDP embedding, the core/separation
diagnostics that explain when it works, and the weak-to-strong rebalancing.

Tie rules are fixed so every function here is a deterministic function of its
inputs: the maximum-degree vertex is the lowest id among ties, oversized
clusters drop their highest ids, and leftover vertices are handed out in
ascending id order to the lowest-index cluster that still has room.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidParameterError, ShapeError
from .metrics import Closeness, closeness_strong, closeness_weak
from .sbm import Partition
from .sdp import Embedding, SdpDiagnostics, center_distances, compute_diagnostics

log = logging.getLogger(__name__)

RHO_ALGORITHM = 0.27
RHO_DEFINITION = 0.2


@dataclass(frozen=True)
class CoreParams:
    rho: float = RHO_DEFINITION

    def __post_init__(self) -> None:
        if not (0.0 < self.rho < 1.0 / 3.0):
            raise InvalidParameterError(f"rho must lie in (0, 1/3), got {self.rho}")

    @property
    def delta_cap(self) -> float:
        return 6.0 * self.rho


@dataclass(frozen=True, eq=False)
class WeakPartition:
    clusters: Tuple[np.ndarray, ...]
    vertex_count: int
    n: Optional[int] = None

    def __post_init__(self) -> None:
        cl = tuple(np.asarray(c, dtype=np.int64) for c in self.clusters)
        seen = np.zeros(self.vertex_count, dtype=np.int64)
        for c in cl:
            if len(c) and (c.min() < 0 or c.max() >= self.vertex_count):
                raise ShapeError("cluster member out of range")
            np.add.at(seen, c, 1)
        if np.any(seen != 1):
            raise ShapeError("clusters must be disjoint and cover every vertex")
        if self.n is not None and any(len(c) > self.n for c in cl):
            raise ShapeError(f"a cluster exceeds n = {self.n}")
        for c in cl:
            c.setflags(write=False)
        object.__setattr__(self, "clusters", cl)

    @property
    def count(self) -> int:
        return len(self.clusters)

    def sizes(self) -> np.ndarray:
        return np.array([len(c) for c in self.clusters], dtype=np.int64)

    def labels(self) -> np.ndarray:
        out = np.empty(self.vertex_count, dtype=np.int64)
        for i, c in enumerate(self.clusters):
            out[c] = i
        return out

    @classmethod
    def from_partition(cls, p: Partition) -> "WeakPartition":
        return cls(tuple(p.clusters()), p.vertex_count, n=p.n if p.balanced else None)


# ---------- greedy recovery ----------

def auxiliary_graph(X: np.ndarray, rho: float) -> np.ndarray:
    """Boolean N x N matrix of |u - v| < 2 rho, self-pairs included."""
    sq = np.einsum("ij,ij->i", X, X)
    d2 = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    aux = d2 < (2.0 * rho) ** 2
    np.fill_diagonal(aux, True)
    return aux


def greedy_recover(e: Embedding, n: int, rho: float = RHO_ALGORITHM) -> WeakPartition:
    if n < 1:
        raise InvalidParameterError("n must be at least 1")
    if rho <= 0:
        raise InvalidParameterError("rho must be positive")
    N = e.vertex_count
    aux = auxiliary_graph(e.vectors, rho)
    deg = aux.sum(axis=1).astype(np.int64)
    alive = np.ones(N, dtype=bool)
    clusters: List[np.ndarray] = []
    while alive.any():
        u = int(np.argmax(np.where(alive, deg, -1)))
        members = np.flatnonzero(aux[u] & alive)[:n]
        alive[members] = False
        deg -= aux[:, members].sum(axis=1)
        clusters.append(members)
    log.debug("greedy recovery: %d clusters from %d vertices (rho=%g)", len(clusters), N, rho)
    return WeakPartition(tuple(clusters), N, n=n)


# ---------- rebalancing ----------

def fill_clusters(clusters: Sequence[np.ndarray], leftovers: np.ndarray, n: int, vertex_count: int) -> Partition:
    """
    Hand leftover vertices, in ascending id order, to the lowest-index cluster
    that still has fewer than n members. Clusters must already be at most n.
    """
    k = len(clusters)
    sizes = np.array([len(c) for c in clusters], dtype=np.int64)
    if np.any(sizes > n):
        raise ShapeError(f"a cluster already exceeds n = {n}")
    deficits = n - sizes
    leftovers = np.sort(np.asarray(leftovers, dtype=np.int64))
    if deficits.sum() != len(leftovers):
        raise ShapeError(f"{len(leftovers)} leftover vertices cannot fill {int(deficits.sum())} open slots")
    labels = np.full(vertex_count, -1, dtype=np.int64)
    for i, c in enumerate(clusters):
        labels[np.asarray(c, dtype=np.int64)] = i
    labels[leftovers] = np.repeat(np.arange(k, dtype=np.int64), deficits)
    if np.any(labels < 0):
        raise ShapeError("rebalancing left vertices unassigned")
    return Partition(labels, k, balanced=True)


def weak_to_strong(w: WeakPartition, n: int, k: int) -> Partition:
    """Keep the k largest clusters (creation order), fill them to n with everything else."""
    if w.vertex_count != n * k:
        raise ShapeError(f"weak partition covers {w.vertex_count} vertices, expected n*k = {n * k}")
    sizes = w.sizes()
    if np.any(sizes > n):
        raise ShapeError(f"a cluster has {int(sizes.max())} > n = {n} vertices")
    if w.count < k:
        raise ShapeError(f"{w.count} clusters of size at most {n} cannot cover {n * k} vertices")
    # stable sort on -size keeps lower creation index first among ties
    order = np.argsort(-sizes, kind="stable")
    kept = np.sort(order[:k])
    dropped = np.sort(order[k:])
    leftovers = (
        np.concatenate([w.clusters[i] for i in dropped]) if len(dropped) else np.zeros(0, dtype=np.int64)
    )
    return fill_clusters([w.clusters[i] for i in kept], leftovers, n, w.vertex_count)


def recover_partition(e: Embedding, n: int, k: int, rho: float = RHO_ALGORITHM) -> Tuple[WeakPartition, Partition]:
    w = greedy_recover(e, n, rho)
    return w, weak_to_strong(w, n, k)


# ---------- cores ----------

def recovery_constant(rho: float) -> Optional[float]:
    """1/rho^2 + 6/(2 - Delta^2) with Delta = 6 rho; None once Delta^2 >= 2."""
    d2 = (6.0 * rho) ** 2
    if d2 >= 2.0:
        return None
    return 1.0 / (rho * rho) + 6.0 / (2.0 - d2)


@dataclass
class CoreReport:
    rho: float
    alpha: float
    in_core: np.ndarray
    core_sizes: np.ndarray
    outside_count: int
    separation: np.ndarray
    well_separated_pairs: List[Tuple[int, int]]
    remote_bound: float
    separation_applicable: bool
    separation_delta: Optional[float]
    separation_subset: List[int]
    separation_min_size: Optional[float]
    separation_subset_separated: bool
    constants: Dict[str, Optional[float]] = field(default_factory=dict)

    @property
    def remote_holds(self) -> bool:
        return self.outside_count <= self.remote_bound + 1e-9

    @property
    def separation_holds(self) -> Optional[bool]:
        if not self.separation_applicable or self.separation_min_size is None:
            return None
        return len(self.separation_subset) >= self.separation_min_size - 1e-9

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rho": self.rho,
            "delta_cap": 6.0 * self.rho,
            "core_sizes": self.core_sizes.tolist(),
            "outside_count": self.outside_count,
            "separation": self.separation.tolist(),
            "well_separated_pairs": [list(p) for p in self.well_separated_pairs],
            "remote_bound": self.remote_bound,
            "remote_holds": self.remote_holds,
            "separation_applicable": self.separation_applicable,
            "separation_delta": self.separation_delta,
            "separation_subset": list(self.separation_subset),
            "separation_min_size": self.separation_min_size,
            "separation_holds": self.separation_holds,
            "separation_subset_separated": self.separation_subset_separated,
            **self.constants,
        }


def _well_separated_subset(diag: SdpDiagnostics, delta_cap: float) -> Tuple[List[int], float, float]:
    """
    Constructive version of the separation argument: drop one cluster per pair
    whose centers have inner product >= mu, then drop clusters whose alpha_i
    exceeds 2 mu. Uses mu = (2 - Delta^2)/6 directly so alpha = 0 needs no special case.
    """
    k = diag.k
    mu = (2.0 - delta_cap * delta_cap) / 6.0
    inner = diag.centers @ diag.centers.T
    keep = np.ones(k, dtype=bool)
    for i in range(k):
        for j in range(i + 1, k):
            if keep[i] and keep[j] and inner[i, j] >= mu:
                keep[j] = False
    keep &= diag.alpha_i <= 2.0 * mu
    return [int(i) for i in np.flatnonzero(keep)], mu, 2.0 * mu


def compute_cores(e: Embedding, planted: Partition, p: CoreParams, diagnostics: Optional[SdpDiagnostics] = None) -> CoreReport:
    diag = diagnostics or compute_diagnostics(e, planted)
    k, n = planted.k, planted.n
    rho, delta_cap = p.rho, p.delta_cap

    in_core = diag.radii < rho
    core_sizes = np.bincount(planted.labels[in_core], minlength=k)
    outside = int((~in_core).sum())
    sep = center_distances(diag.centers)
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k) if sep[i, j] >= delta_cap]

    applicable = delta_cap * delta_cap < 2.0
    subset, _, _ = _well_separated_subset(diag, delta_cap)
    if applicable:
        sep_delta = 6.0 * diag.alpha / (2.0 - delta_cap * delta_cap)
        sep_min = (1.0 - sep_delta) * k
    else:
        sep_delta = None
        sep_min = None
    subset_sep = all(sep[i, j] >= delta_cap - 1e-12 for a, i in enumerate(subset) for j in subset[a + 1:])

    c_def = recovery_constant(RHO_DEFINITION)
    c_run = recovery_constant(rho)
    constants = {
        "greedy_constant_definition": 2.0 * c_def if c_def is not None else None,
        "greedy_constant_running": 2.0 * c_run if c_run is not None else None,
        "greedy_bound_definition": 72.0 * diag.alpha,
        "greedy_bound_running": 2.0 * c_run * diag.alpha if c_run is not None else None,
    }
    return CoreReport(
        rho=rho,
        alpha=diag.alpha,
        in_core=in_core,
        core_sizes=core_sizes,
        outside_count=outside,
        separation=sep,
        well_separated_pairs=pairs,
        remote_bound=diag.alpha / (rho * rho) * k * n,
        separation_applicable=applicable,
        separation_delta=sep_delta,
        separation_subset=subset,
        separation_min_size=sep_min,
        separation_subset_separated=subset_sep,
        constants=constants,
    )


# ---------- reports ----------

@dataclass
class RecoveryReport:
    delta_weak: float
    delta_strong: float
    matching_weak: np.ndarray
    matching_strong: np.ndarray
    cluster_count: int
    core_sizes: List[int]
    separation: List[List[float]]
    alpha: float
    beta: Optional[float]
    rho: float
    greedy_72alpha: float
    seeds: Dict[str, int] = field(default_factory=dict)

    @property
    def within_greedy_bound(self) -> bool:
        return self.delta_weak <= self.greedy_72alpha + 1e-12

    def to_dict(self) -> Dict[str, Any]:
        return {
            "delta_weak": self.delta_weak,
            "delta_strong": self.delta_strong,
            "matching_weak": self.matching_weak.tolist(),
            "matching_strong": self.matching_strong.tolist(),
            "cluster_count": self.cluster_count,
            "core_sizes": list(self.core_sizes),
            "separation": self.separation,
            "alpha": self.alpha,
            "beta": self.beta,
            "rho": self.rho,
            "greedy_72alpha": self.greedy_72alpha,
            "within_greedy_bound": self.within_greedy_bound,
            "seeds": dict(self.seeds),
        }


def build_recovery_report(
    e: Embedding,
    weak: WeakPartition,
    strong: Partition,
    planted: Partition,
    rho: float = RHO_ALGORITHM,
    seeds: Optional[Dict[str, int]] = None,
) -> RecoveryReport:
    diag = compute_diagnostics(e, planted)
    cw: Closeness = closeness_weak(weak, planted)
    cs: Closeness = closeness_strong(strong, planted)
    # cores always use the requested rho when it is in range, else the definition value
    core_rho = rho if 0.0 < rho < 1.0 / 3.0 else RHO_DEFINITION
    cores = compute_cores(e, planted, CoreParams(core_rho), diagnostics=diag)
    return RecoveryReport(
        delta_weak=cw.delta,
        delta_strong=cs.delta,
        matching_weak=cw.sigma,
        matching_strong=cs.sigma,
        cluster_count=weak.count,
        core_sizes=cores.core_sizes.tolist(),
        separation=cores.separation.tolist(),
        alpha=diag.alpha,
        beta=None if math.isnan(diag.beta) else diag.beta,
        rho=rho,
        greedy_72alpha=72.0 * diag.alpha,
        seeds=dict(seeds or {}),
    )
