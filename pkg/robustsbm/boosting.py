"""
One round of edge-split boosting.

The edge set is colored by a fair coin per pair; a base recovery runs on the
first color only, and every vertex is then reassigned by a majority vote of
its second-color neighbours in the opposite half of each base cluster.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional

import numpy as np
from scipy import sparse

from .errors import InvalidParameterError, ShapeError
from .recovery import fill_clusters
from .sbm import Graph, Partition, SbmParams, estimate_degree_params

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EdgeSplit:
    e1: Graph
    e2: Graph
    seed: Any


def pair_index(pairs: np.ndarray, vertex_count: int) -> np.ndarray:
    """Position of (u, v), u < v, in the lexicographic list of all N(N-1)/2 pairs."""
    u = pairs[:, 0].astype(np.int64)
    v = pairs[:, 1].astype(np.int64)
    N = np.int64(vertex_count)
    return u * N - u * (u + 1) // 2 + (v - u - 1)


def pair_colors(pairs: np.ndarray, vertex_count: int, seed: Any) -> np.ndarray:
    """
    True where a pair is colored 1.

    The coin of a pair depends only on (pair, seed), so any two graphs on the
    same vertex set are colored consistently.
    """
    total = vertex_count * (vertex_count - 1) // 2
    coins = np.random.default_rng(seed).random(total) < 0.5
    if len(pairs) == 0:
        return np.zeros(0, dtype=bool)
    return coins[pair_index(pairs, vertex_count)]


def split_edges(g: Graph, seed: Any) -> EdgeSplit:
    if not g.simple:
        raise InvalidParameterError("split_edges needs a simple graph")
    first = pair_colors(g.pairs, g.vertex_count, seed)
    keys = g.keys()
    e1 = Graph._from_keys(g.vertex_count, keys[first], simple=True, metadata={"split": 1})
    e2 = Graph._from_keys(g.vertex_count, keys[~first], simple=True, metadata={"split": 2})
    return EdgeSplit(e1=e1, e2=e2, seed=seed)


@dataclass(frozen=True)
class BoostConfig:
    threshold: Optional[float] = None
    random_halves: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.threshold is not None and not self.threshold > 0:
            raise InvalidParameterError(f"threshold must be positive, got {self.threshold}")

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "BoostConfig":
        d = d or {}
        return cls(
            threshold=None if d.get("threshold") is None else float(d["threshold"]),
            random_halves=bool(d.get("random_halves", False)),
            seed=int(d.get("seed", 0)),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {"threshold": self.threshold, "random_halves": self.random_halves, "seed": self.seed}


def resolve_threshold(
    cfg: BoostConfig,
    params: Optional[SbmParams] = None,
    e2: Optional[Graph] = None,
    base: Optional[Partition] = None,
) -> float:
    """
    Explicit threshold, else (a - b)/20 from known parameters, else an estimate
    from the second-color edges against the base partition (doubled, since E2
    carries half of the edges).
    """
    if cfg.threshold is not None:
        return float(cfg.threshold)
    if params is not None and params.a > params.b:
        return (params.a - params.b) / 20.0
    if e2 is not None and base is not None:
        a_hat, b_hat = estimate_degree_params(e2, base.n, base.k, base)
        t = 2.0 * (a_hat - b_hat) / 20.0
        if t > 0:
            return t
    log.warning("could not derive a positive corruption threshold; using T = 1")
    return 1.0


def _halves(base: Partition, cfg: BoostConfig) -> np.ndarray:
    """0 for the lower half of each base cluster, 1 for the upper half."""
    side = np.zeros(base.vertex_count, dtype=np.int64)
    rng = np.random.default_rng(cfg.seed) if cfg.random_halves else None
    for members in base.clusters():
        if rng is not None:
            members = rng.permutation(members)
        side[members[len(members) // 2:]] = 1
    return side


def boost(e2: Graph, base: Partition, n: int, k: int, cfg: Optional[BoostConfig] = None) -> Partition:
    """
    Majority-vote reassignment on second-color edges, then rebalancing.

    A vertex in the lower half votes over the upper halves of the base
    clusters and vice versa. Ties go to the vertex's own base cluster, then to
    the lowest index. Oversized clusters keep their n lowest ids; the rest are
    redistributed in ascending id order.
    """
    cfg = cfg or BoostConfig()
    N = n * k
    if e2.vertex_count != N or base.vertex_count != N:
        raise ShapeError(f"expected {N} vertices, graph has {e2.vertex_count}, base has {base.vertex_count}")
    if not base.balanced or base.k != k or base.n != n:
        raise ShapeError("base partition must be balanced with k clusters of size n")
    if k == 1:
        return base

    side = _halves(base, cfg)
    A = e2.adjacency()
    labels = base.labels
    rows = np.arange(N)
    to_upper = sparse.csr_matrix(((side == 1).astype(np.float64), (rows, labels)), shape=(N, k))
    to_lower = sparse.csr_matrix(((side == 0).astype(np.float64), (rows, labels)), shape=(N, k))
    counts = np.where(
        (side == 0)[:, None],
        np.asarray((A @ to_upper).todense()),
        np.asarray((A @ to_lower).todense()),
    )

    best = counts.max(axis=1)
    own = counts[rows, labels] >= best
    assigned = np.where(own, labels, np.argmax(counts, axis=1))
    log.debug("boost: %d of %d vertices changed cluster", int((assigned != labels).sum()), N)

    kept = []
    leftovers = []
    for i in range(k):
        members = np.flatnonzero(assigned == i)
        kept.append(members[:n])
        leftovers.append(members[n:])
    return fill_clusters(kept, np.concatenate(leftovers), n, N)


def count_corrupted(g: Graph, g_ref: Graph, split: EdgeSplit, T: float) -> int:
    """Vertices incident to at least T pairs of (E2 of g) symmetric-difference (E2 of g_ref)."""
    if g.vertex_count != g_ref.vertex_count:
        raise ShapeError("graphs must share a vertex set")
    N = g.vertex_count
    ref_first = pair_colors(g_ref.pairs, N, split.seed)
    ref_e2 = g_ref.keys()[~ref_first]
    diff = np.setxor1d(split.e2.keys(), ref_e2, assume_unique=True)
    if len(diff) == 0:
        return 0
    incidence = np.bincount(np.concatenate([diff // N, diff % N]), minlength=N)
    return int((incidence >= T).sum())


@dataclass
class BoostResult:
    split: EdgeSplit
    base: Partition
    boosted: Partition
    threshold: float


def boosted_recovery(
    g: Graph,
    n: int,
    k: int,
    base_recover: Callable[[Graph], Partition],
    cfg: Optional[BoostConfig] = None,
    params: Optional[SbmParams] = None,
    split_seed: Any = None,
) -> BoostResult:
    """
    split -> base recovery on E1 -> boost on E2. ``base_recover`` never sees E2.

    The split uses ``split_seed`` when given, else ``cfg.seed``.
    """
    cfg = cfg or BoostConfig()
    split = split_edges(g, cfg.seed if split_seed is None else split_seed)
    base = base_recover(split.e1)
    boosted = boost(split.e2, base, n, k, cfg)
    T = resolve_threshold(cfg, params, split.e2, base)
    return BoostResult(split=split, base=base, boosted=boosted, threshold=T)
