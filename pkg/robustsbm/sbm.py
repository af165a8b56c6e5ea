"""
Stochastic Block Model instances and the adversaries that corrupt them.

Graphs are stored as canonical pair arrays: every row (u, v) has u < v, rows
are sorted lexicographically and carry a multiplicity. A pair's *key* is
u * N + v, which sorts in the same order and makes set algebra between edge
sets a matter of np.setdiff1d / np.isin.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from .errors import (
    BudgetInfeasibleError,
    InvalidParameterError,
    InvalidProbabilityError,
    ShapeError,
    UnknownStrategyError,
)

log = logging.getLogger(__name__)

STRATEGIES = ("uniform", "degree-targeted", "concentrated")

# floor() guard for budgets like 0.05 * 1200 evaluating to 59.99999999
_FLOOR_EPS = 1e-9


def floor_budget(x: float) -> int:
    return max(0, int(math.floor(x + _FLOOR_EPS)))


# ---------- parameters ----------

@dataclass(frozen=True)
class SbmParams:
    n: int
    k: int
    a: float
    b: float

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 1:
            raise InvalidParameterError(f"n must be a positive integer, got {self.n!r}")
        if int(self.k) != self.k or self.k < 1:
            raise InvalidParameterError(f"k must be a positive integer, got {self.k!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        if not (self.a >= self.b >= 0.0):
            raise InvalidParameterError(f"need a >= b >= 0, got a={self.a}, b={self.b}")

    @property
    def N(self) -> int:
        return self.n * self.k

    @property
    def m(self) -> float:
        """Expected edge count as the analysis writes it: (nka + nk(k-1)b) / 2."""
        return (self.n * self.k * self.a + self.n * self.k * (self.k - 1) * self.b) / 2.0

    @property
    def p_in(self) -> float:
        return self.a / self.n

    @property
    def p_out(self) -> float:
        return self.b / self.n

    @property
    def expected_edges(self) -> float:
        """Exact expectation of |E| under sample_sbm (no self-pairs, so slightly below m)."""
        within_pairs = self.k * self.n * (self.n - 1) / 2.0
        between_pairs = self.k * (self.k - 1) / 2.0 * self.n * self.n
        return within_pairs * self.p_in + between_pairs * self.p_out

    @property
    def degree_sum(self) -> float:
        """a + b(k-1), the expected degree scale used by every bound."""
        return self.a + self.b * (self.k - 1)

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "SbmParams":
        return cls(n=d["n"], k=d["k"], a=d["a"], b=d["b"])

    def to_dict(self) -> Dict[str, Any]:
        return {"n": self.n, "k": self.k, "a": self.a, "b": self.b}


# ---------- graphs ----------

def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def pair_keys(pairs: np.ndarray, vertex_count: int) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return pairs[:, 0] * np.int64(vertex_count) + pairs[:, 1]


def keys_to_pairs(keys: np.ndarray, vertex_count: int) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64)
    return np.stack([keys // vertex_count, keys % vertex_count], axis=1).astype(np.int64)


@dataclass(frozen=True, eq=False)
class Graph:
    vertex_count: int
    pairs: np.ndarray
    multiplicity: np.ndarray
    simple: bool = True
    metadata: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_edges(
        cls,
        vertex_count: int,
        edges: Iterable[Sequence[int]],
        multiplicity: Optional[Iterable[int]] = None,
        simple: bool = True,
        metadata: Optional[Dict[str, Any]] = None,
    ) -> "Graph":
        """
        Build a graph from an arbitrary edge list.

        Endpoint order does not matter; repeated pairs are summed. A simple graph
        may not end up with any pair of multiplicity above 1.
        """
        if int(vertex_count) < 1:
            raise InvalidParameterError(f"vertex_count must be positive, got {vertex_count}")
        N = int(vertex_count)
        arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
        arr = arr.reshape(-1, 2)
        mult = (
            np.ones(len(arr), dtype=np.int64)
            if multiplicity is None
            else np.asarray(list(multiplicity), dtype=np.int64).reshape(-1)
        )
        if len(mult) != len(arr):
            raise ShapeError(f"{len(arr)} edges but {len(mult)} multiplicities")
        if len(arr):
            if arr.min() < 0 or arr.max() >= N:
                raise InvalidParameterError(f"edge endpoint out of range [0, {N})")
            if np.any(arr[:, 0] == arr[:, 1]):
                bad = int(arr[arr[:, 0] == arr[:, 1]][0, 0])
                raise InvalidParameterError(f"self-loop at vertex {bad}")
            if np.any(mult < 0):
                raise InvalidParameterError("negative multiplicity")
        lo = np.minimum(arr[:, 0], arr[:, 1])
        hi = np.maximum(arr[:, 0], arr[:, 1])
        keys = lo * N + hi
        keep = mult > 0
        keys, mult = keys[keep], mult[keep]
        uniq, inv = np.unique(keys, return_inverse=True)
        summed = np.zeros(len(uniq), dtype=np.int64)
        np.add.at(summed, inv, mult)
        if simple and np.any(summed > 1):
            raise InvalidParameterError("simple graph cannot contain a repeated pair")
        return cls._from_keys(N, uniq, summed, simple=simple, metadata=metadata)

    @classmethod
    def _from_keys(
        cls,
        vertex_count: int,
        keys: np.ndarray,
        multiplicity: Optional[np.ndarray] = None,
        simple: bool = True,
        metadata: Optional[Dict[str, Any]] = None,
    ) -> "Graph":
        # keys must already be sorted and unique
        keys = np.asarray(keys, dtype=np.int64)
        mult = np.ones(len(keys), dtype=np.int64) if multiplicity is None else np.asarray(multiplicity, dtype=np.int64)
        return cls(
            vertex_count=int(vertex_count),
            pairs=_readonly(keys_to_pairs(keys, vertex_count)),
            multiplicity=_readonly(mult.copy()),
            simple=bool(simple),
            metadata=dict(metadata or {}),
        )

    @classmethod
    def empty(cls, vertex_count: int, simple: bool = True) -> "Graph":
        return cls._from_keys(vertex_count, np.zeros(0, dtype=np.int64), simple=simple)

    # ---------- views ----------

    @property
    def pair_count(self) -> int:
        return int(len(self.pairs))

    @property
    def edge_count(self) -> int:
        """Edges counted with multiplicity."""
        return int(self.multiplicity.sum())

    def keys(self) -> np.ndarray:
        return pair_keys(self.pairs, self.vertex_count)

    def adjacency(self) -> sparse.csr_matrix:
        N = self.vertex_count
        if self.pair_count == 0:
            return sparse.csr_matrix((N, N), dtype=np.float64)
        u, v = self.pairs[:, 0], self.pairs[:, 1]
        w = self.multiplicity.astype(np.float64)
        A = sparse.coo_matrix(
            (np.concatenate([w, w]), (np.concatenate([u, v]), np.concatenate([v, u]))),
            shape=(N, N),
        )
        return A.tocsr()

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.vertex_count, dtype=np.int64)
        np.add.at(deg, self.pairs[:, 0], self.multiplicity)
        np.add.at(deg, self.pairs[:, 1], self.multiplicity)
        return deg

    def edge_set(self) -> set:
        return {(int(u), int(v)) for u, v in self.pairs}

    def with_metadata(self, **updates: Any) -> "Graph":
        md = dict(self.metadata)
        md.update(updates)
        return Graph(self.vertex_count, self.pairs, self.multiplicity, self.simple, md)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.vertex_count == other.vertex_count
            and self.simple == other.simple
            and np.array_equal(self.pairs, other.pairs)
            and np.array_equal(self.multiplicity, other.multiplicity)
        )

    __hash__ = None  # type: ignore[assignment]


# ---------- partitions ----------

@dataclass(frozen=True, eq=False)
class Partition:
    labels: np.ndarray
    k: int
    balanced: bool = True

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1).copy()
        if int(self.k) < 1:
            raise InvalidParameterError(f"k must be positive, got {self.k}")
        object.__setattr__(self, "k", int(self.k))
        if len(labels) and (labels.min() < 0 or labels.max() >= self.k):
            raise InvalidParameterError(f"labels must lie in [0, {self.k})")
        if self.balanced:
            if len(labels) % self.k != 0:
                raise ShapeError(f"{len(labels)} vertices cannot be split into {self.k} equal clusters")
            sizes = np.bincount(labels, minlength=self.k)
            if np.any(sizes != len(labels) // self.k):
                raise ShapeError(f"unbalanced cluster sizes {sizes.tolist()}")
        object.__setattr__(self, "labels", _readonly(labels))

    @classmethod
    def planted(cls, n: int, k: int) -> "Partition":
        """Contiguous equipartition: vertices 0..n-1 in cluster 0, and so on."""
        return cls(np.repeat(np.arange(k, dtype=np.int64), n), k, balanced=True)

    @classmethod
    def from_clusters(cls, clusters: Sequence[Iterable[int]], vertex_count: int, balanced: bool = True) -> "Partition":
        labels = np.full(vertex_count, -1, dtype=np.int64)
        for i, members in enumerate(clusters):
            idx = np.asarray(list(members), dtype=np.int64)
            if np.any(labels[idx] >= 0):
                raise ShapeError("clusters overlap")
            labels[idx] = i
        if np.any(labels < 0):
            raise ShapeError("clusters do not cover every vertex")
        return cls(labels, len(clusters), balanced=balanced)

    @property
    def vertex_count(self) -> int:
        return int(len(self.labels))

    @property
    def n(self) -> int:
        return self.vertex_count // self.k

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    def clusters(self) -> List[np.ndarray]:
        order = np.argsort(self.labels, kind="stable")
        bounds = np.cumsum(self.sizes())[:-1]
        return [np.asarray(c, dtype=np.int64) for c in np.split(order, bounds)]

    def relabel(self, mapping: Sequence[int]) -> "Partition":
        mapping = np.asarray(mapping, dtype=np.int64)
        return Partition(mapping[self.labels], self.k, self.balanced)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Partition):
            return NotImplemented
        return self.k == other.k and np.array_equal(self.labels, other.labels)

    __hash__ = None  # type: ignore[assignment]


# ---------- adversary budget ----------

@dataclass(frozen=True)
class AdversaryBudget:
    epsilon: float = 0.0
    epsilon1: float = 0.0
    epsilon2: float = 0.0
    monotone_add: int = 0
    monotone_remove: int = 0

    def __post_init__(self) -> None:
        for name in ("epsilon", "epsilon1", "epsilon2", "monotone_add", "monotone_remove"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be nonnegative")
        if self.epsilon1 + self.epsilon2 > self.epsilon + 1e-12:
            raise InvalidParameterError(
                f"epsilon1 + epsilon2 = {self.epsilon1 + self.epsilon2} exceeds epsilon = {self.epsilon}"
            )

    @classmethod
    def split(cls, epsilon: float, add_share: float = 0.5) -> "AdversaryBudget":
        """Split epsilon between added between-edges and removed within-edges."""
        if not (0.0 <= add_share <= 1.0):
            raise InvalidParameterError("add_share must lie in [0, 1]")
        e1 = epsilon * add_share
        return cls(epsilon=epsilon, epsilon1=e1, epsilon2=epsilon - e1)

    def outlier_caps(self, m: float) -> Tuple[int, int]:
        return floor_budget(self.epsilon1 * m), floor_budget(self.epsilon2 * m)

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "AdversaryBudget":
        return cls(
            epsilon=float(d.get("epsilon", 0.0)),
            epsilon1=float(d.get("epsilon1", 0.0)),
            epsilon2=float(d.get("epsilon2", 0.0)),
            monotone_add=int(d.get("monotone_add", 0)),
            monotone_remove=int(d.get("monotone_remove", 0)),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "epsilon1": self.epsilon1,
            "epsilon2": self.epsilon2,
            "monotone_add": self.monotone_add,
            "monotone_remove": self.monotone_remove,
        }


# ---------- samplers ----------

def _pair_rates(params: SbmParams) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    N = params.N
    iu, iv = np.triu_indices(N, k=1)
    labels = np.arange(N, dtype=np.int64) // params.n
    rates = np.where(labels[iu] == labels[iv], params.p_in, params.p_out)
    return iu.astype(np.int64), iv.astype(np.int64), rates


def sample_sbm(params: SbmParams, seed: Any) -> Tuple[Graph, Partition]:
    """One Bernoulli draw per unordered pair, pairs visited in lexicographic order."""
    if params.p_in > 1.0 or params.p_out > 1.0:
        raise InvalidProbabilityError(
            f"edge probabilities must be <= 1 (a/n = {params.p_in}, b/n = {params.p_out})"
        )
    rng = np.random.default_rng(seed)
    iu, iv, probs = _pair_rates(params)
    present = rng.random(len(probs)) < probs
    keys = iu[present] * params.N + iv[present]
    g = Graph._from_keys(params.N, keys, simple=True, metadata={"model": "bernoulli"})
    return g, Partition.planted(params.n, params.k)


def sample_poisson_sbm(params: SbmParams, seed: Any) -> Tuple[Graph, Partition]:
    rng = np.random.default_rng(seed)
    iu, iv, rates = _pair_rates(params)
    counts = rng.poisson(rates)
    present = counts > 0
    keys = iu[present] * params.N + iv[present]
    g = Graph._from_keys(params.N, keys, counts[present], simple=False, metadata={"model": "poisson"})
    return g, Partition.planted(params.n, params.k)


def flatten_to_simple(g: Graph) -> Graph:
    return Graph(
        g.vertex_count,
        g.pairs,
        _readonly(np.ones(g.pair_count, dtype=np.int64)),
        True,
        dict(g.metadata),
    )


def flattened_params(params: SbmParams) -> SbmParams:
    """Bernoulli parameters whose edge probability is 1 - exp(-rate), matching a flattened Poisson sample."""
    n = params.n
    return SbmParams(n, params.k, n * -math.expm1(-params.a / n), n * -math.expm1(-params.b / n))


def permute_vertices(g: Graph, planted: Partition, seed: Any) -> Tuple[Graph, Partition]:
    """Relabel vertices by a seeded random permutation; graph and partition move together."""
    if planted.vertex_count != g.vertex_count:
        raise ShapeError("graph and partition disagree on the vertex count")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(g.vertex_count)
    labels = np.empty_like(planted.labels)
    labels[perm] = planted.labels
    pg = Graph.from_edges(
        g.vertex_count,
        perm[g.pairs] if g.pair_count else np.zeros((0, 2), dtype=np.int64),
        g.multiplicity,
        simple=g.simple,
        metadata=dict(g.metadata, permuted=True),
    )
    return pg, Partition(labels, planted.k, planted.balanced)


# ---------- classification helpers ----------

def _check_same_vertices(g: Graph, p: Partition) -> None:
    if p.vertex_count != g.vertex_count:
        raise ShapeError(f"partition covers {p.vertex_count} vertices, graph has {g.vertex_count}")


def classify_edges(g: Graph, p: Partition) -> np.ndarray:
    """True for pairs whose endpoints share a cluster."""
    _check_same_vertices(g, p)
    if g.pair_count == 0:
        return np.zeros(0, dtype=bool)
    return p.labels[g.pairs[:, 0]] == p.labels[g.pairs[:, 1]]


def count_within_between(g: Graph, p: Partition) -> Tuple[int, int]:
    within = classify_edges(g, p)
    w = int(g.multiplicity[within].sum())
    return w, g.edge_count - w


def estimate_degree_params(
    g: Graph, n: int, k: int, partition: Optional[Partition] = None
) -> Tuple[float, float]:
    """
    Estimate (a, b) from edge counts.

    Without a partition only a + b(k-1) = 2|E|/(nk) is identifiable, returned as
    (a_hat, 0.0). With one, within and between counts are normalised by their pair counts.
    """
    if partition is None:
        return 2.0 * g.edge_count / (n * k), 0.0
    within, between = count_within_between(g, partition)
    within_pairs = k * n * (n - 1) / 2.0
    between_pairs = k * (k - 1) / 2.0 * n * n
    a_hat = n * within / within_pairs if within_pairs else 0.0
    b_hat = n * between / between_pairs if between_pairs else 0.0
    return a_hat, b_hat


def _class_keys(labels: np.ndarray, within: bool) -> np.ndarray:
    N = len(labels)
    iu, iv = np.triu_indices(N, k=1)
    same = labels[iu] == labels[iv]
    sel = same if within else ~same
    return iu[sel].astype(np.int64) * N + iv[sel].astype(np.int64)


def _choose(rng: np.random.Generator, pool: np.ndarray, count: int) -> np.ndarray:
    if count == 0:
        return np.zeros(0, dtype=np.int64)
    return np.sort(rng.choice(pool, size=count, replace=False))


# ---------- adversaries ----------

def apply_monotone_adversary(
    g: Graph, planted: Partition, add_within: int, remove_between: int, seed: Any
) -> Graph:
    """Add within-cluster edges and remove between-cluster edges, uniformly among eligible pairs."""
    if not g.simple:
        raise InvalidParameterError("the monotone adversary needs a simple graph")
    _check_same_vertices(g, planted)
    add_within, remove_between = int(add_within), int(remove_between)
    if add_within < 0 or remove_between < 0:
        raise InvalidParameterError("edit counts must be nonnegative")

    N = g.vertex_count
    present = g.keys()
    within_mask = classify_edges(g, planted)
    absent_within = np.setdiff1d(_class_keys(planted.labels, within=True), present, assume_unique=True)
    present_between = present[~within_mask]

    if add_within > len(absent_within):
        raise BudgetInfeasibleError(
            f"cannot add {add_within} within-cluster edges", max_feasible=len(absent_within)
        )
    if remove_between > len(present_between):
        raise BudgetInfeasibleError(
            f"cannot remove {remove_between} between-cluster edges", max_feasible=len(present_between)
        )

    rng = np.random.default_rng(seed)
    added = _choose(rng, absent_within, add_within)
    removed = _choose(rng, present_between, remove_between)
    keys = np.union1d(np.setdiff1d(present, removed, assume_unique=True), added)
    log.debug("monotone adversary: +%d within, -%d between", add_within, remove_between)
    md = dict(g.metadata)
    md["monotone_added"] = md.get("monotone_added", 0) + add_within
    md["monotone_removed"] = md.get("monotone_removed", 0) + remove_between
    return Graph._from_keys(N, keys, simple=True, metadata=md)


def _degree_targeted(rng: np.random.Generator, pool: np.ndarray, count: int, deg: np.ndarray, N: int) -> np.ndarray:
    if count == 0:
        return np.zeros(0, dtype=np.int64)
    du, dv = deg[pool // N], deg[pool % N]
    tiebreak = rng.random(len(pool))
    # lexsort: last key is primary
    order = np.lexsort((tiebreak, np.maximum(du, dv), np.minimum(du, dv)))
    return np.sort(pool[order[:count]])


def _concentrated(
    rng: np.random.Generator, pool: np.ndarray, count: int, subset: np.ndarray, N: int
) -> Tuple[np.ndarray, int]:
    if count == 0:
        return np.zeros(0, dtype=np.int64), 0
    in_subset = np.zeros(N, dtype=bool)
    in_subset[subset] = True
    touches = in_subset[pool // N] | in_subset[pool % N]
    focus, rest = pool[touches], pool[~touches]
    take = min(count, len(focus))
    chosen = [rng.choice(focus, size=take, replace=False)] if take else []
    spill = count - take
    if spill:
        chosen.append(rng.choice(rest, size=spill, replace=False))
    return np.sort(np.concatenate(chosen).astype(np.int64)), spill


def apply_outlier_adversary(
    g: Graph,
    planted: Partition,
    budget: AdversaryBudget,
    params: SbmParams,
    strategy: str = "uniform",
    seed: Any = 0,
) -> Graph:
    """
    Spend the outlier budget: floor(eps1 * m) new between-cluster edges and
    floor(eps2 * m) removed within-cluster edges.

    The whole floored budget is spent; "at most" in the model is met with equality.
    """
    if strategy not in STRATEGIES:
        raise UnknownStrategyError(f"unknown adversary strategy {strategy!r} (choose from {', '.join(STRATEGIES)})")
    if not g.simple:
        raise InvalidParameterError("the outlier adversary needs a simple graph")
    _check_same_vertices(g, planted)

    add_cap, remove_cap = budget.outlier_caps(params.m)
    N = g.vertex_count
    present = g.keys()
    within_mask = classify_edges(g, planted)
    absent_between = np.setdiff1d(_class_keys(planted.labels, within=False), present, assume_unique=True)
    present_within = present[within_mask]

    if add_cap > len(absent_between):
        raise BudgetInfeasibleError(
            f"cannot add {add_cap} between-cluster edges", max_feasible=len(absent_between)
        )
    if remove_cap > len(present_within):
        raise BudgetInfeasibleError(
            f"cannot remove {remove_cap} within-cluster edges", max_feasible=len(present_within)
        )

    rng = np.random.default_rng(seed)
    md = dict(g.metadata)
    if strategy == "uniform":
        added = _choose(rng, absent_between, add_cap)
        removed = _choose(rng, present_within, remove_cap)
    elif strategy == "degree-targeted":
        deg = g.degrees()
        added = _degree_targeted(rng, absent_between, add_cap, deg, N)
        removed = _degree_targeted(rng, present_within, remove_cap, deg, N)
    else:
        gap = params.a - params.b
        total = add_cap + remove_cap
        size = N if gap <= 0 else min(N, max(1, floor_budget(total / gap)))
        subset = np.sort(rng.choice(N, size=size, replace=False))
        added, spill_add = _concentrated(rng, absent_between, add_cap, subset, N)
        removed, spill_rem = _concentrated(rng, present_within, remove_cap, subset, N)
        md["concentrated_subset_size"] = int(size)
        md["concentrated_spillover"] = int(spill_add + spill_rem)
        if spill_add + spill_rem:
            log.debug("concentrated adversary spilled %d edits outside its subset", spill_add + spill_rem)

    keys = np.union1d(np.setdiff1d(present, removed, assume_unique=True), added)
    md["outlier_added"] = md.get("outlier_added", 0) + int(len(added))
    md["outlier_removed"] = md.get("outlier_removed", 0) + int(len(removed))
    md["outlier_strategy"] = strategy
    log.debug("outlier adversary (%s): +%d between, -%d within", strategy, len(added), len(removed))
    return Graph._from_keys(N, keys, simple=True, metadata=md)
