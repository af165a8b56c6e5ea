"""
The vector SDP relaxation of balanced partitioning and the geometry of its solutions.

    min   sum_{(u,v) in E} 1/2 |u - v|^2
    s.t.  |u|^2 = 1                                   for every vertex
          sum_{u,v in V} 1/2 |u - v|^2 = N^2 (1 - 1/k)  (over all N^2 ordered pairs)
          <u, v> >= 0                                 for every pair

solve_sdp() works on a low-rank factor X (one row per vertex) and never forms
the N x N matrix variable explicitly, except for the Gram matrix needed by the
pairwise nonnegativity terms.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy import sparse

from .errors import InvalidParameterError, ShapeError, SolverFailure
from .sbm import Graph, Partition, SbmParams

log = logging.getLogger(__name__)

_GRAM_CHUNK = 1024


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _normalize_rows(X: np.ndarray, fallback: Optional[np.ndarray] = None) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1)
    out = X / np.where(norms > 0, norms, 1.0)[:, None]
    if fallback is not None and np.any(norms == 0):
        out[norms == 0] = fallback
    return out


# ---------- embeddings ----------

@dataclass(frozen=True, eq=False)
class Embedding:
    vectors: np.ndarray
    converged: bool = True
    info: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        X = np.array(self.vectors, dtype=np.float64, copy=True)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ShapeError(f"embedding must be a non-empty 2-D array, got shape {X.shape}")
        object.__setattr__(self, "vectors", _readonly(X))

    @property
    def vertex_count(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    def gram(self) -> np.ndarray:
        return self.vectors @ self.vectors.T


def planted_embedding(partition: Partition, dimension: Optional[int] = None) -> Embedding:
    """u = e_{cluster(u)}: feasible, with value equal to the planted cut."""
    r = partition.k if dimension is None else int(dimension)
    if r < partition.k:
        raise InvalidParameterError(f"dimension {r} is smaller than k = {partition.k}")
    X = np.zeros((partition.vertex_count, r))
    X[np.arange(partition.vertex_count), partition.labels] = 1.0
    return Embedding(X)


def _cluster_directions(n: int, block: int, rng: np.random.Generator) -> np.ndarray:
    """n vectors in R^block summing to zero: antipodal pairs, plus a 120-degree triple if n is odd."""
    W = np.zeros((n, block))
    i = 0
    if n % 2 == 1 and n >= 3:
        q, _ = np.linalg.qr(rng.standard_normal((block, 2)))
        for t in range(3):
            ang = 2.0 * math.pi * t / 3.0
            W[i + t] = math.cos(ang) * q[:, 0] + math.sin(ang) * q[:, 1]
        i = 3
    while i + 1 < n:
        d = rng.standard_normal(block)
        d /= np.linalg.norm(d)
        W[i], W[i + 1] = d, -d
        i += 2
    return W


def random_feasible_embedding(partition: Partition, spread: Optional[float] = None, seed: Any = 0) -> Embedding:
    """
    An exactly feasible, non-integral embedding for a balanced partition.

    u = c e_{cluster(u)} + s w_u + g f with c^2 = 1 - k g^2 and s = g sqrt(k - 1):
    the w_u of a cluster sum to zero and live in a block private to that
    cluster, f is shared. Unit norms and the spread constraint hold exactly;
    nonnegativity holds as long as g^2 <= 1 / (2k - 2). ``spread`` in [0, 1]
    picks g as that fraction of its maximum (random when omitted). The whole
    configuration is finally rotated by a random orthogonal matrix.
    """
    if not partition.balanced:
        raise InvalidParameterError("random_feasible_embedding needs a balanced partition")
    rng = np.random.default_rng(seed)
    k, n, N = partition.k, partition.n, partition.vertex_count
    t = float(rng.uniform(0.0, 1.0)) if spread is None else float(spread)
    if not (0.0 <= t <= 1.0):
        raise InvalidParameterError("spread must lie in [0, 1]")
    g = 0.0 if (k == 1 or n == 1) else t / math.sqrt(2.0 * k - 2.0)
    c = math.sqrt(max(0.0, 1.0 - k * g * g))
    s = g * math.sqrt(k - 1)

    block = 3
    r = k + 1 + k * block
    X = np.zeros((N, r))
    for i, members in enumerate(partition.clusters()):
        X[members, i] = c
        X[members, k] = g
        lo = k + 1 + i * block
        X[members, lo:lo + block] = s * _cluster_directions(n, block, rng)
    Q, _ = np.linalg.qr(rng.standard_normal((r, r)))
    return Embedding(X @ Q, info={"g": g, "spread": t})


# ---------- objective and feasibility ----------

def sdp_objective(e: Embedding, g: Graph) -> float:
    """Sum over edges of 1/2 |u - v|^2, with multiplicity."""
    if e.vertex_count != g.vertex_count:
        raise ShapeError(f"embedding has {e.vertex_count} rows, graph has {g.vertex_count} vertices")
    if g.pair_count == 0:
        return 0.0
    X = e.vectors
    diff = X[g.pairs[:, 0]] - X[g.pairs[:, 1]]
    return float(0.5 * np.dot(g.multiplicity.astype(np.float64), np.einsum("ij,ij->i", diff, diff)))


def spread_sum(X: np.ndarray) -> float:
    """sum over all ordered pairs of 1/2 |u - v|^2 = N * sum |u|^2 - |sum u|^2."""
    s = X.sum(axis=0)
    return float(X.shape[0] * np.einsum("ij,ij->", X, X) - s @ s)


def _min_offdiagonal_inner(X: np.ndarray) -> float:
    N = X.shape[0]
    if N < 2:
        return 0.0
    best = math.inf
    for lo in range(0, N, _GRAM_CHUNK):
        hi = min(N, lo + _GRAM_CHUNK)
        G = X[lo:hi] @ X.T
        G[np.arange(hi - lo), np.arange(lo, hi)] = math.inf
        best = min(best, float(G.min()))
    return best


@dataclass
class FeasibilityReport:
    unit_norm: float
    unit_norm_vertex: int
    spread: float
    spread_relative: float
    nonnegativity: float
    tol: float

    @property
    def passed(self) -> bool:
        return (
            self.unit_norm <= self.tol
            and self.spread_relative <= self.tol
            and self.nonnegativity <= self.tol
        )

    @property
    def flags(self) -> List[str]:
        out = []
        if self.unit_norm > self.tol:
            out.append("unit_norm")
        if self.spread_relative > self.tol:
            out.append("spread")
        if self.nonnegativity > self.tol:
            out.append("nonnegativity")
        return out

    @property
    def worst(self) -> float:
        return max(self.unit_norm, self.spread_relative, self.nonnegativity)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "unit_norm": self.unit_norm,
            "unit_norm_vertex": self.unit_norm_vertex,
            "spread": self.spread,
            "spread_relative": self.spread_relative,
            "nonnegativity": self.nonnegativity,
            "tol": self.tol,
            "passed": self.passed,
        }


def check_feasibility(e: Embedding, params: SbmParams, tol: float = 1e-3) -> FeasibilityReport:
    """
    Worst violation per constraint family.

    The spread residual is reported both absolutely and relative to N^2; the
    pass/fail decision uses the relative value so one tolerance serves every N.
    """
    X = e.vectors
    N = X.shape[0]
    if N != params.N:
        raise ShapeError(f"embedding has {N} rows, parameters describe {params.N} vertices")
    sq = np.einsum("ij,ij->i", X, X)
    dev = np.abs(sq - 1.0)
    worst_vertex = int(np.argmax(dev))
    spread_abs = abs(spread_sum(X) - N * N * (1.0 - 1.0 / params.k))
    return FeasibilityReport(
        unit_norm=float(dev[worst_vertex]),
        unit_norm_vertex=worst_vertex,
        spread=float(spread_abs),
        spread_relative=float(spread_abs / (N * N)),
        nonnegativity=float(max(0.0, -_min_offdiagonal_inner(X))),
        tol=float(tol),
    )


# ---------- diagnostics ----------

@dataclass
class SdpDiagnostics:
    alpha: float
    beta: float
    alpha_i: np.ndarray
    beta_ij: np.ndarray
    centers: np.ndarray
    radii: np.ndarray
    labels: np.ndarray
    objective: Optional[float] = None

    @property
    def k(self) -> int:
        return int(len(self.alpha_i))

    def identity_residuals(self) -> Dict[str, Optional[float]]:
        """Absolute residuals of the center identities and of alpha + (k-1) beta = k - 1."""
        k = self.k
        r2 = self.radii ** 2
        per_cluster_r2 = np.bincount(self.labels, weights=r2, minlength=k) / np.bincount(self.labels, minlength=k)
        center_sq = np.einsum("ij,ij->i", self.centers, self.centers)
        out: Dict[str, Optional[float]] = {
            "mean_alpha_i": abs(float(self.alpha_i.mean()) - self.alpha),
            "cluster_radius_sq": float(np.max(np.abs(per_cluster_r2 - self.alpha_i))),
            "global_radius_sq": abs(float(r2.mean()) - self.alpha),
            "center_norm": float(np.max(np.abs(center_sq - (1.0 - self.alpha_i)))),
        }
        if k > 1:
            inner = self.centers @ self.centers.T
            off = ~np.eye(k, dtype=bool)
            out["center_inner"] = abs(float(inner[off].mean()) - (1.0 - self.beta))
            out["alpha_beta"] = abs(self.alpha + (k - 1) * self.beta - (k - 1))
        else:
            out["center_inner"] = None
            out["alpha_beta"] = abs(self.alpha)
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha": self.alpha,
            "beta": None if math.isnan(self.beta) else self.beta,
            "alpha_i": self.alpha_i.tolist(),
            "center_separation": center_distances(self.centers).tolist(),
            "max_radius": float(self.radii.max()) if len(self.radii) else 0.0,
            "objective": self.objective,
            "identity_residuals": self.identity_residuals(),
        }


def center_distances(centers: np.ndarray) -> np.ndarray:
    sq = np.einsum("ij,ij->i", centers, centers)
    d2 = sq[:, None] + sq[None, :] - 2.0 * centers @ centers.T
    return np.sqrt(np.maximum(d2, 0.0))


def compute_diagnostics(e: Embedding, planted: Partition, graph: Optional[Graph] = None) -> SdpDiagnostics:
    """
    alpha and beta are averaged over ordered pairs, diagonal pairs included in
    the within-cluster set; alpha_i, beta_ij come from block sums of the
    pairwise half-squared-distance matrix.
    """
    if not planted.balanced:
        raise InvalidParameterError("diagnostics need a balanced planted partition")
    X = e.vectors
    N, k, n = X.shape[0], planted.k, planted.n
    if planted.vertex_count != N:
        raise ShapeError(f"partition covers {planted.vertex_count} vertices, embedding has {N}")

    P = sparse.csr_matrix((np.ones(N), (np.arange(N), planted.labels)), shape=(N, k))
    sq = np.einsum("ij,ij->i", X, X)
    half_dist = 0.5 * (sq[:, None] + sq[None, :]) - X @ X.T
    blocks = np.asarray((P.T @ (P.T @ half_dist).T).T)  # k x k block sums
    within = np.diag(blocks).copy()
    alpha_i = within / (n * n)
    alpha = float(within.sum() / (k * n * n))
    if k > 1:
        beta = float((blocks.sum() - within.sum()) / (n * n * k * (k - 1)))
    else:
        beta = float("nan")
    beta_ij = blocks / (n * n)

    centers = np.asarray(P.T @ X) / n
    radii = np.linalg.norm(X - centers[planted.labels], axis=1)
    objective = sdp_objective(e, graph) if graph is not None else None
    return SdpDiagnostics(
        alpha=alpha,
        beta=beta,
        alpha_i=alpha_i,
        beta_ij=beta_ij,
        centers=centers,
        radii=radii,
        labels=planted.labels,
        objective=objective,
    )


# ---------- solver ----------

@dataclass(frozen=True)
class SolverConfig:
    rank: Optional[int] = None
    max_iterations: int = 2000
    outer_rounds: int = 20
    step_size: float = 1.0
    step_shrink: float = 0.5
    penalty: float = 1.0
    penalty_growth: float = 2.0
    penalty_max: float = 1000.0
    tol_feas: float = 1e-3
    tol_obj: float = 1e-2
    restarts: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.rank is not None and self.rank < 1:
            raise InvalidParameterError("rank must be positive")
        for name in ("max_iterations", "outer_rounds", "restarts"):
            if int(getattr(self, name)) < 1:
                raise InvalidParameterError(f"{name} must be positive")
        for name in ("step_size", "penalty", "penalty_max"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        if not (0.0 < self.step_shrink < 1.0):
            raise InvalidParameterError("step_shrink must lie in (0, 1)")
        if self.penalty_growth < 1.0:
            raise InvalidParameterError("penalty_growth must be at least 1")
        for name in ("tol_feas", "tol_obj"):
            if not (0.0 < getattr(self, name) < 1.0):
                raise InvalidParameterError(f"{name} must lie in (0, 1)")
        if self.seed < 0:
            raise InvalidParameterError("seed must be nonnegative")

    def resolved_rank(self, N: int, k: int) -> int:
        if self.rank is not None:
            return min(N, int(self.rank))
        return min(N, max(k, int(math.ceil(math.sqrt(2.0 * N))) + 1))

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "SolverConfig":
        known = {f for f in cls.__dataclass_fields__}
        kw = {k: v for k, v in (d or {}).items() if k in known}
        return cls(**kw)

    def to_dict(self) -> Dict[str, Any]:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


class _AugmentedLagrangian:
    """
    Objective plus multiplier terms for the spread equality and the pairwise
    nonnegativity inequalities, as a function of the row-normalised factor X.
    """

    def __init__(self, g: Graph, k: int, cfg: SolverConfig):
        N = g.vertex_count
        A = g.adjacency()
        deg = np.asarray(A.sum(axis=1)).ravel()
        self.L = (sparse.diags(deg) - A).tocsr()
        self.N, self.k = N, k
        scale = 1.0 + float(deg.mean()) if N else 1.0
        # spread residual is relative (|sum u|^2 / N^2 - 1/k); its weight scales with the edge count
        self.mu_spread_base = cfg.penalty * (1.0 + g.edge_count)
        self.mu_pair_base = cfg.penalty * scale / N
        self.mu_spread = self.mu_spread_base
        self.mu_pair = self.mu_pair_base
        self.lam_spread = 0.0
        self.lam_pair = np.zeros((N, N))

    def objective(self, X: np.ndarray) -> float:
        return float(0.5 * np.einsum("ij,ij->", X, self.L @ X))

    def residuals(self, X: np.ndarray):
        s = X.sum(axis=0)
        h = float(s @ s) / (self.N * self.N) - 1.0 / self.k
        G = X @ X.T
        np.fill_diagonal(G, np.inf)
        return h, G

    def value(self, X: np.ndarray, want_grad: bool = True):
        LX = self.L @ X
        f = 0.5 * float(np.einsum("ij,ij->", X, LX))
        s = X.sum(axis=0)
        h = float(s @ s) / (self.N * self.N) - 1.0 / self.k
        G = X @ X.T
        shifted = self.lam_pair - self.mu_pair * G
        np.fill_diagonal(shifted, 0.0)
        pos = np.maximum(shifted, 0.0)
        # each unordered pair appears twice in the full matrix
        psi = 0.25 * float(np.sum(pos * pos - self.lam_pair * self.lam_pair)) / self.mu_pair
        val = f + self.lam_spread * h + 0.5 * self.mu_spread * h * h + psi
        if not want_grad:
            return val, None
        grad = LX - pos @ X
        grad += (self.lam_spread + self.mu_spread * h) * (2.0 / (self.N * self.N)) * s[None, :]
        return val, grad

    def update_multipliers(self, X: np.ndarray) -> None:
        h, G = self.residuals(X)
        np.fill_diagonal(G, 0.0)
        self.lam_spread += self.mu_spread * h
        self.lam_pair = np.maximum(self.lam_pair - self.mu_pair * G, 0.0)
        np.fill_diagonal(self.lam_pair, 0.0)

    def escalate(self, cfg: SolverConfig) -> None:
        self.mu_spread = min(self.mu_spread * cfg.penalty_growth, self.mu_spread_base * cfg.penalty_max)
        self.mu_pair = min(self.mu_pair * cfg.penalty_growth, self.mu_pair_base * cfg.penalty_max)


def _violation(X: np.ndarray, k: int):
    s = X.sum(axis=0)
    N = X.shape[0]
    spread_rel = abs(float(s @ s) / (N * N) - 1.0 / k)
    neg = max(0.0, -_min_offdiagonal_inner(X))
    return spread_rel, neg


def project_spread(X: np.ndarray, k: int) -> np.ndarray:
    """
    Restore the spread constraint on row-normalised X.

    Writes each row as mean + centred part and rescales the centred part by the
    theta for which the renormalised rows have |mean|^2 = 1/k (bisection).
    """
    N = X.shape[0]
    c = X.mean(axis=0)
    if not np.all(np.isfinite(X)):
        raise SolverFailure("iterate contains non-finite entries")
    cn = float(np.linalg.norm(c))
    if cn < 1e-12:
        raise SolverFailure("mean vector vanished; cannot restore the spread constraint")
    c_hat = c / cn
    if k == 1:
        return np.tile(c_hat, (N, 1))
    Y = X - c
    target = 1.0 / k

    def mean_sq(theta: float) -> float:
        Z = _normalize_rows(c + theta * Y, fallback=c_hat)
        m = Z.mean(axis=0)
        return float(m @ m)

    if mean_sq(1.0) > target:
        lo, hi = 1.0, 2.0
        while mean_sq(hi) > target:
            lo, hi = hi, hi * 2.0
            if hi > 1e8:
                raise SolverFailure("spread constraint cannot be reached by rescaling the centred configuration")
    else:
        lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean_sq(mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return _normalize_rows(c + 0.5 * (lo + hi) * Y, fallback=c_hat)


def _riemannian(grad: np.ndarray, X: np.ndarray) -> np.ndarray:
    return grad - np.einsum("ij,ij->i", grad, X)[:, None] * X


def _solve_once(g: Graph, k: int, cfg: SolverConfig, r: int, rng: np.random.Generator) -> Dict[str, Any]:
    N = g.vertex_count
    X = _normalize_rows(np.abs(rng.standard_normal((N, r))))
    al = _AugmentedLagrangian(g, k, cfg)

    per_round = max(1, cfg.max_iterations // cfg.outer_rounds)
    iterations = 0
    rounds = 0
    step = cfg.step_size
    prev_obj = math.inf
    prev_viol = math.inf
    converged = False
    grad_tol = 1e-6 * (1.0 + g.edge_count / max(N, 1))

    while rounds < cfg.outer_rounds and iterations < cfg.max_iterations:
        rounds += 1
        val, grad = al.value(X)
        for _ in range(per_round):
            if iterations >= cfg.max_iterations:
                break
            rg = _riemannian(grad, X)
            gnorm2 = float(np.einsum("ij,ij->", rg, rg))
            if gnorm2 <= (grad_tol * grad_tol) * N:
                break
            t = step
            accepted = False
            for _ls in range(40):
                Xn = _normalize_rows(X - t * rg)
                vn, _ = al.value(Xn, want_grad=False)
                if vn <= val - 1e-4 * t * gnorm2:
                    accepted = True
                    break
                t *= cfg.step_shrink
            iterations += 1
            if not accepted:
                break
            X = Xn
            step = min(cfg.step_size, t / cfg.step_shrink)
            decrease = val - vn
            val, grad = al.value(X)
            if decrease <= 1e-12 * (1.0 + abs(val)):
                break

        if not np.all(np.isfinite(X)):
            raise SolverFailure("solver diverged (non-finite iterate)")
        obj = al.objective(X)
        spread_rel, neg = _violation(X, k)
        viol = max(spread_rel, neg)
        log.debug(
            "round %d: iterations=%d objective=%.6g spread=%.3g nonneg=%.3g",
            rounds, iterations, obj, spread_rel, neg,
        )
        if (
            spread_rel <= 0.1 * cfg.tol_feas
            and neg <= 0.5 * cfg.tol_feas
            and abs(obj - prev_obj) <= 0.1 * cfg.tol_obj * (1.0 + abs(obj))
        ):
            converged = True
            break
        al.update_multipliers(X)
        if viol > 0.25 * prev_viol:
            al.escalate(cfg)
        prev_obj, prev_viol = obj, viol

    X = project_spread(X, k)
    return {"X": X, "iterations": iterations, "rounds": rounds, "converged": converged}


def solve_sdp(g: Graph, params: SbmParams, cfg: Optional[SolverConfig] = None) -> Embedding:
    """
    Low-rank augmented-Lagrangian solve with seeded restarts.

    Each restart starts from random nonnegative unit rows and alternates
    Riemannian gradient rounds (Armijo backtracking, rows renormalised after
    every step) with multiplier updates, raising penalties while violations
    stall. The final iterate is projected onto the spread constraint. The best
    restart is kept: feasible ones first, then lowest objective.
    """
    cfg = cfg or SolverConfig()
    if not g.simple:
        raise InvalidParameterError("solve_sdp needs a simple graph (flatten multigraphs first)")
    if g.vertex_count != params.N:
        raise ShapeError(f"graph has {g.vertex_count} vertices, parameters describe N = {params.N}")
    N, k = params.N, params.k
    r = cfg.resolved_rank(N, k)

    if k == 1:
        X = np.zeros((N, r))
        X[:, 0] = 1.0
        return Embedding(X, converged=True, info={"rank": r, "objective": 0.0, "restarts": []})

    trace: List[Dict[str, Any]] = []
    best = None
    best_key = None
    for restart in range(cfg.restarts):
        rng = np.random.default_rng([cfg.seed, restart])
        out = _solve_once(g, k, cfg, r, rng)
        e = Embedding(out["X"])
        rep = check_feasibility(e, params, cfg.tol_feas)
        obj = sdp_objective(e, g)
        trace.append({
            "restart": restart,
            "objective": obj,
            "iterations": out["iterations"],
            "rounds": out["rounds"],
            "converged": out["converged"],
            "unit_norm": rep.unit_norm,
            "spread_relative": rep.spread_relative,
            "nonnegativity": rep.nonnegativity,
        })
        key = (0 if rep.passed else 1, obj if rep.passed else rep.worst, restart)
        if best_key is None or key < best_key:
            best_key, best = key, (out, rep, obj, restart)

    out, rep, obj, restart = best
    converged = bool(out["converged"] and rep.passed)
    if not converged:
        log.warning(
            "SDP solver did not converge (N=%d, best restart %d): spread=%.3g nonnegativity=%.3g",
            N, restart, rep.spread_relative, rep.nonnegativity,
        )
    info = {"rank": r, "objective": obj, "best_restart": restart, "restarts": trace}
    return Embedding(out["X"], converged=converged, info=info)
