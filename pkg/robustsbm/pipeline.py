"""
Per-seed experiment pipeline and parameter sweeps.

sample -> corrupt -> (split) -> solve -> recover -> (boost) -> evaluate.

Every stage draws from its own seed, spawned from the master seed with
numpy's SeedSequence, so a stage's randomness does not depend on how much
randomness earlier stages consumed. A row has a deterministic ``report``
section and a ``volatile`` section (timings, host, timestamps).
"""
from __future__ import annotations

import itertools
import logging
import math
import multiprocessing as mp
import platform
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from contextlib import contextmanager
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence

import numpy as np

from .boosting import BoostConfig, boost, count_corrupted, resolve_threshold, split_edges
from .config import merge_defaults
from .errors import InvalidParameterError, RobustSbmError, StageError
from .experiment import ExperimentConfig
from .formats import to_jsonable
from .lower_bounds import lb_adversary, lb_bound_values
from .metrics import BoundInputs, closeness_strong, cut_cost, delta_bounds, grothendieck_residual
from .recovery import build_recovery_report, recover_partition
from .run_store import RunRecord, RunStore, write_aggregate_csv
from .paths import aggregate_csv_path
from .sbm import (
    Graph,
    Partition,
    SbmParams,
    apply_monotone_adversary,
    apply_outlier_adversary,
    count_within_between,
    flatten_to_simple,
    flattened_params,
    sample_poisson_sbm,
    sample_sbm,
)
from .sdp import check_feasibility, compute_diagnostics, solve_sdp

log = logging.getLogger(__name__)

STAGE_SEEDS = ("sample", "monotone", "outlier", "lower_bound", "split", "solver", "boost")
SIGNIFICANT_DIGITS = 10

ProgressCb = Optional[Callable[[str], None]]


def stage_seeds(master: int) -> Dict[str, int]:
    children = np.random.SeedSequence(int(master)).spawn(len(STAGE_SEEDS))
    return {name: int(c.generate_state(1)[0]) for name, c in zip(STAGE_SEEDS, children)}


def round_floats(obj: Any, digits: int = SIGNIFICANT_DIGITS) -> Any:
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, float):
        return float(f"{obj:.{digits}g}") if math.isfinite(obj) else obj
    if isinstance(obj, dict):
        return {k: round_floats(v, digits) for k, v in obj.items()}
    if isinstance(obj, list):
        return [round_floats(v, digits) for v in obj]
    return obj


@contextmanager
def _stage(name: str, seed: int, timings: Dict[str, float]) -> Iterator[None]:
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        log.error("stage %s failed for seed %d: %s", name, seed, exc)
        raise StageError(name, seed, exc) from exc
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


# ---------- corruption ----------

def _clamped_monotone_counts(g: Graph, planted: Partition, add: int, remove: int) -> tuple:
    n, k = planted.n, planted.k
    within, between = count_within_between(g, planted)
    max_add = k * n * (n - 1) // 2 - within
    return min(add, max_add), min(remove, between)


def corrupt(cfg: ExperimentConfig, g0: Graph, planted: Partition, seeds: Dict[str, int]) -> Graph:
    """Returns a simple graph ready for the solver."""
    spec = cfg.adversary
    params = cfg.params
    if spec.kind == "lower-bound":
        lb_cfg = spec.lb_config(params, seeds["lower_bound"])
        return flatten_to_simple(lb_adversary(g0, planted, params, lb_cfg))

    g = g0 if g0.simple else flatten_to_simple(g0)
    if spec.uses_monotone:
        add, remove = spec.monotone_counts(params.m)
        if spec.clamp_to_feasible:
            c_add, c_remove = _clamped_monotone_counts(g, planted, add, remove)
            if (c_add, c_remove) != (add, remove):
                log.info("monotone edits clamped from (+%d, -%d) to (+%d, -%d)", add, remove, c_add, c_remove)
                g = g.with_metadata(monotone_clamped=True)
            add, remove = c_add, c_remove
        g = apply_monotone_adversary(g, planted, add, remove, seeds["monotone"])
    if spec.uses_outliers:
        g = apply_outlier_adversary(g, planted, spec.budget(), params, spec.strategy, seeds["outlier"])
    return g


# ---------- one seed ----------

def run_seed(cfg: ExperimentConfig, seed: int, progress_cb: ProgressCb = None) -> Dict[str, Any]:
    """Run every stage for one master seed and return the row (raises StageError)."""
    def _progress(msg: str) -> None:
        if progress_cb:
            progress_cb(msg)

    seed = int(seed)
    params: SbmParams = cfg.params
    n, k = params.n, params.k
    seeds = stage_seeds(seed)
    timings: Dict[str, float] = {}
    started = datetime.now(timezone.utc).replace(microsecond=0).isoformat()
    report: Dict[str, Any] = {"config_hash": cfg.config_hash(), "seed": seed, "stage_seeds": dict(seeds)}

    _progress(f"seed {seed}: sampling")
    with _stage("sample", seed, timings):
        sampler = sample_poisson_sbm if cfg.model == "poisson" else sample_sbm
        g0, planted = sampler(params, seeds["sample"])
        g_ref = g0 if g0.simple else flatten_to_simple(g0)
        ref_params = params if g0.simple else flattened_params(params)

    with _stage("corrupt", seed, timings):
        g = corrupt(cfg, g0, planted, seeds)
        report["graph"] = {
            "vertex_count": g.vertex_count,
            "pair_count": g.pair_count,
            "edge_count": g.edge_count,
            "reference_pair_count": g_ref.pair_count,
            "metadata": dict(g.metadata),
        }

    split = None
    g_solve = g
    if cfg.boost.enabled:
        with _stage("split", seed, timings):
            split = split_edges(g, seeds["split"])
            g_solve = split.e1

    _progress(f"seed {seed}: solving (N={params.N})")
    with _stage("solve", seed, timings):
        e = solve_sdp(g_solve, params, replace(cfg.solver, seed=seeds["solver"]))

    with _stage("recover", seed, timings):
        weak, strong = recover_partition(e, n, k, cfg.rho)
        rec = build_recovery_report(e, weak, strong, planted, cfg.rho, seeds)
        report["recovery"] = rec.to_dict()

    if split is not None:
        with _stage("boost", seed, timings):
            bcfg = BoostConfig(
                threshold=cfg.boost.config.threshold,
                random_halves=cfg.boost.config.random_halves,
                seed=seeds["boost"],
            )
            boosted = boost(split.e2, strong, n, k, bcfg)
            T = resolve_threshold(bcfg, params, split.e2, strong)
            corrupted = count_corrupted(g, g_ref, split, T)
            bounds_in = BoundInputs.from_dict(params, cfg.adversary.epsilon, cfg.bounds)
            floor = delta_bounds(bounds_in).values["boosted_delta0_floor"]
            delta_base = rec.delta_strong
            report["boost"] = {
                "threshold": T,
                "delta_base": delta_base,
                "delta_boosted": closeness_strong(boosted, planted).delta,
                "corrupted_vertices": corrupted,
                "corrupted_fraction": corrupted / params.N,
                "boost_measured_bound": 4.0 * max(delta_base, floor) + 2.0 * corrupted / params.N,
            }

    with _stage("evaluate", seed, timings):
        feas = check_feasibility(e, params, cfg.solver.tol_feas)
        diag = compute_diagnostics(e, planted, g_solve)
        planted_cut = cut_cost(g_solve, planted)
        objective = float(e.info.get("objective", 0.0))
        report["sdp"] = {
            "objective": objective,
            "converged": e.converged,
            "rank": e.info.get("rank"),
            "best_restart": e.info.get("best_restart"),
            "planted_cut": planted_cut,
            "objective_minus_planted_cut": objective - planted_cut,
            "feasibility": feas.to_dict(),
            "diagnostics": diag.to_dict(),
        }
        bounds_in = BoundInputs.from_dict(params, cfg.adversary.epsilon, cfg.bounds)
        report["bounds"] = delta_bounds(bounds_in).to_dict()
        if split is None:
            s = float(cfg.bounds.get("s", 1.0))
            report["grothendieck"] = grothendieck_residual(g_ref, planted, ref_params, e, s=s, KG=bounds_in.KG).to_dict()
        if k == 2:
            delta = max(rec.delta_strong, 1.0 / params.N)
            report["lower_bound"] = lb_bound_values(params, cfg.adversary.epsilon, delta).to_dict()

    volatile = {
        "timings": timings,
        "total_seconds": sum(timings.values()),
        "host": platform.node(),
        "started_at": started,
    }
    return {
        "config_hash": report["config_hash"],
        "seed": seed,
        "status": "ok",
        "config": cfg.hashed_part(),
        "report": round_floats(to_jsonable(report)),
        "volatile": to_jsonable(volatile),
    }


def failed_row(cfg: ExperimentConfig, seed: int, exc: BaseException) -> Dict[str, Any]:
    stage = exc.stage if isinstance(exc, StageError) else None
    cause = exc.cause if isinstance(exc, StageError) else exc
    return {
        "config_hash": cfg.config_hash(),
        "seed": int(seed),
        "status": "failed",
        "config": cfg.hashed_part(),
        "error": {"stage": stage, "type": type(cause).__name__, "message": str(cause)},
        "report": {},
        "volatile": {},
    }


def _worker(cfg_dict: Dict[str, Any], seed: int) -> Dict[str, Any]:
    # module-level so spawned processes can unpickle it
    cfg = ExperimentConfig.from_dict(cfg_dict)
    try:
        return run_seed(cfg, seed)
    except RobustSbmError as exc:
        return failed_row(cfg, seed, exc)


def _run_rows(cfg: ExperimentConfig, seeds: Sequence[int], threads: int, progress_cb: ProgressCb) -> List[Dict[str, Any]]:
    if threads <= 1 or len(seeds) <= 1:
        rows = []
        for s in seeds:
            try:
                rows.append(run_seed(cfg, s, progress_cb))
            except RobustSbmError as exc:
                rows.append(failed_row(cfg, s, exc))
        return rows

    cfg_dict = cfg.to_dict()
    by_seed: Dict[int, Dict[str, Any]] = {}
    ctx = mp.get_context("spawn")
    with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as ex:
        futures = {ex.submit(_worker, cfg_dict, s): s for s in seeds}
        for fut in as_completed(futures):
            s = futures[fut]
            by_seed[s] = fut.result()
            if progress_cb:
                progress_cb(f"seed {s}: {by_seed[s]['status']}")
    return [by_seed[s] for s in seeds]


def run_pipeline(
    cfg: ExperimentConfig,
    store: Optional[RunStore] = None,
    threads: Optional[int] = None,
    progress_cb: ProgressCb = None,
    skip_completed: bool = False,
    raise_on_error: bool = True,
) -> RunRecord:
    """
    Run every seed of ``cfg``. Rows are appended to ``store`` in seed order.

    With ``raise_on_error`` the first failed seed raises StageError after all
    rows have been stored; otherwise failed rows stay in the record, flagged.
    """
    h = cfg.config_hash()
    threads = int(threads or cfg.output.threads)
    previous: Dict[int, Dict[str, Any]] = {}
    if store is not None and skip_completed:
        previous = {int(r["seed"]): r for r in store.load() if r["config_hash"] == h and r.get("status") == "ok"}
    todo = [s for s in cfg.seeds if s not in previous]
    if previous:
        log.info("config %s: %d seed(s) already complete, running %d", h[:12], len(previous), len(todo))

    fresh = _run_rows(cfg, todo, threads, progress_cb)
    if store is not None:
        for row in fresh:
            store.append(row)

    by_seed = dict(previous)
    by_seed.update({int(r["seed"]): r for r in fresh})
    record = RunRecord(config_hash=h, config=cfg.hashed_part(), rows=[by_seed[s] for s in cfg.seeds])

    if raise_on_error:
        for row in fresh:
            if row["status"] != "ok":
                err = row["error"]
                raise StageError(err["stage"] or "unknown", row["seed"], RuntimeError(err["message"]))
    return record


# ---------- sweeps ----------

GRID_ALIASES = {
    "n": "params.n",
    "k": "params.k",
    "a": "params.a",
    "b": "params.b",
    "epsilon": "adversary.epsilon",
    "strategy": "adversary.strategy",
    "kind": "adversary.kind",
    "model": "model",
    "rho": "recovery.rho",
}


def _nested(dotted: str, value: Any) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    cur = out
    parts = dotted.split(".")
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
    cur[parts[-1]] = value
    return out


def expand_grid(grid: Dict[str, Sequence[Any]], base: Dict[str, Any]) -> List[ExperimentConfig]:
    """Cartesian product of the grid axes (in the given key order) over ``base``."""
    if not grid:
        return [ExperimentConfig.from_dict(base)]
    keys = list(grid)
    for key in keys:
        if not isinstance(grid[key], (list, tuple)) or len(grid[key]) == 0:
            raise InvalidParameterError(f"grid axis {key!r} needs a non-empty list of values")
    out = []
    for combo in itertools.product(*(grid[key] for key in keys)):
        d = dict(base)
        for key, value in zip(keys, combo):
            d = merge_defaults(d, _nested(GRID_ALIASES.get(key, key), value))
        out.append(ExperimentConfig.from_dict(d))
    return out


def sweep(
    grid: Dict[str, Sequence[Any]],
    base_cfg: ExperimentConfig,
    store: RunStore,
    threads: Optional[int] = None,
    progress_cb: ProgressCb = None,
    csv_path: Optional[Path] = None,
) -> List[RunRecord]:
    """
    Resumable sweep: (config hash, seed) rows already stored as ok are skipped.
    Failed seeds are stored flagged and the sweep moves on.
    """
    configs = expand_grid(grid, base_cfg.to_dict())
    records = []
    for i, cfg in enumerate(configs, start=1):
        if progress_cb:
            progress_cb(f"config {i}/{len(configs)} ({cfg.config_hash()[:12]})")
        records.append(
            run_pipeline(cfg, store, threads, progress_cb, skip_completed=True, raise_on_error=False)
        )
    write_aggregate_csv(store.load(), csv_path or aggregate_csv_path(store.out_dir))
    return records
