"""
Command-line entry point.

Stage subcommands (generate, corrupt, solve, recover, boost, evaluate,
lowerbound) talk through the text formats in robustsbm.formats, so any stage
can be rerun on its own. ``run`` and ``sweep`` drive the whole pipeline and
write rows to an append-only store.

Exit codes: 0 on success, 1 on a library error, 2 on bad arguments.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from . import __version__
from .boosting import BoostConfig, boosted_recovery
from .config import load_experiment_config, merge_defaults
from .errors import InvalidParameterError, RobustSbmError, ShapeError
from .experiment import ExperimentConfig, parse_seed_range
from .formats import (
    dumps_report,
    read_edge_list,
    read_embedding,
    read_json,
    read_partition,
    write_edge_list,
    write_embedding,
    write_json,
    write_partition,
)
from .lower_bounds import (
    PoissonPair,
    coupled_kappa_success,
    coupling_overlap,
    distinguishing_game,
    lb_bound_values,
)
from .metrics import closeness_strong, closeness_weak, cut_cost, grothendieck_residual, within_cost
from .paths import aggregate_csv_path, resolve_output_dir, run_dir
from .pipeline import corrupt, run_pipeline, stage_seeds, sweep
from .presets import Preset, list_preset_files
from .recovery import WeakPartition, greedy_recover, recover_partition, weak_to_strong
from .run_store import RunStore, aggregate_rows, write_aggregate_csv
from .sbm import Graph, Partition, flatten_to_simple, sample_poisson_sbm, sample_sbm
from .sdp import check_feasibility, compute_diagnostics, solve_sdp

log = logging.getLogger(__name__)


# ---------- argument parsing ----------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="experiment config JSON (merged over defaults)")
    p.add_argument("--preset", help="preset name or path (used instead of --config)")
    seeds = p.add_mutually_exclusive_group()
    seeds.add_argument("--seed", type=int, help="master seed")
    seeds.add_argument("--seeds", help="inclusive seed range A..B")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="worker processes for multi-seed runs")
    p.add_argument("--format", choices=("json", "csv"), help="summary format")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="robustsbm", description="Robust partial recovery in the stochastic block model")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="sample a graph and its planted partition")
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--model", choices=("bernoulli", "poisson"))
    p.add_argument("--graph", type=Path, help="edge-list output (default <out>/graph.edges)")
    p.add_argument("--partition", type=Path, help="planted partition output (default <out>/planted.part)")

    p = sub.add_parser("corrupt", parents=[common], help="apply an adversary to a graph")
    p.add_argument("--graph", type=Path, required=True)
    p.add_argument("--partition", type=Path, required=True, help="planted partition")
    p.add_argument("--output", type=Path, required=True, help="corrupted edge-list output")
    kind = p.add_mutually_exclusive_group()
    kind.add_argument("--monotone", action="store_true", help="monotone edits only")
    kind.add_argument("--outlier", action="store_true", help="outlier edits only")
    kind.add_argument("--both", action="store_true", help="monotone then outlier edits")
    kind.add_argument("--lower-bound", action="store_true", help="lower-bound adversary (k = 2, multigraph)")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--strategy", choices=("uniform", "degree-targeted", "concentrated"))
    p.add_argument("--add", type=int, help="within-cluster edges to add (monotone)")
    p.add_argument("--remove", type=int, help="between-cluster edges to remove (monotone)")
    p.add_argument("--clamp", action="store_true", help="clamp monotone edits to what is feasible")

    p = sub.add_parser("solve", parents=[common], help="solve the SDP relaxation")
    p.add_argument("--graph", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True, help="embedding output")
    p.add_argument("--rank", type=int)

    p = sub.add_parser("recover", parents=[common], help="greedy recovery from an embedding")
    p.add_argument("--embedding", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True, help="balanced partition output")
    p.add_argument("--weak-output", type=Path, help="weak partition output (unbalanced labels)")
    p.add_argument("--rho", type=float)

    p = sub.add_parser("boost", parents=[common], help="split, recover on the first color, vote on the second")
    p.add_argument("--graph", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True, help="boosted partition output")
    p.add_argument("--base-output", type=Path, help="base partition recovered from the first color")
    p.add_argument("--rho", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--random-halves", action="store_true")

    p = sub.add_parser("evaluate", parents=[common], help="closeness, costs and SDP diagnostics")
    p.add_argument("--partition", type=Path, required=True)
    p.add_argument("--planted", type=Path, required=True)
    p.add_argument("--weak", action="store_true", help="treat --partition as a weak partition")
    p.add_argument("--graph", type=Path)
    p.add_argument("--embedding", type=Path)
    p.add_argument("--report", type=Path, help="write the JSON report here instead of stdout")

    p = sub.add_parser("lowerbound", parents=[common], help="Poisson coupling and distinguishing-game oracles")
    p.add_argument("--coupling", nargs=2, type=float, metavar=("L1", "L2"))
    p.add_argument("--game", nargs=2, type=float, metavar=("L1", "L2"))
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--kappa", nargs=2, type=float, metavar=("L1", "L2"))
    p.add_argument("--draws", type=int, default=100_000)
    p.add_argument("--bounds", action="store_true", help="impossibility thresholds for the config params")
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--delta", type=float, default=0.1)

    sub.add_parser("run", parents=[common], help="run the full pipeline for every seed")

    p = sub.add_parser("sweep", parents=[common], help="run a parameter grid (resumable)")
    p.add_argument("--grid", type=Path, help="JSON object mapping axis -> list of values")

    sub.add_parser("presets", parents=[common], help="list available presets")
    return parser


# ---------- helpers ----------

def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="[%(name)s] %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _raw_config(args: argparse.Namespace) -> Dict[str, Any]:
    if getattr(args, "preset", None):
        preset = Preset.load(args.preset)
        cfg = load_experiment_config(args.config) if args.config else load_experiment_config()
        return merge_defaults(cfg, preset.config)
    return load_experiment_config(args.config)


def _experiment(args: argparse.Namespace, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    d = merge_defaults(_raw_config(args), overrides or {})
    if args.seeds:
        d["seeds"] = parse_seed_range(args.seeds)
    elif args.seed is not None:
        d["seeds"] = [args.seed]
    output = dict(d.get("output") or {})
    if args.out:
        output["out_dir"] = args.out
    if args.threads is not None:
        output["threads"] = args.threads
    if args.format:
        output["format"] = args.format
    d["output"] = output
    return ExperimentConfig.from_dict(d)


def _emit(obj: Any, path: Optional[Path] = None) -> None:
    if path is not None:
        write_json(obj, path)
        log.info("wrote %s", path)
    else:
        sys.stdout.write(dumps_report(obj))


def _check_vertices(g: Graph, cfg: ExperimentConfig) -> None:
    if g.vertex_count != cfg.params.N:
        raise ShapeError(
            f"graph has {g.vertex_count} vertices but the config describes N = n*k = {cfg.params.N}"
        )


# ---------- stage commands ----------

def cmd_generate(args: argparse.Namespace) -> int:
    params = {key: getattr(args, key) for key in ("n", "k", "a", "b") if getattr(args, key) is not None}
    overrides: Dict[str, Any] = {"params": params}
    if args.model:
        overrides["model"] = args.model
    cfg = _experiment(args, overrides)
    seed = cfg.seeds[0]
    sampler = sample_poisson_sbm if cfg.model == "poisson" else sample_sbm
    g, planted = sampler(cfg.params, stage_seeds(seed)["sample"])
    out = resolve_output_dir(cfg.output.out_dir) if not (args.graph and args.partition) else None
    graph_path = args.graph or out / "graph.edges"
    part_path = args.partition or out / "planted.part"
    write_edge_list(g, graph_path)
    write_partition(planted, part_path)
    _emit({
        "graph": str(graph_path),
        "partition": str(part_path),
        "seed": seed,
        "params": cfg.params.to_dict(),
        "model": cfg.model,
        "pair_count": g.pair_count,
        "edge_count": g.edge_count,
    })
    return 0


def cmd_corrupt(args: argparse.Namespace) -> int:
    adv: Dict[str, Any] = {}
    for flag, kind in (("monotone", "monotone"), ("outlier", "outlier"), ("both", "both"), ("lower_bound", "lower-bound")):
        if getattr(args, flag):
            adv["kind"] = kind
    if args.epsilon is not None:
        adv["epsilon"] = args.epsilon
    if args.strategy:
        adv["strategy"] = args.strategy
    if args.add is not None:
        adv["monotone_add"] = args.add
        adv["monotone_add_fraction"] = None
    if args.remove is not None:
        adv["monotone_remove"] = args.remove
        adv["monotone_remove_fraction"] = None
    if args.clamp:
        adv["clamp_to_feasible"] = True
    overrides: Dict[str, Any] = {"adversary": adv}
    g = read_edge_list(args.graph)
    if adv.get("kind") == "lower-bound":
        overrides["model"] = "poisson"
    cfg = _experiment(args, overrides)
    _check_vertices(g, cfg)
    planted = read_partition(args.partition, k=cfg.params.k, balanced=True)
    seed = cfg.seeds[0]
    corrupted = corrupt(cfg, g, planted, stage_seeds(seed))
    write_edge_list(corrupted, args.output)
    _emit({"output": str(args.output), "seed": seed, "pair_count": corrupted.pair_count, "metadata": corrupted.metadata})
    return 0


def cmd_solve(args: argparse.Namespace) -> int:
    overrides = {"solver": {"rank": args.rank}} if args.rank else {}
    cfg = _experiment(args, overrides)
    g = read_edge_list(args.graph)
    _check_vertices(g, cfg)
    solver = cfg.solver
    if args.seed is not None:
        solver = replace(solver, seed=stage_seeds(args.seed)["solver"])
    e = solve_sdp(g, cfg.params, solver)
    write_embedding(e, args.output)
    feas = check_feasibility(e, cfg.params, solver.tol_feas)
    _emit({
        "output": str(args.output),
        "objective": e.info.get("objective"),
        "converged": e.converged,
        "rank": e.info.get("rank"),
        "feasibility": feas.to_dict(),
    })
    return 0 if feas.passed else 1


def cmd_recover(args: argparse.Namespace) -> int:
    overrides = {"recovery": {"rho": args.rho}} if args.rho is not None else {}
    cfg = _experiment(args, overrides)
    e = read_embedding(args.embedding)
    if e.vertex_count != cfg.params.N:
        raise ShapeError(f"embedding has {e.vertex_count} rows but the config describes N = {cfg.params.N}")
    n, k = cfg.params.n, cfg.params.k
    weak = greedy_recover(e, n, cfg.rho)
    strong = weak_to_strong(weak, n, k)
    write_partition(strong, args.output)
    if args.weak_output:
        write_partition(Partition(weak.labels(), weak.count, balanced=False), args.weak_output)
    _emit({"output": str(args.output), "weak_clusters": weak.count, "weak_sizes": weak.sizes(), "rho": cfg.rho})
    return 0


def cmd_boost(args: argparse.Namespace) -> int:
    overrides = {"recovery": {"rho": args.rho}} if args.rho is not None else {}
    cfg = _experiment(args, overrides)
    g = read_edge_list(args.graph)
    _check_vertices(g, cfg)
    if not g.simple:
        g = flatten_to_simple(g)
    n, k = cfg.params.n, cfg.params.k
    seed = cfg.seeds[0]
    seeds = stage_seeds(seed)
    solver = replace(cfg.solver, seed=seeds["solver"])

    def base_recover(e1: Graph) -> Partition:
        _, strong = recover_partition(solve_sdp(e1, cfg.params, solver), n, k, cfg.rho)
        return strong

    bcfg = BoostConfig(
        threshold=args.threshold if args.threshold is not None else cfg.boost.config.threshold,
        random_halves=args.random_halves or cfg.boost.config.random_halves,
        seed=seeds["boost"],
    )
    result = boosted_recovery(g, n, k, base_recover, bcfg, params=cfg.params, split_seed=seeds["split"])
    write_partition(result.boosted, args.output)
    if args.base_output:
        write_partition(result.base, args.base_output)
    _emit({
        "output": str(args.output),
        "seed": seed,
        "split_seed": seeds["split"],
        "threshold": result.threshold,
        "base_pairs": result.split.e1.pair_count,
        "vote_pairs": result.split.e2.pair_count,
    })
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _experiment(args)
    planted = read_partition(args.planted, balanced=True)
    report: Dict[str, Any] = {}
    if args.weak:
        p = read_partition(args.partition, balanced=False)
        w = WeakPartition(p.clusters(), p.vertex_count, n=planted.n)
        report["closeness_weak"] = closeness_weak(w, planted).to_dict()
    else:
        p = read_partition(args.partition, k=planted.k, balanced=True)
        report["closeness_strong"] = closeness_strong(p, planted).to_dict()
    g = read_edge_list(args.graph) if args.graph else None
    if g is not None:
        report["cut_cost"] = cut_cost(g, p)
        report["planted_cut_cost"] = cut_cost(g, planted)
        report["within_cost"] = within_cost(g, p)
    if args.embedding:
        e = read_embedding(args.embedding)
        report["feasibility"] = check_feasibility(e, cfg.params, cfg.solver.tol_feas).to_dict()
        report["diagnostics"] = compute_diagnostics(e, planted, g).to_dict()
        if g is not None and g.simple:
            s = float(cfg.bounds.get("s", 1.0))
            report["grothendieck"] = grothendieck_residual(g, planted, cfg.params, e, s=s).to_dict()
    _emit(report, args.report)
    return 0


def cmd_lowerbound(args: argparse.Namespace) -> int:
    if not (args.coupling or args.game or args.kappa or args.bounds):
        raise InvalidParameterError("choose at least one of --coupling, --game, --kappa, --bounds")
    seed = args.seed if args.seed is not None else 0
    report: Dict[str, Any] = {}
    if args.coupling:
        report["coupling_overlap"] = coupling_overlap(PoissonPair.of(*args.coupling))
    if args.game:
        report["game"] = distinguishing_game(args.game[0], args.game[1], args.trials, seed).to_dict()
    if args.kappa:
        rate, sd = coupled_kappa_success(args.kappa[0], args.kappa[1], args.draws, seed)
        report["kappa_success"] = {"rate": rate, "std_error": sd}
    if args.bounds:
        cfg = _experiment(args)
        report["bounds"] = lb_bound_values(cfg.params, args.epsilon, args.delta).to_dict()
    _emit(report)
    return 0


# ---------- pipeline commands ----------

def _progress(msg: str) -> None:
    log.info(msg)


def _summary(out_dir: Path, fmt: str, rows: List[Dict[str, Any]]) -> None:
    csv_path = write_aggregate_csv(rows, aggregate_csv_path(out_dir))
    if fmt == "csv":
        sys.stdout.write(csv_path.read_text(encoding="utf-8"))
    else:
        _emit({"out_dir": str(out_dir), "aggregate": aggregate_rows(rows)})


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _experiment(args)
    out_dir = resolve_output_dir(cfg.output.out_dir)
    store = RunStore(out_dir)
    try:
        record = run_pipeline(cfg, store, progress_cb=_progress)
    finally:
        rows = [r for r in store.load() if r["config_hash"] == cfg.config_hash()]
        if rows:
            write_json(
                {"config_hash": cfg.config_hash(), "config": cfg.to_dict(), "rows": rows},
                run_dir(out_dir, cfg.config_hash()) / "record.json",
            )
    _summary(out_dir, cfg.output.format, record.rows)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    grid: Dict[str, Any] = {}
    if args.preset:
        grid = dict(Preset.load(args.preset).grid)
    if args.grid:
        data = read_json(args.grid)
        if not isinstance(data, dict):
            raise InvalidParameterError("grid file must hold a JSON object")
        grid.update(data)
    cfg = _experiment(args)
    out_dir = resolve_output_dir(cfg.output.out_dir)
    store = RunStore(out_dir)
    records = sweep(grid, cfg, store, progress_cb=_progress)
    rows = [row for rec in records for row in rec.rows]
    _summary(out_dir, cfg.output.format, rows)
    return 0 if all(rec.success for rec in records) else 1


def cmd_presets(args: argparse.Namespace) -> int:
    files = list_preset_files()
    for p in files:
        preset = Preset.load(p)
        sys.stdout.write(f"{p.stem}\t{preset.description}\n")
    if not files:
        log.info("no presets found")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "corrupt": cmd_corrupt,
    "solve": cmd_solve,
    "recover": cmd_recover,
    "boost": cmd_boost,
    "evaluate": cmd_evaluate,
    "lowerbound": cmd_lowerbound,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "presets": cmd_presets,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except RobustSbmError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except json.JSONDecodeError as exc:
        sys.stderr.write(f"error: invalid JSON config: {exc}\n")
        return 1
