"""
End-to-end tests of the command-line interface through ``main(argv)``.
"""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List

import pytest

from robustsbm.boosting import BoostConfig, boost, split_edges
from robustsbm.cli import main
from robustsbm.config import load_experiment_config
from robustsbm.experiment import ExperimentConfig
from robustsbm.formats import read_edge_list, read_partition, write_embedding
from robustsbm.pipeline import stage_seeds
from robustsbm.recovery import recover_partition
from robustsbm.sdp import planted_embedding, solve_sdp


def _config(tmp_path: Path, **extra: Any) -> Path:
    data: Dict[str, Any] = {
        "params": {"n": 6, "k": 2, "a": 5.0, "b": 1.0},
        "solver": {"max_iterations": 150, "outer_rounds": 4, "restarts": 1},
    }
    data.update(extra)
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def _run(argv: List[str], capsys: pytest.CaptureFixture) -> Dict[str, Any]:
    assert main(argv) == 0
    return json.loads(capsys.readouterr().out)


def _generate(tmp_path: Path, capsys: pytest.CaptureFixture) -> Dict[str, Any]:
    cfg = _config(tmp_path)
    return _run(["generate", "--config", str(cfg), "--seed", "3", "--out", str(tmp_path)], capsys)


###############################################################################
# argument handling
###############################################################################
def test_missing_command_exits_2() -> None:
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 2


def test_conflicting_seed_flags_exit_2(tmp_path: Path) -> None:
    with pytest.raises(SystemExit) as info:
        main(["run", "--seed", "1", "--seeds", "0..2"])
    assert info.value.code == 2


def test_bad_seed_range_is_a_library_error(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    assert main(["run", "--config", str(_config(tmp_path)), "--seeds", "4..1"]) == 1
    assert "bad seed range" in capsys.readouterr().err


###############################################################################
# stage commands
###############################################################################
def test_generate_writes_graph_and_partition(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    out = _generate(tmp_path, capsys)
    g = read_edge_list(out["graph"])
    planted = read_partition(out["partition"], k=2, balanced=True)
    assert g.vertex_count == 12 and planted.n == 6
    assert out["pair_count"] == g.pair_count
    assert out["seed"] == 3


def test_generate_is_reproducible(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    first = Path(_generate(tmp_path, capsys)["graph"]).read_text(encoding="utf-8")
    second = Path(_generate(tmp_path, capsys)["graph"]).read_text(encoding="utf-8")
    assert first == second


def test_recover_then_evaluate_planted_embedding(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    out = _generate(tmp_path, capsys)
    cfg = str(_config(tmp_path))
    planted = read_partition(out["partition"], k=2, balanced=True)
    emb = write_embedding(planted_embedding(planted), tmp_path / "planted.emb")

    rec = _run(["recover", "--config", cfg, "--embedding", str(emb), "--output", str(tmp_path / "rec.part"),
                "--weak-output", str(tmp_path / "weak.part")], capsys)
    assert rec["weak_clusters"] == 2

    report = _run(["evaluate", "--config", cfg, "--partition", str(tmp_path / "rec.part"),
                   "--planted", out["partition"], "--graph", out["graph"], "--embedding", str(emb)], capsys)
    assert report["closeness_strong"]["delta"] == 0.0
    assert report["cut_cost"] == report["planted_cut_cost"]
    assert report["feasibility"]["passed"] is True

    weak = _run(["evaluate", "--partition", str(tmp_path / "weak.part"), "--planted", out["partition"], "--weak"], capsys)
    assert weak["closeness_weak"]["delta"] == 0.0


def test_evaluate_report_file(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    out = _generate(tmp_path, capsys)
    target = tmp_path / "reports" / "eval.json"
    assert main(["evaluate", "--partition", out["partition"], "--planted", out["partition"], "--report", str(target)]) == 0
    assert json.loads(target.read_text(encoding="utf-8"))["closeness_strong"]["delta"] == 0.0


def test_corrupt_monotone(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    out = _generate(tmp_path, capsys)
    cfg = str(_config(tmp_path))
    target = tmp_path / "corrupt.edges"
    res = _run(["corrupt", "--config", cfg, "--graph", out["graph"], "--partition", out["partition"],
                "--output", str(target), "--monotone", "--add", "1000", "--remove", "1000", "--clamp"], capsys)
    assert res["metadata"]["monotone_clamped"] is True
    # both clusters become cliques on 6 vertices
    assert read_edge_list(target).pair_count == 2 * 15


def test_corrupt_infeasible_budget_exits_1(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    out = _generate(tmp_path, capsys)
    code = main(["corrupt", "--config", str(_config(tmp_path)), "--graph", out["graph"], "--partition", out["partition"],
                 "--output", str(tmp_path / "x.edges"), "--monotone", "--add", "1000"])
    assert code == 1
    assert "maximum feasible" in capsys.readouterr().err


def test_vertex_count_mismatch_exits_1(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    out = _generate(tmp_path, capsys)
    other = _config(tmp_path, params={"n": 7, "k": 2, "a": 5.0, "b": 1.0})
    code = main(["solve", "--config", str(other), "--graph", out["graph"], "--output", str(tmp_path / "e.emb")])
    assert code == 1
    assert "N = n*k = 14" in capsys.readouterr().err


def test_parse_error_names_the_line(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    bad = tmp_path / "bad.edges"
    bad.write_text("4 2 simple\n0 1\n2 x\n", encoding="utf-8")
    part = tmp_path / "p.part"
    part.write_text("0\n0\n1\n1\n", encoding="utf-8")
    code = main(["evaluate", "--partition", str(part), "--planted", str(part), "--graph", str(bad)])
    assert code == 1
    err = capsys.readouterr().err
    assert "line 3" in err and "bad.edges" in err


def test_boost_recovers_base_on_first_color_only(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    out = _generate(tmp_path, capsys)
    cfg_path = _config(tmp_path)
    res = _run(["boost", "--config", str(cfg_path), "--seed", "3", "--graph", out["graph"],
                "--output", str(tmp_path / "boosted.part"), "--base-output", str(tmp_path / "base.part"),
                "--threshold", "0.5"], capsys)
    g = read_edge_list(out["graph"])
    assert res["threshold"] == 0.5
    assert res["base_pairs"] + res["vote_pairs"] == g.pair_count

    # the same chain by hand: solve and recover on E1, vote on E2
    cfg = ExperimentConfig.from_dict(load_experiment_config(cfg_path))
    seeds = stage_seeds(3)
    split = split_edges(g, seeds["split"])
    assert res["split_seed"] == seeds["split"]
    e = solve_sdp(split.e1, cfg.params, replace(cfg.solver, seed=seeds["solver"]))
    _, expected_base = recover_partition(e, 6, 2, cfg.rho)
    assert read_partition(tmp_path / "base.part", k=2, balanced=True) == expected_base
    expected = boost(split.e2, expected_base, 6, 2, BoostConfig(threshold=0.5, seed=seeds["boost"]))
    assert read_partition(tmp_path / "boosted.part", k=2, balanced=True) == expected


###############################################################################
# lower-bound oracles
###############################################################################
def test_lowerbound_coupling(capsys: pytest.CaptureFixture) -> None:
    report = _run(["lowerbound", "--coupling", "1", "4"], capsys)
    assert 0.0 < report["coupling_overlap"] < 1.0


def test_lowerbound_game_and_bounds(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    cfg = _config(tmp_path, params={"n": 100, "k": 2, "a": 30.0, "b": 5.0})
    report = _run(["lowerbound", "--config", str(cfg), "--game", "4", "6", "--trials", "20000", "--bounds",
                   "--delta", "0.1"], capsys)
    assert report["game"]["trials"] == 20000
    assert report["bounds"]["lb_pure_rhs"] == pytest.approx(8.977, abs=1e-3)


def test_lowerbound_needs_an_option(capsys: pytest.CaptureFixture) -> None:
    assert main(["lowerbound"]) == 1
    assert "choose at least one" in capsys.readouterr().err


###############################################################################
# pipeline commands
###############################################################################
def test_run_writes_rows_and_summary(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    out_dir = tmp_path / "runs"
    summary = _run(["run", "--config", str(_config(tmp_path)), "--seeds", "0..1", "--out", str(out_dir)], capsys)
    (agg,) = summary["aggregate"]
    assert agg["seeds"] == 2 and agg["failures"] == 0
    assert (out_dir / "rows.jsonl").exists()
    assert (out_dir / "aggregate.csv").exists()
    assert (out_dir / agg["config_hash"][:12] / "record.json").exists()


def test_run_csv_summary(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    assert main(["run", "--config", str(_config(tmp_path)), "--seed", "2", "--out", str(tmp_path), "--format", "csv"]) == 0
    header = capsys.readouterr().out.splitlines()[0]
    assert header.startswith("config_hash,n,k,a,b")


def test_sweep_with_grid_file(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"b": [0.5, 1.0]}), encoding="utf-8")
    summary = _run(["sweep", "--config", str(_config(tmp_path)), "--grid", str(grid), "--out", str(tmp_path / "s")], capsys)
    assert len(summary["aggregate"]) == 2


def test_env_sets_output_dir(tmp_path: Path, capsys: pytest.CaptureFixture, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("ROBUSTSBM_OUT_DIR", str(tmp_path / "from_env"))
    summary = _run(["run", "--config", str(_config(tmp_path))], capsys)
    assert summary["out_dir"] == str(tmp_path / "from_env")


def test_presets_lists_bundled_presets(capsys: pytest.CaptureFixture) -> None:
    assert main(["presets"]) == 0
    names = [line.split("\t")[0] for line in capsys.readouterr().out.splitlines()]
    assert "smoke" in names
    assert names == sorted(names)
