"""
Tests for the append-only row store and its CSV aggregate.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Optional

import pytest

from robustsbm.run_store import (
    AGGREGATE_COLUMNS,
    RunStore,
    aggregate_rows,
    read_aggregate_csv,
    write_aggregate_csv,
)


def _row(h: str, seed: int, delta: Optional[float] = 0.1, status: str = "ok", **extra: Any) -> Dict[str, Any]:
    report = {} if delta is None else {
        "recovery": {"delta_strong": delta, "delta_weak": delta / 2, "alpha": 0.01},
        "sdp": {"converged": True},
    }
    row = {
        "config_hash": h,
        "seed": seed,
        "status": status,
        "config": {"params": {"n": 10, "k": 2, "a": 8.0, "b": 1.0}, "model": "bernoulli",
                   "adversary": {"kind": "none", "strategy": "uniform", "epsilon": 0.0},
                   "boost": {"enabled": False}},
        "report": report,
        "volatile": {"total_seconds": 1.0},
    }
    row.update(extra)
    return row


###############################################################################
# storing rows
###############################################################################
def test_empty_store_loads_nothing(tmp_path: Path) -> None:
    store = RunStore(tmp_path / "runs")
    assert store.load() == []
    assert store.completed() == set()


def test_append_then_load(tmp_path: Path) -> None:
    store = RunStore(tmp_path)
    store.append(_row("h1", 0))
    store.append(_row("h1", 1, status="failed", delta=None))
    rows = store.load()
    assert len(rows) == 2
    assert all(r["schema"] == 1 for r in rows)
    assert store.completed() == {("h1", 0)}
    assert store.path.read_text(encoding="utf-8").endswith("\n")


def test_latest_row_wins(tmp_path: Path) -> None:
    store = RunStore(tmp_path)
    store.append(_row("h1", 0, status="failed", delta=None))
    store.append(_row("h1", 0, delta=0.2))
    rows = store.load()
    assert len(rows) == 1
    assert rows[0]["status"] == "ok"
    assert rows[0]["report"]["recovery"]["delta_strong"] == 0.2


def test_torn_and_foreign_lines_are_skipped(tmp_path: Path) -> None:
    store = RunStore(tmp_path)
    store.append(_row("h1", 0))
    with open(store.path, "a", encoding="utf-8") as f:
        f.write(json.dumps({"config_hash": "h1", "seed": 1, "schema": 99}) + "\n")
        f.write("\n")
        f.write('{"config_hash": "h1", "seed": 2, "sta')
    rows = store.load()
    assert [r["seed"] for r in rows] == [0]


def test_records_group_by_hash(tmp_path: Path) -> None:
    store = RunStore(tmp_path)
    for h, s in (("b", 1), ("a", 2), ("b", 0)):
        store.append(_row(h, s))
    records = store.records()
    assert [r.config_hash for r in records] == ["a", "b"]
    assert [row["seed"] for row in records[1].rows] == [0, 1]
    assert records[1].success
    assert records[1].to_dict()["aggregate"]["seeds"] == 2


###############################################################################
# aggregation
###############################################################################
def test_aggregate_statistics() -> None:
    rows = [_row("h", 0, 0.1), _row("h", 1, 0.3), _row("h", 2, 0.2), _row("h", 3, status="failed", delta=None)]
    (agg,) = aggregate_rows(rows)
    assert agg["seeds"] == 4
    assert agg["failures"] == 1
    assert agg["mean_delta"] == pytest.approx(0.2)
    assert agg["median_delta"] == pytest.approx(0.2)
    assert agg["mean_delta_weak"] == pytest.approx(0.1)
    assert agg["median_delta_boosted"] is None
    assert agg["solver_nonconverged"] == 0
    assert agg["n"] == 10 and agg["adversary"] == "none"


def test_aggregate_of_failures_only() -> None:
    (agg,) = aggregate_rows([_row("h", 0, status="failed", delta=None)])
    assert agg["failures"] == 1
    assert agg["mean_delta"] is None


def test_csv_matches_json_aggregate(tmp_path: Path) -> None:
    rows = [_row("h1", 0, 0.125), _row("h1", 1, 0.375), _row("h2", 0, 0.5)]
    path = write_aggregate_csv(rows, tmp_path / "out" / "aggregate.csv")
    table = read_aggregate_csv(path)
    expected = aggregate_rows(rows)
    assert list(table[0]) == AGGREGATE_COLUMNS
    assert len(table) == len(expected) == 2
    for line, agg in zip(table, expected):
        assert line["config_hash"] == agg["config_hash"]
        assert float(line["mean_delta"]) == agg["mean_delta"]
        assert int(line["seeds"]) == agg["seeds"]
        assert line["median_delta_boosted"] == ""


def test_store_writes_csv_next_to_rows(tmp_path: Path) -> None:
    store = RunStore(tmp_path)
    store.append(_row("h1", 0))
    path = store.write_aggregate_csv()
    assert path == tmp_path / "aggregate.csv"
    assert read_aggregate_csv(path)[0]["config_hash"] == "h1"
