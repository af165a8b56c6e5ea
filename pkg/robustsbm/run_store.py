from __future__ import annotations

import csv
import json
import logging
import os
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Set, Tuple

from .formats import to_jsonable
from .paths import aggregate_csv_path, ensure_dir, rows_path

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

AGGREGATE_COLUMNS = [
    "config_hash",
    "n",
    "k",
    "a",
    "b",
    "model",
    "adversary",
    "strategy",
    "epsilon",
    "boost",
    "seeds",
    "failures",
    "mean_delta",
    "median_delta",
    "mean_delta_weak",
    "median_delta_boosted",
    "mean_alpha",
    "solver_nonconverged",
]


@dataclass
class RunRecord:
    config_hash: str
    config: Dict[str, Any]
    rows: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def failures(self) -> int:
        return sum(1 for r in self.rows if r.get("status") != "ok")

    @property
    def success(self) -> bool:
        return self.failures == 0

    def aggregate(self) -> Dict[str, Any]:
        agg = aggregate_rows(self.rows)
        return agg[0] if agg else {}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": SCHEMA_VERSION,
            "config_hash": self.config_hash,
            "config": self.config,
            "aggregate": self.aggregate(),
            "rows": list(self.rows),
        }


class RunStore:
    """Append-only JSON-lines store of per-seed rows.

    - One line per (config hash, seed) attempt; later lines win on reload.
    - Each append is a single write of one complete line followed by fsync.
    """

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.path = rows_path(self.out_dir)

    # ---------- public API ----------

    def load(self) -> List[Dict[str, Any]]:
        if not self.path.exists():
            return []
        latest: Dict[Tuple[str, int], Dict[str, Any]] = {}
        for i, line in enumerate(self.path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError:
                # a torn final line from an interrupted run
                log.warning("skipping unreadable row %d in %s", i, self.path)
                continue
            if int(row.get("schema") or 0) != SCHEMA_VERSION:
                log.warning("skipping row %d with schema %r", i, row.get("schema"))
                continue
            latest[(row["config_hash"], int(row["seed"]))] = row
        return list(latest.values())

    def completed(self) -> Set[Tuple[str, int]]:
        return {(r["config_hash"], int(r["seed"])) for r in self.load() if r.get("status") == "ok"}

    def append(self, row: Dict[str, Any]) -> None:
        data = dict(row)
        data["schema"] = SCHEMA_VERSION
        line = json.dumps(to_jsonable(data), sort_keys=True, ensure_ascii=False) + "\n"
        ensure_dir(self.out_dir)
        with open(self.path, "a", encoding="utf-8", newline="\n") as f:
            f.write(line)
            f.flush()
            os.fsync(f.fileno())

    def records(self) -> List[RunRecord]:
        by_hash: Dict[str, RunRecord] = {}
        for row in sorted(self.load(), key=lambda r: (r["config_hash"], int(r["seed"]))):
            rec = by_hash.get(row["config_hash"])
            if rec is None:
                rec = by_hash[row["config_hash"]] = RunRecord(row["config_hash"], row.get("config") or {})
            rec.rows.append(row)
        return list(by_hash.values())

    def write_aggregate_csv(self, path: Optional[Path] = None) -> Path:
        return write_aggregate_csv(self.load(), path or aggregate_csv_path(self.out_dir))


# ---------- aggregation ----------

def _values(rows: Iterable[Dict[str, Any]], *keys: str) -> List[float]:
    out = []
    for r in rows:
        v: Any = r.get("report") or {}
        for key in keys:
            v = v.get(key) if isinstance(v, dict) else None
        if v is not None:
            out.append(float(v))
    return out


def _mean(xs: List[float]) -> Optional[float]:
    return sum(xs) / len(xs) if xs else None


def _median(xs: List[float]) -> Optional[float]:
    return statistics.median(xs) if xs else None


def aggregate_rows(rows: Iterable[Dict[str, Any]]) -> List[Dict[str, Any]]:
    """One summary per config hash, in hash order. Failed rows only count as failures."""
    groups: Dict[str, List[Dict[str, Any]]] = {}
    for r in rows:
        groups.setdefault(r["config_hash"], []).append(r)

    out = []
    for h in sorted(groups):
        group = sorted(groups[h], key=lambda r: int(r["seed"]))
        ok = [r for r in group if r.get("status") == "ok"]
        cfg = group[0].get("config") or {}
        params = cfg.get("params") or {}
        adv = cfg.get("adversary") or {}
        deltas = _values(ok, "recovery", "delta_strong")
        boosted = _values(ok, "boost", "delta_boosted")
        out.append({
            "config_hash": h,
            "n": params.get("n"),
            "k": params.get("k"),
            "a": params.get("a"),
            "b": params.get("b"),
            "model": cfg.get("model"),
            "adversary": adv.get("kind"),
            "strategy": adv.get("strategy"),
            "epsilon": adv.get("epsilon"),
            "boost": bool((cfg.get("boost") or {}).get("enabled", False)),
            "seeds": len(group),
            "failures": len(group) - len(ok),
            "mean_delta": _mean(deltas),
            "median_delta": _median(deltas),
            "mean_delta_weak": _mean(_values(ok, "recovery", "delta_weak")),
            "median_delta_boosted": _median(boosted),
            "mean_alpha": _mean(_values(ok, "recovery", "alpha")),
            "solver_nonconverged": sum(1 for r in ok if not ((r.get("report") or {}).get("sdp") or {}).get("converged", True)),
        })
    return out


def write_aggregate_csv(rows: Iterable[Dict[str, Any]], path: Path) -> Path:
    path = Path(path)
    ensure_dir(path.parent)
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.DictWriter(f, fieldnames=AGGREGATE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for agg in aggregate_rows(rows):
            w.writerow({k: "" if agg[k] is None else repr(agg[k]) if isinstance(agg[k], float) else agg[k] for k in AGGREGATE_COLUMNS})
    return path


def read_aggregate_csv(path: Path) -> List[Dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))
