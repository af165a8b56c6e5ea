from __future__ import annotations

import os
import sys
from pathlib import Path

from .config import APP_NAME


def get_app_data_dir() -> Path:
    home = Path.home()
    if os.name == "nt":
        return Path(os.environ.get("APPDATA", home / "AppData" / "Roaming")) / APP_NAME
    if sys.platform == "darwin":
        return home / "Library" / "Application Support" / APP_NAME
    # ~/.local/share/robustsbm
    return Path(os.environ.get("XDG_DATA_HOME", home / ".local" / "share")) / APP_NAME


def ensure_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def resolve_output_dir(path_str: str | None) -> Path:
    """Relative output dirs resolve from the working directory; empty means app data."""
    if not path_str:
        return ensure_dir(get_app_data_dir() / "runs")
    p = Path(path_str).expanduser()
    if not p.is_absolute():
        p = Path.cwd() / p
    return ensure_dir(p)


def run_dir(out_dir: Path, config_hash: str) -> Path:
    return ensure_dir(Path(out_dir) / config_hash[:12])


def rows_path(out_dir: Path) -> Path:
    return Path(out_dir) / "rows.jsonl"


def aggregate_csv_path(out_dir: Path) -> Path:
    return Path(out_dir) / "aggregate.csv"
