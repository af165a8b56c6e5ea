import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Tuple

APP_NAME = "robustsbm"
CONFIG_FILE_NAME = "robustsbm_config.json"

ENV_OUT_DIR = "ROBUSTSBM_OUT_DIR"
ENV_THREADS = "ROBUSTSBM_THREADS"

log = logging.getLogger(__name__)


def _app_base_dir() -> Path:
    """Portable root: the frozen executable's directory, else the checkout holding robustsbm.py."""
    if getattr(sys, "frozen", False):
        return Path(sys.executable).resolve().parent
    return Path(__file__).resolve().parents[1]


def get_user_config_dir() -> Path:
    """Per-user home of robustsbm_config.json and user presets (APPDATA, Application Support or XDG)."""
    if sys.platform.startswith("win"):
        root = Path(os.environ.get("APPDATA") or Path.home() / "AppData" / "Roaming")
    elif sys.platform == "darwin":
        root = Path.home() / "Library" / "Application Support"
    else:
        root = Path(os.environ.get("XDG_CONFIG_HOME") or Path.home() / ".config")
    return root / APP_NAME


def default_config() -> dict:
    return {
        "params": {"n": 100, "k": 2, "a": 20.0, "b": 2.0},
        "model": "bernoulli",  # "bernoulli" or "poisson" (flattened before solving)
        "adversary": {
            "kind": "none",  # "none" | "outlier" | "monotone" | "both" | "lower-bound"
            "strategy": "uniform",
            "epsilon": 0.0,
            "epsilon1": 0.0,
            "epsilon2": 0.0,
            "monotone_add": 0,
            "monotone_remove": 0,
            "monotone_add_fraction": None,  # of m; overrides monotone_add
            "monotone_remove_fraction": None,
            "clamp_to_feasible": False,
            "lb_rho": None,  # lower-bound adversary; None -> eps (a+b) / (4 (a-b))
        },
        "solver": {
            "rank": None,  # None -> min(N, max(k, ceil(sqrt(2N)) + 1))
            "max_iterations": 2000,
            "outer_rounds": 20,
            "step_size": 1.0,
            "penalty": 1.0,
            "penalty_growth": 2.0,
            "penalty_max": 1000.0,
            "tol_feas": 1e-3,
            "tol_obj": 1e-2,
            "restarts": 2,
            "seed": 0,
        },
        "recovery": {"rho": 0.27},
        "boost": {
            "enabled": False,
            "threshold": None,  # None -> (a - b) / 20
            "random_halves": False,
        },
        "bounds": {
            "s": 2.0,
            "eta": None,
            "eta_open_interval": False,
            "C0": 11.0,
            "delta0": None,
            "KG": 1.783,
            "c_regime": 1.0,
        },
        "seeds": [0],
        "output": {
            "out_dir": "runs",
            "format": "json",
            "threads": 1,
        },
    }


def merge_defaults(base: dict, overrides: Optional[dict]) -> dict:
    """Layer ``overrides`` on ``base``: sections merge key by key, any other value replaces."""
    merged = dict(base)
    for key, value in (overrides or {}).items():
        current = merged.get(key)
        merged[key] = merge_defaults(current, value) if isinstance(value, dict) and isinstance(current, dict) else value
    return merged


def load_user_defaults(base_dir: Optional[Path] = None) -> Tuple[Optional[Path], dict]:
    """
    Returns (path, overrides) from the first user config found.

    Order: portable robustsbm_config.json next to the launcher, then the
    per-user config dir. Unreadable files are skipped, never fatal.
    """
    base = Path(base_dir) if base_dir else _app_base_dir()
    local_path = base / CONFIG_FILE_NAME
    user_path = get_user_config_dir() / CONFIG_FILE_NAME

    for p in (local_path, user_path):
        if p.exists():
            try:
                return p, json.loads(p.read_text(encoding="utf-8"))
            except (OSError, ValueError) as exc:
                log.warning("skipping unreadable config %s: %s", p, exc)
                continue
    return None, {}


def load_experiment_config(path: Optional[Path] = None, base_dir: Optional[Path] = None, use_user_defaults: bool = True) -> dict:
    """Defaults, then user defaults, then the experiment file, then env overrides."""
    cfg = default_config()
    if use_user_defaults:
        _, user = load_user_defaults(base_dir)
        cfg = merge_defaults(cfg, user)
    if path is not None:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        cfg = merge_defaults(cfg, data)
    return apply_env_overrides(cfg)


def apply_env_overrides(cfg: dict) -> dict:
    # only output paths and thread counts may come from the environment
    out = merge_defaults(cfg, {})
    output = dict(out.get("output") or {})
    out_dir = os.environ.get(ENV_OUT_DIR)
    if out_dir:
        output["out_dir"] = out_dir
    threads = os.environ.get(ENV_THREADS)
    if threads:
        try:
            output["threads"] = max(1, int(threads))
        except ValueError:
            pass
    out["output"] = output
    return out
