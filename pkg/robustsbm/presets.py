"""
Experiment presets.

A preset is a JSON file holding a partial experiment config (merged over the
defaults) and optionally a sweep grid:

    {"name": "...", "description": "...", "version": 1,
     "config": {...}, "grid": {"epsilon": [0, 0.02]}}

Presets live in ``presets/`` next to the launcher and in
``<user config dir>/presets/``; a user preset shadows a bundled one of the
same file name.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from .config import _app_base_dir, get_user_config_dir
from .errors import FormatErrorWithHint, InvalidParameterError
from .experiment import ExperimentConfig

log = logging.getLogger(__name__)

PRESETS_DIRNAME = "presets"


class Preset:
    def __init__(self, data: Optional[dict] = None, path: Optional[Path] = None):
        data = data or {}
        self.path = path
        self.name = str(data.get("name") or (path.stem if path else "unnamed"))
        self.description = str(data.get("description") or "")
        self.version = int(data.get("version") or 1)
        self.config: Dict[str, Any] = dict(data.get("config") or {})
        self.grid: Dict[str, List[Any]] = dict(data.get("grid") or {})

    # ---------- loading ----------

    @classmethod
    def load(cls, path: str | Path, base_dir: Optional[Path] = None) -> "Preset":
        """
        Load a preset file. A bare name ("smoke") is looked up among the
        preset directories; a relative path resolves against ``base_dir``.
        """
        p = Path(path)
        if p.suffix != ".json" and len(p.parts) == 1:
            found = find_preset(p.name, base_dir)
            if found is None:
                raise InvalidParameterError(f"no preset named {p.name!r}")
            p = found
        elif not p.is_absolute() and base_dir:
            p = Path(base_dir) / p
        if not p.exists():
            raise InvalidParameterError(f"preset file not found: {p}")
        text = p.read_text(encoding="utf-8")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatErrorWithHint(f"invalid preset JSON: {exc.msg}", line=exc.lineno, path=str(p)) from None
        if not isinstance(data, dict):
            raise FormatErrorWithHint("preset must be a JSON object", line=1, path=str(p))
        return cls(data, p)

    def experiment(self) -> ExperimentConfig:
        return ExperimentConfig.from_dict(self.config)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "description": self.description,
            "version": self.version,
            "config": dict(self.config),
            "grid": dict(self.grid),
        }


def preset_dirs(base_dir: Optional[Path] = None) -> List[Path]:
    base = Path(base_dir) if base_dir else _app_base_dir()
    return [get_user_config_dir() / PRESETS_DIRNAME, base / PRESETS_DIRNAME]


def list_preset_files(base_dir: Optional[Path] = None) -> List[Path]:
    seen: Dict[str, Path] = {}
    for d in preset_dirs(base_dir):
        if not d.is_dir():
            continue
        for p in sorted(d.glob("*.json")):
            seen.setdefault(p.name, p)
    return [seen[name] for name in sorted(seen)]


def find_preset(name: str, base_dir: Optional[Path] = None) -> Optional[Path]:
    for p in list_preset_files(base_dir):
        if p.stem == name:
            return p
    return None
