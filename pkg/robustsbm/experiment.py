from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from .boosting import BoostConfig
from .config import default_config, merge_defaults
from .errors import InvalidParameterError
from .lower_bounds import LbAdversaryConfig, suggest_rho
from .recovery import CoreParams, RHO_ALGORITHM
from .sbm import STRATEGIES, AdversaryBudget, SbmParams, floor_budget
from .sdp import SolverConfig

ADVERSARY_KINDS = ("none", "outlier", "monotone", "both", "lower-bound")
MODELS = ("bernoulli", "poisson")
FORMATS = ("json", "csv")


@dataclass
class AdversarySpec:
    kind: str = "none"
    strategy: str = "uniform"
    epsilon: float = 0.0
    epsilon1: float = 0.0
    epsilon2: float = 0.0
    monotone_add: int = 0
    monotone_remove: int = 0
    monotone_add_fraction: Optional[float] = None
    monotone_remove_fraction: Optional[float] = None
    clamp_to_feasible: bool = False
    lb_rho: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in ADVERSARY_KINDS:
            raise InvalidParameterError(f"unknown adversary kind {self.kind!r} (choose from {', '.join(ADVERSARY_KINDS)})")
        if self.strategy not in STRATEGIES:
            raise InvalidParameterError(f"unknown adversary strategy {self.strategy!r}")
        for name in ("monotone_add_fraction", "monotone_remove_fraction"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise InvalidParameterError(f"{name} must be nonnegative")

    @property
    def uses_outliers(self) -> bool:
        return self.kind in ("outlier", "both")

    @property
    def uses_monotone(self) -> bool:
        return self.kind in ("monotone", "both")

    def budget(self) -> AdversaryBudget:
        """An even split of epsilon when neither share is given."""
        if self.epsilon1 == 0.0 and self.epsilon2 == 0.0 and self.epsilon > 0.0:
            return AdversaryBudget.split(self.epsilon)
        return AdversaryBudget(epsilon=self.epsilon, epsilon1=self.epsilon1, epsilon2=self.epsilon2)

    def monotone_counts(self, m: float) -> tuple:
        add = self.monotone_add if self.monotone_add_fraction is None else floor_budget(self.monotone_add_fraction * m)
        remove = (
            self.monotone_remove if self.monotone_remove_fraction is None
            else floor_budget(self.monotone_remove_fraction * m)
        )
        return int(add), int(remove)

    def lb_config(self, params: SbmParams, seed: Any) -> LbAdversaryConfig:
        rho = self.lb_rho if self.lb_rho is not None else suggest_rho(self.epsilon, params.a, params.b)
        return LbAdversaryConfig(rho_fraction=rho, seed=seed)

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "AdversarySpec":
        d = d or {}

        def opt(key: str) -> Optional[float]:
            return None if d.get(key) is None else float(d[key])

        return cls(
            kind=str(d.get("kind") or "none"),
            strategy=str(d.get("strategy") or "uniform"),
            epsilon=float(d.get("epsilon", 0.0)),
            epsilon1=float(d.get("epsilon1", 0.0)),
            epsilon2=float(d.get("epsilon2", 0.0)),
            monotone_add=int(d.get("monotone_add") or 0),
            monotone_remove=int(d.get("monotone_remove") or 0),
            monotone_add_fraction=opt("monotone_add_fraction"),
            monotone_remove_fraction=opt("monotone_remove_fraction"),
            clamp_to_feasible=bool(d.get("clamp_to_feasible", False)),
            lb_rho=opt("lb_rho"),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "strategy": self.strategy,
            "epsilon": self.epsilon,
            "epsilon1": self.epsilon1,
            "epsilon2": self.epsilon2,
            "monotone_add": self.monotone_add,
            "monotone_remove": self.monotone_remove,
            "monotone_add_fraction": self.monotone_add_fraction,
            "monotone_remove_fraction": self.monotone_remove_fraction,
            "clamp_to_feasible": self.clamp_to_feasible,
            "lb_rho": self.lb_rho,
        }


@dataclass
class BoostSpec:
    enabled: bool = False
    config: BoostConfig = field(default_factory=BoostConfig)

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "BoostSpec":
        d = d or {}
        return cls(enabled=bool(d.get("enabled", False)), config=BoostConfig.from_dict(d))

    def to_dict(self) -> Dict[str, Any]:
        out = {"enabled": self.enabled}
        out.update(self.config.to_dict())
        return out


@dataclass
class OutputSpec:
    out_dir: str = "runs"
    format: str = "json"
    threads: int = 1

    def __post_init__(self) -> None:
        if self.format not in FORMATS:
            raise InvalidParameterError(f"unknown output format {self.format!r}")
        if int(self.threads) < 1:
            raise InvalidParameterError("threads must be >= 1")

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "OutputSpec":
        d = d or {}
        return cls(
            out_dir=str(d.get("out_dir") or "runs"),
            format=str(d.get("format") or "json"),
            threads=int(d["threads"]) if d.get("threads") is not None else 1,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {"out_dir": self.out_dir, "format": self.format, "threads": self.threads}


@dataclass
class ExperimentConfig:
    params: SbmParams
    model: str = "bernoulli"
    adversary: AdversarySpec = field(default_factory=AdversarySpec)
    solver: SolverConfig = field(default_factory=SolverConfig)
    rho: float = RHO_ALGORITHM
    boost: BoostSpec = field(default_factory=BoostSpec)
    bounds: Dict[str, Any] = field(default_factory=dict)
    seeds: List[int] = field(default_factory=lambda: [0])
    output: OutputSpec = field(default_factory=OutputSpec)

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise InvalidParameterError(f"unknown model {self.model!r} (choose from {', '.join(MODELS)})")
        if not self.seeds:
            raise InvalidParameterError("at least one seed is required")
        if any(int(s) < 0 for s in self.seeds):
            raise InvalidParameterError("seeds must be nonnegative")
        self.seeds = [int(s) for s in self.seeds]
        CoreParams(self.rho)
        if self.adversary.kind == "lower-bound":
            if self.params.k != 2:
                raise InvalidParameterError("the lower-bound adversary needs k = 2")
            if self.model != "poisson":
                raise InvalidParameterError("the lower-bound adversary needs model = 'poisson'")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        """Missing sections fall back to default_config()."""
        d = merge_defaults(default_config(), data or {})
        recovery = d.get("recovery") or {}
        return cls(
            params=SbmParams.from_dict(d["params"]),
            model=str(d.get("model") or "bernoulli"),
            adversary=AdversarySpec.from_dict(d.get("adversary")),
            solver=SolverConfig.from_dict(d.get("solver")),
            rho=float(recovery.get("rho", RHO_ALGORITHM)),
            boost=BoostSpec.from_dict(d.get("boost")),
            bounds=dict(d.get("bounds") or {}),
            seeds=list(d.get("seeds") or []),
            output=OutputSpec.from_dict(d.get("output")),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "params": self.params.to_dict(),
            "model": self.model,
            "adversary": self.adversary.to_dict(),
            "solver": self.solver.to_dict(),
            "recovery": {"rho": self.rho},
            "boost": self.boost.to_dict(),
            "bounds": dict(self.bounds),
            "seeds": list(self.seeds),
            "output": self.output.to_dict(),
        }

    def hashed_part(self) -> Dict[str, Any]:
        d = self.to_dict()
        d.pop("output")
        d.pop("seeds")
        return d

    def config_hash(self) -> str:
        return config_hash(self.hashed_part())

    def with_seeds(self, seeds: List[int]) -> "ExperimentConfig":
        d = self.to_dict()
        d["seeds"] = list(seeds)
        return ExperimentConfig.from_dict(d)


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def parse_seed_range(text: str) -> List[int]:
    """'A..B' inclusive, or a single integer."""
    text = (text or "").strip()
    if ".." in text:
        lo_s, hi_s = text.split("..", 1)
        try:
            lo, hi = int(lo_s), int(hi_s)
        except ValueError:
            raise InvalidParameterError(f"bad seed range {text!r}") from None
        if lo < 0 or hi < lo:
            raise InvalidParameterError(f"bad seed range {text!r}")
        return list(range(lo, hi + 1))
    try:
        seed = int(text)
    except ValueError:
        raise InvalidParameterError(f"bad seed {text!r}") from None
    if seed < 0:
        raise InvalidParameterError("seeds must be nonnegative")
    return [seed]
