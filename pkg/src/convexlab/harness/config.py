"""Experiment configuration: strict JSON round-trip and validation."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from ..errors import UsageError

_ALLOWED_KEYS = {
    "experiment", "seed", "n_grid", "p_grid", "t_grid", "q_grid",
    "measures", "bodies", "budgets", "output",
}

_BUDGET_KEYS = {
    "bank", "candidates", "mass_samples", "directions", "subspaces",
    "vol_samples", "restarts", "iters", "trials",
}

DEFAULT_BUDGETS = {
    "bank": 1200,
    "candidates": 4000,
    "mass_samples": 60_000,
}


@dataclass
class ExperimentConfig:
    """Grids, budgets and seeds for one registered experiment."""

    experiment: str
    seed: int = 1
    n_grid: list = field(default_factory=list)
    p_grid: list = field(default_factory=list)
    t_grid: list = field(default_factory=list)
    q_grid: list = field(default_factory=lambda: [1.0])
    measures: list = field(default_factory=list)
    bodies: list = field(default_factory=list)
    budgets: dict = field(default_factory=dict)
    output: str | None = None

    def budget(self, key: str) -> int:
        return int(self.budgets.get(key, DEFAULT_BUDGETS.get(key, 0)))

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["output"] is None:
            d.pop("output")
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        unknown = set(doc) - _ALLOWED_KEYS
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        if "experiment" not in doc:
            raise UsageError("config must name an experiment")
        bad_budgets = set(doc.get("budgets", {})) - _BUDGET_KEYS
        if bad_budgets:
            raise UsageError(f"unknown budget keys: {sorted(bad_budgets)}")
        return cls(**doc)

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def canonical_json(self) -> str:
        d = self.to_dict()
        d.pop("output", None)  # the output path does not affect the numbers
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    def validate(self) -> None:
        from .experiments import EXPERIMENTS

        if self.experiment not in EXPERIMENTS:
            raise UsageError(
                f"unknown experiment {self.experiment!r}; "
                f"known: {sorted(EXPERIMENTS)}"
            )
        for name in ("n_grid", "p_grid", "t_grid", "q_grid", "measures", "bodies"):
            if not getattr(self, name):
                raise UsageError(f"grid {name!r} must be non-empty")
        if any(n < 1 for n in self.n_grid):
            raise UsageError("dimensions must be positive")
        if any(p < 1 for p in self.p_grid):
            raise UsageError("moment orders must satisfy p >= 1")
        if any(t <= 0 for t in self.t_grid):
            raise UsageError("regularity scales must be positive")
        if any(q <= 0 for q in self.q_grid):
            raise UsageError("quantile levels must be positive")
        EXPERIMENTS[self.experiment].validate(self)
