"""
Run configuration for timerefine.

``RefinementConfig`` collects every tunable of the statistical pipeline and
the refinement search. Values come from, in increasing precedence, the
defaults below, the ``TIMEREFINE_SEED`` environment variable, a TOML file
with a ``[refinement]`` table and explicit overrides (CLI flags).

Example usage:

    config = RefinementConfig.from_toml("refine.toml", alpha=0.05)

with ``refine.toml``:

    [refinement]
    max_components = 4
    mode = "both"
"""

from __future__ import annotations

import dataclasses
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

from .controlflow import EvaluationMode
from .errors import InputError, SpecError

SEED_ENV = "TIMEREFINE_SEED"
WATSON_RULES = ("exceeds", "standard", "ignore")


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV, "").strip()
    if not raw:
        return 0
    try:
        return int(raw)
    except ValueError as exc:
        raise SpecError(f"{SEED_ENV} must be an integer, got {raw!r}") from exc


@dataclass(frozen=True)
class RefinementConfig:
    alpha: float = 0.01
    max_components: int = 5
    delta_bic: float = 10.0
    seed: int = field(default_factory=default_seed)
    mc_samples: int = 999
    bootstrap_samples: int = 500
    em_restarts: int = 10
    em_tol: float = 1e-6
    em_max_iter: int = 500
    mode: EvaluationMode = EvaluationMode.SIGNIFICANCE
    watson_rule: str = "exceeds"
    watson_bootstrap: int = 0
    end_token: bool = True
    exhaustive_cap: int = 12
    min_events: int = 8

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", EvaluationMode(self.mode))
        if not 0.0 < self.alpha < 1.0:
            raise SpecError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.max_components < 1:
            raise SpecError("max_components must be at least 1")
        if self.watson_rule not in WATSON_RULES:
            raise SpecError(f"watson_rule must be one of {WATSON_RULES}, got {self.watson_rule!r}")
        for name in ("mc_samples", "bootstrap_samples", "em_restarts", "em_max_iter", "exhaustive_cap"):
            if getattr(self, name) < 1:
                raise SpecError(f"{name} must be at least 1")
        if self.min_events < 4:
            raise SpecError("min_events must be at least 4")

    @property
    def em_options(self) -> dict:
        return {"tol": self.em_tol, "max_iter": self.em_max_iter, "restarts": self.em_restarts}

    def replace(self, **overrides: Any) -> "RefinementConfig":
        """Copy with the non-``None`` entries of ``overrides`` applied."""
        return dataclasses.replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["mode"] = self.mode.value
        return out

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any], **overrides: Any) -> "RefinementConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise SpecError(f"unknown configuration key(s) {unknown}")
        try:
            base = cls(**values)
        except (TypeError, ValueError) as exc:
            raise SpecError(f"invalid configuration: {exc}") from exc
        return base.replace(**overrides)

    @classmethod
    def from_toml(cls, path: Optional[str | Path], **overrides: Any) -> "RefinementConfig":
        """Load the ``[refinement]`` table of ``path``; ``None`` means defaults."""
        if path is None:
            return cls().replace(**overrides)
        try:
            with open(path, "rb") as fh:
                document = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise InputError(f"configuration file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise SpecError(f"{path}: {exc}") from exc
        table = document.get("refinement", {})
        if not isinstance(table, dict):
            raise SpecError(f"{path}: [refinement] must be a table")
        return cls.from_mapping(table, **overrides)
