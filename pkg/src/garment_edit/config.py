"""Run configuration loaded from a TOML file."""

from __future__ import annotations

import os
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .backends import BackendEndpoint, Role
from .digests import json_digest
from .graph_build import DEFAULT_MAX_QUESTIONS
from .scoring import DomainError, Weights

SECTIONS = {"weights", "backends", "synthesis", "graph", "run", "mock"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MockSettings:
    vqa_policy: str = "seeded"
    yes_rate: float = 0.85
    graph_shape: str = "full"


@dataclass(frozen=True)
class RunConfig:
    weights: Weights = field(default_factory=Weights)
    endpoints: Mapping[Role, BackendEndpoint] = field(default_factory=lambda: {r: BackendEndpoint(role=r) for r in Role})
    backend_mode: str = "live"  # or "mock"
    templates_dir: str | None = None
    triplets_per_image_per_category: int = 1
    max_questions: int = DEFAULT_MAX_QUESTIONS
    seed: int = 0
    workers: int = 4
    output_dir: str = "output"
    corpus_dir: str | None = None
    mock: MockSettings = field(default_factory=MockSettings)
    mock_fixtures: str | None = None

    def digest(self) -> str:
        """Digest of everything that affects results; output_dir and worker count excluded."""
        return json_digest(
            {
                "weights": {k: str(v) for k, v in asdict(self.weights).items()},
                "endpoints": {r.value: {"base_url": e.base_url} for r, e in sorted(self.endpoints.items())},
                "backend_mode": self.backend_mode,
                "triplets_per_image_per_category": self.triplets_per_image_per_category,
                "max_questions": self.max_questions,
                "seed": self.seed,
                "mock": asdict(self.mock) if self.backend_mode == "mock" else None,
            }
        )


def _section(data: Mapping[str, Any], name: str, allowed: set[str]) -> dict[str, Any]:
    sec = data.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {', '.join(sorted(unknown))}")
    return dict(sec)


def weights_from(values: Mapping[str, Any], base: Weights | None = None) -> Weights:
    base = base or Weights()
    merged = {**asdict(base), **{k: float(v) for k, v in values.items() if v is not None}}
    if not 0 <= merged["alpha"] <= 1:
        raise ConfigError(f"alpha out of range [0, 1]: {merged['alpha']}")
    try:
        return Weights(**merged)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None


def config_from_mapping(data: Mapping[str, Any], base_dir: str | os.PathLike = ".") -> RunConfig:
    unknown = set(data) - SECTIONS
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")
    base_dir = Path(base_dir)

    def resolve(p: str | None) -> str | None:
        return None if p is None else str((base_dir / p).resolve())

    weights = weights_from(_section(data, "weights", {"w_icq", "w_cpq", "t_decay", "alpha"}))

    backends = _section(data, "backends", {"mode", *[r.value for r in Role]})
    mode = backends.pop("mode", "live")
    if mode not in ("live", "mock"):
        raise ConfigError(f"backends.mode must be 'live' or 'mock', got {mode!r}")
    endpoints = {}
    for role in Role:
        block = backends.get(role.value, {})
        if not isinstance(block, dict):
            raise ConfigError(f"[backends.{role.value}] must be a table")
        try:
            endpoints[role] = BackendEndpoint.from_mapping(role, block)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"backends.{role.value}: {exc}") from None
        if mode == "live" and not endpoints[role].base_url:
            raise ConfigError(f"backends.{role.value}.base_url is required in live mode")

    synthesis = _section(data, "synthesis", {"templates_dir", "triplets_per_image_per_category"})
    graph = _section(data, "graph", {"max_questions"})
    run = _section(data, "run", {"seed", "workers", "output_dir", "corpus_dir"})
    mock = _section(data, "mock", {"vqa_policy", "yes_rate", "graph_shape", "fixtures_dir"})
    fixtures = mock.pop("fixtures_dir", None)

    cfg = RunConfig(
        weights=weights,
        endpoints=endpoints,
        backend_mode=mode,
        templates_dir=resolve(synthesis.get("templates_dir")),
        triplets_per_image_per_category=int(synthesis.get("triplets_per_image_per_category", 1)),
        max_questions=int(graph.get("max_questions", DEFAULT_MAX_QUESTIONS)),
        seed=int(run.get("seed", 0)),
        workers=int(run.get("workers", 4)),
        output_dir=resolve(run.get("output_dir", "output")),
        corpus_dir=resolve(run.get("corpus_dir")),
        mock=MockSettings(**mock),
        mock_fixtures=resolve(fixtures),
    )
    return validate_config(cfg)


def validate_config(cfg: RunConfig) -> RunConfig:
    if cfg.triplets_per_image_per_category < 1:
        raise ConfigError("synthesis.triplets_per_image_per_category must be >= 1")
    if cfg.max_questions < 1:
        raise ConfigError("graph.max_questions must be >= 1")
    if cfg.workers < 1:
        raise ConfigError("run.workers must be >= 1")
    if cfg.seed < 0 or cfg.seed >= 2**64:
        raise ConfigError("run.seed must fit in an unsigned 64-bit integer")
    return cfg


def load_config(path: str | os.PathLike) -> RunConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_mapping(data, base_dir=path.parent)


def with_overrides(cfg: RunConfig, **changes: Any) -> RunConfig:
    return validate_config(replace(cfg, **{k: v for k, v in changes.items() if v is not None}))
