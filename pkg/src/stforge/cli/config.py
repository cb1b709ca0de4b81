"""YAML run configuration with environment interpolation, and the typed command configs."""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

import yaml

from ..eval_harness.scoring import COORD_MODES
from ..refer_forge.forge import SPATIAL_FAMILIES
from ..temporal_forge.items import TEMPORAL_FAMILIES


class ConfigError(ValueError):
    pass


_VAR = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)(?::-([^}]*))?\}")


def interpolate(text: str, env: Optional[Mapping[str, str]] = None) -> str:
    """Replace ``${NAME}`` and ``${NAME:-default}``; an unset name without default is an error."""
    env = os.environ if env is None else env

    def sub(m: re.Match) -> str:
        name, default = m.group(1), m.group(2)
        if name in env:
            return env[name]
        if default is not None:
            return default
        line = text.count("\n", 0, m.start()) + 1
        raise ConfigError(f"line {line}: environment variable {name} is not set")

    return _VAR.sub(sub, text)


def load_config(path: Optional[str]) -> Dict[str, Any]:
    if path is None:
        return {}
    p = Path(path)
    try:
        text = interpolate(p.read_text(encoding="utf-8"))
    except ConfigError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    try:
        data = yaml.safe_load(text) or {}
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else "?"
        raise ConfigError(f"{p}: line {line}: {exc.problem}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    return data


def section(cfg: Mapping[str, Any], name: str) -> Dict[str, Any]:
    sec = cfg.get(name, {}) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    return dict(sec)


def digest(obj: Any) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class ForgeConfig:
    """Spatial or temporal forge run. ``families`` maps family to a max item count (None = all)."""

    kind: str
    families: Dict[str, Optional[int]]
    seed: int = 0
    scene_roots: Tuple[str, ...] = ()
    synthetic_scenes: int = 0
    templates: Optional[str] = None
    per_template: int = 3
    failure_rate: float = 0.2
    cell_size: float = 0.05
    output: str = "out"

    def __post_init__(self):
        allowed = SPATIAL_FAMILIES if self.kind == "spatial" else TEMPORAL_FAMILIES
        unknown = sorted(set(self.families) - set(allowed))
        if unknown:
            raise ConfigError(f"unknown {self.kind} family {unknown[0]!r} (choose from {', '.join(allowed)})")
        for fam, n in self.families.items():
            if n is not None and n < 0:
                raise ConfigError(f"count for {fam} must be >= 0")
        if self.synthetic_scenes < 0 or self.per_template < 0:
            raise ConfigError("counts must be >= 0")
        if not 0.0 <= self.failure_rate <= 1.0:
            raise ConfigError("failure rate must be in [0, 1]")
        for root in self.scene_roots:
            if not Path(root).is_dir():
                raise ConfigError(f"scene root {root} does not exist")
        if self.templates is not None and not Path(self.templates).is_file():
            raise ConfigError(f"template file {self.templates} does not exist")

    def snapshot(self) -> Dict[str, Any]:
        d = asdict(self)
        d.pop("output")
        d["scene_roots"] = list(self.scene_roots)
        return d


@dataclass(frozen=True)
class EvalConfig:
    benchmark: str
    items: str
    predictions: Optional[str] = None
    endpoint: Optional[Dict[str, Any]] = None
    coord_mode: str = "absolute"
    dfd_normalize: bool = True
    thinking: bool = True
    threshold: Optional[float] = None
    output: str = "out"
    extra: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if (self.predictions is None) == (self.endpoint is None):
            raise ConfigError("give exactly one of predictions or endpoint")
        if self.coord_mode not in COORD_MODES:
            raise ConfigError(f"unknown coordinate mode {self.coord_mode!r}")
        if not Path(self.items).is_file():
            raise ConfigError(f"items file {self.items} does not exist")
        if self.predictions is not None and not Path(self.predictions).is_file():
            raise ConfigError(f"predictions file {self.predictions} does not exist")
        if not re.fullmatch(r"[A-Za-z0-9][A-Za-z0-9_.-]*", self.benchmark):
            raise ConfigError(f"benchmark id {self.benchmark!r} must be a plain file-safe name")


def parse_family_counts(specs, default_all) -> Dict[str, Optional[int]]:
    """``("pointing", "grounding:50")`` -> ``{"pointing": None, "grounding": 50}``."""
    if isinstance(specs, Mapping):
        return {str(k): (None if v is None else int(v)) for k, v in specs.items()}
    if not specs:
        return {f: None for f in default_all}
    out: Dict[str, Optional[int]] = {}
    for s in specs:
        name, _, count = str(s).partition(":")
        try:
            out[name] = int(count) if count else None
        except ValueError:
            raise ConfigError(f"bad family count {s!r}") from None
    return out
