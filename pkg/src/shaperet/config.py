"""Run configuration: a flat ``key = value`` file overridden by CLI flags."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .descriptors import DescriptorKind
from .keypoints import HARRIS_PRESETS

CACHE_ENV = "SHAPERET_CACHE"
DEFAULT_CACHE = ".shaperet-cache"
COMBINATIONS = ("none", "VS", "VD", "HistS", "HistD")
SAMPLERS = ("random", "mesh-saliency", "castellani", *HARRIS_PRESETS)


class ConfigError(ValueError):
    pass


def default_cache() -> Path:
    return Path(os.environ.get(CACHE_ENV, DEFAULT_CACHE))


@dataclass(frozen=True)
class RunConfig:
    """Every knob of one retrieval run.

    Keys accepted in a config file are the field names; ``kinds`` is a
    comma-separated list.
    """

    dataset: Path | None = None
    labels: Path | None = None
    kinds: tuple = ("Mean",)
    combination: str = "none"
    sampler: str = "random"
    n_points: int = 200
    dictionary_size: int = 50
    seed: int = 0
    n_rings: int = 5
    max_iter: int = 100
    workers: int = 1
    out: Path = Path("out")
    cache: Path = field(default_factory=default_cache)

    @property
    def label_path(self) -> Path | None:
        if self.labels is not None:
            return self.labels
        if self.dataset is None:
            return None
        found = sorted(Path(self.dataset).glob("*.cla"))
        return found[0] if found else None

    def validate(self, need_dataset: bool = True) -> "RunConfig":
        if self.n_points < 1:
            raise ConfigError("n_points must be at least 1")
        if self.dictionary_size < 1:
            raise ConfigError("dictionary_size must be at least 1")
        if self.n_rings < 1:
            raise ConfigError("n_rings must be at least 1")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")
        if self.combination not in COMBINATIONS:
            raise ConfigError(f"combination must be one of {', '.join(COMBINATIONS)}")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"sampler must be one of {', '.join(SAMPLERS)}")
        for k in self.kinds:
            DescriptorKind(k)
        if self.combination == "none" and len(self.kinds) != 1:
            raise ConfigError("a run without combination takes exactly one descriptor kind")
        if self.combination != "none" and len(self.kinds) != 2:
            raise ConfigError(f"combination {self.combination} needs exactly two descriptor kinds")
        if need_dataset:
            if self.dataset is None or not Path(self.dataset).is_dir():
                raise ConfigError(f"dataset directory {self.dataset} does not exist")
            if self.labels is not None and not Path(self.labels).is_file():
                raise ConfigError(f"label file {self.labels} does not exist")
        return self

    def snapshot(self) -> dict:
        d = asdict(self)
        return {k: (str(v) if isinstance(v, Path) else list(v) if isinstance(v, tuple) else v)
                for k, v in d.items()}

    def with_overrides(self, **values) -> "RunConfig":
        return replace(self, **{k: v for k, v in _coerce(values).items() if v is not None})


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(values: dict) -> dict:
    out = {}
    for key, val in values.items():
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        if val is None or not isinstance(val, str):
            if key == "kinds" and val is not None:
                val = tuple(DescriptorKind.parse(str(k)).value for k in val)
            out[key] = val
            continue
        typ = _TYPES[key]
        try:
            if key == "kinds":
                val = tuple(DescriptorKind.parse(k).value for k in val.split(",") if k.strip())
            elif "int" in typ:
                val = int(val)
            elif "Path" in typ:
                val = Path(val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
        out[key] = val
    return out


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"line {no}: expected 'key = value'")
        values[key.strip()] = val.strip()
    return _coerce(values)


def load_config(path=None, **overrides) -> RunConfig:
    base = RunConfig()
    if path is not None:
        cfg_path = Path(path)
        values = parse_config(cfg_path.read_text())
        # relative paths in a config file are taken relative to that file
        for key in ("dataset", "labels", "out", "cache"):
            if key in values and not values[key].is_absolute():
                values[key] = cfg_path.parent / values[key]
        base = replace(base, **values)
    return base.with_overrides(**overrides)


def format_config(cfg: RunConfig) -> str:
    lines = []
    for key, val in cfg.snapshot().items():
        if val is None:
            continue
        lines.append(f"{key} = {','.join(val) if isinstance(val, list) else val}")
    return "\n".join(lines) + "\n"
