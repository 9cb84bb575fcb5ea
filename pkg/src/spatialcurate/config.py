"""Run configuration: defaults < ``key = value`` file < command-line flags."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .constraints import UNION_MODES, Thresholds
from .decoder import DecodeConfig
from .pairing import RELATION_RULES
from .proxy import METRICS


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    tau_v: str = "0.2"
    tau_u: str = "2.0"
    tau_o: str = "0.3"
    tau_s: str = "0.5"
    and_probability: float = 0.1
    max_expansion: float = 0.10
    global_seed: int = 0
    union_mode: str = "exact"
    relation_rule: str = "octant"
    exclude_crowd: bool = True
    min_area: int = 1
    proxy_mode: str = "paper"
    metric: str = "cosine"
    conf_threshold: float = 0.1
    templates: str = ""
    images_dir: str = ""

    def __post_init__(self):
        try:
            self.thresholds
            self.decode
        except ValueError as e:
            raise ConfigError(str(e)) from e
        checks = {
            "union_mode": UNION_MODES,
            "relation_rule": RELATION_RULES,
            "proxy_mode": ("paper", "full"),
            "metric": METRICS,
        }
        for key, allowed in checks.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(f"{key} must be one of {allowed}, got {getattr(self, key)!r}")
        if not 0.0 <= self.conf_threshold <= 1.0:
            raise ConfigError(f"conf_threshold must be in [0, 1], got {self.conf_threshold}")
        if self.min_area < 1:
            raise ConfigError("min_area must be >= 1")

    @property
    def thresholds(self) -> Thresholds:
        return Thresholds(self.tau_v, self.tau_u, self.tau_o, self.tau_s)

    @property
    def decode(self) -> DecodeConfig:
        return DecodeConfig(self.and_probability, self.max_expansion, self.global_seed)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in dataclasses.fields(Config)}


def _coerce(key: str, raw: Any) -> Any:
    kind = _FIELDS[key].type
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    if key.startswith("tau_"):
        try:
            float(raw)
        except ValueError:
            raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def load_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> Config:
    values: dict = {}
    if path:
        values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
    for key, v in (overrides or {}).items():
        if v is None:
            continue
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = v if not key.startswith("tau_") else str(v)
    return Config(**{k: _coerce(k, v) for k, v in values.items()})
