"""Service configuration: one YAML file, overridable per key via SIGZOO_*
environment variables.

``pseudo_label_threshold`` deliberately has no default: the reuse distance
depends entirely on the embedding scale of the deployment, so any operation
needing it fails loudly until it is configured.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

import yaml

from .errors import ConfigError

ENV_PREFIX = "SIGZOO_"


@dataclass
class ServiceConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8472
    data_dir: str = "./sigzoo-data"
    embed_dim: int = 32
    k_min: int = 2
    k_max: int = 25
    pseudo_label_threshold: float | None = None  # required for pseudo-label ops
    jsd_threshold: float = 0.5
    certainty_threshold: float = 80.0
    membership_bar: float = 0.5
    fuzzifier_m: float = 2.0
    warmup_datasets: int = 5
    cooldown: int = 1
    seed: int = 0
    elbow_seeds: int = 5
    auto_update: bool = False
    max_request_mb: int = 64

    def require_pseudo_label_threshold(self) -> float:
        if self.pseudo_label_threshold is None:
            raise ConfigError(
                "pseudo_label_threshold is not configured; set it in the config "
                "file or SIGZOO_PSEUDO_LABEL_THRESHOLD"
            )
        if self.pseudo_label_threshold <= 0:
            raise ConfigError(
                "pseudo_label_threshold must be > 0",
                value=self.pseudo_label_threshold,
            )
        return self.pseudo_label_threshold

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _coerce(name: str, raw: str, target_type) -> object:
    try:
        if target_type is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return target_type(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"cannot parse {name} from {raw!r}")


def load_config(path: str | Path | None = None, env: dict | None = None) -> ServiceConfig:
    """File values first, then environment overrides, then defaults."""
    env = os.environ if env is None else env
    values: dict = {}
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config file: {exc}", path=str(path))
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError("config file must be a mapping", path=str(path))
        values.update(loaded)

    known = {f.name: f for f in fields(ServiceConfig)}
    unknown = set(values) - set(known)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    for name, f in known.items():
        env_key = ENV_PREFIX + name.upper()
        if env_key in env:
            target = f.type
            base = {"str": str, "int": int, "float": float, "bool": bool,
                    "float | None": float, "int | None": int}.get(str(target), str)
            values[name] = _coerce(name, env[env_key], base)

    cfg = ServiceConfig(**values)
    if cfg.k_min < 1 or cfg.k_min >= cfg.k_max:
        raise ConfigError("need 1 <= k_min < k_max", k_min=cfg.k_min, k_max=cfg.k_max)
    if not (0 < cfg.certainty_threshold < 100):
        raise ConfigError("certainty_threshold must be in (0, 100)")
    if not (0 < cfg.membership_bar < 1):
        raise ConfigError("membership_bar must be in (0, 1)")
    if not (0 < cfg.jsd_threshold <= 1):
        raise ConfigError("jsd_threshold must be in (0, 1]")
    if cfg.fuzzifier_m <= 1:
        raise ConfigError("fuzzifier_m must be > 1")
    return cfg
