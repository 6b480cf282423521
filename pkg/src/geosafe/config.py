"""Server configuration: key-value file plus GS_* environment overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from datetime import timedelta
from pathlib import Path
from typing import Mapping, Optional

from .geo import ZoneParameters

ENV_PREFIX = "GS_"


@dataclass(frozen=True)
class ServiceConfig:
    port: int = 8000
    host: str = "127.0.0.1"
    db_path: str = "./geosafe-data"
    safe_distance_m: float = 1.8
    noise_m: float = 0.2
    notify_buffer_m: float = 100.0
    cell_size_deg: float = 0.001
    zone_ttl_days: float = 14.0

    def zone_parameters(self) -> ZoneParameters:
        return ZoneParameters(
            safe_distance_m=self.safe_distance_m,
            noise_m=self.noise_m,
            notify_buffer_m=self.notify_buffer_m,
        )

    def zone_ttl(self) -> timedelta:
        return timedelta(days=self.zone_ttl_days)


def _parse_kv_file(path: Path) -> dict[str, str]:
    values: dict[str, str] = {}
    for i, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{i}: expected key=value, got {raw!r}")
        values[key.strip().lower()] = value.strip()
    return values


def load_config(
    path: Optional[str | Path] = None,
    env: Optional[Mapping[str, str]] = None,
) -> ServiceConfig:
    """Read the optional config file, then apply GS_* environment overrides."""
    env = os.environ if env is None else env
    raw: dict[str, str] = {}
    if path is not None:
        raw.update(_parse_kv_file(Path(path)))
    for f in fields(ServiceConfig):
        env_key = ENV_PREFIX + f.name.upper()
        if env_key in env:
            raw[f.name] = env[env_key]

    kwargs = {}
    for f in fields(ServiceConfig):
        if f.name not in raw:
            continue
        text = raw[f.name]
        try:
            kwargs[f.name] = _cast(f.name, text)
        except ValueError as exc:
            raise ValueError(f"bad config value for {f.name}: {text!r}") from exc
    unknown = set(raw) - {f.name for f in fields(ServiceConfig)}
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return ServiceConfig(**kwargs)


def _cast(name: str, text: str):
    if name == "port":
        return int(text)
    if name in ("host", "db_path"):
        return text
    return float(text)
