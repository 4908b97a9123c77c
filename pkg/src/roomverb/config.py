"""Run configuration: JSON file, environment variable and command-line overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ParseError

CONFIG_ENV = "ROOMVERB_CONFIG"


@dataclass(frozen=True)
class Settings:
    sample_rate: int = 48000
    block_size: int = 256
    offline_block_size: int = 1024
    max_order: int = 2
    speed_of_sound: float = 343.0
    seed: int = 0
    cadence: float = 2.0  # replay re-estimation rate, Hz
    rir_length: float = 2.0
    channels: int = 1
    equalize_decay: bool = True

    def updated(self, **overrides) -> "Settings":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def load_settings(path=None, **overrides) -> Settings:
    """Defaults, then the config file (``path`` or ``$ROOMVERB_CONFIG``), then overrides."""
    path = path or os.environ.get(CONFIG_ENV)
    values = {}
    if path:
        try:
            values = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot read config {path}: {exc}") from None
        if not isinstance(values, dict):
            raise ParseError("config must be a JSON object")
        values.pop("format_version", None)
        known = {f.name: f.type for f in fields(Settings)}
        unknown = set(values) - set(known)
        if unknown:
            raise ParseError(f"unknown config keys: {', '.join(sorted(unknown))}")
    try:
        settings = Settings(**values).updated(**overrides)
        casts = {f.name: type(getattr(Settings(), f.name)) for f in fields(Settings)}
        return Settings(**{k: casts[k](getattr(settings, k)) for k in casts})
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad config value: {exc}") from None
