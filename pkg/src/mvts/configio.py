"""Strict JSON-dict <-> dataclass conversion shared by all run configs.

Unknown keys are rejected rather than ignored so a typo in a config file
fails loudly. Aliases map JSON key names that cannot be Python identifiers
(like "lambda") onto dataclass field names.
"""

from __future__ import annotations

import dataclasses
from typing import Any, Mapping

from .errors import ConfigError


def from_dict(cls, data: Mapping[str, Any], aliases: Mapping[str, str] | None = None):
    if not isinstance(data, Mapping):
        raise ConfigError(f"{cls.__name__} config must be a JSON object, got {type(data).__name__}")
    aliases = dict(aliases or {})
    field_names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        name = aliases.get(key, key)
        if name not in field_names:
            raise ConfigError(f"unknown {cls.__name__} key {key!r}")
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"incomplete {cls.__name__}: {exc}") from None


def to_dict(obj, aliases: Mapping[str, str] | None = None) -> dict[str, Any]:
    """Shallow dict of the dataclass with alias names restored."""
    reverse = {v: k for k, v in (aliases or {}).items()}
    out = {}
    for f in dataclasses.fields(obj):
        out[reverse.get(f.name, f.name)] = getattr(obj, f.name)
    return out
