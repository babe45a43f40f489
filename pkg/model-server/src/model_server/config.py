"""Server configuration: YAML/JSON file plus MODEL_SERVER_* env overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from typing import Mapping, Optional

import yaml


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ServerConfig:
    embedder_model: str = "sentence-transformers/distiluse-base-multilingual-cased-v1"
    mlm_model: str = "dbmdz/bert-base-italian-cased"
    host: str = "127.0.0.1"
    port: int = 8644
    max_batch: int = 64
    # Optional cap below the model's own context limit; the advertised
    # max_tokens is min(model limit, this cap) when set.
    max_tokens: Optional[int] = None
    # Upstream for the optional chat-completions reverse proxy.
    chat_upstream: Optional[str] = None
    chat_token: Optional[str] = None

    def __post_init__(self):
        if self.max_batch < 1:
            raise ConfigError("max_batch must be >= 1")
        if self.max_tokens is not None and self.max_tokens < 2:
            raise ConfigError("max_tokens must be >= 2")


_ENV_PREFIX = "MODEL_SERVER_"
_INT_FIELDS = {"port", "max_batch", "max_tokens"}


def load_config(
    path: Optional[str] = None,
    env: Optional[Mapping[str, str]] = None,
) -> ServerConfig:
    """Build a ServerConfig from an optional YAML/JSON file, then apply
    MODEL_SERVER_<FIELD> environment overrides on top. Unknown file keys
    are rejected."""
    env = os.environ if env is None else env
    values: dict = {}
    known = {f.name for f in fields(ServerConfig)}

    if path is not None:
        with open(path, "r", encoding="utf-8") as f:
            loaded = yaml.safe_load(f) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config root must be a mapping, got {type(loaded).__name__}")
        unknown = set(loaded) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)

    for name in known:
        raw = env.get(_ENV_PREFIX + name.upper())
        if raw is None:
            continue
        if name in _INT_FIELDS:
            try:
                values[name] = int(raw)
            except ValueError:
                raise ConfigError(f"{_ENV_PREFIX}{name.upper()} must be an integer") from None
        else:
            values[name] = raw

    try:
        return ServerConfig(**values)
    except TypeError as e:
        raise ConfigError(str(e)) from e
