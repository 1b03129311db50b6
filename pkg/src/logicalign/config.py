"""Flat INI configuration for the service and forge backends.

Secrets never live in the file: `auth_value_env` and `token_env` name
environment variables that hold the actual values at load time.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from .forge import BackendProfile, RetryPolicy

BACKEND_PREFIX = "backend:"


class ConfigError(ValueError):
    pass


@dataclass
class AppConfig:
    host: str = "127.0.0.1"
    port: int = 8731
    token: str = ""
    store_path: str = "review-store"
    finalize_path: str = "review-dataset.jsonl"
    backends: list = field(default_factory=list)
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    fallback_seed: int = 0


def _get(section, key, cast, default):
    if key not in section:
        return default
    raw = section[key]
    try:
        return cast(raw)
    except ValueError:
        raise ConfigError(
            f"bad value for {key}: {raw!r} (expected {cast.__name__})") from None


def _env(section, key, env: dict) -> str:
    """Resolve `<key>_env` to the named environment variable's value."""
    name = section.get(key + "_env", "")
    if not name:
        return ""
    return env.get(name, "")


def load_config(path=None, env=None) -> AppConfig:
    """Parse an INI file into an AppConfig; missing file means defaults."""
    env = os.environ if env is None else env
    cfg = AppConfig()
    if path is None:
        return cfg
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(path.read_text("utf-8"), source=str(path))
    except configparser.Error as e:
        raise ConfigError(f"invalid config: {e}") from None

    if parser.has_section("service"):
        s = parser["service"]
        cfg.host = s.get("host", cfg.host)
        cfg.port = _get(s, "port", int, cfg.port)
        cfg.store_path = s.get("store", cfg.store_path)
        cfg.finalize_path = s.get("finalize_path", cfg.finalize_path)
        cfg.token = _env(s, "token", env)

    if parser.has_section("forge"):
        s = parser["forge"]
        cfg.retry = RetryPolicy(
            max_retries=_get(s, "retries", int, cfg.retry.max_retries),
            backoff_start=_get(s, "backoff", float, cfg.retry.backoff_start),
            backoff_factor=_get(s, "backoff_factor", float,
                                cfg.retry.backoff_factor))
        cfg.fallback_seed = _get(s, "fallback_seed", int, cfg.fallback_seed)

    for name in parser.sections():
        if not name.startswith(BACKEND_PREFIX):
            continue
        tag = name[len(BACKEND_PREFIX):].strip()
        s = parser[name]
        if not tag:
            raise ConfigError("backend section needs a name after the colon")
        if "endpoint" not in s or "model" not in s:
            raise ConfigError(f"backend {tag!r} needs endpoint and model")
        cfg.backends.append(BackendProfile(
            name=tag,
            endpoint=s["endpoint"],
            model=s["model"],
            auth_header=s.get("auth_header", ""),
            auth_value=_env(s, "auth_value", env),
            response_path=s.get("response_path",
                                "choices.0.message.content"),
            timeout=_get(s, "timeout", float, 30.0),
            max_in_flight=_get(s, "max_in_flight", int, 4),
        ))
    return cfg
