"""Platform configuration: TOML file, env overrides, validated defaults.

Unknown keys are rejected so typos fail loudly. Environment variables
PLAYLAB_LISTEN_HOST, PLAYLAB_LISTEN_PORT and PLAYLAB_DATA_DIR override the
file for deployments that configure through the environment.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

ENV_PREFIX = "PLAYLAB_"


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class PlatformConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8700
    data_dir: str = "./playlab-data"
    waiting_room_timeout_s: float = 120.0
    loading_timeout_s: float = 30.0
    liveness_window_s: float = 20.0
    heartbeat_interval_s: float = 5.0
    poll_linger_s: float = 25.0
    reaper_interval_s: float = 1.0
    gm_timeout_s: float = 10.0
    gm_max_response_bytes: int = 1024 * 1024
    max_outbox_messages: int = 1000
    shell_dir: str = ""  # optional static catalog/lobby frontend, served at /

    def validate(self) -> "PlatformConfig":
        if not (0 <= self.listen_port <= 65535):
            raise ConfigError(f"listen_port out of range: {self.listen_port}")
        for name in (
            "waiting_room_timeout_s",
            "loading_timeout_s",
            "liveness_window_s",
            "heartbeat_interval_s",
            "poll_linger_s",
            "reaper_interval_s",
            "gm_timeout_s",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be a positive duration")
        if self.gm_max_response_bytes < 1 or self.max_outbox_messages < 1:
            raise ConfigError("limits must be positive")
        if not self.listen_host:
            raise ConfigError("listen_host must not be empty")
        return self


_FIELD_TYPES = {f.name: f.type for f in fields(PlatformConfig)}


def load_config(path) -> PlatformConfig:
    """Parse a TOML config file; an empty file means all defaults."""
    raw = Path(path).read_bytes()
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, tomllib.TOMLDecodeError) as exc:
        # tomllib errors carry line/column information in their text.
        raise ConfigError(f"cannot parse {path}: {exc}")
    return config_from_dict(data, source=str(path))


def config_from_dict(data: dict, source: str = "<config>") -> PlatformConfig:
    unknown = sorted(set(data) - set(_FIELD_TYPES))
    if unknown:
        raise ConfigError(f"{source}: unknown config keys: {', '.join(unknown)}")
    coerced = {}
    for key, value in data.items():
        coerced[key] = _coerce(key, value, source)
    return PlatformConfig(**coerced).validate()


def _coerce(key: str, value, source: str):
    want = _FIELD_TYPES[key]
    if want in ("str", str):
        if not isinstance(value, str):
            raise ConfigError(f"{source}: {key} must be a string")
        return value
    if want in ("int", int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{source}: {key} must be an integer")
        return value
    if want in ("float", float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{source}: {key} must be a number")
        return float(value)
    raise ConfigError(f"{source}: unsupported key {key}")  # pragma: no cover


def apply_env(config: PlatformConfig, environ) -> PlatformConfig:
    updates = {}
    host = environ.get(ENV_PREFIX + "LISTEN_HOST")
    if host:
        updates["listen_host"] = host
    port = environ.get(ENV_PREFIX + "LISTEN_PORT")
    if port:
        try:
            updates["listen_port"] = int(port)
        except ValueError:
            raise ConfigError(f"{ENV_PREFIX}LISTEN_PORT must be an integer, got {port!r}")
    data_dir = environ.get(ENV_PREFIX + "DATA_DIR")
    if data_dir:
        updates["data_dir"] = data_dir
    if not updates:
        return config
    return replace(config, **updates).validate()
