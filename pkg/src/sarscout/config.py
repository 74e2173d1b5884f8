"""Service configuration: TOML file with SARSCOUT_* environment overrides.

Keys are flat so every setting maps to one env var (SARSCOUT_STORE_DIR,
SARSCOUT_VLM_MODE, ...). Referenced paths must exist at startup; the store
directory is created if absent. Limits must be positive.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ServiceConfig", "load_config", "ENV_PREFIX"]

ENV_PREFIX = "SARSCOUT_"


@dataclass(frozen=True)
class ServiceConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8000
    store_dir: str = "./sessions"
    detector_backend: str = "file"  # file | onnx | stub
    detections_path: str | None = None
    model_path: str | None = None
    sidecar_path: str | None = None
    vlm_mode: str = "live"  # live | mock
    vlm_script_path: str | None = None
    vlm_base_url: str | None = None
    vlm_api_key: str | None = None
    vlm_model: str = "qwen2-vl-72b-instruct"
    template_dir: str | None = None
    default_mode: str = "with_boxes"
    scene_block_every_turn: bool = True
    conf_threshold: float | None = None
    nms_threshold: float | None = None
    max_image_bytes: int = 10 * 1024 * 1024
    max_sessions: int = 1000
    request_timeout_s: float = 60.0
    retry_budget: int = 2
    cors_origins: str = ""  # comma-separated browser origins

    def validate(self) -> "ServiceConfig":
        if self.max_image_bytes <= 0 or self.max_sessions <= 0 or self.request_timeout_s <= 0:
            raise ConfigError("limits must be positive")
        if self.detector_backend not in ("file", "onnx", "stub"):
            raise ConfigError(f"unknown detector_backend {self.detector_backend!r}")
        if self.vlm_mode not in ("live", "mock"):
            raise ConfigError(f"unknown vlm_mode {self.vlm_mode!r}")
        if self.default_mode not in ("with_boxes", "without_boxes"):
            raise ConfigError(f"unknown default_mode {self.default_mode!r}")
        if self.detector_backend == "file" and not self.detections_path:
            raise ConfigError("detector_backend 'file' requires detections_path")
        if self.detector_backend == "onnx" and not self.model_path:
            raise ConfigError("detector_backend 'onnx' requires model_path")
        if self.vlm_mode == "mock" and not self.vlm_script_path:
            raise ConfigError("vlm_mode 'mock' requires vlm_script_path")
        for name in ("detections_path", "model_path", "sidecar_path", "vlm_script_path", "template_dir"):
            value = getattr(self, name)
            if value and not Path(value).exists():
                raise ConfigError(f"{name} does not exist: {value}")
        Path(self.store_dir).mkdir(parents=True, exist_ok=True)
        return self


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(name: str, raw: str, target_type: type):
    if target_type is bool:
        lowered = raw.strip().lower()
        if lowered in _BOOL_TRUE:
            return True
        if lowered in _BOOL_FALSE:
            return False
        raise ConfigError(f"{name}: cannot parse {raw!r} as bool")
    try:
        return target_type(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {target_type.__name__}") from exc


_FIELD_TYPES = {
    "listen_port": int,
    "scene_block_every_turn": bool,
    "conf_threshold": float,
    "nms_threshold": float,
    "max_image_bytes": int,
    "max_sessions": int,
    "request_timeout_s": float,
    "retry_budget": int,
}


def load_config(
    path: str | Path | None = None,
    env: Mapping[str, str] = os.environ,
) -> ServiceConfig:
    """Build the config from an optional TOML file, then apply env overrides."""
    values: dict = {}
    known = {f.name for f in fields(ServiceConfig)}
    if path is not None:
        try:
            doc = tomllib.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(doc)
    for name in known:
        env_key = ENV_PREFIX + name.upper()
        if env_key in env:
            raw = env[env_key]
            target = _FIELD_TYPES.get(name, str)
            values[name] = _coerce(name, raw, target)
    try:
        config = ServiceConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return config.validate()
