"""Flat key-value config files with defaults <- file <- flag precedence."""

from __future__ import annotations

import os
from pathlib import Path

from .errors import ConfigError

DEFAULTS: dict = {
    "backend.kind": "toy",
    "backend.toy_seed": 0,
    "backend.identity.path": "",
    "backend.pose.path": "",
    "backend.landmark.path": "",
    "backend.generator.path": "",
    "backend.cartooniser.path": "",
    "backend.identity.dim": 512,
    "backend.pose.dim": 4096,
    "resolution": 256,
    "learning_rate": 5e-5,
    "pose_lr_mult": 1.0,
    "batch_size": 8,
    "max_iterations": 100,
    "recon_period": 3,
    "seed": 0,
    "adversarial": False,
    "lnd_dropout_after": None,
    "checkpoint_every": 50,
    "lambda_id": 1.0,
    "lambda_lnd": 1.0,
    "lambda_rec": 0.001,
    "alpha": 0.84,
    "lambda_adv": 0.0,
    "gamma_r1": 10.0,
    "rec_target": "cartoonised_input",  # or raw_input
    "mapper.hidden": "2048,1024,1024,512",
    "mapper.normalize_blocks": False,
    "landmark_norm": "flat_l2",  # or per_point
}

ENV_BACKEND_VAR = "CARTOONFORGE_BACKEND"


def _coerce(key: str, raw: str):
    default = DEFAULTS[key]
    text = raw.strip()
    if default is None or isinstance(default, str):
        if text.lower() in ("none", ""):
            return None if default is None else ""
        if key == "lnd_dropout_after":
            return int(text)
        return text
    if isinstance(default, bool):
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"cannot parse boolean for {key!r}: {raw!r}")
    try:
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"cannot parse value for {key!r}: {raw!r}") from exc
    raise ConfigError(f"unsupported config key type for {key!r}")


def parse_config_file(path: Path) -> dict:
    """Parse `key = value` lines; '#' starts a comment; unknown keys rejected."""
    if not Path(path).exists():
        raise ConfigError(f"config file not found: {path}")
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line.rstrip()!r}")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            if key not in DEFAULTS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _coerce(key, raw)
    return values


def run_config(path: Path | None = None, overrides: dict | None = None) -> dict:
    """Merged config: defaults, then file values, then explicit overrides.

    The CARTOONFORGE_BACKEND environment variable, when set, overrides
    backend.kind last.
    """
    merged = dict(DEFAULTS)
    if path is not None:
        merged.update(parse_config_file(path))
    for key, value in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        if value is not None:
            merged[key] = value
    env_backend = os.environ.get(ENV_BACKEND_VAR)
    if env_backend:
        merged["backend.kind"] = env_backend
    return merged


def mapper_hidden_layers(config: dict) -> tuple[int, ...]:
    spec = str(config["mapper.hidden"]).strip()
    try:
        return tuple(int(part) for part in spec.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"bad mapper.hidden value {spec!r}") from exc


def write_config_echo(config: dict, path: Path):
    with open(path, "w") as fh:
        for key in sorted(config):
            fh.write(f"{key} = {config[key]}\n")
