"""Run configuration: a YAML document with one section per stage.

Example::

    augment:
      speed_factors: [0.5, 1.0, 2.0]
      flip: true
      root_rotation_samples: 2
      seed: 7
    vae:
      window: 30
      latent_dim: 32
      epochs: 200
    window:
      width: 90
      stride: 90
    smoothing:
      ratio: 0.5
    evaluate:
      skeleton: null
      per_frame: false

Every section and key is optional; unknown ones are rejected and values are
type-checked on load.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import yaml

from .augmentation import AugmentConfig
from .motion_vae import VaeConfig
from .smoothing import DEFAULT_WINDOW, WindowSpec


class ConfigError(ValueError):
    pass


_AUGMENT = {"speed_factors": "floats", "flip": bool, "root_rotation_samples": int, "seed": int}
_VAE = {
    "window": int, "input_dim": int, "latent_dim": int, "encoder_hidden": int, "decoder_hidden": int,
    "mlp_hidden": "ints", "kl_weight": float, "learning_rate": float, "lr_final_ratio": float,
    "grad_clip": float, "epochs": int, "batch_size": int, "rng_seed": int,
}
_WINDOW = {"width": int, "stride": int}
_SMOOTHING = {"ratio": float}
_EVALUATE = {"skeleton": "path", "per_frame": bool}
_SECTIONS = {"augment": _AUGMENT, "vae": _VAE, "window": _WINDOW, "smoothing": _SMOOTHING, "evaluate": _EVALUATE}


@dataclass
class RunConfig:
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    vae: VaeConfig = field(default_factory=VaeConfig)
    window: WindowSpec = field(default_factory=lambda: WindowSpec(DEFAULT_WINDOW))
    smoothing_ratio: float = 0.5
    skeleton: Optional[str] = None
    per_frame: bool = False


def _check(section: str, key: str, value, kind):
    where = f"{section}.{key}"
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
    elif kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
    elif kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        value = float(value)
    elif kind in ("floats", "ints"):
        elem = float if kind == "floats" else int
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        value = [_check(section, f"{key}[{i}]", v, elem) for i, v in enumerate(value)]
    elif kind == "path":
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"{where}: expected a path string or null, got {value!r}")
    return value


def parse_config(doc) -> RunConfig:
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    clean = {}
    for section, body in doc.items():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section {section!r}")
        if body is None:
            body = {}
        if not isinstance(body, dict):
            raise ConfigError(f"{section}: expected a mapping")
        schema = _SECTIONS[section]
        for key, value in body.items():
            if key not in schema:
                raise ConfigError(f"{section}.{key}: unknown key")
        clean[section] = {k: _check(section, k, v, schema[k]) for k, v in body.items()}

    cfg = RunConfig()
    try:
        aug = clean.get("augment", {})
        cfg.augment = AugmentConfig(
            speed_factors=aug.get("speed_factors", []),
            enable_flip=aug.get("flip", False),
            root_rotation_samples=aug.get("root_rotation_samples", 0),
            rng_seed=aug.get("seed", 0),
        )
        cfg.vae = VaeConfig(**clean.get("vae", {}))
        win = clean.get("window", {})
        cfg.window = WindowSpec(win.get("width", DEFAULT_WINDOW), win.get("stride", 0))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    ratio = clean.get("smoothing", {}).get("ratio", 0.5)
    if not 0.0 <= ratio <= 1.0:
        raise ConfigError(f"smoothing.ratio: must be in [0, 1], got {ratio}")
    cfg.smoothing_ratio = ratio
    ev = clean.get("evaluate", {})
    cfg.skeleton = ev.get("skeleton")
    cfg.per_frame = ev.get("per_frame", False)
    return cfg


def load_config(path) -> RunConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        return parse_config(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def vae_field_names() -> list:
    return [f.name for f in fields(VaeConfig)]
