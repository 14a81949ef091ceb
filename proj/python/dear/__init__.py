"""Depth-aware video action recognition on a frozen backbone.

Configs are flat dicts with the same keys as the JSON files the ``dear``
command-line tool reads; omitted keys take their defaults.
"""

import json as _json

from . import _core
from ._core import (
    ContractError,
    FormatError,
    IoError,
    NumericError,
    ShapeError,
    selective_scan,
    standard_classes,
)

__all__ = [
    "ContractError",
    "FormatError",
    "IoError",
    "NumericError",
    "ShapeError",
    "ablate",
    "evaluate",
    "generate",
    "generate_clip",
    "model_summary",
    "predict_clip",
    "resolve_config",
    "selective_scan",
    "standard_classes",
    "train",
]


def _text(config):
    if config is None:
        return "{}"
    if isinstance(config, str):
        return config
    return _json.dumps(config)


def resolve_config(config=None):
    """Validated config with derived fields filled in, as a dict."""
    return _json.loads(_core.resolve_config(_text(config)))


def generate_clip(class_id, seed, config=None, sampled=True):
    """One procedural clip as numpy arrays ``rgb`` (T,H,W,3) and ``depth`` (T,H,W)."""
    return _core.generate_clip(class_id, seed, _text(config), sampled)


def model_summary(config=None):
    return _core.model_summary(_text(config))


def predict_clip(class_id, seed, config=None):
    return _core.predict_clip(class_id, seed, _text(config))


def generate(config, out):
    return _core.generate(_text(config), str(out))


def train(config, out):
    """Trains one model; returns per-epoch metrics and writes a checkpoint to ``out``."""
    return _core.train(_text(config), str(out))


def evaluate(config, out, checkpoint, manifest="", depth_mode="", split="val"):
    return _core.evaluate(_text(config), str(out), str(checkpoint), str(manifest), depth_mode, split)


def ablate(config, out):
    """Trains all three modes on shared features; returns final val top-1 per mode."""
    return _core.ablate(_text(config), str(out))
