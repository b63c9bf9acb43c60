"""Run configuration: one JSON document drives data, model, training, eval.

Unknown keys are rejected and every default is materialized, so the copy
persisted next to a run's outputs reproduces it exactly.
"""

from __future__ import annotations

import copy
import json

from .errors import ConfigurationError

ABLATIONS = ("A", "B", "C", "D")

DEFAULT_RUN_CONFIG = {
    "model": {
        "num_classes": None,  # filled from data.num_classes when omitted
        "stem_channels": 8,
        "stage_channels": [16, 24, 32, 48],
        "fusion_channels": 48,
        "gn_groups": 4,
        "attn_groups": 4,
        "boundary_width": 32,
        "converter_width": 16,
        "mlp_reduction": 4,
        "fusion": "afd",
    },
    "train": {
        "epochs": 15,
        "batch_size": 8,
        "lr": 1e-3,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "weight_decay": 1e-4,
        "seed": 0,
        "ablation": "D",
        "cosine_decay": True,
        "hflip": True,
        "val_every": 1,
    },
    "data": {
        "path": None,  # load an existing dataset instead of generating one
        "seed": 0,
        "train_count": 200,
        "val_count": 50,
        "height": 64,
        "width": 64,
        "num_classes": 4,
        "shapes_min": 3,
        "shapes_max": 6,
        "shape_kinds": ["rectangle", "ellipse", "triangle"],
        "base_colors": None,
        "noise_sigma": 0.05,
        "gradient_amplitude": 0.2,
    },
    "loss": {
        "lambda1": 1.0,
        "lambda2": 1.0,
        "epsilon": 0.8,
        "radius": 2,
    },
    "eval": {
        "thresholds": [3, 5, 9, 12],
    },
}


def _merge(defaults: dict, user: dict, path: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        if key not in defaults:
            raise ConfigurationError(f"unknown config key '{path}{key}'")
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            out[key] = _merge(defaults[key], value, f"{path}{key}.")
        else:
            out[key] = copy.deepcopy(value)
    return out


def materialize_run_config(user: dict | None = None) -> dict:
    """Merge over defaults, reject unknown keys, resolve derived fields."""
    cfg = _merge(DEFAULT_RUN_CONFIG, user or {}, "")
    if cfg["model"]["num_classes"] is None:
        cfg["model"]["num_classes"] = cfg["data"]["num_classes"]
    if cfg["train"]["ablation"] not in ABLATIONS:
        raise ConfigurationError(
            f"train.ablation must be one of {ABLATIONS}, got {cfg['train']['ablation']!r}"
        )
    return cfg


def load_run_config(path) -> dict:
    with open(path) as fh:
        try:
            user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"malformed JSON in '{path}': {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigurationError(f"config root must be an object in '{path}'")
    return materialize_run_config(user)


def save_run_config(path, cfg: dict) -> None:
    with open(path, "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
