"""Checkpoints: a directory of MST1 tensors plus a JSON manifest.

The manifest lists every parameter name, shape, and file, the model config,
optional optimizer state files, and free-form metadata. Loading rebuilds the
parameter structure from the config and validates every shape.
"""

from __future__ import annotations

import json
import shutil
from pathlib import Path

import numpy as np

from .errors import ContractViolation
from .model import ModelConfig, ModelParams
from .tensor import load_tensor, save_tensor

CHECKPOINT_FORMAT = "dualseg-checkpoint-v1"


def save_checkpoint(path, params: ModelParams, optimizer=None, meta=None) -> None:
    root = Path(path)
    if root.exists():
        shutil.rmtree(root)
    (root / "params").mkdir(parents=True)
    entries = []
    for i, (name, p) in enumerate(params.named_parameters()):
        rel = f"params/p{i:04d}.mst1"
        save_tensor(root / rel, p.value)
        entries.append({"name": name, "shape": list(p.value.shape), "file": rel})
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "model_config": params.config.to_json(),
        "params": entries,
        "meta": meta or {},
        "optimizer": None,
    }
    if optimizer is not None:
        (root / "optim").mkdir()
        opt_entries = []
        for i, (key, arr) in enumerate(sorted(optimizer.state_arrays().items())):
            rel = f"optim/o{i:04d}.mst1"
            save_tensor(root / rel, arr)
            opt_entries.append({"key": key, "file": rel})
        manifest["optimizer"] = opt_entries
    with open(root / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_checkpoint(path):
    """Returns (params, config, optimizer_state_or_None, meta)."""
    root = Path(path)
    with open(root / "manifest.json") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ContractViolation(f"unknown checkpoint format {manifest.get('format')!r}")
    config = ModelConfig.from_json(manifest["model_config"])
    params = ModelParams(config, rng=np.random.default_rng(0))
    named = dict(params.named_parameters())
    listed = {e["name"] for e in manifest["params"]}
    if listed != set(named):
        missing = sorted(set(named) - listed)
        extra = sorted(listed - set(named))
        raise ContractViolation(f"parameter set mismatch: missing={missing} extra={extra}")
    for entry in manifest["params"]:
        value = load_tensor(root / entry["file"])
        p = named[entry["name"]]
        if tuple(value.shape) != p.value.shape or list(value.shape) != entry["shape"]:
            raise ContractViolation(
                f"shape mismatch for '{entry['name']}': file {value.shape}, "
                f"expected {p.value.shape}"
            )
        p.value[:] = value
    opt_state = None
    if manifest.get("optimizer"):
        opt_state = {e["key"]: load_tensor(root / e["file"]) for e in manifest["optimizer"]}
    return params, config, opt_state, manifest.get("meta", {})
