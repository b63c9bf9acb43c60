"""Training loop: seeded, resumable, with per-step JSON-lines logging.

Randomness is organized as step-indexed streams: parameter init draws from
``default_rng([seed, 0])`` and each epoch's shuffle/flip decisions from
``default_rng([seed, 1, epoch])``, so a run resumed from a checkpoint at any
epoch boundary continues bit-identically to an uninterrupted run.

Ablation modes select which loss terms train the shared network:
  A  semantic stream only (no boundary stream in the model)
  B  boundary stream features fused in, but no boundary supervision
  C  B plus the boundary BCE
  D  C plus the dual-task consistency losses
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .boundary import LabelMap, binary_boundary_label, semantic_boundary_label
from .checkpoint import load_checkpoint, save_checkpoint
from .config import save_run_config
from .errors import ConfigurationError
from .losses import LossWeights, one_hot, total_loss
from .metrics import biou_counts, biou_from_counts, confusion_matrix, iou_from_confusion
from .model import ModelConfig, ModelParams, backward, forward
from .optim import AdamW
from .synth import SceneSpec, generate_dataset, load_dataset

ABLATION_TERMS = {
    "A": ("fused",),
    "B": ("aux", "fused"),
    "C": ("aux", "fused", "bce"),
    "D": ("aux", "fused", "bce", "s2b", "b2s"),
}


@dataclass
class TrainResult:
    checkpoint_dir: str
    log_path: str
    history: list
    final_val: dict


def model_config_from_run(cfg: dict) -> ModelConfig:
    m = cfg["model"]
    return ModelConfig(
        num_classes=m["num_classes"],
        stem_channels=m["stem_channels"],
        stage_channels=tuple(m["stage_channels"]),
        fusion_channels=m["fusion_channels"],
        gn_groups=m["gn_groups"],
        attn_groups=m["attn_groups"],
        boundary_width=m["boundary_width"],
        converter_width=m["converter_width"],
        mlp_reduction=m["mlp_reduction"],
        fusion=m["fusion"],
        with_boundary=cfg["train"]["ablation"] != "A",
    )


def scene_spec_from_run(cfg: dict) -> SceneSpec:
    d = cfg["data"]
    return SceneSpec(
        height=d["height"], width=d["width"], num_classes=d["num_classes"],
        shapes_min=d["shapes_min"], shapes_max=d["shapes_max"],
        shape_kinds=tuple(d["shape_kinds"]), base_colors=d["base_colors"],
        noise_sigma=d["noise_sigma"], gradient_amplitude=d["gradient_amplitude"],
    )


def build_datasets(cfg: dict):
    """(train_set, val_set) from the data section: generated or loaded."""
    d = cfg["data"]
    if d["path"]:
        root = Path(d["path"])
        if (root / "manifest.json").exists():
            train_set, _ = load_dataset(root)
            val_set = []
        elif (root / "train" / "manifest.json").exists():
            train_set, _ = load_dataset(root / "train")
            val_set = []
            if (root / "val" / "manifest.json").exists():
                val_set, _ = load_dataset(root / "val")
        else:
            raise ConfigurationError(f"no dataset manifest under '{root}'")
        return train_set, val_set
    spec = scene_spec_from_run(cfg)
    train_set, _ = generate_dataset(spec, d["train_count"], d["seed"])
    val_set, _ = generate_dataset(spec, d["val_count"], d["seed"] + d["train_count"])
    return train_set, val_set


def _flip_sample(image, target, b_hat, b_sem):
    flip = lambda a, ax: np.ascontiguousarray(np.flip(a, axis=ax))
    return flip(image, 2), flip(target, 2), flip(b_hat, 1), flip(b_sem, 2)


def _prepare_targets(dataset, radius):
    prepared = []
    for image, lm in dataset:
        prepared.append((
            image,
            one_hot(lm.labels, lm.num_classes),
            binary_boundary_label(lm, radius),
            semantic_boundary_label(lm, radius),
        ))
    return prepared


def predict_labels(image, params, config) -> LabelMap:
    pred, _ = forward(image, params, config)
    return LabelMap(pred.s_f.argmax(axis=0), num_classes=config.num_classes)


def validate(params, config, val_set, biou_threshold=3):
    """Dataset-level mIoU and mean BIoU of the fused prediction."""
    n = config.num_classes
    cm = np.zeros((n, n), dtype=np.int64)
    bc = np.zeros((n, 4), dtype=np.int64)
    equal = np.ones(n, dtype=bool)
    for image, gt in val_set:
        pred = predict_labels(image, params, config)
        cm += confusion_matrix(pred, gt)
        bc += biou_counts(pred, gt, biou_threshold)
        for k in range(n):
            if not np.array_equal(pred.labels == k, gt.labels == k):
                equal[k] = False
    _, mean_iou = iou_from_confusion(cm)
    _, mean_biou = biou_from_counts(bc, equal)
    return {"miou": mean_iou, "biou": mean_biou}


def train(cfg: dict, out_dir, train_set=None, val_set=None, resume=False,
          stop_after=None, log_stdout=False) -> TrainResult:
    """Run the configured training; writes checkpoint, config copy, and log.

    ``stop_after`` ends the session after that many epochs while keeping the
    full schedule from the config, emulating an interrupted run that a later
    ``resume=True`` call continues bit-identically.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_run_config(out / "run_config.json", cfg)

    if train_set is None:
        train_set, generated_val = build_datasets(cfg)
        if val_set is None:
            val_set = generated_val
    val_set = val_set or []
    if not train_set:
        raise ConfigurationError("empty training dataset")

    tc = cfg["train"]
    seed = tc["seed"]
    mconfig = model_config_from_run(cfg)
    weights = LossWeights(lambda1=cfg["loss"]["lambda1"],
                          lambda2=cfg["loss"]["lambda2"],
                          epsilon=cfg["loss"]["epsilon"])
    radius = cfg["loss"]["radius"]
    include = ABLATION_TERMS[tc["ablation"]]

    params = ModelParams(mconfig, rng=np.random.default_rng([seed, 0]))
    optimizer = AdamW(params.named_parameters(), lr=tc["lr"], beta1=tc["beta1"],
                      beta2=tc["beta2"], eps=tc["eps"],
                      weight_decay=tc["weight_decay"])
    ckpt_dir = out / "checkpoint"
    start_epoch = 0
    if resume:
        loaded, loaded_cfg, opt_state, meta = load_checkpoint(ckpt_dir)
        if loaded_cfg.to_json() != mconfig.to_json():
            raise ConfigurationError("checkpoint model config does not match run config")
        for (_, p), (_, q) in zip(params.named_parameters(), loaded.named_parameters()):
            p.value[:] = q.value
        if opt_state is not None:
            optimizer.load_state_arrays(opt_state)
        start_epoch = int(meta.get("epoch", -1)) + 1

    data = _prepare_targets(train_set, radius)
    n_samples = len(data)
    batch_size = max(1, min(tc["batch_size"], n_samples))
    steps_per_epoch = math.ceil(n_samples / batch_size)
    total_steps = tc["epochs"] * steps_per_epoch
    global_step = start_epoch * steps_per_epoch

    log_path = out / "train_log.jsonl"
    history = []
    with open(log_path, "a" if resume else "w") as log:
        def emit(record):
            log.write(json.dumps(record, sort_keys=True) + "\n")
            if log_stdout:
                print(json.dumps(record, sort_keys=True))

        if resume:
            emit({"type": "resume", "epoch": start_epoch})
        end_epoch = tc["epochs"] if stop_after is None else min(stop_after, tc["epochs"])
        for epoch in range(start_epoch, end_epoch):
            rng_e = np.random.default_rng([seed, 1, epoch])
            order = rng_e.permutation(n_samples)
            flips = rng_e.random(n_samples) < 0.5 if tc["hflip"] else np.zeros(n_samples, bool)
            for lo in range(0, n_samples, batch_size):
                batch = order[lo : lo + batch_size]
                params.zero_grad()
                acc = {"l_ce_aux": 0.0, "l_ce_fused": 0.0, "l_bce_boundary": 0.0,
                       "l_s2b": 0.0, "l_b2s": 0.0, "total": 0.0,
                       "selected_pixel_count": 0}
                for idx in batch:
                    image, target, b_hat, b_sem = data[idx]
                    if flips[idx]:
                        image, target, b_hat, b_sem = _flip_sample(image, target, b_hat, b_sem)
                    pred, cache = forward(image, params, mconfig)
                    report, grads = total_loss(pred, target, b_hat, b_sem,
                                               weights, radius, include=include)
                    scale = 1.0 / len(batch)
                    grads = {k: g * scale for k, g in grads.items()}
                    backward(grads, cache, params, mconfig)
                    for key in acc:
                        acc[key] += getattr(report, key)
                for key in ("l_ce_aux", "l_ce_fused", "l_bce_boundary",
                            "l_s2b", "l_b2s", "total"):
                    acc[key] /= len(batch)
                if tc["cosine_decay"]:
                    lr_t = tc["lr"] * 0.5 * (1.0 + math.cos(math.pi * global_step / max(1, total_steps)))
                else:
                    lr_t = tc["lr"]
                optimizer.step(lr=lr_t)
                global_step += 1
                emit({"type": "train", "epoch": epoch, "step": global_step,
                      "lr": lr_t, **acc})
            record = {"type": "val", "epoch": epoch, "step": global_step}
            if val_set and ((epoch + 1) % tc["val_every"] == 0 or epoch == tc["epochs"] - 1):
                record.update(validate(params, mconfig, val_set))
                history.append(record)
            emit(record)
            save_checkpoint(ckpt_dir, params, optimizer=optimizer,
                            meta={"epoch": epoch, "global_step": global_step,
                                  "seed": seed, "ablation": tc["ablation"]})
    final_val = history[-1] if history else {}
    return TrainResult(str(ckpt_dir), str(log_path), history, final_val)
