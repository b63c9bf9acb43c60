"""Deterministic synthetic scenes: colored shapes on a gradient background.

Each sample paints random z-ordered shapes over a background; the label map
records the topmost class per pixel. Pixel color is the class base color
plus a linear illumination gradient plus Gaussian noise, so classes are
separable by appearance while boundaries stay localized. Everything is a
pure function of (spec, seed).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .boundary import LabelMap
from .errors import ConfigurationError, ContractViolation
from .imgio import read_pgm, write_pgm
from .tensor import load_tensor, save_tensor

_PALETTE = [
    (0.25, 0.25, 0.28),
    (0.80, 0.35, 0.30),
    (0.32, 0.75, 0.38),
    (0.35, 0.42, 0.85),
    (0.82, 0.78, 0.30),
    (0.75, 0.35, 0.78),
    (0.30, 0.75, 0.78),
    (0.55, 0.45, 0.25),
    (0.68, 0.66, 0.70),
    (0.45, 0.25, 0.60),
]

MAX_SHAPE_RETRIES = 30


@dataclass
class SceneSpec:
    height: int = 64
    width: int = 64
    num_classes: int = 4
    shapes_min: int = 3
    shapes_max: int = 6
    shape_kinds: tuple = ("rectangle", "ellipse", "triangle")
    base_colors: list = None
    noise_sigma: float = 0.05
    gradient_amplitude: float = 0.2

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigurationError(f"need >= 2 classes, got {self.num_classes}")
        if self.base_colors is None:
            if self.num_classes > len(_PALETTE):
                raise ConfigurationError(
                    f"default palette has {len(_PALETTE)} colors, need {self.num_classes}"
                )
            self.base_colors = [list(c) for c in _PALETTE[: self.num_classes]]
        if len(self.base_colors) != self.num_classes:
            raise ConfigurationError(
                f"{len(self.base_colors)} colors for {self.num_classes} classes"
            )
        colors = np.asarray(self.base_colors, dtype=float)
        for i in range(len(colors)):
            for j in range(i + 1, len(colors)):
                sep = float(np.linalg.norm(colors[i] - colors[j]))
                if sep < 0.2:
                    raise ConfigurationError(
                        f"base colors {i} and {j} too close (L2 {sep:.3f} < 0.2)"
                    )
        if not (0 < self.shapes_min <= self.shapes_max):
            raise ConfigurationError(
                f"bad shape count range [{self.shapes_min}, {self.shapes_max}]"
            )
        unknown = set(self.shape_kinds) - {"rectangle", "ellipse", "triangle"}
        if unknown:
            raise ConfigurationError(f"unknown shape kinds: {sorted(unknown)}")

    def to_json(self) -> dict:
        d = asdict(self)
        d["shape_kinds"] = list(self.shape_kinds)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        if "shape_kinds" in d:
            d["shape_kinds"] = tuple(d["shape_kinds"])
        return cls(**d)


def _rasterize(kind, rng, h, w):
    scale = min(h, w)
    yy, xx = np.mgrid[0:h, 0:w]
    if kind == "rectangle":
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        hy, hx = rng.uniform(0.08, 0.20, size=2) * scale
        return (np.abs(yy - cy) <= hy) & (np.abs(xx - cx) <= hx)
    if kind == "ellipse":
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        ry, rx = rng.uniform(0.08, 0.20, size=2) * scale
        return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    # triangle: three vertices around a random center
    cy, cx = rng.uniform(0, h), rng.uniform(0, w)
    ext = rng.uniform(0.10, 0.25) * scale
    vy = cy + rng.uniform(-ext, ext, size=3)
    vx = cx + rng.uniform(-ext, ext, size=3)
    mask = np.ones((h, w), dtype=bool)
    for i in range(3):
        ay, ax = vy[i], vx[i]
        by, bx = vy[(i + 1) % 3], vx[(i + 1) % 3]
        oy, ox = vy[(i + 2) % 3], vx[(i + 2) % 3]
        edge = (bx - ax) * (yy - ay) - (by - ay) * (xx - ax)
        side = (bx - ax) * (oy - ay) - (by - ay) * (ox - ax)
        if side == 0.0:
            return np.zeros((h, w), dtype=bool)  # collinear: degenerate
        mask &= (edge * side) >= 0.0
    return mask


def generate_sample(spec: SceneSpec, seed: int):
    """One (image, LabelMap) pair, fully determined by (spec, seed)."""
    rng = np.random.default_rng(seed)
    h, w, n = spec.height, spec.width, spec.num_classes
    labels = np.zeros((h, w), dtype=np.int64)

    n_shapes = int(rng.integers(spec.shapes_min, spec.shapes_max + 1))
    classes = rng.integers(1, n, size=n_shapes)
    if n_shapes >= n - 1:
        # topmost shapes get distinct classes so every class tends to survive
        classes[n_shapes - (n - 1):] = 1 + rng.permutation(n - 1)
    for cls in classes:
        for attempt in range(MAX_SHAPE_RETRIES + 1):
            kind = spec.shape_kinds[int(rng.integers(len(spec.shape_kinds)))]
            mask = _rasterize(kind, rng, h, w)
            if mask.any():
                break
        else:
            raise ContractViolation(
                f"no non-degenerate shape after {MAX_SHAPE_RETRIES} retries"
            )
        labels[mask] = cls

    colors = np.asarray(spec.base_colors)  # (N, 3)
    image = colors[labels].transpose(2, 0, 1).copy()  # (3, H, W)
    theta = rng.uniform(0.0, 2.0 * np.pi)
    yy = np.linspace(0.0, 1.0, h)[:, None] - 0.5
    xx = np.linspace(0.0, 1.0, w)[None, :] - 0.5
    gradient = spec.gradient_amplitude * (np.cos(theta) * xx + np.sin(theta) * yy)
    image += gradient[None]
    if spec.noise_sigma > 0:
        image += rng.normal(0.0, spec.noise_sigma, size=image.shape)
    np.clip(image, 0.0, 1.0, out=image)
    return image, LabelMap(labels, num_classes=n)


def generate_dataset(spec: SceneSpec, count: int, seed: int):
    """``count`` samples with per-index seeds ``seed + i``; returns (samples, manifest)."""
    if count < 1:
        raise ConfigurationError(f"count must be >= 1, got {count}")
    samples = [generate_sample(spec, seed + i) for i in range(count)]
    manifest = {
        "spec": spec.to_json(),
        "count": count,
        "seed": seed,
        "sample_seeds": [seed + i for i in range(count)],
    }
    return samples, manifest


def write_dataset(out_dir, spec: SceneSpec, count: int, seed: int) -> dict:
    """Generate and persist: images as MST1, labels as PGM, manifest as JSON."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    samples, manifest = generate_dataset(spec, count, seed)
    entries = []
    for i, (image, lm) in enumerate(samples):
        img_rel = f"images/img_{i:05d}.mst1"
        lab_rel = f"labels/lab_{i:05d}.pgm"
        save_tensor(out / img_rel, image)
        write_pgm(out / lab_rel, lm.labels)
        entries.append({"image": img_rel, "labels": lab_rel, "seed": seed + i})
    manifest["samples"] = entries
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def load_dataset(path):
    """Read a dataset directory back into (image, LabelMap) pairs."""
    root = Path(path)
    with open(root / "manifest.json") as fh:
        manifest = json.load(fh)
    spec = SceneSpec.from_json(manifest["spec"])
    samples = []
    for entry in manifest["samples"]:
        image = load_tensor(root / entry["image"])
        labels = read_pgm(root / entry["labels"]).astype(np.int64)
        samples.append((image, LabelMap(labels, num_classes=spec.num_classes)))
    return samples, spec
