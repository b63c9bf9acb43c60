"""Boundary labels from category maps, and a differentiable pseudo-boundary.

A pixel is a boundary pixel when some neighbor within Manhattan distance r
(the diamond neighborhood) carries a different label. The semantic variant
marks both categories involved in each transition, so that the pseudo
boundary extracted from a one-hot prediction reproduces the label exactly.
Out-of-bounds neighbors are skipped rather than zero-padded; zero padding
would turn every image border into boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractViolation


@dataclass
class LabelMap:
    """H x W integer category map with ids in [0, num_classes)."""

    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.labels = np.ascontiguousarray(self.labels)
        if self.labels.ndim != 2 or self.labels.size == 0:
            raise ContractViolation(f"labels must be a non-empty 2-D array, got shape {self.labels.shape}")
        if not np.issubdtype(self.labels.dtype, np.integer):
            self.labels = self.labels.astype(np.int64)
        if self.num_classes < 1:
            raise ConfigurationError(f"num_classes must be positive, got {self.num_classes}")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ContractViolation(
                f"label ids must lie in [0, {self.num_classes}), found "
                f"[{self.labels.min()}, {self.labels.max()}]"
            )

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


@dataclass
class DiamondTemplate:
    """Offsets with Manhattan norm in [1, radius], in row-major scan order."""

    radius: int
    offsets: list = field(default_factory=list)


def diamond_offsets(r: int) -> DiamondTemplate:
    if r < 1:
        raise ConfigurationError(f"search radius must be >= 1, got {r}")
    offs = [
        (dy, dx)
        for dy in range(-r, r + 1)
        for dx in range(-r, r + 1)
        if 1 <= abs(dy) + abs(dx) <= r
    ]
    return DiamondTemplate(radius=r, offsets=offs)


def _overlap(h, w, dy, dx):
    """Center-pixel slice for which the (dy, dx) neighbor is in bounds."""
    y0, y1 = max(0, -dy), min(h, h - dy)
    x0, x1 = max(0, -dx), min(w, w - dx)
    return y0, y1, x0, x1


def binary_boundary_label(lm: LabelMap, r: int) -> np.ndarray:
    """1.0 where any in-bounds diamond neighbor has a different label."""
    labels = lm.labels
    h, w = labels.shape
    out = np.zeros((h, w), dtype=bool)
    for dy, dx in diamond_offsets(r).offsets:
        y0, y1, x0, x1 = _overlap(h, w, dy, dx)
        if y0 >= y1 or x0 >= x1:
            continue
        out[y0:y1, x0:x1] |= labels[y0:y1, x0:x1] != labels[y0 + dy : y1 + dy, x0 + dx : x1 + dx]
    return out.astype(np.float64)


def semantic_boundary_label(lm: LabelMap, r: int) -> np.ndarray:
    """(N,H,W) mask; channel k marks pixels at a transition involving class k.

    Two-sided: for a neighbor pair with labels (a, b), a != b, both channel a
    and channel b are set at the center pixel.
    """
    labels = lm.labels
    h, w = labels.shape
    out = np.zeros((lm.num_classes, h, w), dtype=bool)
    for dy, dx in diamond_offsets(r).offsets:
        y0, y1, x0, x1 = _overlap(h, w, dy, dx)
        if y0 >= y1 or x0 >= x1:
            continue
        center = labels[y0:y1, x0:x1]
        neigh = labels[y0 + dy : y1 + dy, x0 + dx : x1 + dx]
        ys, xs = np.nonzero(center != neigh)
        if ys.size == 0:
            continue
        gy, gx = ys + y0, xs + x0
        out[center[ys, xs], gy, gx] = True
        out[neigh[ys, xs], gy, gx] = True
    return out.astype(np.float64)


def pseudo_semantic_boundary(s_f: np.ndarray, r: int):
    """Per-category max absolute center-vs-neighbor difference of a soft map.

    Returns ``(b_ps, cache)`` with b_ps shaped like ``s_f``; the paired
    backward routes the upstream gradient to the achieving (neighbor, center)
    pair with +/-1 signs. Ties go to the first offset in row-major template
    order. On a one-hot map this reproduces ``semantic_boundary_label``.
    """
    if s_f.ndim != 3 or s_f.size == 0:
        raise ContractViolation(f"expected non-empty (N,H,W) tensor, got shape {s_f.shape}")
    n, h, w = s_f.shape
    if h < 2 and w < 2:
        raise ContractViolation("map too small: every pixel needs an in-bounds neighbor")
    offsets = diamond_offsets(r).offsets
    # out-of-bounds slots stay at -1 so a valid offset (|diff| >= 0) always wins
    signed = np.zeros((len(offsets), n, h, w))
    mag = np.full((len(offsets), n, h, w), -1.0)
    for k, (dy, dx) in enumerate(offsets):
        y0, y1, x0, x1 = _overlap(h, w, dy, dx)
        if y0 >= y1 or x0 >= x1:
            continue
        diff = s_f[:, y0 + dy : y1 + dy, x0 + dx : x1 + dx] - s_f[:, y0:y1, x0:x1]
        signed[k, :, y0:y1, x0:x1] = diff
        mag[k, :, y0:y1, x0:x1] = np.abs(diff)
    winner = mag.argmax(axis=0)
    b_ps = np.take_along_axis(mag, winner[None], axis=0)[0]
    cache = (winner, signed, offsets, s_f.shape)
    return b_ps, cache


def pseudo_semantic_boundary_backward(gy, cache):
    winner, signed, offsets, shape = cache
    g = np.zeros(shape)
    for k, (dy, dx) in enumerate(offsets):
        ns, ys, xs = np.nonzero(winner == k)
        if ns.size == 0:
            continue
        sgn = np.where(signed[k, ns, ys, xs] >= 0.0, 1.0, -1.0)
        flow = gy[ns, ys, xs] * sgn
        np.add.at(g, (ns, ys + dy, xs + dx), flow)
        np.add.at(g, (ns, ys, xs), -flow)
    return g
