"""Training objective: classification terms plus dual-task consistency.

All cross-entropy style terms are computed from logits with log-sum-exp
stabilization; the probability maps exposed to callers are derived views.
The semantic-to-boundary term compares a pseudo boundary extracted from the
soft prediction against the boundary label; the boundary-to-semantic term is
a cross-entropy restricted to pixels that are boundary in the ground truth
or confidently boundary in the prediction (the gate is non-differentiable:
no gradient flows into the boundary prediction through it).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .boundary import pseudo_semantic_boundary, pseudo_semantic_boundary_backward
from .errors import ConfigurationError, ContractViolation
from .ops import softmax, softmax_backward

ALL_TERMS = ("aux", "fused", "bce", "s2b", "b2s")


@dataclass
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 1.0
    epsilon: float = 0.8

    def __post_init__(self):
        if not (0.0 < self.epsilon < 1.0):
            raise ConfigurationError(f"epsilon must lie in (0,1), got {self.epsilon}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigurationError("loss weights must be nonnegative")


@dataclass
class LossReport:
    l_ce_aux: float
    l_ce_fused: float
    l_bce_boundary: float
    l_s2b: float
    l_b2s: float
    total: float
    selected_pixel_count: int

    def to_json(self) -> dict:
        return asdict(self)


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """(H,W) int labels -> (N,H,W) one-hot float map."""
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ContractViolation(
            f"label ids must lie in [0, {num_classes}), found "
            f"[{labels.min()}, {labels.max()}]"
        )
    h, w = labels.shape
    out = np.zeros((num_classes, h, w))
    out[labels, np.arange(h)[:, None], np.arange(w)[None, :]] = 1.0
    return out


def cross_entropy(logits: np.ndarray, target_one_hot: np.ndarray):
    """Mean per-pixel CE over (N,H,W) logits; returns (value, grad_wrt_logits)."""
    if logits.shape != target_one_hot.shape:
        raise ContractViolation(f"CE shapes differ: {logits.shape} vs {target_one_hot.shape}")
    n_px = logits.shape[1] * logits.shape[2]
    m = logits.max(axis=0, keepdims=True)
    lse = m[0] + np.log(np.exp(logits - m).sum(axis=0))
    value = float((lse - (logits * target_one_hot).sum(axis=0)).sum() / n_px)
    probs, _ = softmax(logits, axis=0)
    grad = (probs - target_one_hot) / n_px
    return value, grad


def binary_cross_entropy(logits: np.ndarray, target: np.ndarray):
    """Mean per-pixel BCE over (H,W) logits; returns (value, grad_wrt_logits)."""
    if logits.shape != target.shape:
        raise ContractViolation(f"BCE shapes differ: {logits.shape} vs {target.shape}")
    n_px = logits.size
    # softplus(z) - z*y, with softplus(z) = max(z,0) + log1p(exp(-|z|))
    softplus = np.maximum(logits, 0.0) + np.log1p(np.exp(-np.abs(logits)))
    value = float((softplus - logits * target).sum() / n_px)
    sig = np.empty_like(logits)
    pos = logits >= 0
    sig[pos] = 1.0 / (1.0 + np.exp(-logits[pos]))
    ex = np.exp(logits[~pos])
    sig[~pos] = ex / (1.0 + ex)
    grad = (sig - target) / n_px
    return value, grad


def l_cls(pred, target_one_hot, boundary_target, include=ALL_TERMS):
    """Classification stack: CE(aux), CE(fused), BCE(boundary).

    ``pred`` must expose ``s_logits``, ``sf_logits``, ``b_logits`` at label
    resolution. Returns (component dict, grads dict).
    """
    values = {"aux": 0.0, "fused": 0.0, "bce": 0.0}
    grads = {"s": np.zeros_like(pred.s_logits),
             "s_f": np.zeros_like(pred.sf_logits),
             "b": np.zeros_like(pred.b_logits)}
    if "aux" in include:
        values["aux"], grads["s"] = cross_entropy(pred.s_logits, target_one_hot)
    if "fused" in include:
        values["fused"], grads["s_f"] = cross_entropy(pred.sf_logits, target_one_hot)
    if "bce" in include:
        values["bce"], grads["b"] = binary_cross_entropy(pred.b_logits, boundary_target)
    return values, grads


def l_s2b(s_f: np.ndarray, semantic_boundary_target: np.ndarray, radius: int):
    """Mean absolute error between the pseudo boundary of the probability map
    ``s_f`` and the semantic boundary label; returns (value, grad_wrt_s_f).

    Zero exactly when the pseudo boundary reproduces the label, in particular
    at any one-hot prediction matching the ground-truth categories.
    """
    b_ps, cache = pseudo_semantic_boundary(s_f, radius)
    if b_ps.shape != semantic_boundary_target.shape:
        raise ContractViolation(
            f"boundary target shape {semantic_boundary_target.shape} != {b_ps.shape}"
        )
    diff = b_ps - semantic_boundary_target
    value = float(np.abs(diff).sum() / diff.size)
    g_bps = np.sign(diff) / diff.size
    return value, pseudo_semantic_boundary_backward(g_bps, cache)


def l_b2s(s_f: np.ndarray, target_one_hot: np.ndarray,
          boundary_prob: np.ndarray, boundary_target: np.ndarray, epsilon: float):
    """Boundary-gated CE on the probability map ``s_f``: pixels where
    boundary_prob > epsilon or the boundary label is 1, averaged over the
    selected set (0 when empty).

    Returns (value, grad_wrt_s_f, selected_pixel_count). The gate is a hard
    threshold: no gradient w.r.t. boundary_prob.
    """
    if s_f.shape != target_one_hot.shape:
        raise ContractViolation(f"shapes differ: {s_f.shape} vs {target_one_hot.shape}")
    mask = (boundary_prob > epsilon) | (boundary_target == 1.0)
    count = int(mask.sum())
    if count == 0:
        return 0.0, np.zeros_like(s_f), 0
    picked = (target_one_hot * s_f).sum(axis=0)  # probability of the true class
    value = float(-np.log(picked[mask]).sum() / count)
    denom = np.where(target_one_hot == 1.0, s_f, 1.0)  # safe divisor off the true class
    grad = np.where(mask[None] & (target_one_hot == 1.0), -1.0, 0.0) / (denom * count)
    return value, grad, count


def total_loss(pred, target_one_hot, boundary_target, semantic_boundary_target,
               weights: LossWeights, radius: int, include=ALL_TERMS):
    """Weighted objective; returns (LossReport, grads dict for the three logit maps)."""
    values, grads = l_cls(pred, target_one_hot, boundary_target, include)
    v_s2b, v_b2s, count = 0.0, 0.0, 0
    g_sf = weights.lambda1 * grads["s_f"]
    if "s2b" in include or "b2s" in include:
        probs, sm_cache = softmax(pred.sf_logits, axis=0)
        g_probs = np.zeros_like(probs)
        if "s2b" in include:
            v_s2b, g = l_s2b(probs, semantic_boundary_target, radius)
            g_probs += g
        if "b2s" in include:
            v_b2s, g, count = l_b2s(probs, target_one_hot, pred.b,
                                    boundary_target, weights.epsilon)
            g_probs += g
        g_sf = g_sf + weights.lambda2 * softmax_backward(g_probs, sm_cache)
    total = (
        weights.lambda1 * (values["aux"] + values["fused"] + values["bce"])
        + weights.lambda2 * (v_s2b + v_b2s)
    )
    grads["s"] = weights.lambda1 * grads["s"]
    grads["b"] = weights.lambda1 * grads["b"]
    grads["s_f"] = g_sf
    report = LossReport(values["aux"], values["fused"], values["bce"],
                        v_s2b, v_b2s, total, count)
    return report, grads
