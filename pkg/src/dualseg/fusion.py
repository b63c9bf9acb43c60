"""Input-conditioned channel fusion of semantic and boundary feature maps.

Each stream is squeezed to a channel descriptor by global average pooling and
a small MLP; the two descriptors are concatenated, chopped into groups, and
mixed by a tiny self-attention over channel slots. The resulting per-channel
weights drive a residual fusion: out = (1 + w_s) * F_s + (1 + w_b) * F_b.
With all internal weights at zero this degenerates exactly to F_s + F_b, so
plain addition is a strict special case of the learned fusion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .errors import ConfigurationError, ContractViolation
from .nn import Conv2d, Linear, Mlp


class AttentionFusionParams:
    """Weights of the fusion decoder plus its 1x1 classification head."""

    def __init__(self, channels, num_classes, attn_groups=4, mlp_reduction=4,
                 rng=None, name="fusion"):
        if (2 * channels) % attn_groups != 0:
            raise ConfigurationError(
                f"2*channels={2 * channels} not divisible by attn_groups={attn_groups}"
            )
        rng = rng or np.random.default_rng(0)
        self.channels = channels
        self.attn_groups = attn_groups
        hidden = max(1, channels // mlp_reduction)
        self.mlp_s = Mlp(channels, hidden, channels, rng=rng, name=f"{name}.mlp_s")
        self.mlp_b = Mlp(channels, hidden, channels, rng=rng, name=f"{name}.mlp_b")
        self.proj_q = Linear(attn_groups, attn_groups, rng=rng, name=f"{name}.proj_q")
        self.proj_k = Linear(attn_groups, attn_groups, rng=rng, name=f"{name}.proj_k")
        self.proj_v = Linear(attn_groups, attn_groups, rng=rng, name=f"{name}.proj_v")
        self.head = Conv2d(channels, num_classes, 1, rng=rng, name=f"{name}.head")

    def parameters(self):
        params = []
        for m in (self.mlp_s, self.mlp_b, self.proj_q, self.proj_k, self.proj_v, self.head):
            params.extend(m.parameters())
        return params

    def zero_all(self):
        """Zero every weight; used to exercise the additive degenerate case."""
        for p in self.parameters():
            p.value.fill(0.0)


@dataclass
class FusionState:
    """Forward intermediates retained for the hand-chained backward."""

    f_s_att: np.ndarray
    f_b_att: np.ndarray
    f_f_att: np.ndarray
    affinity: np.ndarray
    w_s: np.ndarray
    w_b: np.ndarray
    caches: tuple


def attention_vectors(f_s, f_b, params):
    """GAP each stream, then its own MLP: channel descriptors of both inputs."""
    if f_s.shape != f_b.shape:
        raise ContractViolation(f"stream shapes differ: {f_s.shape} vs {f_b.shape}")
    pooled_s, c_gap_s = ops.gap(f_s)
    pooled_b, c_gap_b = ops.gap(f_b)
    a_s, c_mlp_s = params.mlp_s.forward(pooled_s)
    a_b, c_mlp_b = params.mlp_b.forward(pooled_b)
    return a_s, a_b, (c_gap_s, c_gap_b, c_mlp_s, c_mlp_b)


def attention_vectors_backward(ga_s, ga_b, cache, params):
    c_gap_s, c_gap_b, c_mlp_s, c_mlp_b = cache
    gp_s = params.mlp_s.backward(ga_s, c_mlp_s)
    gp_b = params.mlp_b.backward(ga_b, c_mlp_b)
    return ops.gap_backward(gp_s, c_gap_s), ops.gap_backward(gp_b, c_gap_b)


def affinity_and_weights(f_f_att, params):
    """Group self-attention over channel slots -> per-channel fusion weights.

    The 2C descriptor is viewed as (slots, groups) = (2C/G, G) row-major;
    q/k/v projections act along the group axis and are shared across slots.
    The affinity matrix is a row-softmax of Q K^T / sqrt(G); its product with
    V, flattened, splits back into (w_s, w_b) by undoing the concatenation.
    """
    two_c = f_f_att.shape[0]
    g_h = params.attn_groups
    if two_c % g_h != 0:
        raise ConfigurationError(f"descriptor length {two_c} not divisible by {g_h} groups")
    slots = two_c // g_h
    x = f_f_att.reshape(slots, g_h)
    q = x @ params.proj_q.w.value.T + params.proj_q.b.value
    k = x @ params.proj_k.w.value.T + params.proj_k.b.value
    v = x @ params.proj_v.w.value.T + params.proj_v.b.value
    scale = 1.0 / np.sqrt(g_h)
    scores = (q @ k.T) * scale
    affinity, c_sm = ops.softmax(scores, axis=1)
    w_mat = affinity @ v
    w = w_mat.reshape(two_c)
    half = two_c // 2
    cache = (x, q, k, v, affinity, c_sm, scale)
    return w[:half].copy(), w[half:].copy(), affinity, cache


def affinity_and_weights_backward(gw_s, gw_b, cache, params):
    x, q, k, v, affinity, c_sm, scale = cache
    slots, g_h = x.shape
    gw = np.concatenate([gw_s, gw_b]).reshape(slots, g_h)
    g_aff = gw @ v.T
    gv = affinity.T @ gw
    g_scores = ops.softmax_backward(g_aff, c_sm)
    gq = (g_scores @ k) * scale
    gk = (g_scores.T @ q) * scale
    gx = gq @ params.proj_q.w.value + gk @ params.proj_k.w.value + gv @ params.proj_v.w.value
    params.proj_q.w.grad += gq.T @ x
    params.proj_q.b.grad += gq.sum(axis=0)
    params.proj_k.w.grad += gk.T @ x
    params.proj_k.b.grad += gk.sum(axis=0)
    params.proj_v.w.grad += gv.T @ x
    params.proj_v.b.grad += gv.sum(axis=0)
    return gx.reshape(-1)


def fuse(f_s, f_b, w_s, w_b):
    """Residual channel-weighted sum: (1 + w_s) F_s + (1 + w_b) F_b."""
    if f_s.shape != f_b.shape:
        raise ContractViolation(f"stream shapes differ: {f_s.shape} vs {f_b.shape}")
    if w_s.shape != (f_s.shape[0],) or w_b.shape != (f_b.shape[0],):
        raise ContractViolation(
            f"weight shapes {w_s.shape}/{w_b.shape} do not match {f_s.shape[0]} channels"
        )
    f_f = (1.0 + w_s)[:, None, None] * f_s + (1.0 + w_b)[:, None, None] * f_b
    return f_f, (f_s, f_b, w_s, w_b)


def fuse_backward(g_f_f, cache):
    f_s, f_b, w_s, w_b = cache
    g_s = g_f_f * (1.0 + w_s)[:, None, None]
    g_b = g_f_f * (1.0 + w_b)[:, None, None]
    gw_s = (g_f_f * f_s).sum(axis=(1, 2))
    gw_b = (g_f_f * f_b).sum(axis=(1, 2))
    return g_s, g_b, gw_s, gw_b


def fusion_forward(f_s, f_b, params):
    """Full decoder: descriptors -> affinity -> weights -> fusion -> 1x1 head.

    Returns ``(f_f, logits, state)``; logits are raw (no softmax).
    """
    a_s, a_b, c_att = attention_vectors(f_s, f_b, params)
    f_f_att, c_cat = ops.concat_channels([a_s, a_b])
    w_s, w_b, affinity, c_aw = affinity_and_weights(f_f_att, params)
    f_f, c_fuse = fuse(f_s, f_b, w_s, w_b)
    logits, c_head = params.head.forward(f_f)
    state = FusionState(a_s, a_b, f_f_att, affinity, w_s, w_b,
                        (c_att, c_cat, c_aw, c_fuse, c_head))
    return f_f, logits, state


def fusion_backward(g_f_f, g_logits, state, params):
    """Backward through the whole decoder; returns (gF_s, gF_b)."""
    c_att, c_cat, c_aw, c_fuse, c_head = state.caches
    g = g_f_f.copy() if g_f_f is not None else None
    head_gx = params.head.backward(g_logits, c_head)
    g = head_gx if g is None else g + head_gx
    g_s1, g_b1, gw_s, gw_b = fuse_backward(g, c_fuse)
    g_f_f_att = affinity_and_weights_backward(gw_s, gw_b, c_aw, params)
    ga_s, ga_b = ops.concat_channels_backward(g_f_f_att, c_cat)
    g_s2, g_b2 = attention_vectors_backward(ga_s, ga_b, c_att, params)
    return g_s1 + g_s2, g_b1 + g_b2
