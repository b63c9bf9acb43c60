"""Two-stream segmentation/boundary network at desk scale.

A shared stem embeds the image at /2 and /4. The semantic stream is a stack
of conv stages producing features at /4, /8, /16, /32. The boundary stream
converts the /2 stem feature and every stage output with conv+norm+relu
blocks, upsamples them to /2, and reduces the concatenation to a boundary
logit map. Both streams are projected to a common width at /4 and fused
(learned channel attention, plain addition, or concatenation) into the final
semantic prediction; an auxiliary 1x1 head on the deepest semantic feature
provides direct supervision during training.

Forward returns (Predictions, cache); backward consumes gradients w.r.t. the
three full-resolution logit maps and accumulates into every Parameter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import ConfigurationError, ContractViolation
from .fusion import AttentionFusionParams, fusion_backward, fusion_forward
from .nn import Conv2d, ConvGnRelu

FUSION_MODES = ("add", "cat", "afd")


@dataclass
class ModelConfig:
    num_classes: int
    stem_channels: int = 8
    stage_channels: tuple = (16, 24, 32, 48)
    fusion_channels: int = 48
    gn_groups: int = 4
    attn_groups: int = 4
    boundary_width: int = 32
    converter_width: int = 16
    mlp_reduction: int = 4
    fusion: str = "afd"
    with_boundary: bool = True

    def __post_init__(self):
        self.stage_channels = tuple(int(c) for c in self.stage_channels)
        if self.num_classes < 2:
            raise ConfigurationError(f"need >= 2 classes, got {self.num_classes}")
        if len(self.stage_channels) < 2:
            raise ConfigurationError("need at least 2 semantic stages")
        widths = (self.stem_channels, self.boundary_width, self.converter_width,
                  *self.stage_channels)
        if any(c <= 0 for c in widths) or self.fusion_channels <= 0:
            raise ConfigurationError("channel counts must be positive")
        for c in widths:
            if c % self.gn_groups != 0:
                raise ConfigurationError(
                    f"width {c} not divisible by gn_groups={self.gn_groups}"
                )
        if self.fusion_channels % self.gn_groups != 0:
            raise ConfigurationError("fusion_channels must respect gn_groups")
        if (2 * self.fusion_channels) % self.attn_groups != 0:
            raise ConfigurationError("2*fusion_channels must be divisible by attn_groups")
        if self.fusion not in FUSION_MODES:
            raise ConfigurationError(f"fusion must be one of {FUSION_MODES}")

    @property
    def num_stages(self) -> int:
        return len(self.stage_channels)

    @property
    def stride_factor(self) -> int:
        # stem contributes /4; every stage after the first halves again
        return 4 * (1 << (self.num_stages - 1))

    def to_json(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "stem_channels": self.stem_channels,
            "stage_channels": list(self.stage_channels),
            "fusion_channels": self.fusion_channels,
            "gn_groups": self.gn_groups,
            "attn_groups": self.attn_groups,
            "boundary_width": self.boundary_width,
            "converter_width": self.converter_width,
            "mlp_reduction": self.mlp_reduction,
            "fusion": self.fusion,
            "with_boundary": self.with_boundary,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["stage_channels"] = tuple(d["stage_channels"])
        return cls(**d)


@dataclass
class Predictions:
    """Per-pixel probabilities (s, s_f, b) plus the logits they derive from."""

    s: np.ndarray
    s_f: np.ndarray
    b: np.ndarray
    s_logits: np.ndarray
    sf_logits: np.ndarray
    b_logits: np.ndarray


class _Stage:
    """Two conv-norm-relu blocks; the first may downsample."""

    def __init__(self, c_in, c_out, stride, gn_groups, rng, name):
        self.block1 = ConvGnRelu(c_in, c_out, stride=stride, gn_groups=gn_groups,
                                 rng=rng, name=f"{name}.block1")
        self.block2 = ConvGnRelu(c_out, c_out, stride=1, gn_groups=gn_groups,
                                 rng=rng, name=f"{name}.block2")

    def forward(self, x):
        y1, c1 = self.block1.forward(x)
        y2, c2 = self.block2.forward(y1)
        return y2, (c1, c2)

    def backward(self, gy, cache):
        c1, c2 = cache
        return self.block1.backward(self.block2.backward(gy, c2), c1)

    def parameters(self):
        return self.block1.parameters() + self.block2.parameters()


class ModelParams:
    """All learnable weights, structured by role."""

    def __init__(self, config: ModelConfig, rng=None):
        rng = rng or np.random.default_rng(0)
        cfg = config
        g = cfg.gn_groups
        self.config = cfg
        self.stem1 = ConvGnRelu(3, cfg.stem_channels, stride=2, gn_groups=g,
                                rng=rng, name="stem1")
        self.stem2 = ConvGnRelu(cfg.stem_channels, cfg.stem_channels, stride=2,
                                gn_groups=g, rng=rng, name="stem2")
        self.stages = []
        prev = cfg.stem_channels
        for i, ch in enumerate(cfg.stage_channels):
            stride = 1 if i == 0 else 2
            self.stages.append(_Stage(prev, ch, stride, g, rng, f"stage{i + 1}"))
            prev = ch
        deepest = cfg.stage_channels[-1]
        self.sem_proj = Conv2d(deepest, cfg.fusion_channels, 1, rng=rng,
                               name="sem_proj")
        self.aux_head = Conv2d(cfg.fusion_channels, cfg.num_classes, 1, rng=rng,
                               name="aux_head")

        self.converters = []
        self.bhead_conv = None
        self.bhead_out = None
        self.bnd_proj = None
        self.fusion = None
        self.fusion_head = None
        if cfg.with_boundary:
            scale_channels = [cfg.stem_channels, *cfg.stage_channels]
            for i, c_in in enumerate(scale_channels):
                self.converters.append(
                    ConvGnRelu(c_in, cfg.converter_width, gn_groups=g, rng=rng,
                               name=f"converter{i}")
                )
            cat_width = cfg.converter_width * len(scale_channels)
            self.bhead_conv = ConvGnRelu(cat_width, cfg.boundary_width, gn_groups=g,
                                         rng=rng, name="bhead_conv")
            self.bhead_out = Conv2d(cfg.boundary_width, 1, 1, rng=rng, name="bhead_out")
            self.bnd_proj = Conv2d(cfg.boundary_width, cfg.fusion_channels, 1,
                                   stride=2, rng=rng, name="bnd_proj")
            if cfg.fusion == "afd":
                self.fusion = AttentionFusionParams(
                    cfg.fusion_channels, cfg.num_classes, attn_groups=cfg.attn_groups,
                    mlp_reduction=cfg.mlp_reduction, rng=rng, name="fusion")
            elif cfg.fusion == "add":
                self.fusion_head = Conv2d(cfg.fusion_channels, cfg.num_classes, 1,
                                          rng=rng, name="fusion_head")
            else:  # cat
                self.fusion_head = Conv2d(2 * cfg.fusion_channels, cfg.num_classes, 1,
                                          rng=rng, name="fusion_head")

    def _modules(self):
        mods = [self.stem1, self.stem2, *self.stages, self.sem_proj, self.aux_head]
        mods.extend(self.converters)
        for m in (self.bhead_conv, self.bhead_out, self.bnd_proj,
                  self.fusion, self.fusion_head):
            if m is not None:
                mods.append(m)
        return mods

    def named_parameters(self):
        return [(p.name, p) for m in self._modules() for p in m.parameters()]

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


def forward(image: np.ndarray, params: ModelParams, config: ModelConfig):
    """Run the network on one (3,H,W) image; H, W must be divisible by the
    deepest stride (config.stride_factor)."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise ContractViolation(f"expected (3,H,W) image, got shape {image.shape}")
    _, h, w = image.shape
    sf = config.stride_factor
    if h % sf or w % sf:
        raise ConfigurationError(f"resolution {h}x{w} not divisible by {sf}")

    cache = {"params": params, "image_shape": image.shape}
    e1, cache["stem1"] = params.stem1.forward(image)          # /2
    e2, cache["stem2"] = params.stem2.forward(e1)             # /4
    feats = []
    f = e2
    cache["stages"] = []
    for stage in params.stages:
        f, c = stage.forward(f)
        cache["stages"].append(c)
        feats.append(f)

    # semantic pathway: project the deepest feature to the fusion width at /4,
    # classify there (auxiliary head), upsample logits to full resolution
    h4, w4 = h // 4, w // 4
    sem_c, cache["sem_proj"] = params.sem_proj.forward(feats[-1])
    fs_c, cache["sem_up"] = ops.bilinear_upsample(sem_c, h4, w4)
    aux_small, cache["aux_head"] = params.aux_head.forward(fs_c)
    s_logits, cache["aux_up"] = ops.bilinear_upsample(aux_small, h, w)

    if not config.with_boundary:
        s, _ = ops.softmax(s_logits, axis=0)
        zeros = np.zeros((h, w))
        pred = Predictions(s=s, s_f=s, b=zeros, s_logits=s_logits,
                           sf_logits=s_logits, b_logits=zeros)
        return pred, cache

    h2, w2 = h // 2, w // 2
    converted, conv_caches, up_caches = [], [], []
    for conv, feat in zip(params.converters, [e1, *feats]):
        y, c = conv.forward(feat)
        conv_caches.append(c)
        y_up, c_up = ops.bilinear_upsample(y, h2, w2)
        up_caches.append(c_up)
        converted.append(y_up)
    bcat, cache["bcat_sizes"] = ops.concat_channels(converted)
    cache["converters"] = conv_caches
    cache["converter_ups"] = up_caches

    bfeat, cache["bhead_conv"] = params.bhead_conv.forward(bcat)
    b_small, cache["bhead_out"] = params.bhead_out.forward(bfeat)
    b_logits_3d, cache["bhead_up"] = ops.bilinear_upsample(b_small, h, w)
    b_logits = b_logits_3d[0]

    fb_c, cache["bnd_proj"] = params.bnd_proj.forward(bfeat)  # stride-2: /2 -> /4

    if config.fusion == "afd":
        _, sf_small, cache["fusion_state"] = fusion_forward(fs_c, fb_c, params.fusion)
    elif config.fusion == "add":
        f_sum, _ = ops.add(fs_c, fb_c)
        sf_small, cache["fusion_head"] = params.fusion_head.forward(f_sum)
    else:  # cat
        f_cat, cache["cat_sizes"] = ops.concat_channels([fs_c, fb_c])
        sf_small, cache["fusion_head"] = params.fusion_head.forward(f_cat)
    sf_logits, cache["fusion_up"] = ops.bilinear_upsample(sf_small, h, w)

    s, _ = ops.softmax(s_logits, axis=0)
    s_f, _ = ops.softmax(sf_logits, axis=0)
    b, _ = ops.sigmoid(b_logits)
    pred = Predictions(s=s, s_f=s_f, b=b, s_logits=s_logits,
                       sf_logits=sf_logits, b_logits=b_logits)
    return pred, cache


def backward(grads: dict, cache: dict, params: ModelParams, config: ModelConfig):
    """Accumulate parameter gradients from {"s","s_f","b"} logit gradients.

    Returns the gradient w.r.t. the input image.
    """
    if cache.get("params") is not params:
        raise ContractViolation("cache does not belong to these parameters")

    if not config.with_boundary:
        g_logits = grads["s_f"] + grads["s"]  # both heads are the same map
        g_aux_small = ops.bilinear_upsample_backward(g_logits, cache["aux_up"])
        g_fs_c = params.aux_head.backward(g_aux_small, cache["aux_head"])
        g_sem_c = ops.bilinear_upsample_backward(g_fs_c, cache["sem_up"])
        g_feat_last = params.sem_proj.backward(g_sem_c, cache["sem_proj"])
        return _backbone_backward(g_feat_last, None, cache, params)

    # fused semantic path back to both streams
    g_sf_small = ops.bilinear_upsample_backward(grads["s_f"], cache["fusion_up"])
    if config.fusion == "afd":
        g_fs_c, g_fb_c = fusion_backward(None, g_sf_small, cache["fusion_state"],
                                         params.fusion)
    elif config.fusion == "add":
        g_sum = params.fusion_head.backward(g_sf_small, cache["fusion_head"])
        g_fs_c, g_fb_c = ops.add_backward(g_sum, None)
    else:
        g_cat = params.fusion_head.backward(g_sf_small, cache["fusion_head"])
        g_fs_c, g_fb_c = ops.concat_channels_backward(g_cat, cache["cat_sizes"])

    # auxiliary semantic head also consumes the projected /4 feature
    g_aux_small = ops.bilinear_upsample_backward(grads["s"], cache["aux_up"])
    g_fs_c = g_fs_c + params.aux_head.backward(g_aux_small, cache["aux_head"])
    g_sem_c = ops.bilinear_upsample_backward(g_fs_c, cache["sem_up"])
    g_feat_last = params.sem_proj.backward(g_sem_c, cache["sem_proj"])
    g_bfeat = params.bnd_proj.backward(g_fb_c, cache["bnd_proj"])

    # boundary head
    g_b_small = ops.bilinear_upsample_backward(grads["b"][None], cache["bhead_up"])
    g_bfeat = g_bfeat + params.bhead_out.backward(g_b_small, cache["bhead_out"])
    g_bcat = params.bhead_conv.backward(g_bfeat, cache["bhead_conv"])

    # converters back to their source scales
    g_parts = ops.concat_channels_backward(g_bcat, cache["bcat_sizes"])
    g_sources = []
    for g_up, c_up, conv, c_conv in zip(g_parts, cache["converter_ups"],
                                        params.converters, cache["converters"]):
        g_native = ops.bilinear_upsample_backward(g_up, c_up)
        g_sources.append(conv.backward(g_native, c_conv))

    g_feat_last = g_feat_last + g_sources[-1]
    g_stage_extras = g_sources[1:-1]  # stages 0..m-2 get converter gradients
    g_e1_extra = g_sources[0]
    return _backbone_backward(g_feat_last, (g_stage_extras, g_e1_extra), cache, params)


def _backbone_backward(g_feat_last, boundary_extras, cache, params):
    g = g_feat_last
    n = len(params.stages)
    for i in range(n - 1, -1, -1):
        if boundary_extras is not None and i < n - 1:
            g = g + boundary_extras[0][i]
        g = params.stages[i].backward(g, cache["stages"][i])
    g_e1 = params.stem2.backward(g, cache["stem2"])
    if boundary_extras is not None:
        g_e1 = g_e1 + boundary_extras[1]
    return params.stem1.backward(g_e1, cache["stem1"])
