"""Two-stream model: shapes, invariants, and full finite-difference checks."""

import numpy as np
import pytest

from dualseg.boundary import LabelMap, binary_boundary_label, semantic_boundary_label
from dualseg.errors import ConfigurationError, ContractViolation
from dualseg.gradcheck import check_parameters
from dualseg.losses import LossWeights, one_hot, total_loss
from dualseg.model import ModelConfig, ModelParams, Predictions, backward, forward


def tiny_config(**kw):
    defaults = dict(
        num_classes=3,
        stem_channels=4,
        stage_channels=(8, 8, 16),
        fusion_channels=16,
        gn_groups=2,
        attn_groups=4,
        boundary_width=8,
        converter_width=8,
    )
    defaults.update(kw)
    return ModelConfig(**defaults)


def make_targets(rng, n, h, w, radius=1):
    labels = rng.integers(0, n, size=(h, w))
    lm = LabelMap(labels, num_classes=n)
    return (one_hot(labels, n), binary_boundary_label(lm, radius),
            semantic_boundary_label(lm, radius))


def loss_closure(params, config, image, targets, include=None, radius=1):
    target, b_hat, sem = targets
    weights = LossWeights()
    kwargs = {} if include is None else {"include": include}

    def loss_fn():
        pred, _ = forward(image, params, config)
        report, _ = total_loss(pred, target, b_hat, sem, weights, radius, **kwargs)
        return report.total

    def grad_fn():
        pred, cache = forward(image, params, config)
        _, grads = total_loss(pred, target, b_hat, sem, weights, radius, **kwargs)
        backward(grads, cache, params, config)

    return loss_fn, grad_fn


def test_config_validation():
    with pytest.raises(ConfigurationError):
        tiny_config(gn_groups=3)  # 4 % 3 != 0
    with pytest.raises(ConfigurationError):
        tiny_config(fusion="blend")
    with pytest.raises(ConfigurationError):
        tiny_config(stage_channels=(8,))
    cfg = tiny_config()
    assert cfg.stride_factor == 16


def test_forward_shapes_and_probability_contracts(rng):
    config = tiny_config()
    params = ModelParams(config, rng=np.random.default_rng(0))
    image = rng.uniform(size=(3, 16, 32))
    pred, _ = forward(image, params, config)
    assert pred.s.shape == (3, 16, 32)
    assert pred.s_f.shape == (3, 16, 32)
    assert pred.b.shape == (16, 32)
    assert np.all(np.abs(pred.s.sum(axis=0) - 1.0) <= 1e-9)
    assert np.all(np.abs(pred.s_f.sum(axis=0) - 1.0) <= 1e-9)
    assert pred.b.min() >= 0.0 and pred.b.max() <= 1.0


def test_forward_rejects_bad_resolution(rng):
    config = tiny_config()
    params = ModelParams(config, rng=np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        forward(rng.uniform(size=(3, 20, 16)), params, config)
    with pytest.raises(ContractViolation):
        forward(rng.uniform(size=(1, 16, 16)), params, config)


def test_parameters_unique_no_aliasing():
    params = ModelParams(tiny_config(), rng=np.random.default_rng(0))
    named = params.named_parameters()
    names = [n for n, _ in named]
    ids = [id(p) for _, p in named]
    assert len(set(names)) == len(names)
    assert len(set(ids)) == len(ids)


def test_non_fusion_parameter_count_independent_of_attn_groups():
    def non_fusion_count(attn_groups):
        params = ModelParams(tiny_config(attn_groups=attn_groups),
                             rng=np.random.default_rng(0))
        return sum(p.value.size for n, p in params.named_parameters()
                   if not n.startswith("fusion."))

    assert non_fusion_count(2) == non_fusion_count(4)


def test_zero_upstream_gradient_gives_zero_grads(rng):
    config = tiny_config()
    params = ModelParams(config, rng=np.random.default_rng(0))
    image = rng.uniform(size=(3, 16, 16))
    pred, cache = forward(image, params, config)
    params.zero_grad()
    grads = {"s": np.zeros_like(pred.s_logits),
             "s_f": np.zeros_like(pred.sf_logits),
             "b": np.zeros_like(pred.b_logits)}
    backward(grads, cache, params, config)
    for _, p in params.named_parameters():
        assert np.all(p.grad == 0.0)


def test_backward_sums_over_batch(rng):
    config = tiny_config()
    params = ModelParams(config, rng=np.random.default_rng(0))
    image = rng.uniform(size=(3, 16, 16))
    up = {"s": rng.normal(size=(3, 16, 16)),
          "s_f": rng.normal(size=(3, 16, 16)),
          "b": rng.normal(size=(16, 16))}

    params.zero_grad()
    pred, cache = forward(image, params, config)
    backward(up, cache, params, config)
    single = {n: p.grad.copy() for n, p in params.named_parameters()}

    params.zero_grad()
    for _ in range(2):  # identical image twice = batch of two
        pred, cache = forward(image, params, config)
        backward(up, cache, params, config)
    for n, p in params.named_parameters():
        assert np.allclose(p.grad, 2.0 * single[n]), n


def test_stale_cache_detected(rng):
    config = tiny_config()
    params_a = ModelParams(config, rng=np.random.default_rng(0))
    params_b = ModelParams(config, rng=np.random.default_rng(1))
    image = rng.uniform(size=(3, 16, 16))
    pred, cache = forward(image, params_a, config)
    grads = {"s": np.zeros_like(pred.s_logits),
             "s_f": np.zeros_like(pred.sf_logits),
             "b": np.zeros_like(pred.b_logits)}
    with pytest.raises(ContractViolation):
        backward(grads, cache, params_b, config)


def test_semantic_only_mode(rng):
    config = tiny_config(with_boundary=False)
    params = ModelParams(config, rng=np.random.default_rng(0))
    names = [n for n, _ in params.named_parameters()]
    assert not any(n.startswith(("converter", "bhead", "fusion", "bnd_proj"))
                   for n in names)
    image = rng.uniform(size=(3, 16, 16))
    pred, cache = forward(image, params, config)
    assert pred.s_f is pred.s
    assert np.all(pred.b == 0.0)
    # training path works end to end
    targets = make_targets(np.random.default_rng(5), 3, 16, 16)
    loss_fn, grad_fn = loss_closure(params, config, image, targets, include=("fused",))
    params.zero_grad()
    grad_fn()
    assert any(np.any(p.grad != 0.0) for _, p in params.named_parameters())


def test_regularization_couples_boundary_head(rng):
    # even without the boundary BCE, the consistency losses reach the
    # boundary stream through the fused prediction
    config = tiny_config()
    params = ModelParams(config, rng=np.random.default_rng(0))
    image = rng.uniform(size=(3, 16, 16))
    targets = make_targets(np.random.default_rng(6), 3, 16, 16)
    loss_fn, grad_fn = loss_closure(params, config, image, targets,
                                    include=("s2b", "b2s"))
    params.zero_grad()
    grad_fn()
    bhead = {n: p for n, p in params.named_parameters() if n.startswith("bhead_conv")}
    assert any(np.any(p.grad != 0.0) for p in bhead.values())


def test_determinism(rng):
    config = tiny_config()
    p1 = ModelParams(config, rng=np.random.default_rng(3))
    p2 = ModelParams(config, rng=np.random.default_rng(3))
    for (n1, a), (n2, b) in zip(p1.named_parameters(), p2.named_parameters()):
        assert n1 == n2
        assert np.array_equal(a.value, b.value)
    image = rng.uniform(size=(3, 16, 16))
    out1, _ = forward(image, p1, config)
    out2, _ = forward(image, p2, config)
    assert np.array_equal(out1.sf_logits, out2.sf_logits)


@pytest.mark.parametrize("fusion", ["afd", "add", "cat"])
def test_full_model_gradients(fusion):
    rng = np.random.default_rng(11)
    config = tiny_config(fusion=fusion)
    params = ModelParams(config, rng=np.random.default_rng(0))
    image = rng.uniform(size=(3, 16, 16))
    targets = make_targets(rng, 3, 16, 16)
    loss_fn, grad_fn = loss_closure(params, config, image, targets)
    reports = check_parameters(loss_fn, grad_fn, params.named_parameters(),
                               step=1e-6, tol=1e-4, sample_per_param=4,
                               rng=np.random.default_rng(99))
    for rep in reports:
        assert rep.passed, str(rep)


def test_full_model_gradients_semantic_only():
    rng = np.random.default_rng(12)
    config = tiny_config(with_boundary=False)
    params = ModelParams(config, rng=np.random.default_rng(0))
    image = rng.uniform(size=(3, 16, 16))
    targets = make_targets(rng, 3, 16, 16)
    loss_fn, grad_fn = loss_closure(params, config, image, targets, include=("fused",))
    reports = check_parameters(loss_fn, grad_fn, params.named_parameters(),
                               step=1e-6, tol=1e-4, sample_per_param=4,
                               rng=np.random.default_rng(99))
    for rep in reports:
        assert rep.passed, str(rep)
