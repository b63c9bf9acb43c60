import numpy as np
import pytest

from dualseg.errors import ContractViolation
from dualseg.optim import AdamW
from dualseg.tensor import Parameter


def test_zero_gradient_zero_decay_is_noop(rng):
    p = Parameter(rng.normal(size=(3, 3)), "w")
    before = p.value.copy()
    opt = AdamW([("w", p)], lr=0.1, weight_decay=0.0)
    opt.step()
    assert np.array_equal(p.value, before)


def test_single_step_collapsed_moments():
    # beta1 = beta2 = 0: moments equal g and g^2, update ~ lr * sign(g)
    p = Parameter(np.array([1.0]), "w")
    p.grad[:] = 1.0
    opt = AdamW([("w", p)], lr=0.1, beta1=0.0, beta2=0.0, eps=1e-8, weight_decay=0.0)
    opt.step()
    assert abs(p.value[0] - 0.9) < 1e-6


def test_decoupled_weight_decay_shrinks_without_gradient():
    p = Parameter(np.array([2.0]), "w")
    opt = AdamW([("w", p)], lr=0.1, weight_decay=0.5)
    opt.step()
    # zero gradient: only the decay term acts, value -= lr * wd * value
    assert abs(p.value[0] - 2.0 * (1.0 - 0.05)) < 1e-12


def test_quadratic_convergence():
    # f(x) = 0.5 sum(a x^2): gradient a*x, minimum at 0. Momentum-free run
    # with a decaying rate; 200 steps reach gradient norm well below 1e-6.
    a = np.array([1.0, 2.0, 4.0])
    p = Parameter(np.array([1.0, -1.5, 0.7]), "x")
    opt = AdamW([("x", p)], lr=0.2, beta1=0.0, beta2=0.99, weight_decay=0.0)
    for t in range(200):
        p.zero_grad()
        p.grad += a * p.value
        opt.step(lr=0.2 if t < 100 else 0.2 * 0.92 ** (t - 100))
    assert np.linalg.norm(a * p.value) < 1e-6


def test_non_finite_gradient_aborts_without_update(rng):
    p1 = Parameter(rng.normal(size=3), "a")
    p2 = Parameter(rng.normal(size=3), "b")
    before1, before2 = p1.value.copy(), p2.value.copy()
    opt = AdamW([("a", p1), ("b", p2)], lr=0.1)
    p1.grad[:] = 1.0
    p2.grad[:] = [1.0, np.nan, 1.0]
    with pytest.raises(ContractViolation, match="b"):
        opt.step()
    assert np.array_equal(p1.value, before1)
    assert np.array_equal(p2.value, before2)
    assert opt.t == 0


def test_state_roundtrip(rng):
    p = Parameter(rng.normal(size=(2, 2)), "w")
    opt = AdamW([("w", p)], lr=0.05)
    for _ in range(3):
        p.zero_grad()
        p.grad += rng.normal(size=(2, 2))
        opt.step()
    state = {k: v.copy() for k, v in opt.state_arrays().items()}

    p2 = Parameter(p.value.copy(), "w")
    opt2 = AdamW([("w", p2)], lr=0.05)
    opt2.load_state_arrays(state)
    assert opt2.t == opt.t
    g = rng.normal(size=(2, 2))
    for o, pp in ((opt, p), (opt2, p2)):
        pp.zero_grad()
        pp.grad += g
        o.step()
    assert np.array_equal(p.value, p2.value)
