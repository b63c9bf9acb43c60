import numpy as np

from dualseg.gradcheck import grad_check


def test_sum_has_exact_gradient(rng):
    x = rng.normal(size=(4, 3))

    def f(v):
        return float(v.sum()), np.ones_like(v)

    rep = grad_check(f, x, step=1e-6, tol=1e-4)
    assert rep.passed
    assert rep.max_rel_error <= 1e-6


def test_sum_of_squares(rng):
    x = rng.normal(size=10)

    def f(v):
        return float((v ** 2).sum()), 2.0 * v

    rep = grad_check(f, x, step=1e-5, tol=1e-4)
    assert rep.passed
    assert rep.max_rel_error <= 1e-6


def test_wrong_gradient_is_flagged(rng):
    x = rng.normal(size=5)

    def f(v):
        return float((v ** 2).sum()), 3.0 * v  # deliberately wrong

    rep = grad_check(f, x, step=1e-5, tol=1e-4)
    assert not rep.passed


def test_non_finite_value_reports_index():
    x = np.array([1.0, 2.0])

    def f(v):
        g = np.array([1.0, np.nan])
        return float(v.sum()), g

    rep = grad_check(f, x)
    assert not rep.passed
    assert "non-finite" in rep.note
    assert rep.worst_index == (1,)


def test_sampled_check_covers_subset(rng):
    x = rng.normal(size=100)

    def f(v):
        return float(v.sum()), np.ones_like(v)

    rep = grad_check(f, x, sample=7, rng=rng)
    assert rep.n_checked == 7
    assert rep.passed
