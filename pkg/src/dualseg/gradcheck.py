"""Finite-difference gradient checking.

Central differences in double precision against an analytically computed
gradient. Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-8).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

REL_FLOOR = 1e-8


@dataclass
class GradCheckReport:
    name: str
    max_rel_error: float
    tol: float
    passed: bool
    worst_index: tuple = ()
    n_checked: int = 0
    note: str = ""

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        extra = f" ({self.note})" if self.note else ""
        return (
            f"[{status}] {self.name}: max_rel_err={self.max_rel_error:.3e} "
            f"tol={self.tol:.1e} checked={self.n_checked}{extra}"
        )


def _coords(shape, sample, rng):
    total = int(np.prod(shape)) if shape else 1
    if sample is None or sample >= total:
        flat = np.arange(total)
    else:
        rng = rng or np.random.default_rng(0)
        flat = rng.choice(total, size=sample, replace=False)
    return [np.unravel_index(i, shape) for i in flat] if shape else [()]


def grad_check(f, x, step: float = 1e-5, tol: float = 1e-4, sample=None, rng=None,
               name: str = "grad_check") -> GradCheckReport:
    """Check the analytic gradient of a scalar function ``f``.

    ``f(x)`` must return ``(value, grad)`` with ``grad`` shaped like ``x``.
    ``sample`` limits the check to that many randomly chosen coordinates.
    """
    x = np.array(x, dtype=np.float64)
    value, grad = f(x)
    grad = np.asarray(grad, dtype=np.float64)
    if not np.isfinite(value):
        return GradCheckReport(name, np.inf, tol, False, (), 0, "non-finite value at x")
    if not np.all(np.isfinite(grad)):
        idx = np.unravel_index(int(np.argmin(np.isfinite(grad))), grad.shape)
        return GradCheckReport(name, np.inf, tol, False, idx, 0,
                               f"non-finite analytic gradient at {idx}")

    worst = 0.0
    worst_idx = ()
    checked = 0
    for idx in _coords(x.shape, sample, rng):
        orig = x[idx]
        x[idx] = orig + step
        f_plus = f(x)[0]
        x[idx] = orig - step
        f_minus = f(x)[0]
        x[idx] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            return GradCheckReport(name, np.inf, tol, False, idx, checked,
                                   f"non-finite perturbed value at {idx}")
        numeric = (f_plus - f_minus) / (2.0 * step)
        analytic = grad[idx]
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_FLOOR)
        checked += 1
        if rel > worst:
            worst, worst_idx = rel, idx
    return GradCheckReport(name, worst, tol, worst <= tol, worst_idx, checked)


def check_parameters(loss_fn, grad_fn, named_params, step: float = 1e-5,
                     tol: float = 1e-4, sample_per_param=None, rng=None):
    """Gradient-check every parameter of a model/loss closure.

    ``grad_fn()`` runs forward+backward once, accumulating into each
    Parameter's ``.grad`` (grads are zeroed here first). ``loss_fn()`` is the
    pure forward value used for the finite differences. Returns one report
    per parameter.
    """
    for _, p in named_params:
        p.zero_grad()
    grad_fn()
    reports = []
    for pname, p in named_params:
        analytic = p.grad.copy()
        if not np.all(np.isfinite(analytic)):
            idx = np.unravel_index(int(np.argmin(np.isfinite(analytic))), analytic.shape)
            reports.append(GradCheckReport(pname, np.inf, tol, False, idx, 0,
                                           "non-finite analytic gradient"))
            continue
        worst, worst_idx, checked = 0.0, (), 0
        ok = True
        for idx in _coords(p.value.shape, sample_per_param, rng):
            orig = p.value[idx]
            p.value[idx] = orig + step
            f_plus = loss_fn()
            p.value[idx] = orig - step
            f_minus = loss_fn()
            p.value[idx] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                reports.append(GradCheckReport(pname, np.inf, tol, False, idx, checked,
                                               f"non-finite perturbed value at {idx}"))
                ok = False
                break
            numeric = (f_plus - f_minus) / (2.0 * step)
            rel = abs(analytic[idx] - numeric) / max(abs(analytic[idx]), abs(numeric), REL_FLOOR)
            checked += 1
            if rel > worst:
                worst, worst_idx = rel, idx
        if ok:
            reports.append(GradCheckReport(pname, worst, tol, worst <= tol, worst_idx, checked))
    return reports
