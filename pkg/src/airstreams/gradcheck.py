"""Central finite-difference gradient checking.

The harness perturbs parameter elements at f64 and compares the analytic
gradient from backward() against (f(p+h) - f(p-h)) / 2h. Relative error is
|fd - an| / max(|fd|, |an|, 1), so near-zero gradients are judged on an
absolute scale.
"""

import numpy as np

from .tensor import backward, tape_scope


def _scalar_eval(fn):
    with tape_scope():
        out = fn()
    return float(out.data)


def fd_check(fn, params, eps=1e-5, elements_per_tensor=None, rng=None):
    """Max relative error between analytic and central-difference gradients.

    fn rebuilds the scalar loss from `params` on every call. When
    elements_per_tensor is given, only that many randomly chosen elements
    per tensor are perturbed (for large composites); otherwise every
    element is checked.
    """
    params = list(params)
    with tape_scope() as tape:
        out = fn()
        backward(out, tape)
    analytic = []
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        analytic.append(g.copy())
        p.grad = None

    worst = 0.0
    for p, an in zip(params, analytic):
        flat = p.data.reshape(-1)
        an_flat = an.reshape(-1)
        if elements_per_tensor is None or flat.size <= elements_per_tensor:
            indices = range(flat.size)
        else:
            indices = (rng or np.random.default_rng(0)).choice(
                flat.size, size=elements_per_tensor, replace=False
            )
        for idx in indices:
            original = flat[idx]
            flat[idx] = original + eps
            f_plus = _scalar_eval(fn)
            flat[idx] = original - eps
            f_minus = _scalar_eval(fn)
            flat[idx] = original
            fd = (f_plus - f_minus) / (2.0 * eps)
            err = abs(fd - an_flat[idx]) / max(abs(fd), abs(an_flat[idx]), 1.0)
            worst = max(worst, err)
    return worst


def fd_check_directional(fn, params, eps=1e-5, rng=None):
    """Directional variant: one random-direction probe per tensor."""
    rng = rng or np.random.default_rng(0)
    params = list(params)
    with tape_scope() as tape:
        out = fn()
        backward(out, tape)
    worst = 0.0
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        p.grad = None
        direction = rng.standard_normal(p.data.shape)
        direction /= max(np.linalg.norm(direction), 1e-12)
        original = p.data.copy()
        p.data = original + eps * direction
        f_plus = _scalar_eval(fn)
        p.data = original - eps * direction
        f_minus = _scalar_eval(fn)
        p.data = original
        fd = (f_plus - f_minus) / (2.0 * eps)
        an = float((g * direction).sum())
        err = abs(fd - an) / max(abs(fd), abs(an), 1.0)
        worst = max(worst, err)
    return worst
