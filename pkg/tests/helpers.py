"""Shared numerical test utilities."""

import numpy as np


def central_difference(loss_fn, params, step=1e-5):
    """Finite-difference gradient of loss_fn() w.r.t. the param arrays.

    loss_fn takes no arguments and reads the (mutated) params; params are
    restored after probing. Returns one array of the same shape per param.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = loss_fn()
            flat[i] = orig - step
            lo = loss_fn()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * step)
        grads.append(g)
    return grads


def relative_gradient_error(analytic, numeric):
    """max over params of |a - n| / max(|a|, |n|, 1e-8)."""
    worst = 0.0
    for a, b in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - b) / denom)))
    return worst
