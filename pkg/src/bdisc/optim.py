"""AdamW with decoupled weight decay, on dicts of named arrays."""

import numpy as np


def init_moments(grads_like):
    """Zero first/second moment accumulators matching a gradient dict."""
    m = {k: np.zeros_like(v) for k, v in grads_like.items()}
    v = {k: np.zeros_like(g) for k, g in grads_like.items()}
    return m, v


def adamw_step(params, grads, moments, t, *, lr, beta1=0.9, beta2=0.999,
               eps=1e-8, weight_decay=0.0, decay_keys=()):
    """One AdamW update, in place. ``t`` is the 1-based step index.

    Decay is decoupled (applied directly to the weights, not through the
    gradient) and only touches keys listed in ``decay_keys``; biases and
    batch-norm scale/shift stay undecayed.
    """
    if t < 1:
        raise ValueError("step index t must be >= 1")
    m, v = moments
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for key, g in grads.items():
        m[key] = beta1 * m[key] + (1.0 - beta1) * g
        v[key] = beta2 * v[key] + (1.0 - beta2) * (g * g)
        update = (m[key] / bc1) / (np.sqrt(v[key] / bc2) + eps)
        p = params[key]
        p -= lr * update
        if weight_decay and key in decay_keys:
            p -= lr * weight_decay * p
    return params, moments
