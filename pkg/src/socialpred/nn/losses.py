"""Losses return ``(value, gradient w.r.t. the prediction)``; data losses are means."""

import numpy as np

BCE_CLAMP = 1e-7


def bce_loss(p, s):
    p = np.asarray(p, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    n = p.size
    loss = -np.sum(s * np.log(pc) + (1.0 - s) * np.log(1.0 - pc)) / n
    inside = (p > BCE_CLAMP) & (p < 1.0 - BCE_CLAMP)
    grad = np.where(inside, (pc - s) / (pc * (1.0 - pc)), 0.0) / n
    return float(loss), grad


def mse_loss(pred, target):
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float(np.mean(diff**2)), 2.0 * diff / diff.size


def l1_penalty(params, lam: float):
    """``lam * sum |w|`` over an iterable of arrays, and the matching subgradients."""
    params = list(params)
    value = lam * sum(float(np.abs(w).sum()) for w in params)
    return value, [lam * np.sign(w) for w in params]
