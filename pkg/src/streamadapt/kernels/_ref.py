"""Pure-python reference for the per-sample training kernel.

The compiled backend (`_hot`) mirrors these routines exactly; this
module is both the fallback when no compiler is available and the
ground truth the parity tests compare against.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import expit

from streamadapt.objectives import LOG_FLOOR
from streamadapt.structure import spc_update_vec

_PI8 = math.pi / 8.0


def _softmax_vec(v: np.ndarray) -> np.ndarray:
    e = np.exp(v - v.max())
    return e / e.sum()


def ce_sgd_step(W_enc, b_enc, W_out, b_out, x, y, lr) -> float:
    """One stochastic cross-entropy step on a single sample, in place.

    Returns the pre-update loss.
    """
    h = expit(x @ W_enc + b_enc)
    p = _softmax_vec(h @ W_out + b_out)
    loss = -math.log(max(p[y], LOG_FLOOR))
    d = p.copy()
    d[y] -= 1.0
    dz = (W_out @ d) * h * (1.0 - h)
    W_out -= lr * np.outer(h, d)
    b_out -= lr * d
    W_enc -= lr * np.outer(x, dz)
    b_enc -= lr * dz
    return loss


def discriminative_pass(W_enc, b_enc, W_out, b_out, X, y, mu, var, spc_vec,
                        lr, use_structure, start):
    """Per-sample supervised pass with structural signalling.

    Processes samples from ``start``.  For each sample the control chart
    is consulted first (on pre-update parameters); when it signals, the
    pass stops BEFORE that sample's gradient step and returns
    ``(sample index, event, loss sum)`` with event 1 = grow, 2 = prune,
    so the caller can mutate the network, finish the sample's step, and
    resume at the following index.  Event 0 means the batch completed.

    A prune signal on a single-node network is recorded in the state but
    not surfaced.
    """
    n = X.shape[0]
    ce_sum = 0.0
    i = start
    while i < n:
        if use_structure:
            denom = np.sqrt(1.0 + _PI8 * (var @ (W_enc * W_enc)))
            eh = expit((mu @ W_enc + b_enc) / denom)
            ey = _softmax_vec(eh @ W_out + b_out)
            ey2 = _softmax_vec((eh * eh) @ W_out + b_out)
            d = ey.copy()
            d[y[i]] -= 1.0
            bias_sq = float(d @ d)
            var_out = float(np.sum(ey2 - ey * ey))
            grow, prune = spc_update_vec(spc_vec, bias_sq, var_out)
            if grow:
                return i, 1, ce_sum
            if prune and W_out.shape[0] >= 2:
                return i, 2, ce_sum
        ce_sum += ce_sgd_step(W_enc, b_enc, W_out, b_out, X[i], y[i], lr)
        i += 1
    return n, 0, ce_sum
