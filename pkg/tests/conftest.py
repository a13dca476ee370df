"""Shared test helpers: network factories and a finite-difference oracle."""

from __future__ import annotations

import numpy as np

from streamadapt.model import Network, init_network


def random_net(u: int, nodes: int, m: int, seed: int = 0) -> Network:
    """Freshly initialized network with reproducible weights."""
    return init_network(u, nodes, m, np.random.default_rng(seed))


def scrambled_net(u: int, nodes: int, m: int, seed: int = 0) -> Network:
    """Network whose biases are randomized too, so no gradient is trivially
    zero by the all-zero-bias initialization convention."""
    rng = np.random.default_rng(seed)
    net = init_network(u, nodes, m, rng)
    for p in (net.b_enc, net.b_dec, net.b_out):
        p[:] = rng.normal(scale=0.3, size=p.shape)
    return net


def fd_gradient(objective, net: Network, h: float = 1e-5):
    """Central-difference gradient of ``objective(net)`` with respect to
    every parameter entry, in ``net.params()`` order."""
    grads = []
    for idx in range(len(net.params())):
        base = net.params()[idx]
        g = np.zeros_like(base)
        for pos in np.ndindex(base.shape):
            plus = net.copy()
            plus.params()[idx][pos] += h
            minus = net.copy()
            minus.params()[idx][pos] -= h
            g[pos] = (objective(plus) - objective(minus)) / (2.0 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric) -> float:
    """Largest entrywise deviation, measured relative to the gradient scale."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = max(1e-8, float(np.max(np.abs(a)) if a.size else 0.0),
                    float(np.max(np.abs(n)) if n.size else 0.0))
        if a.size:
            worst = max(worst, float(np.max(np.abs(a - n))) / scale)
    return worst
