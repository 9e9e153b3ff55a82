"""Shared test oracles."""

import numpy as np

from wotrisk.neural import Mlp, objective_martingale, objective_unconstrained

OBJECTIVES = {"unconstrained": objective_unconstrained, "martingale": objective_martingale}


def gradient_check(regime, f, cost, batch, seed, activation="relu", h=1e-5):
    """Largest per-tensor relative error between backprop and central differences."""
    rng = np.random.default_rng(seed)
    d = batch.shape[1]
    d_out = d + (1 if regime == "martingale" else 0)
    net = Mlp.init(d, d_out, hidden=3, width=7, activation=activation, rng=rng, output_scale=1.0)
    for b in net.biases:
        b[:] = rng.normal(0, 0.1, size=b.shape)
    obj = OBJECTIVES[regime]
    _, grads = obj(net, f, cost, batch)
    worst = 0.0
    for P, G in zip(net.params, grads):
        fd = np.zeros_like(P)
        for idx in np.ndindex(P.shape):
            old = P[idx]
            P[idx] = old + h
            up, _ = obj(net, f, cost, batch)
            P[idx] = old - h
            dn, _ = obj(net, f, cost, batch)
            P[idx] = old
            fd[idx] = (up - dn) / (2 * h)
        scale = max(np.linalg.norm(fd), np.linalg.norm(G), 1e-8)
        worst = max(worst, float(np.linalg.norm(G - fd) / scale))
    return worst
