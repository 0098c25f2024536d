"""Central finite-difference verification of analytic gradients.

The probe loss is sum(R * net(x)) with a fixed random weighting R, accumulated
in float64 so the comparison measures the network's gradients rather than the
reduction. Relative error uses max(|analytic| + |numeric|, 1) as denominator,
which degrades to an absolute test for sub-unit gradients.

Networks containing ReLU kinks invalidate finite differences when a
pre-activation sits within h of zero; ``draw_input_clear_of_kinks`` resamples
inputs until every pre-activation is safely away from the kink.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .layers import Sequential


def relative_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    a = analytic.astype(np.float64)
    n = numeric.astype(np.float64)
    return np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), 1.0)


def _probe_loss(net: Sequential, x: np.ndarray, weights: np.ndarray) -> float:
    y, _ = net.forward(x, keep=False)
    return float(np.sum(weights.astype(np.float64) * y.astype(np.float64)))


def _numeric_vs_analytic(loss_fn, arr: np.ndarray, analytic: np.ndarray, h: float) -> float:
    numeric = np.zeros(arr.size, np.float64)
    flat = arr.reshape(-1)
    for i in range(flat.size):
        orig = flat[i].copy()
        flat[i] = orig + h
        hp = float(flat[i]) - float(orig)  # the perturbation actually representable
        lp = loss_fn()
        flat[i] = orig - h
        hm = float(orig) - float(flat[i])
        lm = loss_fn()
        flat[i] = orig
        numeric[i] = (lp - lm) / (hp + hm)
    return float(relative_errors(analytic.reshape(-1), numeric).max())


def finite_difference_check(net: Sequential, x: np.ndarray, weights: np.ndarray,
                            h: float) -> float:
    """Max relative error between analytic and central-difference gradients of
    the probe loss, over the input and every parameter tensor."""
    y, caches = net.forward(x)
    if y.shape != weights.shape:
        raise ShapeError(f"probe weights {weights.shape} do not match output {y.shape}")
    net.zero_grads()
    dx = net.backward(caches, weights.astype(x.dtype, copy=False))

    worst = _numeric_vs_analytic(lambda: _probe_loss(net, x, weights), x, dx, h)
    analytic_grads = {k: g.copy() for k, g in net.grads().items()}
    for name, p in net.params().items():
        err = _numeric_vs_analytic(lambda: _probe_loss(net, x, weights), p,
                                   analytic_grads[name], h)
        worst = max(worst, err)
    return worst


def draw_input_clear_of_kinks(net: Sequential, sampler, h: float,
                              margin: float = 20.0, attempts: int = 100) -> np.ndarray:
    for _ in range(attempts):
        x = sampler()
        _, caches = net.forward(x)
        if net.kink_margin(caches) >= margin * h:
            return x
    raise RuntimeError("could not draw an input clear of activation kinks")
