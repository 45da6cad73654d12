"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .layers import Parameter
from .network import Network

FLOOR = 1e-8


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), FLOOR)


def check_parameters(params: dict[str, Parameter], loss: Callable[[], float],
                     analytic: dict[str, np.ndarray], h: float = 1e-5,
                     max_entries: int | None = 24, seed: int = 0) -> dict[str, float]:
    """Worst relative error per parameter, comparing ``analytic`` to central differences of ``loss``.

    Frozen parameters are skipped. For tensors larger than ``max_entries`` a
    seeded random subset of entries is probed.
    """
    rng = np.random.default_rng(seed)
    report = {}
    for name, p in params.items():
        if p.frozen:
            continue
        flat = p.data.reshape(-1)
        g = np.asarray(analytic.get(name, np.zeros_like(p.data))).reshape(-1)
        if max_entries is None or flat.size <= max_entries:
            idx = np.arange(flat.size)
        else:
            idx = np.sort(rng.choice(flat.size, max_entries, replace=False))
        worst = 0.0
        for i in idx:
            old = flat[i]
            flat[i] = old + h
            fp = loss()
            flat[i] = old - h
            fm = loss()
            flat[i] = old
            worst = max(worst, relative_error(g[i], (fp - fm) / (2 * h)))
        report[name] = worst
    return report


LossFn = Callable[[np.ndarray], tuple[float, np.ndarray]]


def grad_check_report(network: Network, loss_fn: LossFn, x: np.ndarray, h: float = 1e-5,
                      max_entries: int | None = 24, seed: int = 0,
                      check_input: bool = True) -> dict[str, float]:
    """Per-parameter (and ``"input"``) worst relative error for ``loss_fn(network(x))``."""
    x = np.array(x, dtype=np.float64)
    out, ctxs = network.forward(x, train=True)
    _, dout = loss_fn(out)
    dx, grads = network.backward(dout, ctxs)

    def loss():
        return loss_fn(network.forward(x, train=True)[0])[0]

    report = check_parameters(network.named_parameters(), loss, grads, h, max_entries, seed)
    if check_input:
        holder = {"input": Parameter(x)}
        x_view = holder["input"].data

        def loss_x():
            return loss_fn(network.forward(x_view, train=True)[0])[0]

        report.update(check_parameters(holder, loss_x, {"input": dx}, h, max_entries, seed))
    return report


def grad_check(network: Network, loss_fn: LossFn, x: np.ndarray, **kw) -> float:
    """Max relative error between analytic and numeric gradients."""
    report = grad_check_report(network, loss_fn, x, **kw)
    return max(report.values()) if report else 0.0


def squared_loss(target: np.ndarray) -> LossFn:
    def fn(out):
        diff = out - target
        return 0.5 * float(np.sum(diff * diff)), diff
    return fn


def projection_loss(weights: np.ndarray) -> LossFn:
    """Linear functional sum(out * weights): gives every output a distinct, O(1) gradient."""
    def fn(out):
        return float(np.sum(out * weights)), weights
    return fn
