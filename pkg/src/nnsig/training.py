"""Least-squares fitting of MLPs by deterministic mini-batch gradient descent.

The objective is the mean of 0.5*(y_i - f(x_i))^2. Batch order, summation
order and initialization are all fixed by the seed, so two runs with the same
inputs produce bit-identical networks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, DivergenceError, InputError
from .network import (
    Network,
    MomentCertificate,
    _ACTIVATIONS,
    forward_batch,
    init_glorot,
    second_moment,
)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    batch_size: int = 64
    learning_rate: float = 0.5
    lr_decay: float = 0.999
    seed: int = 0
    tolerance: float = 1e-8  # early stop on relative loss improvement
    max_grad_norm: float = 10.0
    moment_bound: float = 100.0
    early_stop_window: int = 10

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ConfigurationError("epochs and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if not (0.0 < self.lr_decay <= 1.0):
            raise ConfigurationError("lr_decay must be in (0, 1]")
        if self.tolerance <= 0 or self.max_grad_norm <= 0:
            raise ConfigurationError("tolerance and max_grad_norm must be positive")
        if self.early_stop_window < 1:
            raise ConfigurationError("early_stop_window must be positive")


@dataclass(frozen=True)
class ArchSpec:
    """Architecture request: width None means the automatic schedule."""

    depth: int = 2
    width: int | None = None
    activation: str = "sigmoid"
    width_c: float = 1.0

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigurationError("depth must be at least 1")
        if self.width is not None and self.width < 1:
            raise ConfigurationError("width must be positive")


@dataclass
class FittedModel:
    net: Network
    train_loss_history: list
    final_empirical_risk: float
    width_used: int
    moment: MomentCertificate


def quadratic_loss(net: Network, X, y) -> float:
    """Mean of 0.5*(y_i - f(x_i))^2."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(X) != len(y) or len(y) == 0:
        raise InputError(f"X has {len(X)} rows but y has {len(y)} entries")
    r = y - forward_batch(net, X)
    return 0.5 * math.fsum(r * r) / len(y)


def width_schedule(n: int, depth: int = 2, lipschitz_l: float = 1.0, c: float = 1.0) -> int:
    """H_n = max(2, ceil(c * n^(1/4))), which keeps H_n * L^depth / sqrt(n) -> 0
    for any fixed depth."""
    if n < 2:
        raise ConfigurationError("need at least 2 samples")
    return max(2, math.ceil(c * n ** 0.25))


def _batch_gradients(weights, biases, psi, dpsi, xb, yb):
    """Backprop for the mean 0.5*(y - f)^2 over one batch.

    Returns (grads_w, grads_b, sq_norm) with the squared global gradient norm.
    """
    acts = [xb]
    derivs = []
    a = xb
    for w, b in zip(weights[:-1], biases[:-1]):
        z = a @ w.T + b
        derivs.append(dpsi(z))
        a = psi(z)
        acts.append(a)
    out = (a @ weights[-1].T + biases[-1])[:, 0]
    e = (out - yb) / len(yb)

    grads_w = [None] * len(weights)
    grads_b = [None] * len(weights)
    grads_w[-1] = (e @ acts[-1])[None, :]
    grads_b[-1] = np.array([e.sum()])
    delta = np.outer(e, weights[-1][0])
    for l in range(len(weights) - 2, -1, -1):
        delta = delta * derivs[l]
        grads_w[l] = delta.T @ acts[l]
        grads_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = delta @ weights[l]

    sq = 0.0
    for gw, gb in zip(grads_w, grads_b):
        sq += float((gw * gw).sum()) + float((gb * gb).sum())
    return grads_w, grads_b, sq


def fit_least_squares(dataset, arch_spec: ArchSpec, cfg: TrainConfig) -> FittedModel:
    """Fit the network class to (X, y) by seeded mini-batch gradient descent.

    The loss history holds the full-sample quadratic loss after each epoch.
    Stops early once the window-averaged relative improvement falls below
    ``cfg.tolerance``.
    """
    X = np.asarray(dataset.X, dtype=np.float64)
    y = np.asarray(dataset.y, dtype=np.float64)
    n, d = X.shape
    if cfg.batch_size > n:
        raise ConfigurationError(f"batch_size {cfg.batch_size} exceeds sample size {n}")

    width = arch_spec.width
    if width is None:
        width = width_schedule(n, arch_spec.depth, c=arch_spec.width_c)
    dims = (d,) + (width,) * arch_spec.depth + (1,)

    ss = np.random.SeedSequence(cfg.seed & (2 ** 63 - 1))
    init_ss, shuffle_ss = ss.spawn(2)
    net0 = init_glorot(dims, arch_spec.activation, init_ss)
    weights = [w.copy() for w in net0.weights]
    biases = [b.copy() for b in net0.biases]
    psi, dpsi, _ = _ACTIVATIONS[arch_spec.activation]

    rng = np.random.Generator(np.random.PCG64(shuffle_ss))
    lr = cfg.learning_rate
    history = []
    best = None
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            gw, gb, sq = _batch_gradients(weights, biases, psi, dpsi, X[idx], y[idx])
            if not np.isfinite(sq):
                raise DivergenceError(
                    f"non-finite gradient at epoch {epoch}, learning rate {lr:.6g}"
                )
            scale = lr
            norm = math.sqrt(sq)
            if norm > cfg.max_grad_norm:
                scale = lr * cfg.max_grad_norm / norm
            for l in range(len(weights)):
                weights[l] -= scale * gw[l]
                biases[l] -= scale * gb[l]
        lr *= cfg.lr_decay

        net = Network(dims, tuple(w.copy() for w in weights), tuple(b.copy() for b in biases),
                      arch_spec.activation)
        loss = quadratic_loss(net, X, y)
        if not np.isfinite(loss):
            raise DivergenceError(
                f"non-finite loss at epoch {epoch}, learning rate {lr:.6g}"
            )
        history.append(loss)
        if best is None or loss < best[0]:
            best = (loss, [w.copy() for w in weights], [b.copy() for b in biases])
        # plateau check: averaging over the window irons out mini-batch wiggle
        w = cfg.early_stop_window
        if len(history) >= 2 * w:
            prior = math.fsum(history[-2 * w : -w]) / w
            recent = math.fsum(history[-w:]) / w
            if prior > 0 and recent > prior * (1.0 - cfg.tolerance):
                break

    # return the best epoch's weights: the last epoch can sit on a
    # mini-batch wiggle when the learning rate is still large
    net = Network(dims, tuple(best[1]), tuple(best[2]), arch_spec.activation)
    return FittedModel(
        net=net,
        train_loss_history=history,
        final_empirical_risk=best[0],
        width_used=width,
        moment=second_moment(net, X, cfg.moment_bound),
    )
