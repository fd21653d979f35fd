"""Monte-Carlo diagnostics: Rademacher complexity estimates, localization,
and empirical scaling experiments for complexity and approximation error.

The supremum over the network class is approximated by a max over a finite
sample of networks, so every estimate here is a lower bound on the population
quantity; the scaling laws are still testable.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .data import Dataset, TargetSpec, generate, split
from .exceptions import ConfigurationError, DivergenceError
from .network import Network, activation_lipschitz, forward_batch, init_glorot
from .training import ArchSpec, TrainConfig, fit_least_squares


@dataclass
class RademacherEstimate:
    value: float
    n: int
    n_eps: int
    n_class: int
    std_error: float


@dataclass
class RateReport:
    x_values: list
    errors: list
    log_log_slope: float
    slope_stderr: float


def loglog_slope(x_values, errors):
    """OLS slope of log(error) on log(x) plus its standard error."""
    lx = np.log(np.asarray(x_values, dtype=np.float64))
    ly = np.log(np.asarray(errors, dtype=np.float64))
    if lx.size < 3:
        raise ConfigurationError("need at least 3 points for a slope estimate")
    xbar = lx.mean()
    sxx = float(((lx - xbar) ** 2).sum())
    slope = float(((lx - xbar) * (ly - ly.mean())).sum() / sxx)
    intercept = float(ly.mean() - slope * xbar)
    resid = ly - (intercept + slope * lx)
    dof = lx.size - 2
    stderr = math.sqrt(float((resid ** 2).sum()) / dof / sxx) if dof > 0 else 0.0
    return slope, stderr


def glorot_class_sampler(layer_dims, activation: str):
    """Return a sampler(count, seed) producing truncated-Glorot networks."""

    def sampler(count: int, seed) -> list:
        ss = seed if isinstance(seed, np.random.SeedSequence) else \
            np.random.SeedSequence(int(seed) & (2 ** 63 - 1))
        children = ss.spawn(count)
        return [init_glorot(layer_dims, activation, c) for c in children]

    return sampler


def _evaluate(fn, X: np.ndarray) -> np.ndarray:
    if isinstance(fn, Network):
        return forward_batch(fn, X)
    return np.asarray(fn(X), dtype=np.float64)


def estimate_rademacher(class_sampler, X, n_eps: int, n_class: int,
                        seed: int) -> RademacherEstimate:
    """Mean over n_eps Rademacher draws of max over n_class sampled functions
    of |(1/n) sum_i eps_i f(X_i)|; a lower bound on the class supremum."""
    if n_eps < 1 or n_class < 1:
        raise ConfigurationError("n_eps and n_class must be at least 1")
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    ss = np.random.SeedSequence(int(seed) & (2 ** 63 - 1))
    class_ss, eps_ss = ss.spawn(2)
    fns = class_sampler(n_class, class_ss)
    outputs = np.stack([_evaluate(f, X) for f in fns])  # (n_class, n)
    rng = np.random.Generator(np.random.PCG64(eps_ss))
    eps = rng.choice(np.array([-1.0, 1.0]), size=(n_eps, n))
    sups = np.abs(eps @ outputs.T / n).max(axis=1)  # (n_eps,)
    value = float(sups.mean())
    stderr = float(sups.std(ddof=1) / math.sqrt(n_eps)) if n_eps > 1 else 0.0
    return RademacherEstimate(value, n, n_eps, n_class, stderr)


def default_localization_radius(ref_net: Network, n: int) -> float:
    """r_n = H * L^depth / sqrt(n) from the reference network's architecture."""
    lip = activation_lipschitz(ref_net.activation)
    return ref_net.hidden_width * lip ** ref_net.depth / math.sqrt(n)


def localize(nets, ref_net: Network, X, r: float | None = None) -> list:
    """Keep networks with (1/n) sum (f(x_i) - ref(x_i))^2 <= r."""
    X = np.asarray(X, dtype=np.float64)
    if r is None:
        r = default_localization_radius(ref_net, X.shape[0])
    if r < 0:
        raise ConfigurationError("localization radius must be nonnegative")
    ref = forward_batch(ref_net, X)
    kept = []
    for f in nets:
        dist = float(np.mean((forward_batch(f, X) - ref) ** 2))
        if dist <= r:
            kept.append(f)
    return kept


def approximation_rate_experiment(target_spec: TargetSpec, widths, n: int,
                                  train_cfg: TrainConfig, seed: int,
                                  depth: int = 2, activation: str = "tanh",
                                  d: int = 2) -> RateReport:
    """Held-out RMSE of fitted networks against a noiseless target, per width.

    Uses a 50/50 split; widths whose training diverges are excluded from the
    regression with a warning.
    """
    widths = list(widths)
    if len(widths) < 3 or any(b <= a for a, b in zip(widths, widths[1:])):
        raise ConfigurationError("widths must be strictly increasing with >= 3 entries")
    dataset = generate(target_spec, n, d, seed)
    train, test = split(dataset, 0.5, seed + 1)

    xs, errs = [], []
    for width in widths:
        arch = ArchSpec(depth=depth, width=width, activation=activation)
        try:
            fitted = fit_least_squares(train, arch, train_cfg)
        except DivergenceError as exc:
            warnings.warn(f"width {width} diverged and is excluded: {exc}")
            continue
        pred = forward_batch(fitted.net, test.X)
        rmse = float(np.sqrt(np.mean((pred - test.y) ** 2)))
        xs.append(width)
        errs.append(rmse)
    slope, stderr = loglog_slope(xs, errs)
    return RateReport(x_values=xs, errors=errs, log_log_slope=slope, slope_stderr=stderr)


def complexity_scaling_experiment(layer_dims, n_list, seed: int,
                                  n_eps: int = 200, n_class: int = 50,
                                  activation: str = "sigmoid") -> RateReport:
    """Rademacher estimates for a fixed sampled class across sample sizes;
    the log-log slope should sit near -1/2."""
    n_list = list(n_list)
    if len(n_list) < 3 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ConfigurationError("n_list must be strictly increasing with >= 3 entries")
    sampler = glorot_class_sampler(layer_dims, activation)
    d = layer_dims[0]
    estimates = []
    for i, n in enumerate(n_list):
        data_rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(int(seed) & (2 ** 63 - 1), spawn_key=(2, i))))
        X = data_rng.uniform(-1.0, 1.0, (n, d))
        # same seed for every n keeps the sampled class fixed across the grid
        estimates.append(estimate_rademacher(sampler, X, n_eps, n_class, seed))
    errs = [e.value for e in estimates]
    slope, stderr = loglog_slope(n_list, errs)
    return RateReport(x_values=n_list, errors=errs, log_log_slope=slope, slope_stderr=stderr)
