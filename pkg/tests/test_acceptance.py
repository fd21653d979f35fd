"""Acceptance suite: nine end-to-end criteria covering gradients, the linear
identity, size and power of the full testing pipeline, complexity and
approximation scaling, covariance properties, scale invariance, and CLI
determinism.

Each test prints a single "criterion N ...: PASS/FAIL" line (run with ``-s``
to see them live). The Monte-Carlo studies (criteria 3 and 4) run 100
replications each across 4 worker processes and spot-check that parallel
results are bit-identical to serial ones.
"""

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest

from nnsig.cli import main as cli_main
from nnsig.data import TargetSpec, generate
from nnsig.diagnostics import (
    complexity_scaling_experiment,
    estimate_rademacher,
    approximation_rate_experiment,
)
from nnsig.network import forward, init_glorot, input_gradient, linear_network
from nnsig.nulldist import NullConfig, empirical_covariance, sample_networks, shrink, significance_test
from nnsig.significance import all_statistics
from nnsig.training import ArchSpec, TrainConfig, fit_least_squares


def verdict(num: int, name: str, ok: bool, detail: str = "") -> None:
    print(f"criterion {num} ({name}): {'PASS' if ok else 'FAIL'} {detail}".rstrip())
    assert ok, f"criterion {num} ({name}) failed: {detail}"


def min_abs_preactivation(net, x):
    """Smallest |pre-activation| across hidden units; kink proximity for relu."""
    from nnsig.network import _ACTIVATIONS

    psi = _ACTIVATIONS[net.activation][0]
    a, worst = x, np.inf
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        z = w @ a + b
        worst = min(worst, float(np.abs(z).min()))
        a = psi(z)
    return worst


def test_criterion_1_gradient_oracle():
    t0 = time.perf_counter()
    h = 1e-5
    rng = np.random.default_rng(101)

    def max_rel_error(activation, n_cases, kink_margin=None):
        worst = 0.0
        done = 0
        trial = 0
        while done < n_cases:
            net = init_glorot((4, 6, 6, 1), activation, 7000 + trial)
            x = rng.uniform(-1, 1, 4)
            trial += 1
            if kink_margin is not None and min_abs_preactivation(net, x) <= kink_margin:
                continue
            g = input_gradient(net, x)
            fd = np.array([
                (forward(net, x + h * e) - forward(net, x - h * e)) / (2 * h)
                for e in np.eye(4)
            ])
            denom = max(np.linalg.norm(g), np.linalg.norm(fd), 1e-12)
            worst = max(worst, float(np.linalg.norm(g - fd) / denom))
            done += 1
        return worst

    tanh_err = max_rel_error("tanh", 100)
    relu_err = max_rel_error("relu", 100, kink_margin=1e-3)
    elapsed = time.perf_counter() - t0
    ok = tanh_err < 1e-5 and relu_err < 1e-4 and elapsed < 10.0
    verdict(1, "gradient finite-difference oracle", ok,
            f"tanh={tanh_err:.3g} relu={relu_err:.3g} time={elapsed:.1f}s")


def test_criterion_2_linear_identity():
    t0 = time.perf_counter()
    net = linear_network([2.0, 0.0, 1.0], 0.5)
    worst = 0.0
    for seed in range(5):
        X = np.random.default_rng(seed).uniform(-1, 1, (200, 3))
        stats = [s.raw for s in all_statistics(net, X)]
        worst = max(worst, float(np.abs(np.array(stats) - [4.0, 0.0, 1.0]).max()))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 1.0
    verdict(2, "linear-case identity (4, 0, 1)", ok,
            f"max_abs_err={worst:.3g} time={elapsed:.2f}s")


# ---------------------------------------------------------------------------
# criteria 3 and 4: Monte-Carlo size and power of the full pipeline
# ---------------------------------------------------------------------------

N_REPS = 100
ALPHA = 0.05


def pipeline_p_value(args):
    """One replication: generate d=3, n=2000 data, fit, test variable 1."""
    rep, active = args
    base = TargetSpec(kind="linear", beta=(1.0, 1.0, 1.0))
    if active:
        spec = TargetSpec(kind="linear", beta=(1.0, 1.0, 1.0), noise_sigma=0.1)
    else:
        spec = TargetSpec(kind="null_variable", base=base, dead_index=1,
                          noise_sigma=0.1)
    ds = generate(spec, 2000, 3, seed=10_000 + rep)
    fitted = fit_least_squares(ds, ArchSpec(), TrainConfig(seed=20_000 + rep))
    res = significance_test(fitted, ds, 1,
                            NullConfig(m=200, n_p=500, seed=30_000 + rep))
    return res.p_value


def run_study(active: bool):
    args = [(rep, active) for rep in range(N_REPS)]
    with ProcessPoolExecutor(max_workers=4) as pool:
        return list(pool.map(pipeline_p_value, args, chunksize=5))


@pytest.fixture(scope="module")
def size_p_values():
    return run_study(active=False)


def test_criterion_3_size(size_p_values):
    rate = sum(p <= ALPHA for p in size_p_values) / N_REPS
    # spot-check that 4-way parallel replication is bit-identical to serial
    serial = [pipeline_p_value((rep, False)) for rep in (0, 17, 50, 99)]
    identical = all(size_p_values[rep] == s
                    for rep, s in zip((0, 17, 50, 99), serial))
    ok = 0.00 <= rate <= 0.12 and identical
    verdict(3, "size calibration under the null", ok,
            f"rejection_rate={rate:.2f} parallel_matches_serial={identical}")


def test_criterion_4_power():
    p_values = run_study(active=True)
    rate = sum(p <= ALPHA for p in p_values) / N_REPS
    ok = rate >= 0.90
    verdict(4, "power with an active variable", ok, f"rejection_rate={rate:.2f}")


def test_criterion_5_rademacher_scaling():
    report = complexity_scaling_experiment((3, 8, 8, 1), [250, 1000, 4000], seed=12)
    slope_ok = -0.7 <= report.log_log_slope <= -0.3

    n = 1000
    est = estimate_rademacher(lambda c, s: [lambda X: np.ones(len(X))],
                              np.zeros((n, 1)), 3000, 1, seed=3)
    target = math.sqrt(2.0 / (math.pi * n))
    singleton_ok = abs(est.value - target) <= 3 * est.std_error
    ok = slope_ok and singleton_ok
    verdict(5, "Rademacher complexity scaling", ok,
            f"slope={report.log_log_slope:.3f} "
            f"singleton_gap={abs(est.value - target):.2e} (3se={3 * est.std_error:.2e})")


def test_criterion_6_approximation_rate():
    spec = TargetSpec(kind="smooth_sin", frequency=(1.0, 0.0), noise_sigma=0.0)
    cfg = TrainConfig(epochs=5000, batch_size=256, learning_rate=0.05,
                      lr_decay=0.9995, tolerance=1e-6, early_stop_window=100,
                      seed=0)
    report = approximation_rate_experiment(spec, [4, 8, 16, 32], 4000, cfg,
                                           seed=21, depth=2, activation="tanh", d=2)
    upper = report.log_log_slope + 2 * report.slope_stderr
    ok = len(report.x_values) == 4 and upper < 0.0
    verdict(6, "approximation error decreases with width", ok,
            f"slope={report.log_log_slope:.3f} upper_bound={upper:.3f} "
            f"rmse={[round(e, 4) for e in report.errors]}")


def test_criterion_7_covariance_properties():
    rng = np.random.default_rng(77)
    sym_ok = psd_ok = shrink_ok = True
    for trial in range(50):
        nets = sample_networks(6, (3, 5, 5, 1), "sigmoid", seed=trial)
        X = rng.uniform(-1, 1, (60, 3))
        cov = empirical_covariance(nets, X)
        s = cov.entries
        sym_ok &= float(np.abs(s - s.T).max()) <= 1e-12
        z = rng.standard_normal((1000, 6))
        psd_ok &= float(np.einsum("ij,jk,ik->i", z, s, z).min()) >= -1e-10
        half = shrink(cov, 0.5).entries
        off = ~np.eye(6, dtype=bool)
        shrink_ok &= np.array_equal(half[off], 0.5 * s[off])
        shrink_ok &= np.array_equal(np.diag(half), np.diag(s))
    ok = sym_ok and psd_ok and shrink_ok
    verdict(7, "covariance symmetry, PSD, exact shrinkage", ok,
            f"symmetric={sym_ok} psd={psd_ok} shrinkage_exact={shrink_ok}")


def test_criterion_8_sigma_scale_invariance():
    spec = TargetSpec(kind="linear", beta=(1.0, 0.0), noise_sigma=0.1)
    ds = generate(spec, 400, 2, seed=8)
    fitted = fit_least_squares(ds, ArchSpec(width=5), TrainConfig(epochs=60, seed=8))
    ok = True
    details = []
    for j in range(2):
        raw = significance_test(fitted, ds, j, NullConfig(m=40, n_p=200, seed=5))
        scaled = significance_test(
            fitted, ds, j, NullConfig(m=40, n_p=200, seed=5, sigma_scale="four_sigma2"))
        ok &= raw.p_value == scaled.p_value
        ok &= raw.null_samples == scaled.null_samples
        details.append(f"var{j}: {raw.p_value:.4g}=={scaled.p_value:.4g}")
    verdict(8, "raw vs four_sigma2 p-values bit-identical", ok, " ".join(details))


def test_criterion_9_cli_determinism(tmp_path):
    def config(out_dir, workers):
        return {
            "seed": 42,
            "output": {"dir": str(out_dir)},
            "data": {
                "generator": {"kind": "linear", "beta": [1.0, 0.0],
                              "noise_sigma": 0.1, "n": 300, "d": 2}
            },
            "architecture": {"width": 5},
            "training": {"epochs": 40, "batch_size": 50},
            "test": {"m": 30, "n_p": 100, "workers": workers},
        }

    reports = []
    for name, workers in (("run1", 1), ("run2", 1), ("run4", 4)):
        cfg_path = tmp_path / f"{name}.json"
        cfg_path.write_text(json.dumps(config(tmp_path / name, workers)),
                            encoding="utf-8")
        assert cli_main(["test", "--config", str(cfg_path)]) == 0
        reports.append(json.loads((tmp_path / name / "report.json").read_text()))

    def numeric_blob(report):
        return json.dumps({"results": report["results"], "fitted": report["fitted"]},
                          sort_keys=True)

    blobs = [numeric_blob(r) for r in reports]
    ok = blobs[0] == blobs[1] == blobs[2]
    verdict(9, "CLI test command deterministic (incl. 4 workers)", ok,
            f"rerun_identical={blobs[0] == blobs[1]} "
            f"parallel_identical={blobs[0] == blobs[2]}")
