"""Command-line entry point: generate, train, test, diagnose.

All commands take ``--config <path>`` pointing at a single JSON file that
fully determines the run; ``--seed`` and ``--out`` override the master seed
and output directory. Exit codes: 0 success, 2 configuration error, 3 data
error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .data import Dataset, TargetSpec, generate, load_csv, save_csv
from .exceptions import ConfigurationError, InputError, NumericalError
from .diagnostics import approximation_rate_experiment, complexity_scaling_experiment
from .network import load as load_network, save as save_network
from .nulldist import NullConfig, significance_test
from .significance import RateConstants, StatConfig
from .training import ArchSpec, TrainConfig, fit_least_squares, quadratic_loss


def _load_config(path, seed_override=None, out_override=None) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigurationError("config root must be a JSON object")
    if seed_override is not None:
        cfg["seed"] = seed_override
    if out_override is not None:
        cfg.setdefault("output", {})["dir"] = out_override
    cfg.setdefault("seed", 0)
    cfg.setdefault("output", {})
    return cfg


def _out_path(cfg: dict, key: str, default: str) -> Path:
    out = cfg.get("output", {})
    base = Path(out.get("dir", "."))
    base.mkdir(parents=True, exist_ok=True)
    return base / out.get(key, default)


def _target_spec(gen: dict) -> TargetSpec:
    kind = gen.get("kind")
    if kind is None:
        raise ConfigurationError("generator section needs a 'kind'")
    base = _target_spec(gen["base"]) if "base" in gen and gen["base"] else None
    try:
        return TargetSpec(
            kind=kind,
            beta=tuple(gen["beta"]) if "beta" in gen else None,
            intercept=float(gen.get("intercept", 0.0)),
            frequency=tuple(gen["frequency"]) if "frequency" in gen else None,
            base=base,
            dead_index=gen.get("dead_index"),
            noise_sigma=float(gen.get("noise_sigma", 0.0)),
        )
    except (TypeError, KeyError) as exc:
        raise ConfigurationError(f"bad generator section: {exc}") from None


def _dataset_from_config(cfg: dict) -> Dataset:
    data = cfg.get("data")
    if not isinstance(data, dict):
        raise ConfigurationError("missing 'data' section")
    has_path = "path" in data
    has_gen = "generator" in data
    if has_path == has_gen:
        raise ConfigurationError("exactly one of data.path / data.generator must be set")
    if has_path:
        return load_csv(data["path"], data.get("target_column", "y"))
    gen = data["generator"]
    n = gen.get("n")
    d = gen.get("d")
    if n is None or d is None:
        raise ConfigurationError("data.generator needs 'n' and 'd'")
    return generate(_target_spec(gen), int(n), int(d), int(cfg["seed"]))


def _arch_spec(cfg: dict) -> ArchSpec:
    arch = cfg.get("architecture", {})
    width = arch.get("width", "auto")
    if width == "auto":
        width = None
    return ArchSpec(
        depth=int(arch.get("depth", 2)),
        width=None if width is None else int(width),
        activation=arch.get("activation", "sigmoid"),
        width_c=float(arch.get("width_c", 1.0)),
    )


def _train_config(cfg: dict) -> TrainConfig:
    tr = cfg.get("training", {})
    return TrainConfig(
        epochs=int(tr.get("epochs", 300)),
        batch_size=int(tr.get("batch_size", 64)),
        learning_rate=float(tr.get("learning_rate", 0.5)),
        lr_decay=float(tr.get("lr_decay", 0.999)),
        seed=int(tr.get("seed", cfg["seed"])),
        tolerance=float(tr.get("tolerance", 1e-8)),
        max_grad_norm=float(tr.get("max_grad_norm", 10.0)),
        moment_bound=float(tr.get("moment_bound", 100.0)),
    )


def _stat_config(test: dict) -> StatConfig:
    mode = test.get("normalization_mode", "identity")
    rc = None
    if mode == "rate":
        raw = test.get("rate_constants")
        if not isinstance(raw, dict):
            raise ConfigurationError("rate normalization requires test.rate_constants")
        try:
            rc = RateConstants(
                h_n=int(raw["h_n"]),
                lipschitz=float(raw["lipschitz"]),
                depth=int(raw["depth"]),
                s_over_d=float(raw["s_over_d"]),
                c_prime=float(raw.get("c_prime", 1.0)),
            )
        except KeyError as exc:
            raise ConfigurationError(f"rate_constants missing {exc}") from None
    return StatConfig(normalization_mode=mode, rate_constants=rc)


def _null_config(test: dict, master_seed: int) -> NullConfig:
    return NullConfig(
        m=int(test.get("m", 200)),
        n_p=int(test.get("n_p", 1000)),
        lambda_shrink=float(test.get("lambda_shrink", 0.0)),
        alpha_adapt=float(test.get("alpha_adapt", 0.0)),
        m_max=int(test.get("m_max", 1000)),
        adapt_tol=float(test.get("adapt_tol", 0.01)),
        sigma_scale=test.get("sigma_scale", "raw"),
        seed=int(test.get("seed", master_seed)),
    )


def _fitted_summary(fitted) -> dict:
    return {
        "width": fitted.width_used,
        "depth": fitted.net.depth,
        "activation": fitted.net.activation,
        "layer_dims": list(fitted.net.layer_dims),
        "final_risk": fitted.final_empirical_risk,
        "epochs_run": len(fitted.train_loss_history),
        "moment": {
            "second_moment": fitted.moment.second_moment,
            "bound_m": fitted.moment.bound_m,
            "satisfied": fitted.moment.satisfied,
        },
    }


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_generate(cfg: dict) -> int:
    data = cfg.get("data", {})
    if "generator" not in data:
        raise ConfigurationError("generate needs a data.generator section")
    dataset = _dataset_from_config(cfg)
    path = _out_path(cfg, "dataset", "dataset.csv")
    save_csv(dataset, path)
    print(f"wrote {dataset.n} rows, {dataset.d} covariates to {path}")
    return 0


def _fit(cfg: dict, dataset: Dataset):
    return fit_least_squares(dataset, _arch_spec(cfg), _train_config(cfg))


def cmd_train(cfg: dict) -> int:
    dataset = _dataset_from_config(cfg)
    fitted = _fit(cfg, dataset)
    model_path = _out_path(cfg, "model", "model.nnsig")
    save_network(fitted.net, model_path)

    history_path = _out_path(cfg, "loss_history", "loss_history.csv")
    with open(history_path, "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        for i, loss in enumerate(fitted.train_loss_history):
            fh.write(f"{i},{loss!r}\n")

    summary = {
        "version": __version__,
        "master_seed": cfg["seed"],
        "fitted": _fitted_summary(fitted),
        "model_path": str(model_path),
        "loss_history_path": str(history_path),
    }
    _write_json(_out_path(cfg, "train_summary", "train_summary.json"), summary)
    print(f"trained width={fitted.width_used} final_risk={fitted.final_empirical_risk:.6g}")
    return 0


def cmd_test(cfg: dict) -> int:
    t0 = time.perf_counter()
    dataset = _dataset_from_config(cfg)
    test = cfg.get("test", {})

    model_path = _out_path(cfg, "model", "model.nnsig")
    if model_path.is_file():
        net = load_network(model_path)
        if net.input_dim != dataset.d:
            raise InputError(
                f"model expects dimension {net.input_dim}, data has {dataset.d}"
            )
        risk = quadratic_loss(net, dataset.X, dataset.y)
        from .network import second_moment
        from .training import FittedModel
        fitted = FittedModel(
            net=net,
            train_loss_history=[risk],
            final_empirical_risk=risk,
            width_used=net.hidden_width,
            moment=second_moment(net, dataset.X),
        )
    else:
        fitted = _fit(cfg, dataset)

    variables = test.get("variables")
    if variables is None:
        variables = list(range(dataset.d))
    for j in variables:
        if not (0 <= j < dataset.d):
            raise ConfigurationError(f"variable index {j} out of range for d={dataset.d}")

    stat_cfg = _stat_config(test)
    null_cfg = _null_config(test, int(cfg["seed"]))
    workers = int(test.get("workers", 1))

    results = []
    for j in variables:
        res = significance_test(fitted, dataset, j, null_cfg, stat_cfg, workers)
        entry = {
            "variable_index": res.variable_index,
            "observed_raw": res.observed.raw,
            "observed_normalized": res.observed.normalized,
            "p_value": res.p_value,
            "m_final": res.m_final,
            "seed": res.seed,
        }
        if test.get("include_null_samples", True):
            entry["null_samples"] = res.null_samples
        results.append(entry)
        if test.get("null_samples_csv"):
            sidecar = _out_path(cfg, "null_samples_csv_prefix", "null_samples") \
                .with_name(f"null_samples_var{j}.csv")
            with open(sidecar, "w", encoding="utf-8") as fh:
                fh.write("sample\n")
                for v in res.null_samples:
                    fh.write(f"{v!r}\n")

    report = {
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "master_seed": cfg["seed"],
        "config_echo": cfg,
        "fitted": _fitted_summary(fitted),
        "flags": {
            "normalization_mode": stat_cfg.normalization_mode,
            "sigma_scale": null_cfg.sigma_scale,
            "glorot_truncation": "plus_minus_2_sigma_resample",
        },
        "results": results,
        "timings": {"wall_seconds": time.perf_counter() - t0},
    }
    report_path = _out_path(cfg, "report", "report.json")
    _write_json(report_path, report)
    for entry in results:
        print(f"variable {entry['variable_index']}: p={entry['p_value']:.4g}")
    print(f"wrote {report_path}")
    return 0


def cmd_diagnose(cfg: dict) -> int:
    t0 = time.perf_counter()
    diag = cfg.get("diagnostics", {})
    out = {}
    seed = int(cfg["seed"])

    comp = diag.get("complexity")
    if comp:
        width = int(comp.get("width", 8))
        depth = int(comp.get("depth", 2))
        d = int(comp.get("d", 3))
        dims = (d,) + (width,) * depth + (1,)
        report = complexity_scaling_experiment(
            dims,
            [int(v) for v in comp.get("n_list", [250, 1000, 4000])],
            seed,
            n_eps=int(comp.get("n_eps", 200)),
            n_class=int(comp.get("n_class", 50)),
            activation=comp.get("activation", "sigmoid"),
        )
        out["complexity"] = {
            "n_values": report.x_values,
            "estimates": report.errors,
            "log_log_slope": report.log_log_slope,
            "slope_stderr": report.slope_stderr,
        }
        csv_path = _out_path(cfg, "complexity_csv", "complexity.csv")
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write("n,estimate\n")
            for x, e in zip(report.x_values, report.errors):
                fh.write(f"{x},{e!r}\n")

    approx = diag.get("approximation")
    if approx:
        d = int(approx.get("d", 2))
        spec = TargetSpec(
            kind="smooth_sin",
            frequency=tuple(approx.get("frequency", [1.0] + [0.0] * (d - 1))),
            noise_sigma=0.0,
        )
        tr = approx.get("training", {})
        train_cfg = TrainConfig(
            epochs=int(tr.get("epochs", 5000)),
            batch_size=int(tr.get("batch_size", 256)),
            learning_rate=float(tr.get("learning_rate", 0.05)),
            lr_decay=float(tr.get("lr_decay", 0.9995)),
            tolerance=float(tr.get("tolerance", 1e-6)),
            early_stop_window=int(tr.get("early_stop_window", 100)),
            seed=seed,
        )
        report = approximation_rate_experiment(
            spec,
            [int(v) for v in approx.get("widths", [4, 8, 16, 32])],
            int(approx.get("n", 4000)),
            train_cfg,
            seed,
            depth=int(approx.get("depth", 2)),
            activation=approx.get("activation", "tanh"),
            d=d,
        )
        out["approximation"] = {
            "widths": report.x_values,
            "rmse": report.errors,
            "log_log_slope": report.log_log_slope,
            "slope_stderr": report.slope_stderr,
        }
        csv_path = _out_path(cfg, "approximation_csv", "approximation.csv")
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write("width,rmse\n")
            for x, e in zip(report.x_values, report.errors):
                fh.write(f"{x},{e!r}\n")

    payload = {
        "version": __version__,
        "master_seed": cfg["seed"],
        "config_echo": cfg,
        "diagnostics": out,
        "timings": {"wall_seconds": time.perf_counter() - t0},
    }
    path = _out_path(cfg, "diagnostics_report", "diagnostics.json")
    _write_json(path, payload)
    print(f"wrote {path}")
    return 0


_COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "test": cmd_test,
    "diagnose": cmd_diagnose,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nnsig",
        description="Input-variable significance testing for least-squares MLPs.",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="path to the JSON run config")
    parser.add_argument("--seed", type=int, default=None, help="override the master seed")
    parser.add_argument("--out", default=None, help="override the output directory")
    args = parser.parse_args(argv)

    try:
        cfg = _load_config(args.config, args.seed, args.out)
        return _COMMANDS[args.command](cfg)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except InputError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
