"""Synthetic data generation on [-1,1]^d and CSV ingestion with rescaling.

Synthetic responses follow y = f(x) + eps with x uniform on the cube and
eps a centered normal truncated at +/-4 sigma, so |y| stays bounded by
sup|f| + 4 sigma. Real CSV covariates are affinely rescaled per column to
[-1,1] and the transform is recorded on the dataset.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, IngestionError, InputError


@dataclass
class Dataset:
    X: np.ndarray  # (n, d), entries in [-1, 1]
    y: np.ndarray  # (n,)
    rescale_transform: list | None = None  # per-column (center, half_range)
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class TargetSpec:
    """Regression target. Kinds:

    - "linear": f(x) = beta . x + intercept
    - "smooth_sin": f(x) = sum over k with frequency[k] != 0 of sin(pi * frequency[k] * x_k)
    - "null_variable": evaluate ``base`` with coordinate ``dead_index`` forced
      to 0, so df/dx_j vanishes identically.
    """

    kind: str
    beta: tuple | None = None
    intercept: float = 0.0
    frequency: tuple | None = None
    base: "TargetSpec | None" = None
    dead_index: int | None = None
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("linear", "smooth_sin", "null_variable"):
            raise ConfigurationError(f"unknown target kind {self.kind!r}")
        if self.kind == "null_variable" and (self.base is None or self.dead_index is None):
            raise ConfigurationError("null_variable needs a base spec and a dead index")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be nonnegative")

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        if self.kind == "linear":
            beta = np.asarray(self.beta, dtype=np.float64)
            if beta.size != X.shape[1]:
                raise ConfigurationError(
                    f"beta has length {beta.size}, data has dimension {X.shape[1]}"
                )
            return X @ beta + self.intercept
        if self.kind == "smooth_sin":
            freq = np.asarray(self.frequency, dtype=np.float64)
            if freq.size != X.shape[1]:
                raise ConfigurationError(
                    f"frequency has length {freq.size}, data has dimension {X.shape[1]}"
                )
            out = np.zeros(X.shape[0])
            for k in range(freq.size):
                if freq[k] != 0.0:
                    out += np.sin(np.pi * freq[k] * X[:, k])
            return out
        # null_variable
        Xz = X.copy()
        Xz[:, self.dead_index] = 0.0
        return self.base.evaluate(Xz)

    def sup_abs(self) -> float:
        """Upper bound on sup |f| over the cube."""
        if self.kind == "linear":
            return float(np.abs(np.asarray(self.beta)).sum() + abs(self.intercept))
        if self.kind == "smooth_sin":
            return float(np.count_nonzero(np.asarray(self.frequency)))
        return self.base.sup_abs()


def generate(spec: TargetSpec, n: int, d: int, seed: int) -> Dataset:
    """Draw X uniform on [-1,1]^d and y = f(X) + truncated normal noise."""
    if n < 1 or d < 1:
        raise ConfigurationError("n and d must be positive")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & (2 ** 63 - 1))))
    X = rng.uniform(-1.0, 1.0, (n, d))
    f = spec.evaluate(X)
    sigma = spec.noise_sigma
    if sigma > 0:
        eps = rng.normal(0.0, sigma, n)
        while True:
            bad = np.abs(eps) > 4.0 * sigma
            k = int(bad.sum())
            if k == 0:
                break
            eps[bad] = rng.normal(0.0, sigma, k)
        y = f + eps
    else:
        y = f
    m_y = spec.sup_abs() + 4.0 * sigma
    return Dataset(
        X,
        y,
        rescale_transform=None,
        meta={
            "source": "generator",
            "kind": spec.kind,
            "noise_sigma": sigma,
            "noise_truncation": "4sigma_resample",
            "m_y": m_y,
            "seed": int(seed),
        },
    )


def load_csv(path, target_column: str) -> Dataset:
    """Read a headered numeric CSV, rescale covariates to [-1,1] per column.

    Data rows are numbered from 1 in error messages. Columns with zero range
    cannot be rescaled and are rejected.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        if target_column not in header:
            raise IngestionError(f"{path}: missing target column {target_column!r}")
        t_idx = header.index(target_column)
        rows = []
        for rownum, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise IngestionError(
                    f"{path}: row {rownum} has {len(row)} cells, expected {len(header)}"
                )
            vals = []
            for col, cell in zip(header, row):
                cell = cell.strip()
                if cell == "":
                    raise IngestionError(f"{path}: missing value at row {rownum}, column {col!r}")
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise IngestionError(
                        f"{path}: non-numeric cell {cell!r} at row {rownum}, column {col!r}"
                    ) from None
            rows.append(vals)
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    data = np.array(rows, dtype=np.float64)
    y = data[:, t_idx]
    X_raw = np.delete(data, t_idx, axis=1)
    cov_names = [c for i, c in enumerate(header) if i != t_idx]

    transform = []
    X = np.empty_like(X_raw)
    for jcol, name in enumerate(cov_names):
        lo, hi = X_raw[:, jcol].min(), X_raw[:, jcol].max()
        if hi == lo:
            raise IngestionError(f"{path}: constant covariate column {name!r} (zero range)")
        center = (hi + lo) / 2.0
        half = (hi - lo) / 2.0
        X[:, jcol] = (X_raw[:, jcol] - center) / half
        transform.append((center, half))
    return Dataset(
        X,
        y,
        rescale_transform=transform,
        meta={"source": str(path), "target_column": target_column, "columns": cov_names},
    )


def save_csv(dataset: Dataset, path) -> None:
    """Write the dataset with header x1..xd,y using repr round-trip floats."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join([f"x{k + 1}" for k in range(dataset.d)] + ["y"]) + "\n")
        for i in range(dataset.n):
            cells = [repr(float(v)) for v in dataset.X[i]] + [repr(float(dataset.y[i]))]
            fh.write(",".join(cells) + "\n")


def split(dataset: Dataset, train_fraction: float, seed: int):
    """Seeded disjoint row split; transforms and meta carried through."""
    if not (0.0 < train_fraction < 1.0):
        raise ConfigurationError(f"train fraction {train_fraction} outside (0, 1)")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & (2 ** 63 - 1))))
    order = rng.permutation(dataset.n)
    k = int(round(dataset.n * train_fraction))
    k = min(max(k, 1), dataset.n - 1)
    tr, te = order[:k], order[k:]
    mk = lambda idx: Dataset(
        dataset.X[idx].copy(),
        dataset.y[idx].copy(),
        rescale_transform=dataset.rescale_transform,
        meta=dict(dataset.meta),
    )
    return mk(tr), mk(te)
