"""Synthetic regression and linear-SEM data, plus CSV input/output."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .states import is_acyclic


class DataFormatError(ValueError):
    pass


@dataclass
class Dataset:
    X: np.ndarray
    y: Optional[np.ndarray] = None
    columns: list[str] = field(default_factory=list)
    response_name: str = "y"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if not self.columns:
            self.columns = [f"x{j + 1}" for j in range(self.X.shape[1])]
        if len(self.columns) != self.X.shape[1]:
            raise ValueError("one column name per predictor is required")
        if np.isnan(self.X).any() or (self.y is not None and np.isnan(self.y).any()):
            raise DataFormatError("dataset contains NaN")


@dataclass
class GroundTruth:
    gamma: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    sigma2: Optional[float] = None
    adjacency: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    order: Optional[np.ndarray] = None


def center(a: np.ndarray) -> np.ndarray:
    return a - a.mean(axis=0)


def standardize(a: np.ndarray, names: Optional[list[str]] = None) -> np.ndarray:
    """Zero mean, unit (population) variance per column."""
    c = center(np.asarray(a, dtype=float))
    sd = np.sqrt((c ** 2).mean(axis=0))
    flat = np.atleast_1d(sd == 0)
    if flat.any():
        j = int(np.argmax(flat))
        label = names[j] if names else str(j)
        raise DataFormatError(f"column {label!r} has zero variance and cannot be standardized")
    return c / sd


def generate_bvs(m: int, n: int, rho: float = 0.5, seed=None) -> tuple[Dataset, GroundTruth]:
    """Sparse linear-regression data with a Bernoulli(rho) ground-truth support.

    Design entries are Unif(-3, 3) and column-centered; nonzero coefficients
    are Unif(-4, 4); noise variance is 1 and the response is centered.
    """
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    gamma = (rng.random(m) < rho).astype(np.uint8)
    alpha = rng.uniform(-4.0, 4.0, size=m)
    beta = gamma * alpha
    X = center(rng.uniform(-3.0, 3.0, size=(n, m)))
    y = center(X @ beta + rng.normal(0.0, 1.0, size=n))
    ds = Dataset(X=X, y=y, provenance={"generator": "bvs", "m": m, "n": n, "rho": rho, "seed": seed})
    return ds, GroundTruth(gamma=gamma, beta=beta, sigma2=1.0)


def generate_bsl(n_nodes: int, degree: float, n_rows: int = 200, seed=None) -> tuple[Dataset, GroundTruth]:
    """Erdos-Renyi DAG with Unif(0, 2) edge weights and standardized linear-SEM samples.

    Each forward edge of a random node order is kept with probability
    ``degree / (n_nodes - 1)``; noise is standard normal.
    """
    if n_nodes < 2:
        raise ValueError("need at least two nodes")
    if not 0 <= degree < n_nodes:
        raise ValueError("expected degree must satisfy 0 <= degree < n_nodes")
    rng = np.random.default_rng(seed)
    p = degree / (n_nodes - 1)
    order = rng.permutation(n_nodes)
    adj = np.zeros((n_nodes, n_nodes), dtype=np.uint8)
    W = np.zeros((n_nodes, n_nodes))
    for a in range(n_nodes):
        for b in range(a + 1, n_nodes):
            if rng.random() < p:
                i, j = order[a], order[b]
                adj[i, j] = 1
                W[i, j] = rng.uniform(0.0, 2.0)
    data = np.zeros((n_rows, n_nodes))
    for j in order:
        data[:, j] = data @ W[:, j] + rng.normal(0.0, 1.0, size=n_rows)
    assert is_acyclic(adj)
    ds = Dataset(X=standardize(data), provenance={
        "generator": "bsl", "n_nodes": n_nodes, "degree": degree, "n_rows": n_rows, "seed": seed})
    return ds, GroundTruth(adjacency=adj, weights=W, order=order)


def save_csv(ds: Dataset, path: str | os.PathLike) -> None:
    """Comma-separated, header row, values written with round-trip precision."""
    header = list(ds.columns)
    cols = [ds.X[:, j] for j in range(ds.X.shape[1])]
    if ds.y is not None:
        header.append(ds.response_name)
        cols.append(ds.y)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow(repr(float(v)) for v in row)


def load_csv(path: str | os.PathLike, response: Optional[str] = None, standardize_predictors: bool = True) -> Dataset:
    """Read a numeric CSV; the response column is centered, predictors
    centered and optionally scaled to unit variance."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError(f"{path}: file is empty (a header row is required)") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(f"{path}:{lineno}: expected {len(header)} cells, found {len(row)}")
            values = []
            for name, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataFormatError(f"{path}:{lineno}: column {name!r}: non-numeric cell {cell!r}") from None
                if not math.isfinite(v):
                    raise DataFormatError(f"{path}:{lineno}: column {name!r}: non-finite value {cell!r}")
                values.append(v)
            rows.append(values)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    table = np.array(rows, dtype=float)
    y = None
    names = header
    if response is not None:
        if response not in header:
            raise DataFormatError(f"{path}: response column {response!r} not found")
        k = header.index(response)
        y = center(table[:, k])
        table = np.delete(table, k, axis=1)
        names = header[:k] + header[k + 1:]
    X = standardize(table, names) if standardize_predictors else center(table)
    return Dataset(X=X, y=y, columns=names, response_name=response or "y",
                   provenance={"path": os.fspath(path), "standardized": standardize_predictors})
