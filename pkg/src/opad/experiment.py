"""Multi-chain KL-vs-iteration experiments for MCMC, OPAD and OPAD+."""

from __future__ import annotations

import configparser
import csv
import dataclasses
import logging
import math
import os
import statistics
import warnings
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .core import ExactTarget
from .datagen import generate_bsl, generate_bvs, load_csv
from .exact import build_exact_target
from .samplers import FlipKernel, StructureKernel, chain_seeds, iter_chain
from .targets import BslModel, BvsModel, BvsParams, IsingModel, IsingParams, TargetModel

log = logging.getLogger(__name__)

METHODS = ("mcmc", "opad", "opad+")
ORDER_SLACK = 1e-9
Z95 = 1.959963984540054


class OrderingViolation(RuntimeError):
    """KL(MCMC) >= KL(OPAD) >= KL(OPAD+) failed beyond the allowed slack."""


@dataclass(frozen=True)
class ExperimentConfig:
    target: str = "ising"
    kernel: Optional[str] = None  # "flip" or "structure"; inferred from target when unset
    iterations: int = 10_000
    chains: int = 20
    stride: int = 100
    seed: int = 0
    data_seed: Optional[int] = None  # defaults to seed
    workers: int = 1
    out_dir: Optional[str] = None
    # Ising
    ising_m: int = 15
    ising_beta: float = 0.5
    ising_mu: float = 1.0
    ising_j: float = 1.0
    ising_h: float = 0.1
    # variable selection
    bvs_m: int = 10
    bvs_n: int = 200
    bvs_rho: float = 0.5
    bvs_a: float = 3.0
    bvs_b: float = 1.0
    bvs_g: Optional[float] = None  # defaults to the number of rows
    bvs_csv: Optional[str] = None
    bvs_response: Optional[str] = None
    # structure learning
    bsl_nodes: int = 5
    bsl_degree: float = 1.0
    bsl_rows: int = 200
    bsl_a: float = 3.0
    bsl_b: float = 1.0
    bsl_g: Optional[float] = None
    bsl_per_chain_data: bool = True

    def __post_init__(self):
        if self.target not in ("ising", "bvs", "bsl"):
            raise ValueError(f"unknown target {self.target!r}")
        kernel = self.kernel or ("structure" if self.target == "bsl" else "flip")
        if (self.target == "bsl") != (kernel == "structure") or kernel not in ("flip", "structure"):
            raise ValueError(f"kernel {kernel!r} does not fit target {self.target!r}")
        object.__setattr__(self, "kernel", kernel)
        if self.data_seed is None:
            object.__setattr__(self, "data_seed", self.seed)
        if self.chains < 1 or self.stride < 1 or self.iterations < 1 or self.workers < 1:
            raise ValueError("chains, stride, iterations and workers must all be >= 1")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    # -- flat key/value manifest ------------------------------------------

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        kwargs = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for key, raw in values.items():
            key = key.replace("-", "_").lower()
            if key not in types:
                raise KeyError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(types[key], raw)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "ExperimentConfig":
        parser = configparser.ConfigParser()
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
        if not parser.has_section("experiment"):
            raise KeyError(f"{path}: missing [experiment] section")
        return cls.from_mapping(dict(parser["experiment"]))

    def to_file(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("[experiment]\n")
            for f in dataclasses.fields(self):
                value = getattr(self, f.name)
                if value is not None:
                    fh.write(f"{f.name} = {value}\n")


def _coerce(type_name: str, raw):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if type_name.startswith("Optional"):
        if raw.lower() in ("", "none"):
            return None
        type_name = type_name[len("Optional["):-1]
    if type_name == "int":
        return int(raw)
    if type_name == "float":
        return float(raw)
    if type_name == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return raw


def checkpoints(iterations: int, stride: int) -> list[int]:
    """Iteration 1, every multiple of ``stride``, and the last iteration."""
    pts = {1, iterations}
    pts.update(range(stride, iterations + 1, stride))
    return sorted(pts)


def build_target(config: ExperimentConfig, data_seed=None) -> TargetModel:
    """Target model for ``config``; ``data_seed`` overrides the dataset seed."""
    seed = config.data_seed if data_seed is None else data_seed
    if config.target == "ising":
        params = IsingParams(m=config.ising_m, beta=config.ising_beta, mu=config.ising_mu,
                             J=config.ising_j, h=config.ising_h)
        return IsingModel(params)
    if config.target == "bvs":
        if config.bvs_csv:
            ds = load_csv(config.bvs_csv, response=config.bvs_response, standardize_predictors=True)
        else:
            ds, _ = generate_bvs(config.bvs_m, config.bvs_n, config.bvs_rho, seed=seed)
        return BvsModel(BvsParams(ds.X, ds.y, g=config.bvs_g, a=config.bvs_a, b=config.bvs_b, rho=config.bvs_rho))
    ds, _ = generate_bsl(config.bsl_nodes, config.bsl_degree, config.bsl_rows, seed=seed)
    return BslModel(ds.X, g=config.bsl_g, a=config.bsl_a, b=config.bsl_b)


def build_kernel(config: ExperimentConfig, target: TargetModel):
    if config.kernel == "structure":
        return StructureKernel(target.support.size)
    return FlipKernel(target.support.size)


def _data_seeds(config: ExperimentConfig) -> list:
    if config.target == "bsl" and config.bsl_per_chain_data:
        return np.random.SeedSequence(config.data_seed).spawn(config.chains)
    return [None] * config.chains


def chain_kl_rows(target: TargetModel, exact: ExactTarget, kernel, seed, iterations: int,
                  points: Iterable[int], chain_id: int = 0) -> list[tuple[int, int, str, float]]:
    """KL of the three approximations at each checkpoint of one chain.

    OPAD and OPAD+ KLs come from running log-masses of their supports;
    the MCMC KL is recomputed from visit counts at every checkpoint.
    """
    rng = np.random.default_rng(seed)
    init = target.random_state(rng)
    want = set(points)
    counts: Counter = Counter()
    log_mass_opad = -math.inf
    log_mass_plus = -math.inf
    rows = []
    prev_plus = math.inf
    for step in iter_chain(target, kernel, init, iterations, rng):
        if step.new_particle:
            x = step.proposed if step.proposed is not None else step.state
            log_mass_plus = np.logaddexp(log_mass_plus, exact.log_prob(x))
        if counts[step.state] == 0:
            log_mass_opad = np.logaddexp(log_mass_opad, exact.log_prob(step.state))
        counts[step.state] += 1
        if step.t not in want:
            continue
        t = step.t
        freq = np.fromiter(counts.values(), dtype=float) / t
        log_pi = exact.log_probs(counts.keys())
        kl_mc = float(np.sum(freq * (np.log(freq) - log_pi)))
        kl_opad = max(-float(log_mass_opad), 0.0)
        kl_plus = max(-float(log_mass_plus), 0.0)
        if kl_mc < kl_opad - ORDER_SLACK or kl_opad < kl_plus - ORDER_SLACK:
            raise OrderingViolation(
                f"chain {chain_id} iteration {t}: mcmc={kl_mc!r} opad={kl_opad!r} opad+={kl_plus!r}")
        if kl_plus > prev_plus + ORDER_SLACK:
            raise OrderingViolation(f"chain {chain_id} iteration {t}: OPAD+ KL increased")
        prev_plus = kl_plus
        rows += [(chain_id, t, "mcmc", kl_mc), (chain_id, t, "opad", kl_opad), (chain_id, t, "opad+", kl_plus)]
    return rows


_WORKER_CACHE: dict = {}


def _prepared(config: ExperimentConfig, data_seed):
    key = (config, None if data_seed is None else (data_seed.entropy, data_seed.spawn_key))
    if key not in _WORKER_CACHE:
        if len(_WORKER_CACHE) > 4:
            _WORKER_CACHE.clear()
        target = build_target(config, data_seed)
        _WORKER_CACHE[key] = (target, build_exact_target(target), build_kernel(config, target))
    return _WORKER_CACHE[key]


def _run_one(args) -> list[tuple[int, int, str, float]]:
    config, chain_id, seed, data_seed = args
    target, exact, kernel = _prepared(config, data_seed)
    return chain_kl_rows(target, exact, kernel, seed, config.iterations,
                         checkpoints(config.iterations, config.stride), chain_id)


@dataclass
class KlTrace:
    rows: list[tuple[int, int, str, float]]

    def __len__(self) -> int:
        return len(self.rows)

    def series(self, chain: int, method: str) -> list[tuple[int, float]]:
        return [(it, kl) for c, it, m, kl in self.rows if c == chain and m == method]

    def chains(self) -> list[int]:
        return sorted({r[0] for r in self.rows})

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["chain", "iteration", "method", "kl"])
            for c, it, m, kl in self.rows:
                w.writerow([c, it, m, repr(float(kl))])

    @classmethod
    def from_csv(cls, path: str | os.PathLike) -> "KlTrace":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            rows = [(int(r["chain"]), int(r["iteration"]), r["method"], float(r["kl"])) for r in reader]
        return cls(rows)


def _sort_rows(rows):
    rank = {m: i for i, m in enumerate(METHODS)}
    return sorted(rows, key=lambda r: (r[0], r[1], rank[r[2]]))


def run_experiment(config: ExperimentConfig) -> KlTrace:
    """Run ``config.chains`` seeded chains and record KL at every checkpoint.

    Chain ``i`` uses ``SeedSequence(config.seed).spawn(chains)[i]``. For the
    structure-learning target with ``bsl_per_chain_data`` each chain also
    gets its own synthetic dataset and hence its own exact posterior. When
    ``config.out_dir`` is set, ``kl_trace.csv`` and ``manifest.ini`` are
    written there; rows finished before a failure are flushed first.
    """
    seeds = chain_seeds(config.seed, config.chains)
    jobs = [(config, i, seeds[i], ds) for i, ds in enumerate(_data_seeds(config))]
    rows: list = []
    out = config.out_dir
    if out:
        os.makedirs(out, exist_ok=True)
        config.to_file(os.path.join(out, "manifest.ini"))
    try:
        if config.workers > 1 and config.chains > 1:
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                for chunk in pool.map(_run_one, jobs):
                    rows.extend(chunk)
        else:
            for job in jobs:
                rows.extend(_run_one(job))
                log.info("chain %d done", job[1])
    finally:
        trace = KlTrace(_sort_rows(rows))
        if out:
            trace.to_csv(os.path.join(out, "kl_trace.csv"))
    return trace


@dataclass
class SummaryRow:
    iteration: int
    method: str
    mean: float
    lo: Optional[float]
    hi: Optional[float]


def summarize(trace: KlTrace) -> list[SummaryRow]:
    """Mean KL across chains with a normal-approximation 95% interval.

    With a single chain the interval is omitted and a warning is issued.
    """
    if not trace.rows:
        raise ValueError("cannot summarize an empty trace")
    groups: dict[tuple[int, str], list[float]] = {}
    for _, it, m, kl in trace.rows:
        groups.setdefault((it, m), []).append(kl)
    n_chains = len(trace.chains())
    if n_chains < 2:
        warnings.warn("single-chain trace: confidence interval omitted", stacklevel=2)
    rank = {m: i for i, m in enumerate(METHODS)}
    out = []
    for (it, m), vals in sorted(groups.items(), key=lambda kv: (kv[0][0], rank.get(kv[0][1], 99))):
        # exact-arithmetic moments: identical chains give a zero-width band
        mean = statistics.mean(vals)
        if len(vals) < 2:
            out.append(SummaryRow(it, m, mean, None, None))
            continue
        half = Z95 * statistics.stdev(vals) / math.sqrt(len(vals))
        out.append(SummaryRow(it, m, mean, mean - half, mean + half))
    return out


def write_summary(summary: list[SummaryRow], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "method", "mean", "lo", "hi"])
        for r in summary:
            w.writerow([r.iteration, r.method, repr(r.mean),
                        "" if r.lo is None else repr(r.lo), "" if r.hi is None else repr(r.hi)])


def read_summary(path: str | os.PathLike) -> list[SummaryRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [SummaryRow(int(r["iteration"]), r["method"], float(r["mean"]),
                           float(r["lo"]) if r["lo"] else None, float(r["hi"]) if r["hi"] else None)
                for r in csv.DictReader(fh)]
