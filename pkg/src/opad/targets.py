"""Unnormalized log-target models over binary vectors and DAGs.

Every model exposes ``support`` (a :class:`~opad.exact.SupportSpec`),
``log_score(key)``, ``encode``/``decode`` between states and keys, and
``random_state(rng)`` for drawing a uniform initial state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import StateKey
from .exact import MAX_DAG_NODES, SupportSpec, enumerate_dags
from .states import (
    CyclicGraphError,
    decode_dag,
    encode_dag,
    key_to_masks,
    masks_acyclic,
    pack_bits,
    unpack_bits,
)

CENTERING_TOL = 1e-8
GRAM_PD_TOL = 1e-10


class SingularGramError(np.linalg.LinAlgError):
    def __init__(self, selected: Sequence[int]):
        super().__init__(f"Gram matrix of predictors {list(selected)} is singular")
        self.selected = tuple(selected)


class TargetModel:
    support: SupportSpec

    def log_score(self, key: StateKey) -> float:
        raise NotImplementedError

    def encode(self, state) -> StateKey:
        raise NotImplementedError

    def decode(self, key: StateKey):
        raise NotImplementedError

    def random_state(self, rng: np.random.Generator) -> StateKey:
        if self.support.family == "hypercube":
            return pack_bits(rng.integers(0, 2, size=self.support.size))
        raise NotImplementedError


# -- Ising ---------------------------------------------------------------

@dataclass(frozen=True)
class IsingParams:
    m: int
    beta: float = 0.5
    mu: float = 1.0
    J: np.ndarray = None
    h: np.ndarray = None

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("an Ising loop needs at least 2 sites")
        if self.beta < 0:
            raise ValueError("inverse temperature must be non-negative")
        J = np.ones(self.m) if self.J is None else np.broadcast_to(np.asarray(self.J, float), (self.m,)).copy()
        h = np.zeros(self.m) if self.h is None else np.broadcast_to(np.asarray(self.h, float), (self.m,)).copy()
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "h", h)


def ising_log_score(params: IsingParams, spins: Sequence[int] | np.ndarray) -> float:
    """``-beta * H(x)`` for the periodic 1D chain, ``x_{m+1} = x_1``."""
    x = np.asarray(spins, dtype=float)
    if x.shape != (params.m,):
        raise ValueError(f"expected {params.m} spins, got shape {x.shape}")
    energy = -float(np.dot(params.J, x * np.roll(x, -1))) - params.mu * float(np.dot(params.h, x))
    return -params.beta * energy


class IsingModel(TargetModel):
    """Spins in {-1, +1}; bit 1 encodes spin +1."""

    def __init__(self, params: IsingParams):
        self.params = params
        self.support = SupportSpec("hypercube", params.m)

    def encode(self, spins) -> StateKey:
        s = np.asarray(spins)
        if not np.isin(s, (-1, 1)).all():
            raise ValueError("spins must be -1 or +1")
        return pack_bits((s > 0).astype(np.uint8))

    def decode(self, key: StateKey) -> np.ndarray:
        return unpack_bits(key, self.params.m).astype(np.int64) * 2 - 1

    def log_score(self, key: StateKey) -> float:
        return ising_log_score(self.params, self.decode(key))


# -- Bayesian variable selection -------------------------------------------

def _check_centered(name: str, arr: np.ndarray) -> None:
    means = np.atleast_1d(arr.mean(axis=0))
    if np.any(np.abs(means) > CENTERING_TOL):
        raise ValueError(f"{name} must have zero mean (max |mean| = {np.abs(means).max():.3g})")


@dataclass(frozen=True)
class BvsParams:
    X: np.ndarray
    y: np.ndarray
    g: Optional[float] = None
    a: float = 3.0
    b: float = 1.0
    rho: float = 0.5

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("X must be n x m and y of length n")
        _check_centered("y", y)
        _check_centered("predictor columns", X)
        g = float(X.shape[0]) if self.g is None else float(self.g)
        if g <= 0 or self.a <= 0 or self.b <= 0:
            raise ValueError("g, a and b must be positive")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "g", g)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]


def projected_sq_norm(gram: np.ndarray, xty: np.ndarray, X_sel: np.ndarray, y: np.ndarray,
                      selected: Sequence[int]) -> float:
    """``y' X_S (X_S' X_S)^{-1} X_S' y`` without forming an inverse.

    Cholesky of the Gram matrix first; QR of ``X_S`` when the Gram matrix is
    not comfortably positive definite.
    """
    scale = float(np.max(np.diag(gram))) if gram.size else 1.0
    try:
        L = np.linalg.cholesky(gram)
        if float(np.min(np.diag(L))) ** 2 >= GRAM_PD_TOL * scale:
            z = np.linalg.solve(L, xty)
            return float(z @ z)
    except np.linalg.LinAlgError:
        pass
    q, r = np.linalg.qr(X_sel)
    d = np.abs(np.diag(r))
    if d.size == 0 or float(d.min()) <= GRAM_PD_TOL * float(d.max()):
        raise SingularGramError(selected)
    z = q.T @ y
    return float(z @ z)


def g_prior_log_marginal(n: int, k: int, yty: float, yPy: float, g: float, a: float, b: float) -> float:
    """Log marginal likelihood (up to a constant) of a k-predictor g-prior model."""
    resid = yty - g / (g + 1.0) * yPy
    return -0.5 * k * math.log(g + 1.0) - (a + 0.5 * n) * math.log((resid + 2.0 * b) / 2.0)


class BvsModel(TargetModel):
    """Posterior over selection indicators with a g-prior and Bernoulli prior."""

    def __init__(self, params: BvsParams):
        self.params = params
        self.support = SupportSpec("hypercube", params.m)
        self._gram = params.X.T @ params.X
        self._xty = params.X.T @ params.y
        self._yty = float(params.y @ params.y)

    def encode(self, gamma) -> StateKey:
        return pack_bits(np.asarray(gamma, dtype=np.uint8))

    def decode(self, key: StateKey) -> np.ndarray:
        return unpack_bits(key, self.params.m)

    def log_likelihood(self, gamma: np.ndarray) -> float:
        p = self.params
        sel = np.flatnonzero(gamma)
        yPy = 0.0
        if sel.size:
            yPy = projected_sq_norm(self._gram[np.ix_(sel, sel)], self._xty[sel], p.X[:, sel], p.y, sel)
        return g_prior_log_marginal(p.n, sel.size, self._yty, yPy, p.g, p.a, p.b)

    def log_prior(self, gamma: np.ndarray) -> float:
        k = int(np.count_nonzero(gamma))
        return k * math.log(self.params.rho) + (self.params.m - k) * math.log1p(-self.params.rho)

    def log_score(self, key: StateKey) -> float:
        gamma = self.decode(key)
        return self.log_prior(gamma) + self.log_likelihood(gamma)


def bvs_log_score(params: BvsParams, gamma: Sequence[int] | np.ndarray) -> float:
    gamma = np.asarray(gamma)
    if gamma.shape != (params.m,):
        raise ValueError(f"expected {params.m} indicators, got shape {gamma.shape}")
    model = BvsModel(params)
    return model.log_prior(gamma) + model.log_likelihood(gamma)


# -- Bayesian structure learning -------------------------------------------

class BslModel(TargetModel):
    """Posterior over DAGs; each node is scored as a g-prior regression on its parents.

    The DAG prior is uniform, so the score is the sum of node scores.
    Node scores are memoized per (node, parent set).
    """

    def __init__(self, data: np.ndarray, g: Optional[float] = None, a: float = 3.0, b: float = 1.0):
        data = np.asarray(data, dtype=float)
        if data.ndim != 2 or data.shape[1] < 2:
            raise ValueError("data must be rows x nodes with at least 2 nodes")
        _check_centered("data columns", data)
        self.data = data
        self.n_rows, self.n_nodes = data.shape
        self.g = float(self.n_rows) if g is None else float(g)
        self.a = a
        self.b = b
        self.support = SupportSpec("dag", self.n_nodes)
        self._gram = data.T @ data
        self._node_cache: dict[tuple[int, int], float] = {}

    def encode(self, adj) -> StateKey:
        return encode_dag(adj)

    def decode(self, key: StateKey) -> np.ndarray:
        return decode_dag(key, self.n_nodes)

    def node_log_score(self, i: int, parents: Sequence[int] | int) -> float:
        mask = parents if isinstance(parents, (int, np.integer)) else sum(1 << int(p) for p in parents)
        mask = int(mask)
        cached = self._node_cache.get((i, mask))
        if cached is not None:
            return cached
        sel = np.array([j for j in range(self.n_nodes) if mask >> j & 1], dtype=np.intp)
        if i in sel:
            raise ValueError("a node cannot be its own parent")
        y = self.data[:, i]
        yPy = 0.0
        if sel.size:
            yPy = projected_sq_norm(self._gram[np.ix_(sel, sel)], self._gram[sel, i],
                                    self.data[:, sel], y, sel)
        score = g_prior_log_marginal(self.n_rows, sel.size, float(self._gram[i, i]), yPy, self.g, self.a, self.b)
        self._node_cache[(i, mask)] = score
        return score

    def parent_masks(self, key: StateKey) -> list[int]:
        return key_to_masks(key, self.n_nodes)

    def log_score(self, key: StateKey) -> float:
        masks = self.parent_masks(key)
        if any(masks[j] >> j & 1 for j in range(self.n_nodes)) or not masks_acyclic(masks):
            raise CyclicGraphError(f"state {key.hex()} is not a DAG")
        return math.fsum(self.node_log_score(j, masks[j]) for j in range(self.n_nodes))

    def random_state(self, rng: np.random.Generator) -> StateKey:
        n = self.n_nodes
        if n <= MAX_DAG_NODES:
            keys = tuple(enumerate_dags(n))
            return keys[int(rng.integers(len(keys)))]
        # approximately uniform: random order, each forward edge with probability 1/2
        order = rng.permutation(n)
        adj = np.zeros((n, n), dtype=np.uint8)
        for a_ in range(n):
            for b_ in range(a_ + 1, n):
                if rng.random() < 0.5:
                    adj[order[a_], order[b_]] = 1
        return encode_dag(adj)


def bsl_log_score(model: BslModel, adj: np.ndarray) -> float:
    return model.log_score(model.encode(adj))
