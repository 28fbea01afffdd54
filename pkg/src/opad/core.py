"""Particle sets, weighting schemes and exact KL divergence.

All probability arithmetic is carried out in the natural-log domain. A
state is identified by its :data:`StateKey`, a canonical ``bytes`` encoding
produced by the target model that owns it.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

StateKey = bytes

WEIGHT_SUM_TOL = 1e-12


class EmptySupportError(ValueError):
    pass


class NonFiniteScoreError(ValueError):
    def __init__(self, key: StateKey, score: float):
        super().__init__(f"non-finite log-score {score!r} for state {key.hex()}")
        self.key = key
        self.score = score


class SupportMismatchError(KeyError):
    def __init__(self, key: StateKey):
        super().__init__(f"state {key.hex()} is not in the exact target support")
        self.key = key


def logsumexp(values: Iterable[float] | np.ndarray) -> float:
    """Max-shifted ``log(sum(exp(values)))``; ``-inf`` for an empty input."""
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float)
    if arr.size == 0:
        return -math.inf
    top = float(arr.max())
    if not math.isfinite(top):
        return top
    return top + math.log(float(np.exp(arr - top).sum()))


class ParticleSet(Mapping[StateKey, float]):
    """Distinct states with cached unnormalized log-scores, in insertion order.

    States with zero target probability (non-finite log-score) are refused
    at insertion.
    """

    def __init__(self, items: Iterable[tuple[StateKey, float]] = ()):
        self._scores: dict[StateKey, float] = {}
        for key, score in items:
            self.add(key, score)

    def add(self, key: StateKey, score: float) -> bool:
        """Insert ``key`` if new. Returns True when the set grew."""
        if key in self._scores:
            return False
        score = float(score)
        if not math.isfinite(score):
            raise NonFiniteScoreError(key, score)
        self._scores[key] = score
        return True

    def __getitem__(self, key: StateKey) -> float:
        return self._scores[key]

    def __iter__(self) -> Iterator[StateKey]:
        return iter(self._scores)

    def __len__(self) -> int:
        return len(self._scores)

    def __repr__(self) -> str:
        return f"ParticleSet(n={len(self)})"

    def keys_list(self) -> list[StateKey]:
        return list(self._scores)

    def scores(self) -> np.ndarray:
        return np.fromiter(self._scores.values(), dtype=float, count=len(self._scores))

    def restrict(self, keys: Iterable[StateKey]) -> "ParticleSet":
        """Sub-set holding ``keys`` (first-occurrence order), scores reused."""
        return ParticleSet((k, self._scores[k]) for k in dict.fromkeys(keys))


@dataclass(frozen=True)
class WeightedApprox:
    """A particle-based approximation: particles plus normalized log-weights."""

    particles: ParticleSet
    log_weights: np.ndarray

    def __post_init__(self):
        lw = np.asarray(self.log_weights, dtype=float)
        if lw.shape != (len(self.particles),):
            raise ValueError("one log-weight per particle is required")
        if not np.all(np.isfinite(lw)):
            raise ValueError("weights must be strictly positive")
        total = float(np.exp(lw).sum())
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")
        object.__setattr__(self, "log_weights", lw)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def as_dict(self) -> dict[StateKey, float]:
        return dict(zip(self.particles, self.weights.tolist()))

    def __len__(self) -> int:
        return len(self.particles)


@dataclass(frozen=True)
class ExactTarget:
    """Fully enumerated target: log-score of every state and log of Z."""

    table: dict[StateKey, float]
    log_z: float
    cardinality: int = field(default=-1)

    def __post_init__(self):
        if self.cardinality < 0:
            object.__setattr__(self, "cardinality", len(self.table))

    @classmethod
    def from_scores(cls, table: dict[StateKey, float]) -> "ExactTarget":
        return cls(table=table, log_z=logsumexp(np.fromiter(table.values(), dtype=float)))

    def log_prob(self, key: StateKey) -> float:
        """Normalized log-probability of ``key``."""
        try:
            return self.table[key] - self.log_z
        except KeyError:
            raise SupportMismatchError(key) from None

    def log_probs(self, keys: Iterable[StateKey]) -> np.ndarray:
        return np.array([self.log_prob(k) for k in keys], dtype=float)


def opad_weights(particles: ParticleSet) -> WeightedApprox:
    """Weights proportional to the target score of each particle.

    On a fixed support this is the unique KL-minimizing weighting.
    """
    if len(particles) == 0:
        raise EmptySupportError("cannot weight an empty particle set")
    scores = particles.scores()
    bad = ~np.isfinite(scores)
    if bad.any():
        key = particles.keys_list()[int(np.argmax(bad))]
        raise NonFiniteScoreError(key, particles[key])
    return WeightedApprox(particles, scores - logsumexp(scores))


def frequency_weights(trace) -> WeightedApprox:
    """Empirical distribution of the accepted states of a chain.

    ``trace`` needs ``accepted`` (the state sequence) and ``proposals``
    (a :class:`ParticleSet` holding the score of every accepted state).
    """
    accepted: Sequence[StateKey] = trace.accepted
    if len(accepted) == 0:
        raise EmptySupportError("cannot build frequency weights from an empty chain")
    counts = Counter(accepted)
    support = trace.proposals.restrict(counts)
    n = len(accepted)
    log_w = np.array([math.log(counts[k]) for k in support], dtype=float) - math.log(n)
    return WeightedApprox(support, log_w)


def kl_divergence(approx: WeightedApprox, exact: ExactTarget) -> float:
    """``KL(P || pi*)`` summed over the support of ``approx``."""
    log_pi = exact.log_probs(approx.particles)
    lw = approx.log_weights
    return float(np.sum(np.exp(lw) * (lw - log_pi)))


def kl_lower_bound(particles: Iterable[StateKey], exact: ExactTarget) -> float:
    """Minus the log target mass carried by ``particles``.

    Equals the KL divergence of the score-proportional weighting on the
    same support.
    """
    keys = list(particles)
    if not keys:
        raise EmptySupportError("cannot bound KL for an empty particle set")
    mass = logsumexp(exact.log_probs(keys))
    return max(-mass, 0.0)


def jensen_gap(
    g_values: Sequence[float],
    probs: Sequence[float],
    f: Callable[[float], float],
) -> tuple[float, float]:
    """Return ``(sum_i f(g_i) p_i, f(sum_i g_i p_i))``.

    For convex ``f`` the first entry is never smaller; for strictly convex
    ``f`` the two agree exactly when every ``g_i`` is equal.
    """
    g = np.asarray(g_values, dtype=float)
    p = np.asarray(probs, dtype=float)
    if g.ndim != 1 or g.shape != p.shape or g.size == 0:
        raise ValueError("g_values and probs must be non-empty and of equal length")
    if np.any(p <= 0) or abs(float(p.sum()) - 1.0) > 1e-9:
        raise ValueError("probs must be positive and sum to 1")
    lhs = float(sum(f(float(gi)) * float(pi) for gi, pi in zip(g, p)))
    rhs = float(f(float(np.dot(g, p))))
    return lhs, rhs
