"""Metropolis-Hastings chains that keep every proposal, and their kernels.

A chain of ``N`` states takes ``N - 1`` MH steps. Every proposal is
scored once, on first encounter, and the score is kept in the trace's
proposal set; that set (plus the initial state) is the OPAD+ support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .core import (
    NonFiniteScoreError,
    ParticleSet,
    StateKey,
    WeightedApprox,
    frequency_weights,
    opad_weights,
)
from .states import flip_bit, key_to_masks, masks_acyclic, masks_to_key


class Proposal(NamedTuple):
    state: StateKey
    log_q_forward: float  # log q(proposed | current)
    log_q_backward: float  # log q(current | proposed)


class FlipKernel:
    """Flip one uniformly chosen bit of a packed binary vector.

    Serves both the Ising spin-flip move and the indicator bit-flip move,
    since both act on the same packed encoding.
    """

    symmetric = True

    def __init__(self, m: int):
        if m < 1:
            raise ValueError("flip kernel needs at least one position")
        self.m = m
        self._log_q = -math.log(m)

    def propose(self, state: StateKey, rng: np.random.Generator) -> Proposal:
        j = int(rng.integers(self.m))
        return Proposal(flip_bit(state, j), self._log_q, self._log_q)

    def log_q(self, to: StateKey, frm: StateKey) -> float:
        diff = sum(bin(a ^ b).count("1") for a, b in zip(to, frm))
        return self._log_q if diff == 1 else -math.inf


def ising_flip_kernel(m: int) -> FlipKernel:
    if m < 2:
        raise ValueError("an Ising loop needs at least 2 sites")
    return FlipKernel(m)


def gamma_flip_kernel(m: int) -> FlipKernel:
    if m < 2:
        raise ValueError("indicator vectors need at least 2 entries")
    return FlipKernel(m)


class StructureKernel:
    """Uniform choice among single-edge additions, deletions and reversals.

    Moves that would create a cycle are excluded, and the Hastings ratio
    uses the neighborhood sizes of both endpoints. Neighborhoods are
    memoized per DAG.
    """

    symmetric = False

    def __init__(self, n: int):
        if n < 2:
            raise ValueError("structure kernel needs at least 2 nodes")
        self.n = n
        self._cache: dict[StateKey, tuple[StateKey, ...]] = {}

    def neighborhood(self, state: StateKey) -> tuple[StateKey, ...]:
        nb = self._cache.get(state)
        if nb is None:
            nb = tuple(masks_to_key(m, self.n) for m in self._moves(key_to_masks(state, self.n)))
            assert nb, "every DAG on >= 2 nodes has a non-empty neighborhood"
            self._cache[state] = nb
        return nb

    def _moves(self, masks: list[int]) -> list[list[int]]:
        n = self.n
        out = []
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                if masks[j] >> i & 1:
                    deleted = masks.copy()
                    deleted[j] &= ~(1 << i)
                    out.append(deleted)
                    reversed_ = deleted.copy()
                    reversed_[i] |= 1 << j
                    if masks_acyclic(reversed_):
                        out.append(reversed_)
                elif not masks[i] >> j & 1:
                    added = masks.copy()
                    added[j] |= 1 << i
                    if masks_acyclic(added):
                        out.append(added)
        return out

    def propose(self, state: StateKey, rng: np.random.Generator) -> Proposal:
        nb = self.neighborhood(state)
        proposed = nb[int(rng.integers(len(nb)))]
        return Proposal(proposed, -math.log(len(nb)), -math.log(len(self.neighborhood(proposed))))

    def log_q(self, to: StateKey, frm: StateKey) -> float:
        nb = self.neighborhood(frm)
        return -math.log(len(nb)) if to in nb else -math.inf


def structure_kernel(n: int) -> StructureKernel:
    return StructureKernel(n)


@dataclass
class ChainTrace:
    """Accepted-state sequence plus the scored set of every state proposed."""

    accepted: list[StateKey]
    proposals: ParticleSet
    accept_count: int = 0
    proposed: list[StateKey] = field(default_factory=list)  # proposal drawn at each step

    @property
    def n_iter(self) -> int:
        return len(self.accepted)

    @property
    def initial(self) -> StateKey:
        return self.accepted[0]

    def acceptance_rate(self) -> float:
        steps = len(self.accepted) - 1
        return self.accept_count / steps if steps else 0.0


class Step(NamedTuple):
    t: int  # number of accepted states so far, 1-based
    state: StateKey
    proposed: StateKey | None
    accepted: bool
    new_particle: bool


def iter_chain(target, kernel, init: StateKey, n_iter: int, rng: np.random.Generator,
               proposals: ParticleSet | None = None) -> Iterator[Step]:
    """Yield each of the ``n_iter`` chain states as it is produced.

    ``proposals`` is filled in place with every scored state.
    """
    if n_iter < 1:
        raise ValueError("a chain needs at least one state")
    if proposals is None:
        proposals = ParticleSet()
    init_score = float(target.log_score(init))
    if not math.isfinite(init_score):
        raise NonFiniteScoreError(init, init_score)
    proposals.add(init, init_score)
    current, current_score = init, init_score
    yield Step(1, current, None, False, True)
    for t in range(2, n_iter + 1):
        prop = kernel.propose(current, rng)
        x = prop.state
        new = x not in proposals
        if new:
            score = float(target.log_score(x))
            proposals.add(x, score)
        else:
            score = proposals[x]
        log_ratio = score - current_score + prop.log_q_backward - prop.log_q_forward
        u = rng.random()
        accepted = log_ratio >= 0.0 or u < math.exp(log_ratio)
        if accepted:
            current, current_score = x, score
        yield Step(t, current, x, accepted, new)


def run_chain(target, kernel, init: StateKey, n_iter: int, seed) -> ChainTrace:
    """Run a seeded MH chain of ``n_iter`` states.

    ``seed`` is anything :func:`numpy.random.default_rng` accepts, including
    a spawned :class:`numpy.random.SeedSequence`.
    """
    rng = np.random.default_rng(seed)
    proposals = ParticleSet()
    trace = ChainTrace(accepted=[], proposals=proposals)
    for step in iter_chain(target, kernel, init, n_iter, rng, proposals):
        trace.accepted.append(step.state)
        if step.proposed is not None:
            trace.proposed.append(step.proposed)
            trace.accept_count += step.accepted
    return trace


def extract_approximations(trace: ChainTrace) -> tuple[WeightedApprox, WeightedApprox, WeightedApprox]:
    """(MCMC frequency, OPAD on accepted states, OPAD+ on all proposals)."""
    mcmc = frequency_weights(trace)
    opad = opad_weights(trace.proposals.restrict(trace.accepted))
    opad_plus = opad_weights(trace.proposals)
    return mcmc, opad, opad_plus


def chain_seeds(master_seed: int, chains: int) -> list[np.random.SeedSequence]:
    """Independent per-chain streams: chain ``i`` gets ``SeedSequence(master).spawn(chains)[i]``."""
    return np.random.SeedSequence(master_seed).spawn(chains)
