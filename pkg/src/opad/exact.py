"""Full-support enumeration and exact normalized targets."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import numpy as np

from .core import ExactTarget, NonFiniteScoreError, StateKey, logsumexp
from .states import pack_bits

MAX_HYPERCUBE_DIM = 24
MAX_DAG_NODES = 5


class SupportTooLargeError(ValueError):
    pass


def count_dags(n: int) -> int:
    """Number of labeled DAGs on ``n`` nodes (Robinson's recurrence)."""
    a = [1]
    for k in range(1, n + 1):
        a.append(sum((-1) ** (i + 1) * math.comb(k, i) * 2 ** (i * (k - i)) * a[k - i]
                     for i in range(1, k + 1)))
    return a[n]


@dataclass(frozen=True)
class SupportSpec:
    family: str  # "hypercube" or "dag"
    size: int  # m bits for hypercube, n nodes for DAGs

    def __post_init__(self):
        if self.family not in ("hypercube", "dag"):
            raise ValueError(f"unknown support family {self.family!r}")
        if self.size < 1:
            raise ValueError("support size must be positive")

    @property
    def cardinality(self) -> int:
        if self.family == "hypercube":
            return 2 ** self.size
        return count_dags(self.size)

    @property
    def enumerable(self) -> bool:
        limit = MAX_HYPERCUBE_DIM if self.family == "hypercube" else MAX_DAG_NODES
        return self.size <= limit

    def enumerate(self) -> Iterator[StateKey]:
        if self.family == "hypercube":
            return enumerate_hypercube(self.size)
        return enumerate_dags(self.size)


def enumerate_hypercube(m: int) -> Iterator[StateKey]:
    """All ``2**m`` bit vectors, lexicographic order, packed."""
    if m > MAX_HYPERCUBE_DIM:
        raise SupportTooLargeError(f"hypercube dimension {m} exceeds the limit of {MAX_HYPERCUBE_DIM}")
    if m < 1:
        raise ValueError("dimension must be at least 1")
    shifts = np.arange(m - 1, -1, -1, dtype=np.int64)
    block = 1 << 14
    for start in range(0, 2 ** m, block):
        idx = np.arange(start, min(start + block, 2 ** m), dtype=np.int64)
        bits = ((idx[:, None] >> shifts) & 1).astype(np.uint8)
        packed = np.packbits(bits, axis=1)
        for row in packed:
            yield row.tobytes()


@lru_cache(maxsize=None)
def _dag_parent_masks(nodes: int) -> tuple[tuple[tuple[int, int], ...], ...]:
    """Every DAG on the node bitmask ``nodes`` as ``((node, parents), ...)``.

    Each DAG is generated exactly once from its unique decomposition into
    the set S of its source nodes, the DAG induced on the remaining nodes,
    and the edges leaving S; every source of the remainder must receive at
    least one edge from S.
    """
    if nodes == 0:
        return ((),)
    members = [v for v in range(nodes.bit_length()) if nodes >> v & 1]
    out = []
    for r in range(1, len(members) + 1):
        for sources in itertools.combinations(members, r):
            smask = sum(1 << v for v in sources)
            s_subsets = [sub for sub in _submasks(smask)]
            rest = nodes & ~smask
            for sub_dag in _dag_parent_masks(rest):
                choices = []
                for v, pa in sub_dag:
                    opts = s_subsets if pa else [s for s in s_subsets if s]
                    choices.append([(v, pa | s) for s in opts])
                fixed = tuple((v, 0) for v in sources)
                for combo in itertools.product(*choices):
                    out.append(fixed + combo)
    return tuple(out)


def _submasks(mask: int) -> list[int]:
    subs = []
    sub = mask
    while True:
        subs.append(sub)
        if sub == 0:
            break
        sub = (sub - 1) & mask
    return sorted(subs)


@lru_cache(maxsize=None)
def _dag_keys(n: int) -> tuple[StateKey, ...]:
    keys = []
    for dag in _dag_parent_masks((1 << n) - 1):
        adj = np.zeros((n, n), dtype=np.uint8)
        for v, pa in dag:
            for i in range(n):
                if pa >> i & 1:
                    adj[i, v] = 1
        keys.append(pack_bits(adj.reshape(-1)))
    return tuple(sorted(keys))


def enumerate_dags(n: int) -> Iterator[StateKey]:
    """Every labeled DAG on ``n`` nodes exactly once, in key order."""
    if n > MAX_DAG_NODES:
        raise SupportTooLargeError(f"DAG enumeration is limited to {MAX_DAG_NODES} nodes, got {n}")
    if n < 1:
        raise ValueError("need at least one node")
    return iter(_dag_keys(n))


def build_exact_target(model) -> ExactTarget:
    """Score every state of ``model.support`` and normalize."""
    support: SupportSpec = model.support
    if not support.enumerable:
        raise SupportTooLargeError(f"{support} is beyond exact enumeration limits")
    table: dict[StateKey, float] = {}
    for key in support.enumerate():
        score = float(model.log_score(key))
        if not math.isfinite(score):
            raise NonFiniteScoreError(key, score)
        table[key] = score
    if len(table) != support.cardinality:
        raise RuntimeError(f"enumerated {len(table)} states, expected {support.cardinality}")
    return ExactTarget(table=table, log_z=logsumexp(np.fromiter(table.values(), dtype=float)),
                       cardinality=support.cardinality)
