"""Canonical byte encodings for binary vectors and DAG adjacency matrices.

Binary vectors pack one bit per element, most significant bit first, so
byte order agrees with lexicographic order of the vectors. A DAG on ``n``
nodes is the row-major bit vector of its ``n x n`` adjacency matrix, where
entry ``(i, j)`` set means an edge ``i -> j``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


class CyclicGraphError(ValueError):
    pass


def pack_bits(bits: Sequence[int] | np.ndarray) -> bytes:
    arr = np.asarray(bits)
    if arr.ndim != 1:
        raise ValueError("expected a 1-d bit vector")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError("bit vector entries must be 0 or 1")
    return np.packbits(arr.astype(np.uint8)).tobytes()


def unpack_bits(key: bytes, m: int) -> np.ndarray:
    if len(key) != (m + 7) // 8:
        raise ValueError(f"key of {len(key)} bytes cannot hold exactly {m} bits")
    return np.unpackbits(np.frombuffer(key, dtype=np.uint8), count=m)


def flip_bit(key: bytes, j: int) -> bytes:
    buf = bytearray(key)
    buf[j >> 3] ^= 0x80 >> (j & 7)
    return bytes(buf)


def parent_masks(adj: np.ndarray) -> list[int]:
    """``masks[j]`` has bit ``i`` set iff ``i -> j`` is an edge."""
    n = adj.shape[0]
    masks = []
    for j in range(n):
        col = adj[:, j]
        masks.append(sum(1 << i for i in range(n) if col[i]))
    return masks


def masks_acyclic(masks: Sequence[int]) -> bool:
    """Kahn's algorithm on parent bitmasks."""
    remaining = (1 << len(masks)) - 1
    while remaining:
        sources = 0
        for j in range(len(masks)):
            if remaining >> j & 1 and not masks[j] & remaining:
                sources |= 1 << j
        if not sources:
            return False
        remaining &= ~sources
    return True


def is_acyclic(adj: np.ndarray) -> bool:
    adj = np.asarray(adj)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError("adjacency must be square")
    if np.any(np.diag(adj)):
        return False
    return masks_acyclic(parent_masks(adj))


def encode_dag(adj: np.ndarray) -> bytes:
    adj = np.asarray(adj).astype(np.uint8)
    if not is_acyclic(adj):
        raise CyclicGraphError("adjacency matrix contains a cycle or self-loop")
    return pack_bits(adj.reshape(-1))


def decode_dag(key: bytes, n: int) -> np.ndarray:
    return unpack_bits(key, n * n).reshape(n, n)


def key_to_masks(key: bytes, n: int) -> list[int]:
    """Parent bitmasks of the DAG encoded by ``key``."""
    total = n * n
    bits = int.from_bytes(key, "big") >> (8 * len(key) - total)
    masks = [0] * n
    for i in range(n):
        row = bits >> (total - (i + 1) * n)
        for j in range(n):
            if row >> (n - 1 - j) & 1:
                masks[j] |= 1 << i
    return masks


def masks_to_key(masks: Sequence[int], n: int) -> bytes:
    total = n * n
    nbytes = (total + 7) // 8
    bits = 0
    for j, pa in enumerate(masks):
        for i in range(n):
            if pa >> i & 1:
                bits |= 1 << (total - 1 - (i * n + j))
    return (bits << (8 * nbytes - total)).to_bytes(nbytes, "big")
