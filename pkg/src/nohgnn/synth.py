"""Seeded synthetic graph generators used by tests and the demo scripts."""

from __future__ import annotations

import numpy as np

from nohgnn.data import DynamicGraph, EdgeEvent, bin_snapshots
from nohgnn.errors import ParameterError


def planted_partition(
    n_nodes: int = 60,
    t_slots: int = 8,
    p_in: float = 0.2,
    p_out: float = 0.02,
    retention: float = 0.95,
    seed: int = 0,
) -> list[EdgeEvent]:
    """Two equal communities whose edges persist noisily across slots.

    A base graph is drawn once (intra-community pairs connect with
    ``p_in / retention``, inter-community with ``p_out / retention``); every
    slot then shows each base edge independently with probability
    ``retention``, so the marginal edge probability within any single slot is
    exactly ``p_in`` (within) and ``p_out`` (across). Persistence is what
    makes held-out slot edges predictable: a pair seen in other slots is
    likely a base edge. Nodes left isolated by the base draw get one
    same-community edge so all of them appear. Timestamps equal the slot
    index, so binning with the same ``t_slots`` reproduces the slots exactly.
    """
    if n_nodes < 4 or n_nodes % 2:
        raise ParameterError(f"n_nodes must be even and >= 4, got {n_nodes}")
    if not (0.0 <= p_out <= p_in <= 1.0):
        raise ParameterError(f"need 0 <= p_out <= p_in <= 1, got p_in={p_in}, p_out={p_out}")
    if not 0.0 < retention <= 1.0:
        raise ParameterError(f"retention must be in (0, 1], got {retention}")
    if p_in > retention:
        raise ParameterError(
            f"slot marginal p_in={p_in} is unreachable with retention={retention}"
        )
    rng = np.random.default_rng(seed)
    half = n_nodes // 2
    base = []
    degree = np.zeros(n_nodes, dtype=np.int64)
    for i in range(n_nodes):
        for j in range(i + 1, n_nodes):
            same = (i < half) == (j < half)
            if rng.random() < (p_in if same else p_out) / retention:
                base.append((i, j))
                degree[i] += 1
                degree[j] += 1
    for i in np.flatnonzero(degree == 0):
        lo, hi = (0, half) if i < half else (half, n_nodes)
        j = int(rng.integers(lo, hi))
        while j == i:
            j = int(rng.integers(lo, hi))
        base.append((min(i, j), max(i, j)))
        degree[i] += 1
        degree[j] += 1
    events = []
    for t in range(t_slots):
        for i, j in base:
            if rng.random() < retention:
                events.append(EdgeEvent(i, j, t))
    return events


def planted_partition_graph(
    n_nodes: int = 60,
    t_slots: int = 8,
    p_in: float = 0.2,
    p_out: float = 0.02,
    retention: float = 0.95,
    seed: int = 0,
) -> DynamicGraph:
    return bin_snapshots(planted_partition(n_nodes, t_slots, p_in, p_out, retention, seed), t_slots)


def dense_tiny_graph(n_nodes: int = 6, t_slots: int = 3, extra: int = 3, seed: int = 0) -> DynamicGraph:
    """Small instance where every node has at least one edge in every slot.

    A ring covers every node per slot, topped up with a few random chords.
    Full coverage keeps every aggregation row non-empty, so with zero biases
    no ReLU pre-activation sits exactly at its kink during finite-difference
    probes.
    """
    if n_nodes < 3:
        raise ParameterError(f"n_nodes must be >= 3, got {n_nodes}")
    rng = np.random.default_rng(seed)
    events = []
    for t in range(t_slots):
        for i in range(n_nodes):
            events.append(EdgeEvent(i, (i + 1) % n_nodes, t))
        added = 0
        while added < extra:
            i, j = rng.integers(0, n_nodes, size=2)
            if i == j or (j - i) % n_nodes in (1, n_nodes - 1):
                continue
            events.append(EdgeEvent(int(i), int(j), t))
            added += 1
    return bin_snapshots(events, t_slots)
