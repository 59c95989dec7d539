"""Temporal edge-list ingestion, snapshot binning, and label-set construction.

An edge list is plain text, one event per line: ``src dst timestamp [weight]``
with whitespace or comma separators and ``#`` comments. Node ids are remapped
to dense 0..N-1 in order of first appearance. Events are binned into T
snapshots by uniform timestamp ranges, and per-slot edges are split into
train/validation/test positives with the validation and test edges masked out
of the adjacency used for message passing.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from nohgnn.errors import ParameterError, ParseError, SamplingError, ShapeError
from nohgnn.tensor3 import SliceSparse3

log = logging.getLogger(__name__)

SPLIT_FRACTIONS = (0.7, 0.2, 0.1)
MIN_SPLITTABLE_EDGES = 3


@dataclass(frozen=True)
class EdgeEvent:
    """One timestamped interaction, with endpoints already densely remapped."""

    src: int
    dst: int
    timestamp: int
    weight: float = 1.0


def load_edge_list(path: str) -> tuple[list[EdgeEvent], dict[str, int]]:
    """Parse an edge-list file into events plus the id remapping.

    Returns (events, id_map) where id_map sends the external id token to its
    dense index, assigned by first appearance in file order.
    """
    events: list[EdgeEvent] = []
    id_map: dict[str, int] = {}

    def dense(token: str) -> int:
        if token not in id_map:
            id_map[token] = len(id_map)
        return id_map[token]

    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.replace(",", " ").split()
            if len(parts) not in (3, 4):
                raise ParseError(f"{path}:{line_no}: expected 'src dst timestamp [weight]', got {line!r}")
            try:
                src = dense(parts[0])
                dst = dense(parts[1])
                ts = int(float(parts[2]))
                weight = float(parts[3]) if len(parts) == 4 else 1.0
            except ValueError as exc:
                raise ParseError(f"{path}:{line_no}: {exc}") from None
            events.append(EdgeEvent(src, dst, ts, weight))
    if not events:
        raise ParseError(f"{path}: no edge events found")
    return events, id_map


class DynamicGraph:
    """A sequence of graph snapshots over one shared node set.

    The adjacency is a per-slice sparse stack; ``slot_edges[t]`` lists the
    distinct edges of slot t as (i, j) rows, canonicalized i < j when the
    graph is undirected and sorted lexicographically.
    """

    def __init__(
        self,
        n_nodes: int,
        adjacency: SliceSparse3,
        slot_edges: list[np.ndarray],
        id_map: dict[str, int],
        undirected: bool = True,
    ):
        if adjacency.shape2d != (n_nodes, n_nodes):
            raise ShapeError(f"adjacency {adjacency.shape2d} does not match n_nodes={n_nodes}")
        if len(slot_edges) != len(adjacency.slices):
            raise ShapeError("slot_edges and adjacency slice counts differ")
        if undirected:
            for t, s in enumerate(adjacency.slices):
                if (s - s.T).nnz != 0:
                    raise ShapeError(f"slot {t} adjacency is not symmetric")
        self.n_nodes = n_nodes
        self.adjacency = adjacency
        self.slot_edges = slot_edges
        self.id_map = id_map
        self.undirected = undirected
        self.overlap_cache: dict[int, SliceSparse3] = {}
        self._edge_keys: list[np.ndarray | None] = [None] * len(slot_edges)

    @property
    def t_slots(self) -> int:
        return len(self.adjacency.slices)

    @property
    def edge_count(self) -> int:
        return sum(len(e) for e in self.slot_edges)

    def neighbors(self, i: int, t: int) -> np.ndarray:
        s = self.adjacency.slices[t]
        return s.indices[s.indptr[i] : s.indptr[i + 1]]

    def edge_keys(self, t: int) -> np.ndarray:
        """Sorted int64 keys i*N+j of every stored adjacency entry at slot t."""
        if self._edge_keys[t] is None:
            s = self.adjacency.slices[t]
            rows = np.repeat(np.arange(self.n_nodes, dtype=np.int64), np.diff(s.indptr))
            self._edge_keys[t] = np.sort(rows * self.n_nodes + s.indices)
        return self._edge_keys[t]

    def has_edge(self, i: int, j: int, t: int) -> bool:
        keys = self.edge_keys(t)
        pos = np.searchsorted(keys, i * self.n_nodes + j)
        return pos < len(keys) and keys[pos] == i * self.n_nodes + j


@dataclass
class LabeledPairSet:
    """Labeled node pairs (i, j, t) for one role; y=1 rows are observed edges."""

    pairs: np.ndarray
    labels: np.ndarray
    role: str

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 3)
        self.labels = np.asarray(self.labels, dtype=np.float64).reshape(-1)
        if len(self.pairs) != len(self.labels):
            raise ShapeError("pairs and labels lengths differ")

    @property
    def size(self) -> int:
        return len(self.labels)


def merge_pair_sets(a: LabeledPairSet, b: LabeledPairSet, role: str | None = None) -> LabeledPairSet:
    return LabeledPairSet(
        np.concatenate([a.pairs, b.pairs]),
        np.concatenate([a.labels, b.labels]),
        role or a.role,
    )


def edges_of_slice(s: sp.csr_matrix, undirected: bool) -> np.ndarray:
    """Distinct (i, j) edge rows of one adjacency slice, sorted lexicographically."""
    half = sp.triu(s, k=1).tocoo() if undirected else s.tocoo()
    pairs = np.column_stack([half.row, half.col]).astype(np.int64)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order]


def bin_snapshots(
    events: list[EdgeEvent],
    t_slots: int,
    undirected: bool = True,
    binarize: bool = True,
    id_map: dict[str, int] | None = None,
) -> DynamicGraph:
    """Bin events into T uniform timestamp ranges and build the adjacency.

    Slot index is floor(T*(ts-ts_min)/(ts_max-ts_min+1)), computed in exact
    integer arithmetic. Self-loops are dropped; duplicate edges within a slot
    collapse to a single unit entry when ``binarize`` is set, and accumulate
    their weights otherwise.
    """
    if t_slots < 1:
        raise ParameterError(f"t_slots must be >= 1, got {t_slots}")
    if not events:
        raise ParameterError("cannot bin an empty event list")
    stamps = [e.timestamp for e in events]
    ts_min, ts_max = min(stamps), max(stamps)
    span = ts_max - ts_min + 1
    if ts_min == ts_max and t_slots > 1:
        log.warning("all %d events share one timestamp; every event lands in slot 0", len(events))
    n_nodes = 1 + max(max(e.src for e in events), max(e.dst for e in events))

    rows: list[list[int]] = [[] for _ in range(t_slots)]
    cols: list[list[int]] = [[] for _ in range(t_slots)]
    vals: list[list[float]] = [[] for _ in range(t_slots)]
    for e in events:
        if e.src == e.dst:
            continue
        t = (t_slots * (e.timestamp - ts_min)) // span
        rows[t].append(e.src)
        cols[t].append(e.dst)
        vals[t].append(e.weight)
        if undirected:
            rows[t].append(e.dst)
            cols[t].append(e.src)
            vals[t].append(e.weight)

    slices = []
    slot_edges = []
    for t in range(t_slots):
        s = sp.csr_matrix(
            (np.asarray(vals[t]), (np.asarray(rows[t], dtype=np.int64), np.asarray(cols[t], dtype=np.int64))),
            shape=(n_nodes, n_nodes),
        )
        s.sum_duplicates()
        if binarize:
            s.data = np.ones_like(s.data)
        slices.append(s)
        slot_edges.append(edges_of_slice(s, undirected))
    adjacency = SliceSparse3(slices, shape=(n_nodes, n_nodes))
    return DynamicGraph(n_nodes, adjacency, slot_edges, dict(id_map or {}), undirected)


def _apportion(n: int, fractions: tuple[float, ...]) -> list[int]:
    """Largest-remainder apportionment of n items into the given fractions."""
    exact = [n * f for f in fractions]
    base = [math.floor(x) for x in exact]
    remainders = np.asarray([x - b for x, b in zip(exact, base)])
    for idx in np.argsort(-remainders, kind="stable")[: n - sum(base)]:
        base[idx] += 1
    return base


def split_edges(
    g: DynamicGraph,
    fractions: tuple[float, float, float] = SPLIT_FRACTIONS,
    seed: int = 0,
) -> tuple[LabeledPairSet, LabeledPairSet, LabeledPairSet, DynamicGraph]:
    """Partition each slot's edges into train/val/test positives.

    Validation and test positives are removed from the returned masked graph
    so message passing never sees them. Slots with fewer than three edges send
    everything to train.
    """
    if any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ParameterError(f"fractions must be positive and sum to 1, got {fractions}")
    rng = np.random.default_rng(seed)
    buckets: list[list[np.ndarray]] = [[], [], []]
    removed_keys: list[np.ndarray] = []
    for t, edges in enumerate(g.slot_edges):
        n_edges = len(edges)
        if n_edges == 0:
            removed_keys.append(np.zeros(0, dtype=np.int64))
            continue
        if n_edges < MIN_SPLITTABLE_EDGES:
            log.warning("slot %d has only %d edge(s); assigning all to train", t, n_edges)
            counts = [n_edges, 0, 0]
        else:
            counts = _apportion(n_edges, fractions)
        shuffled = edges[rng.permutation(n_edges)]
        lo = 0
        parts = []
        for c in counts:
            parts.append(shuffled[lo : lo + c])
            lo += c
        for bucket, part in zip(buckets, parts):
            if len(part):
                bucket.append(np.column_stack([part, np.full(len(part), t, dtype=np.int64)]))
        held_out = np.concatenate([parts[1], parts[2]]) if len(parts[1]) + len(parts[2]) else np.zeros((0, 2), dtype=np.int64)
        keys = held_out[:, 0] * g.n_nodes + held_out[:, 1]
        if g.undirected:
            keys = np.concatenate([keys, held_out[:, 1] * g.n_nodes + held_out[:, 0]])
        removed_keys.append(keys)

    def build(role_idx: int, role: str) -> LabeledPairSet:
        if buckets[role_idx]:
            pairs = np.concatenate(buckets[role_idx])
            order = np.lexsort((pairs[:, 1], pairs[:, 0], pairs[:, 2]))
            pairs = pairs[order]
        else:
            pairs = np.zeros((0, 3), dtype=np.int64)
        return LabeledPairSet(pairs, np.ones(len(pairs)), role)

    masked_slices = []
    masked_edges = []
    for t, s in enumerate(g.adjacency.slices):
        coo = s.tocoo()
        keep = ~np.isin(coo.row.astype(np.int64) * g.n_nodes + coo.col, removed_keys[t])
        masked = sp.csr_matrix(
            (coo.data[keep], (coo.row[keep], coo.col[keep])), shape=s.shape
        )
        masked_slices.append(masked)
        masked_edges.append(edges_of_slice(masked, g.undirected))
    masked_graph = DynamicGraph(
        g.n_nodes,
        SliceSparse3(masked_slices, shape=(g.n_nodes, g.n_nodes)),
        masked_edges,
        g.id_map,
        g.undirected,
    )
    return build(0, "train"), build(1, "val"), build(2, "test"), masked_graph


def negative_sample(
    g: DynamicGraph,
    positives: LabeledPairSet,
    ratio: int = 1,
    seed: int | list[int] = 0,
) -> LabeledPairSet:
    """Draw ``ratio`` label-0 pairs per positive by corrupting the tail node.

    A candidate (i, j', t) is accepted when j' != i, the pair is not an edge
    of ``g`` at slot t, and it was not already sampled in this call. Anchors
    whose non-neighbors are exhausted fall back to a uniform non-edge of the
    slot; a fully connected slot raises a sampling error.
    """
    if ratio < 1:
        raise ParameterError(f"negative ratio must be >= 1, got {ratio}")
    rng = np.random.default_rng(seed)
    n = g.n_nodes
    anchors = np.repeat(positives.pairs[:, 0], ratio)
    slots = np.repeat(positives.pairs[:, 2], ratio)
    total = len(anchors)
    out = np.empty((total, 3), dtype=np.int64)
    out[:, 0] = anchors
    out[:, 2] = slots
    taken: dict[int, set[int]] = {}
    pending = np.arange(total)
    rounds = 0
    while len(pending) and rounds < 32:
        rounds += 1
        draws = rng.integers(0, n, size=len(pending))
        still = []
        for k, j in zip(pending, draws):
            i, t = int(out[k, 0]), int(out[k, 2])
            j = int(j)
            a, b = (i, j) if (i < j or not g.undirected) else (j, i)
            key = a * n + b
            slot_taken = taken.setdefault(t, set())
            if j == i or g.has_edge(a, b, t) or key in slot_taken:
                still.append(k)
                continue
            out[k, 0], out[k, 1] = a, b
            slot_taken.add(key)
        pending = np.asarray(still, dtype=np.int64)
    for k in pending:
        i, t = int(out[k, 0]), int(out[k, 2])
        slot_taken = taken.setdefault(t, set())
        choice = _fallback_non_edge(g, i, t, slot_taken, rng)
        a, b = choice
        out[k, 0], out[k, 1] = a, b
        slot_taken.add(a * n + b)
    return LabeledPairSet(out, np.zeros(total), positives.role)


def _candidate_tails(g: DynamicGraph, i: int, t: int, taken: set[int]) -> np.ndarray:
    n = g.n_nodes
    blocked = set(g.neighbors(i, t).tolist())
    blocked.add(i)
    tails = []
    for j in range(n):
        if j in blocked:
            continue
        a, b = (i, j) if (i < j or not g.undirected) else (j, i)
        if a * n + b in taken:
            continue
        tails.append(j)
    return np.asarray(tails, dtype=np.int64)


def _fallback_non_edge(
    g: DynamicGraph, i: int, t: int, taken: set[int], rng: np.random.Generator
) -> tuple[int, int]:
    tails = _candidate_tails(g, i, t, taken)
    if len(tails):
        j = int(tails[rng.integers(0, len(tails))])
        return (i, j) if (i < j or not g.undirected) else (j, i)
    n = g.n_nodes
    free = []
    for a in range(n):
        row = set(g.neighbors(a, t).tolist())
        for b in range(a + 1, n) if g.undirected else range(n):
            if b == a or b in row or a * n + b in taken:
                continue
            free.append((a, b))
    if not free:
        raise SamplingError(f"slot {t} has no remaining non-edges to sample")
    return free[rng.integers(0, len(free))]
