"""Batches of variable-size graphs stored as CSR-style row offsets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np


class BatchError(ValueError):
    """Raised when graphs cannot form a valid batch."""


@dataclass(frozen=True, eq=False)
class GraphBatch:
    """Concatenated node features of several graphs.

    Graph ``i`` owns node rows ``offsets[i]:offsets[i + 1]``. ``edges`` is an
    ``(E, 2)`` array of directed ``(src, dst)`` pairs in batch-global node
    indices, grouped by graph via ``edge_offsets``. Arrays are made read-only
    on construction.
    """

    node_features: np.ndarray
    offsets: np.ndarray
    edges: np.ndarray
    edge_offsets: np.ndarray
    edge_features: Optional[np.ndarray] = None

    def __post_init__(self):
        for arr in (self.node_features, self.offsets, self.edges, self.edge_offsets, self.edge_features):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def num_graphs(self) -> int:
        return len(self.offsets) - 1

    @property
    def feature_dim(self) -> int:
        return self.node_features.shape[1]

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def graph_index(self) -> np.ndarray:
        """Graph id of every node row."""
        return np.repeat(np.arange(self.num_graphs), self.sizes)

    def with_features(self, node_features: np.ndarray) -> "GraphBatch":
        """Same structure, new node features."""
        node_features = np.array(node_features, dtype=np.float64)
        if node_features.shape != self.node_features.shape:
            raise BatchError(
                f"feature shape {node_features.shape} != {self.node_features.shape}"
            )
        return GraphBatch(node_features, self.offsets, self.edges, self.edge_offsets, self.edge_features)

    def graph(self, i: int):
        """Return graph ``i`` as ``(features, local_edges, edge_features)``."""
        lo, hi = self.offsets[i], self.offsets[i + 1]
        elo, ehi = self.edge_offsets[i], self.edge_offsets[i + 1]
        ef = None if self.edge_features is None else self.edge_features[elo:ehi].copy()
        return self.node_features[lo:hi].copy(), self.edges[elo:ehi] - lo, ef

    def split(self) -> list:
        return [self.graph(i) for i in range(self.num_graphs)]

    def validate(self) -> None:
        offsets, edges = self.offsets, self.edges
        if offsets.ndim != 1 or len(offsets) < 2 or offsets[0] != 0:
            raise BatchError("offsets must start at 0 and describe at least one graph")
        if np.any(np.diff(offsets) < 1):
            raise BatchError("every graph needs at least one node")
        if offsets[-1] != self.node_features.shape[0]:
            raise BatchError("offsets do not cover the node feature rows")
        if len(self.edge_offsets) != len(offsets) or self.edge_offsets[-1] != len(edges):
            raise BatchError("edge offsets inconsistent with edge list")
        owner = np.repeat(np.arange(self.num_graphs), np.diff(self.edge_offsets))
        if len(edges) and (
            np.any(edges < offsets[owner, None]) or np.any(edges >= offsets[owner + 1, None])
        ):
            raise BatchError("edge endpoint outside its graph")
        if self.edge_features is not None and len(self.edge_features) != len(edges):
            raise BatchError("one edge feature row per edge required")


def _as_graph(graph):
    if len(graph) == 2:
        x, e = graph
        ef = None
    elif len(graph) == 3:
        x, e, ef = graph
    else:
        raise BatchError("a graph is (node_features, edges[, edge_features])")
    x = np.array(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise BatchError("node features must be a matrix")
    e = np.array(e, dtype=np.int64).reshape(-1, 2)
    if ef is not None:
        ef = np.array(ef, dtype=np.float64)
        if ef.ndim == 1:
            ef = ef[:, None]
    return x, e, ef


def build_batch(graphs: Iterable) -> GraphBatch:
    """Concatenate graphs given as ``(node_features, edges[, edge_features])``.

    Edges use node indices local to their graph; they are shifted to batch
    indices here. Node order inside each graph is kept as given.

    >>> build_batch([(np.ones((3, 2)), []), (np.ones((2, 2)), [(0, 1)])]).offsets
    array([0, 3, 5])
    """
    graphs = [_as_graph(g) for g in graphs]
    if not graphs:
        raise BatchError("cannot build an empty batch")
    dim = graphs[0][0].shape[1]
    has_ef = [ef is not None for _, _, ef in graphs]
    if any(has_ef) and not all(has_ef):
        raise BatchError("edge features must be given for all graphs or none")
    feats, edges, efeats = [], [], []
    offsets, edge_offsets = [0], [0]
    for i, (x, e, ef) in enumerate(graphs):
        n = x.shape[0]
        if n < 1:
            raise BatchError(f"graph {i} is empty")
        if x.shape[1] != dim:
            raise BatchError(f"graph {i} has feature_dim {x.shape[1]}, expected {dim}")
        if len(e) and (e.min() < 0 or e.max() >= n):
            raise BatchError(f"graph {i} has an edge endpoint outside [0, {n})")
        if ef is not None:
            if len(ef) != len(e):
                raise BatchError(f"graph {i}: {len(ef)} edge feature rows for {len(e)} edges")
            if efeats and ef.shape[1] != efeats[0].shape[1]:
                raise BatchError(f"graph {i} has inconsistent edge feature dim")
            efeats.append(ef)
        feats.append(x)
        edges.append(e + offsets[-1])
        offsets.append(offsets[-1] + n)
        edge_offsets.append(edge_offsets[-1] + len(e))
    ef_all = np.concatenate(efeats) if efeats else None
    return GraphBatch(
        np.concatenate(feats),
        np.asarray(offsets, dtype=np.int64),
        np.concatenate(edges).astype(np.int64).reshape(-1, 2),
        np.asarray(edge_offsets, dtype=np.int64),
        ef_all,
    )


def permute_nodes(batch: GraphBatch, permutations: Sequence) -> GraphBatch:
    """Reorder nodes inside each graph.

    ``permutations[i][k]`` is the old local index of the node placed at new
    local position ``k`` in graph ``i``. Edges are remapped and keep their
    original order.
    """
    if len(permutations) != batch.num_graphs:
        raise BatchError("one permutation per graph required")
    sizes = batch.sizes
    order = np.empty(batch.offsets[-1], dtype=np.int64)
    new_pos = np.empty_like(order)
    for i, perm in enumerate(permutations):
        perm = np.asarray(perm, dtype=np.int64)
        n = sizes[i]
        if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
            raise BatchError(f"invalid permutation for graph {i} with {n} nodes")
        lo = batch.offsets[i]
        order[lo:lo + n] = perm + lo
        new_pos[perm + lo] = np.arange(n) + lo
    return GraphBatch(
        batch.node_features[order],
        batch.offsets.copy(),
        new_pos[batch.edges],
        batch.edge_offsets.copy(),
        None if batch.edge_features is None else batch.edge_features.copy(),
    )


def inverse_permutations(permutations: Sequence) -> list:
    return [np.argsort(np.asarray(p)) for p in permutations]


def random_permutations(batch: GraphBatch, rng: np.random.Generator) -> list:
    return [rng.permutation(n) for n in batch.sizes]


def batches_equal(a: GraphBatch, b: GraphBatch) -> bool:
    """Bitwise equality of two batches."""
    same_ef = (a.edge_features is None and b.edge_features is None) or (
        a.edge_features is not None
        and b.edge_features is not None
        and np.array_equal(a.edge_features, b.edge_features)
    )
    return (
        same_ef
        and np.array_equal(a.node_features, b.node_features)
        and np.array_equal(a.offsets, b.offsets)
        and np.array_equal(a.edges, b.edges)
        and np.array_equal(a.edge_offsets, b.edge_offsets)
    )


# Text format, one record per graph:
#
#   graph <num_nodes> <feature_dim> <num_edges> <edge_feature_dim>
#   <feature_dim floats>                      (num_nodes lines)
#   <src> <dst> [<edge_feature_dim floats>]   (num_edges lines, local indices)
#
# Blank lines and lines starting with '#' are ignored. Floats are written with
# repr() so reading back is exact. edge_feature_dim is 0 when absent.

def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def write_batch(batch: GraphBatch, fh: TextIO) -> None:
    for x, e, ef in batch.split():
        efd = 0 if ef is None else ef.shape[1]
        fh.write(f"graph {x.shape[0]} {x.shape[1]} {len(e)} {efd}\n")
        for row in x:
            fh.write(_fmt(row) + "\n")
        for k, (s, d) in enumerate(e):
            line = f"{int(s)} {int(d)}"
            if efd:
                line += " " + _fmt(ef[k])
            fh.write(line + "\n")


def read_batch(fh: TextIO) -> GraphBatch:
    lines = [ln.strip() for ln in fh]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    graphs = []
    pos = 0
    while pos < len(lines):
        head = lines[pos].split()
        if len(head) != 5 or head[0] != "graph":
            raise BatchError(f"expected graph header, got {lines[pos]!r}")
        n, dim, m, efd = map(int, head[1:])
        pos += 1
        try:
            x = np.array([[float(v) for v in lines[pos + k].split()] for k in range(n)])
            pos += n
            rows = [lines[pos + k].split() for k in range(m)]
            pos += m
        except IndexError:
            raise BatchError("truncated graph record") from None
        x = x.reshape(n, dim)
        if any(len(r) != 2 + efd for r in rows):
            raise BatchError("malformed edge line")
        e = np.array([[int(r[0]), int(r[1])] for r in rows], dtype=np.int64).reshape(-1, 2)
        ef = np.array([[float(v) for v in r[2:]] for r in rows]).reshape(m, efd) if efd else None
        graphs.append((x, e, ef))
    return build_batch(graphs)
