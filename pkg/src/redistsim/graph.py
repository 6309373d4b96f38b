"""Adjacency graphs, plans, contiguity, tallies and spanning trees."""
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .errors import BadIndex, DuplicateEdge, NotConnected, SelfLoop, ShapeError


class Graph:
    """Undirected simple graph on nodes ``0..n-1``.

    ``edges`` holds each edge once as a row ``(u, v)`` with ``u < v``, sorted
    lexicographically. Neighbors are stored in CSR form (``indptr``,
    ``indices``) with each neighbor list sorted.
    """

    def __init__(self, n, edges, indptr, indices):
        self.n = n
        self.edges = edges
        self.indptr = indptr
        self.indices = indices
        for arr in (edges, indptr, indices):
            arr.setflags(write=False)

    @property
    def n_edges(self):
        return self.edges.shape[0]

    def neighbors(self, v):
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def degrees(self):
        return np.diff(self.indptr)

    def is_connected(self):
        return self.n > 0 and _kernels.n_components(self.indptr, self.indices) == 1

    def __eq__(self, other):
        return (isinstance(other, Graph) and self.n == other.n
                and np.array_equal(self.edges, other.edges))

    def __repr__(self):
        return f"Graph(n={self.n}, n_edges={self.n_edges})"


def build_graph(node_count, edge_list):
    """Validate an undirected edge list and build a :class:`Graph`."""
    n = int(node_count)
    e = np.asarray(edge_list, dtype=np.int64).reshape(-1, 2)
    if e.size and (e.min() < 0 or e.max() >= n):
        bad = e[(e < 0) | (e >= n)][0]
        raise BadIndex(f"node index {bad} out of range for {n} nodes")
    loops = e[:, 0] == e[:, 1]
    if loops.any():
        raise SelfLoop(f"self-loop at node {e[loops][0, 0]}")
    e = np.sort(e, axis=1)
    e = e[np.lexsort((e[:, 1], e[:, 0]))]
    dup = np.all(e[1:] == e[:-1], axis=1)
    if dup.any():
        u, v = e[1:][dup][0]
        raise DuplicateEdge(f"duplicate edge ({u}, {v})")

    both = np.concatenate([e, e[:, ::-1]])
    both = both[np.lexsort((both[:, 1], both[:, 0]))]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, both[:, 0] + 1, 1)
    np.cumsum(indptr, out=indptr)
    return Graph(n, e, indptr, both[:, 1].copy())


def as_plan(assignment, ndists=None):
    """Check a district assignment (labels ``1..ndists``, all used)."""
    plan = np.asarray(assignment)
    if plan.ndim != 1:
        raise ShapeError("plan must be one-dimensional")
    if plan.size and not np.issubdtype(plan.dtype, np.integer):
        if not np.all(plan == np.round(plan)):
            raise ShapeError("plan labels must be integers")
    plan = plan.astype(np.int64)
    if ndists is None:
        ndists = int(plan.max()) if plan.size else 0
    if plan.size and (plan.min() < 1 or plan.max() > ndists):
        raise ShapeError(f"plan labels must lie in 1..{ndists}")
    used = np.unique(plan)
    if used.size != ndists:
        missing = sorted(set(range(1, ndists + 1)) - set(used.tolist()))
        raise ShapeError(f"districts {missing} are empty")
    return plan


def _check_length(g, plan):
    if len(plan) != g.n:
        raise ShapeError(f"plan has length {len(plan)}, graph has {g.n} nodes")


def is_contiguous(g, plan):
    """True iff every district induces a connected subgraph."""
    plan = np.asarray(plan)
    _check_length(g, plan)
    if g.n == 0:
        return True
    same = plan[g.edges[:, 0]] == plan[g.edges[:, 1]]
    kept = g.edges[same]
    adj = coo_matrix((np.ones(len(kept)), (kept[:, 0], kept[:, 1])), shape=(g.n, g.n))
    n_comp = connected_components(adj, directed=False)[0]
    return n_comp == np.unique(plan).size


def tally(plan, weights, ndists=None):
    """Per-district sums of a node-level vector."""
    plan = np.asarray(plan)
    w = np.asarray(weights, dtype=float)
    if w.shape != plan.shape:
        raise ShapeError(f"weights have shape {w.shape}, plan has {plan.shape}")
    if ndists is None:
        ndists = int(plan.max())
    return np.bincount(plan - 1, weights=w, minlength=ndists)


def _subset_mask(g, subset):
    subset = np.asarray(subset)
    if subset.dtype == bool:
        if subset.shape != (g.n,):
            raise ShapeError("boolean subset must have one entry per node")
        return subset
    mask = np.zeros(g.n, dtype=bool)
    mask[subset] = True
    return mask


def _local_index(mask):
    local = np.full(mask.shape[0], -1, dtype=np.int64)
    local[mask] = np.arange(int(mask.sum()))
    return local


def induced(g, subset):
    """Global node ids and local CSR arrays of the induced subgraph."""
    mask = _subset_mask(g, subset)
    return _kernels.induced_csr(g.indptr, g.indices, _local_index(mask))


@dataclass(frozen=True)
class SpanningTree:
    """Spanning tree over a node subset, as parent links into the full graph.

    ``parent[v]`` is -1 for the root and for nodes outside ``nodes``.
    """

    nodes: np.ndarray
    parent: np.ndarray
    root: int

    def edges(self):
        child = self.nodes[self.parent[self.nodes] >= 0]
        e = np.column_stack([child, self.parent[child]])
        return np.sort(e, axis=1)

    def key(self):
        """Hashable canonical edge set."""
        e = self.edges()
        return tuple(map(tuple, e[np.lexsort((e[:, 1], e[:, 0]))].tolist()))


def random_spanning_tree(g, subset, rng):
    """Uniform spanning tree of the subgraph induced by ``subset`` (Wilson)."""
    nodes, ptr, idx = induced(g, subset)
    m = nodes.shape[0]
    if m == 0 or _kernels.n_components(ptr, idx) != 1:
        raise NotConnected("subset does not induce a connected subgraph")
    parent = np.empty(m, dtype=np.int64)
    root = _kernels.wilson_tree(ptr, idx, rng, parent, np.empty(m, dtype=np.bool_),
                                np.empty(m, dtype=np.int64))
    glob = np.full(g.n, -1, dtype=np.int64)
    has = parent >= 0
    glob[nodes[has]] = nodes[parent[has]]
    return SpanningTree(nodes, glob, int(nodes[root]))


def log_spanning_trees_local(ptr, idx):
    """log tau of a connected local CSR graph via the reduced Laplacian."""
    m = ptr.shape[0] - 1
    if m <= 1:
        return 0.0
    lap = np.zeros((m, m))
    rows = np.repeat(np.arange(m), np.diff(ptr))
    lap[rows, idx] = -1.0
    lap[np.arange(m), np.arange(m)] = np.diff(ptr)
    sign, logdet = np.linalg.slogdet(lap[1:, 1:])
    if sign <= 0:
        raise NotConnected("subgraph is not connected")
    return float(logdet)


def count_spanning_trees(g, subset):
    """Natural log of the number of spanning trees of the induced subgraph."""
    nodes, ptr, idx = induced(g, subset)
    if nodes.shape[0] == 0 or _kernels.n_components(ptr, idx) != 1:
        raise NotConnected("subset does not induce a connected subgraph")
    return log_spanning_trees_local(ptr, idx)


def grid_graph(rows, cols):
    """Rook-adjacency grid; node ``r*cols + c``."""
    idx = np.arange(rows * cols).reshape(rows, cols)
    horiz = np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
    vert = np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
    return build_graph(rows * cols, np.concatenate([horiz, vert]))
