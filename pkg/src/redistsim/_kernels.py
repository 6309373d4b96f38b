"""Compiled inner loops: Wilson trees, tree ordering, and pooled cut search.

All node indices here are *local* to a region (0..m-1). Random draws come
from a numpy ``Generator`` passed straight into the jitted code, so the
Python-side stream state advances identically.
"""
import numba
import numpy as np


@numba.njit(cache=True)
def induced_csr(indptr, indices, local):
    """CSR of the subgraph induced by nodes with ``local[v] >= 0``."""
    nodes = np.flatnonzero(local >= 0)
    m = nodes.shape[0]
    sub_ptr = np.zeros(m + 1, dtype=np.int64)
    for i in range(m):
        v = nodes[i]
        c = 0
        for j in range(indptr[v], indptr[v + 1]):
            if local[indices[j]] >= 0:
                c += 1
        sub_ptr[i + 1] = sub_ptr[i] + c
    sub_idx = np.empty(sub_ptr[m], dtype=np.int64)
    for i in range(m):
        v = nodes[i]
        k = sub_ptr[i]
        for j in range(indptr[v], indptr[v + 1]):
            w = local[indices[j]]
            if w >= 0:
                sub_idx[k] = w
                k += 1
    return nodes, sub_ptr, sub_idx


@numba.njit(cache=True)
def n_components(indptr, indices):
    m = indptr.shape[0] - 1
    seen = np.zeros(m, dtype=np.bool_)
    stack = np.empty(m, dtype=np.int64)
    comps = 0
    for s in range(m):
        if seen[s]:
            continue
        comps += 1
        seen[s] = True
        top = 0
        stack[0] = s
        while top >= 0:
            u = stack[top]
            top -= 1
            for j in range(indptr[u], indptr[u + 1]):
                w = indices[j]
                if not seen[w]:
                    seen[w] = True
                    top += 1
                    stack[top] = w
    return comps


@numba.njit(cache=True)
def wilson_tree(indptr, indices, rng, parent, in_tree, nxt):
    """Uniform spanning tree by loop-erased random walks.

    Fills ``parent`` (root gets -1) and returns the root. The graph must be
    connected or this never terminates.
    """
    m = indptr.shape[0] - 1
    for i in range(m):
        in_tree[i] = False
        parent[i] = -1
    root = int(rng.random() * m)
    in_tree[root] = True
    for i in range(m):
        u = i
        while not in_tree[u]:
            deg = indptr[u + 1] - indptr[u]
            nxt[u] = indices[indptr[u] + int(rng.random() * deg)]
            u = nxt[u]
        u = i
        while not in_tree[u]:
            in_tree[u] = True
            parent[u] = nxt[u]
            u = nxt[u]
    return root


@numba.njit(cache=True)
def tree_order(parent, root, order, size, tin):
    """Preorder of a parent-pointer tree; subtree of v is order[tin[v]:tin[v]+size[v]]."""
    m = parent.shape[0]
    cnt = np.zeros(m + 1, dtype=np.int64)
    for v in range(m):
        if parent[v] >= 0:
            cnt[parent[v] + 1] += 1
    for v in range(m):
        cnt[v + 1] += cnt[v]
    kids = np.empty(max(m - 1, 1), dtype=np.int64)
    fill = cnt[:m].copy()
    for v in range(m):
        p = parent[v]
        if p >= 0:
            kids[fill[p]] = v
            fill[p] += 1
    stack = np.empty(m, dtype=np.int64)
    top = 0
    stack[0] = root
    pos = 0
    while top >= 0:
        u = stack[top]
        top -= 1
        order[pos] = u
        tin[u] = pos
        pos += 1
        for j in range(cnt[u], cnt[u + 1]):
            top += 1
            stack[top] = kids[j]
    for i in range(m - 1, -1, -1):
        u = order[i]
        size[u] = 1
    for i in range(m - 1, -1, -1):
        u = order[i]
        p = parent[u]
        if p >= 0:
            size[p] += size[u]


@numba.njit(cache=True)
def _within(p, target, tol):
    return abs(p - target) <= tol * target


@numba.njit(cache=True)
def pooled_split(indptr, indices, pop, parity, tol, k,
                 codes, region_cnt, region_units, split_base, split_cap,
                 n_trees, rng, out_district):
    """Draw ``n_trees`` uniform trees and pick one valid (tree, edge, side)
    uniformly from the pooled set of valid cuts.

    A cut is valid when the district side is within ``tol`` of ``parity``,
    the other side is within ``tol`` of ``(k-1)*parity`` and the running
    split lower bound stays under the cap for every admin-unit layer.

    ``codes`` is (layers, m) of local unit codes, ``region_cnt`` is
    (layers, n_units) node counts inside the region, ``region_units`` is
    (layers, max_units) padded with -1.

    Returns the total number of valid cuts over the pool; the chosen
    district is written to ``out_district`` (only meaningful if > 0).
    """
    m = indptr.shape[0] - 1
    n_layers = codes.shape[0]
    parent = np.empty(m, dtype=np.int64)
    in_tree = np.empty(m, dtype=np.bool_)
    nxt = np.empty(m, dtype=np.int64)
    order = np.empty(m, dtype=np.int64)
    size = np.empty(m, dtype=np.int64)
    tin = np.empty(m, dtype=np.int64)
    spop = np.empty(m, dtype=np.float64)
    cand_v = np.empty(2 * m, dtype=np.int64)
    cand_side = np.empty(2 * m, dtype=np.int64)
    n_units = region_cnt.shape[1]
    cnt = np.zeros(max(n_units, 1), dtype=np.int64)
    total = 0.0
    for v in range(m):
        total += pop[v]
    rem_target = (k - 1) * parity
    n_valid = 0
    for _ in range(n_trees):
        root = wilson_tree(indptr, indices, rng, parent, in_tree, nxt)
        tree_order(parent, root, order, size, tin)
        for i in range(m):
            spop[i] = pop[i]
        for i in range(m - 1, 0, -1):
            u = order[i]
            spop[parent[u]] += spop[u]
        n_here = 0
        for v in range(m):
            if v == root:
                continue
            sub = spop[v]
            rest = total - sub
            side_a = _within(sub, parity, tol) and _within(rest, rem_target, tol)
            side_b = _within(rest, parity, tol) and _within(sub, rem_target, tol)
            if not (side_a or side_b):
                continue
            ok = True
            start = tin[v]
            stop = start + size[v]
            for t in range(n_layers):
                touched_d = 0
                for i in range(start, stop):
                    c = codes[t, order[i]]
                    if cnt[c] == 0:
                        touched_d += 1
                    cnt[c] += 1
                touched_r = 0
                for j in range(region_units.shape[1]):
                    u = region_units[t, j]
                    if u < 0:
                        break
                    if region_cnt[t, u] > cnt[u]:
                        touched_r += 1
                for i in range(start, stop):
                    cnt[codes[t, order[i]]] = 0
                if split_base[t] + touched_d + touched_r > split_cap[t]:
                    ok = False
                    break
            if not ok:
                continue
            if side_a:
                cand_v[n_here] = v
                cand_side[n_here] = 0
                n_here += 1
            if side_b:
                cand_v[n_here] = v
                cand_side[n_here] = 1
                n_here += 1
        if n_here == 0:
            continue
        n_valid += n_here
        if rng.random() * n_valid < n_here:
            j = int(rng.random() * n_here)
            v = cand_v[j]
            inside = cand_side[j] == 0
            for i in range(m):
                out_district[i] = not inside
            for i in range(tin[v], tin[v] + size[v]):
                out_district[order[i]] = inside
    return n_valid


@numba.njit(cache=True)
def cut_edges(indptr, indices, mask):
    """Number of undirected edges with exactly one endpoint in ``mask``."""
    m = indptr.shape[0] - 1
    c = 0
    for u in range(m):
        if mask[u]:
            for j in range(indptr[u], indptr[u + 1]):
                if not mask[indices[j]]:
                    c += 1
    return c


@numba.njit(cache=True)
def ordering_count(adj_bits, k):
    """Orderings of k districts in which every suffix set is connected.

    ``adj_bits[d]`` is the bitmask of districts adjacent to d.
    """
    full = (1 << k) - 1
    conn = np.zeros(1 << k, dtype=np.bool_)
    for s in range(1, full + 1):
        low = s & (-s)
        seen = low
        frontier = low
        while frontier:
            nb = 0
            f = frontier
            while f:
                b = f & (-f)
                d = 0
                while (1 << d) != b:
                    d += 1
                nb |= adj_bits[d]
                f ^= b
            frontier = nb & s & ~seen
            seen |= frontier
        conn[s] = seen == s
    ways = np.zeros(1 << k, dtype=np.float64)
    for d in range(k):
        ways[1 << d] = 1.0
    for s in range(1, full + 1):
        if not conn[s] or ways[s] == 0.0:
            continue
        for d in range(k):
            if (s >> d) & 1:
                continue
            t = s | (1 << d)
            if conn[t]:
                ways[t] += ways[s]
    return ways[full]
