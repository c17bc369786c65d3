"""Compiled label-setting search over the implicit horizontal graph.

Nodes are flat C-order indices of a lattice box. The edge for stencil entry
``s`` moves the first-layer index by ``A[s]`` and the second-layer index by
``round(B[s] @ I)``, with ``I`` the absolute first-layer index of the tail
node. Costs come from ``table[piece[row, s], s]`` where ``row`` is the tail
node (or 0 when the piece array is uniform); piece 255 means no edge.
"""

import numpy as np
from numba import njit

NO_EDGE = 255


@njit(cache=True, nogil=True)
def _round_half_away(v):
    if v >= 0.0:
        return np.floor(v + 0.5)
    return -np.floor(-v + 0.5)


@njit(cache=True, nogil=True)
def _head(node, s, shape, strides, lo, m, A, B, scratch):
    """Head of edge ``s`` leaving ``node``, or -1 if it leaves the box."""
    n = shape.shape[0]
    rem = node
    for d in range(n):
        scratch[d] = rem // strides[d]
        rem -= scratch[d] * strides[d]
    out = 0
    n2 = B.shape[1]
    for k in range(n2):
        acc = 0.0
        for i in range(m):
            acc += B[s, k, i] * (scratch[i] + lo[i])
        j = scratch[m + k] + np.int64(_round_half_away(acc))
        if j < 0 or j >= shape[m + k]:
            return -1
        out += j * strides[m + k]
    for i in range(m):
        j = scratch[i] + A[s, i]
        if j < 0 or j >= shape[i]:
            return -1
        out += j * strides[i]
    return out


@njit(cache=True, nogil=True)
def _tail(node, s, shape, strides, lo, m, A, B, scratch):
    """Node ``p`` whose edge ``s`` ends at ``node``, or -1 if outside the box."""
    n = shape.shape[0]
    rem = node
    for d in range(n):
        scratch[d] = rem // strides[d]
        rem -= scratch[d] * strides[d]
    out = 0
    for i in range(m):
        j = scratch[i] - A[s, i]
        if j < 0 or j >= shape[i]:
            return -1
        scratch[i] = j
        out += j * strides[i]
    n2 = B.shape[1]
    for k in range(n2):
        acc = 0.0
        for i in range(m):
            acc += B[s, k, i] * (scratch[i] + lo[i])
        j = scratch[m + k] - np.int64(_round_half_away(acc))
        if j < 0 or j >= shape[m + k]:
            return -1
        out += j * strides[m + k]
    return out


@njit(cache=True, nogil=True)
def _less(dist, a, b):
    da = dist[a]
    db = dist[b]
    return da < db or (da == db and a < b)


@njit(cache=True, nogil=True)
def _sift_up(heap, pos, dist, i):
    node = heap[i]
    while i > 0:
        parent = (i - 1) >> 1
        other = heap[parent]
        if _less(dist, node, other):
            heap[i] = other
            pos[other] = i
            i = parent
        else:
            break
    heap[i] = node
    pos[node] = i


@njit(cache=True, nogil=True)
def _sift_down(heap, pos, dist, i, size):
    node = heap[i]
    while True:
        child = 2 * i + 1
        if child >= size:
            break
        if child + 1 < size and _less(dist, heap[child + 1], heap[child]):
            child += 1
        other = heap[child]
        if _less(dist, other, node):
            heap[i] = other
            pos[other] = i
            i = child
        else:
            break
    heap[i] = node
    pos[node] = i


@njit(cache=True, nogil=True)
def dijkstra(shape, lo, m, A, B, piece, table, mask, src, src_val, reverse, limit, targets):
    """Multi-source Dijkstra with initial labels ``src_val``.

    Returns (dist, pred, pdir); nodes not settled before the search stops
    (limit exceeded, all targets settled, or unreachable) carry ``inf``.
    """
    n = shape.shape[0]
    size = 1
    for d in range(n):
        size *= shape[d]
    strides = np.ones(n, dtype=np.int64)
    for d in range(n - 2, -1, -1):
        strides[d] = strides[d + 1] * shape[d + 1]
    S = A.shape[0]
    uniform = piece.shape[0] == 1
    dist = np.full(size, np.inf)
    pred = np.full(size, -1, dtype=np.int64)
    pdir = np.full(size, -1, dtype=np.int16)
    pos = np.full(size, -1, dtype=np.int64)
    done = np.zeros(size, dtype=np.bool_)
    heap = np.empty(size, dtype=np.int64)
    scratch = np.empty(n, dtype=np.int64)
    hsize = 0
    for k in range(src.shape[0]):
        u = src[k]
        if not mask[u]:
            continue
        if src_val[k] < dist[u]:
            dist[u] = src_val[k]
            if pos[u] < 0:
                heap[hsize] = u
                pos[u] = hsize
                hsize += 1
            _sift_up(heap, pos, dist, pos[u])
    remaining = 0
    use_targets = targets.shape[0] == size
    if use_targets:
        for u in range(size):
            if targets[u]:
                remaining += 1
    while hsize > 0:
        u = heap[0]
        du = dist[u]
        if du > limit:
            break
        hsize -= 1
        pos[u] = -1
        if hsize > 0:
            heap[0] = heap[hsize]
            pos[heap[0]] = 0
            _sift_down(heap, pos, dist, 0, hsize)
        done[u] = True
        if use_targets and targets[u]:
            remaining -= 1
            if remaining == 0:
                break
        for s in range(S):
            if reverse:
                v = _tail(u, s, shape, strides, lo, m, A, B, scratch)
                if v < 0:
                    continue
                row = 0 if uniform else v
            else:
                v = _head(u, s, shape, strides, lo, m, A, B, scratch)
                if v < 0:
                    continue
                row = 0 if uniform else u
            if done[v] or not mask[v]:
                continue
            p = piece[row, s]
            if p == NO_EDGE:
                continue
            nd = du + table[p, s]
            if nd < dist[v]:
                dist[v] = nd
                pred[v] = u
                pdir[v] = s
                if pos[v] < 0:
                    heap[hsize] = v
                    pos[v] = hsize
                    hsize += 1
                _sift_up(heap, pos, dist, pos[v])
    for u in range(size):
        if not done[u]:
            dist[u] = np.inf
            pred[u] = -1
            pdir[u] = -1
    return dist, pred, pdir


@njit(cache=True, nogil=True)
def heads(nodes, s, shape, lo, m, A, B):
    """Vector of edge heads for one stencil entry (-1 outside the box)."""
    n = shape.shape[0]
    strides = np.ones(n, dtype=np.int64)
    for d in range(n - 2, -1, -1):
        strides[d] = strides[d + 1] * shape[d + 1]
    scratch = np.empty(n, dtype=np.int64)
    out = np.empty(nodes.shape[0], dtype=np.int64)
    for k in range(nodes.shape[0]):
        out[k] = _head(nodes[k], s, shape, strides, lo, m, A, B, scratch)
    return out


@njit(cache=True, nogil=True)
def _lz_less(keys, nodes, orgs, a, b):
    if keys[a] != keys[b]:
        return keys[a] < keys[b]
    if nodes[a] != nodes[b]:
        return nodes[a] < nodes[b]
    return orgs[a] < orgs[b]


@njit(cache=True, nogil=True)
def _lz_push(keys, nodes, orgs, size, k, v, o):
    if size == keys.shape[0]:
        cap = 2 * size
        nk = np.empty(cap)
        nn = np.empty(cap, dtype=np.int64)
        no = np.empty(cap, dtype=np.int64)
        nk[:size] = keys
        nn[:size] = nodes
        no[:size] = orgs
        keys, nodes, orgs = nk, nn, no
    i = size
    keys[i] = k
    nodes[i] = v
    orgs[i] = o
    while i > 0:
        p = (i - 1) >> 1
        if _lz_less(keys, nodes, orgs, i, p):
            keys[i], keys[p] = keys[p], keys[i]
            nodes[i], nodes[p] = nodes[p], nodes[i]
            orgs[i], orgs[p] = orgs[p], orgs[i]
            i = p
        else:
            break
    return keys, nodes, orgs, size + 1


@njit(cache=True, nogil=True)
def _lz_pop(keys, nodes, orgs, size):
    k, v, o = keys[0], nodes[0], orgs[0]
    size -= 1
    keys[0], nodes[0], orgs[0] = keys[size], nodes[size], orgs[size]
    i = 0
    while True:
        c = 2 * i + 1
        if c >= size:
            break
        if c + 1 < size and _lz_less(keys, nodes, orgs, c + 1, c):
            c += 1
        if _lz_less(keys, nodes, orgs, c, i):
            keys[i], keys[c] = keys[c], keys[i]
            nodes[i], nodes[c] = nodes[c], nodes[i]
            orgs[i], orgs[c] = orgs[c], orgs[i]
            i = c
        else:
            break
    return k, v, o, size


@njit(cache=True, nogil=True)
def _offer(tk1, to1, tk2, to2, v, k, o):
    """Insert (k, o) into v's tentative two best distinct origins."""
    if o == to1[v]:
        if k < tk1[v]:
            tk1[v] = k
            return True
        return False
    if o == to2[v]:
        if k < tk2[v]:
            tk2[v] = k
            if tk2[v] < tk1[v]:
                tk1[v], tk2[v] = tk2[v], tk1[v]
                to1[v], to2[v] = to2[v], to1[v]
            return True
        return False
    if k < tk1[v]:
        tk2[v], to2[v] = tk1[v], to1[v]
        tk1[v], to1[v] = k, o
        return True
    if k < tk2[v]:
        tk2[v], to2[v] = k, o
        return True
    return False


@njit(cache=True, nogil=True)
def two_nearest(shape, lo, m, A, B, piece, table, mask, src, src_val, reverse):
    """Best and second-best labels per node over distinct origins.

    Origin ``k`` is the index into ``src``; a node is settled at most once per
    origin and at most twice in total. Returns (best, org, second, org2) with
    ``inf`` / -1 where fewer origins reach a node.
    """
    n = shape.shape[0]
    size = 1
    for d in range(n):
        size *= shape[d]
    strides = np.ones(n, dtype=np.int64)
    for d in range(n - 2, -1, -1):
        strides[d] = strides[d + 1] * shape[d + 1]
    S = A.shape[0]
    uniform = piece.shape[0] == 1
    best = np.full(size, np.inf)
    org = np.full(size, -1, dtype=np.int64)
    second = np.full(size, np.inf)
    org2 = np.full(size, -1, dtype=np.int64)
    tk1 = np.full(size, np.inf)
    tk2 = np.full(size, np.inf)
    to1 = np.full(size, -1, dtype=np.int64)
    to2 = np.full(size, -1, dtype=np.int64)
    cap = max(16, 4 * src.shape[0])
    keys = np.empty(cap)
    nodes = np.empty(cap, dtype=np.int64)
    orgs = np.empty(cap, dtype=np.int64)
    hsize = 0
    scratch = np.empty(n, dtype=np.int64)
    for k in range(src.shape[0]):
        if mask[src[k]] and _offer(tk1, to1, tk2, to2, src[k], src_val[k], k):
            keys, nodes, orgs, hsize = _lz_push(keys, nodes, orgs, hsize, src_val[k], src[k], k)
    while hsize > 0:
        du, u, o, hsize = _lz_pop(keys, nodes, orgs, hsize)
        if org[u] < 0:
            best[u] = du
            org[u] = o
        elif org2[u] < 0 and org[u] != o:
            second[u] = du
            org2[u] = o
        else:
            continue
        for s in range(S):
            if reverse:
                v = _tail(u, s, shape, strides, lo, m, A, B, scratch)
                if v < 0:
                    continue
                row = 0 if uniform else v
            else:
                v = _head(u, s, shape, strides, lo, m, A, B, scratch)
                if v < 0:
                    continue
                row = 0 if uniform else u
            if not mask[v] or org2[v] >= 0 or org[v] == o:
                continue
            p = piece[row, s]
            if p == NO_EDGE:
                continue
            nd = du + table[p, s]
            if _offer(tk1, to1, tk2, to2, v, nd, o):
                keys, nodes, orgs, hsize = _lz_push(keys, nodes, orgs, hsize, nd, v, o)
    return best, org, second, org2
