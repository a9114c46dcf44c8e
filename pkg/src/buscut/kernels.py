"""
Hot numeric kernels with a numba path and a pure numpy/Python path.

Each kernel is written once as plain Python over numpy arrays; the numba
variant is the same function compiled with ``njit``.  Which one is used by
the rest of the package is decided by :data:`buscut._jit.JIT_ENABLED`.
Both variants are importable so tests and the benchmark can compare them.
"""
import heapq

import numpy as np

from ._jit import JIT_ENABLED, njit

EARTH_RADIUS_M = 6_371_000.0


def _brandes_py(indptr, indices, rindptr, rindices):
    """Unweighted Brandes betweenness plus all-pairs hop-distance totals.

    The graph is given as forward CSR (``indptr``, ``indices``) and reverse
    CSR (``rindptr``, ``rindices``).  Returns ``(betweenness, dist_sum,
    n_pairs)`` where ``dist_sum`` is the sum of hop distances over ordered
    connected pairs ``s != t`` and ``n_pairs`` their count.  Betweenness is
    unnormalized, ordered-pair, endpoints excluded.
    """
    n = indptr.shape[0] - 1
    bc = np.zeros(n, dtype=np.float64)
    dist = np.empty(n, dtype=np.int64)
    sigma = np.empty(n, dtype=np.float64)
    delta = np.empty(n, dtype=np.float64)
    order = np.empty(n, dtype=np.int64)
    dist_sum = 0
    n_pairs = 0
    for s in range(n):
        for i in range(n):
            dist[i] = -1
            sigma[i] = 0.0
            delta[i] = 0.0
        dist[s] = 0
        sigma[s] = 1.0
        order[0] = s
        head = 0
        tail = 1
        while head < tail:
            v = order[head]
            head += 1
            dv = dist[v]
            for e in range(indptr[v], indptr[v + 1]):
                w = indices[e]
                if dist[w] < 0:
                    dist[w] = dv + 1
                    order[tail] = w
                    tail += 1
                if dist[w] == dv + 1:
                    sigma[w] += sigma[v]
        for k in range(1, tail):
            dist_sum += dist[order[k]]
        n_pairs += tail - 1
        # order[] doubles as the Brandes stack, popped back to front
        for k in range(tail - 1, 0, -1):
            w = order[k]
            dw = dist[w]
            for e in range(rindptr[w], rindptr[w + 1]):
                v = rindices[e]
                if dist[v] >= 0 and dist[v] == dw - 1:
                    delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            bc[w] += delta[w]
    return bc, dist_sum, n_pairs


def _haversine_matrix_np(lat1, lon1, lat2, lon2):
    p1 = np.radians(np.asarray(lat1, dtype=np.float64))[:, None]
    p2 = np.radians(np.asarray(lat2, dtype=np.float64))[None, :]
    dphi = p2 - p1
    dlmb = np.radians(np.asarray(lon2, dtype=np.float64))[None, :] - np.radians(
        np.asarray(lon1, dtype=np.float64)
    )[:, None]
    a = np.sin(dphi / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.minimum(a, 1.0)))


def _haversine_matrix_loop(lat1, lon1, lat2, lon2):
    n = lat1.shape[0]
    m = lat2.shape[0]
    out = np.empty((n, m), dtype=np.float64)
    deg = np.pi / 180.0
    for i in range(n):
        p1 = lat1[i] * deg
        c1 = np.cos(p1)
        for j in range(m):
            p2 = lat2[j] * deg
            s1 = np.sin((p2 - p1) / 2.0)
            s2 = np.sin((lon2[j] - lon1[i]) * deg / 2.0)
            a = s1 * s1 + c1 * np.cos(p2) * s2 * s2
            if a > 1.0:
                a = 1.0
            out[i, j] = 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(a))
    return out


def _decode(st, per_layer, n_stops, tot_len, pos_route, r_off):
    """(layer, kind, a, b, c): kind 0 stop (a=phase, b=stop); kind 1 ride (a=route, b=direction, c=idx)."""
    layer = st // per_layer
    loc = st - layer * per_layer
    if loc < 3 * n_stops:
        return layer, 0, loc // n_stops, loc % n_stops, 0
    r = loc - 3 * n_stops
    pos = r % tot_len
    k = pos_route[pos]
    d = 1 if r < tot_len else -1
    return layer, 1, k, d, pos - r_off[k]


def _chain_legs(x, parent, board, per_layer, n_stops, tot_len, pos_route, r_off, rank):
    """Completed legs (rank, direction, board_idx, alight_idx) of stop state ``x``, first leg first."""
    m = 0
    y = x
    while True:
        _, _, phase, _, _ = _decode(y, per_layer, n_stops, tot_len, pos_route, r_off)
        if phase == 0:
            break
        if phase == 2:
            y = parent[y]
            continue
        m += 1
        y = parent[parent[y]]
    out = np.empty((m, 4), dtype=np.int64)
    y = x
    i = m - 1
    while i >= 0:
        _, _, phase, _, _ = _decode(y, per_layer, n_stops, tot_len, pos_route, r_off)
        if phase == 2:
            y = parent[y]
            continue
        rr = parent[y]
        _, _, k, d, j = _decode(rr, per_layer, n_stops, tot_len, pos_route, r_off)
        out[i, 0] = rank[k]
        out[i, 1] = d
        out[i, 2] = board[rr]
        out[i, 3] = j
        i -= 1
        y = parent[rr]
    return out


def _signature(st, par, brd, parent, board, per_layer, n_stops, tot_len, pos_route, r_off, rank):
    """Tie-break vector of a label: route ranks, then completed legs, then the open boarding index."""
    _, kind, a, _, _ = _decode(st, per_layer, n_stops, tot_len, pos_route, r_off)
    if kind == 1:
        legs = _chain_legs(par, parent, board, per_layer, n_stops, tot_len, pos_route, r_off, rank)
        m = legs.shape[0]
        sig = np.empty(m + 1 + 4 * m + 1, dtype=np.int64)
        for i in range(m):
            sig[i] = legs[i, 0]
        sig[m] = rank[a]
        for i in range(m):
            for c in range(4):
                sig[m + 1 + 4 * i + c] = legs[i, c]
        sig[5 * m + 1] = brd
        return sig
    if a == 1:
        # alighted: the parent ride state supplies the last leg
        head = _chain_legs(parent[par], parent, board, per_layer, n_stops, tot_len, pos_route, r_off, rank)
        _, _, k, d, j = _decode(par, per_layer, n_stops, tot_len, pos_route, r_off)
        m = head.shape[0] + 1
        legs = np.empty((m, 4), dtype=np.int64)
        legs[: m - 1] = head
        legs[m - 1, 0] = rank[k]
        legs[m - 1, 1] = d
        legs[m - 1, 2] = board[par]
        legs[m - 1, 3] = j
    elif a == 2:
        legs = _chain_legs(par, parent, board, per_layer, n_stops, tot_len, pos_route, r_off, rank)
        m = legs.shape[0]
    else:
        legs = np.empty((0, 4), dtype=np.int64)
        m = 0
    sig = np.empty(m + 4 * m + 1, dtype=np.int64)
    for i in range(m):
        sig[i] = legs[i, 0]
        for c in range(4):
            sig[m + 4 * i + c] = legs[i, c]
    sig[5 * m] = -1
    return sig


def _label_search_py(n_stops, r_off, r_len, r_stops, pos_route, seg_q, board_q, xfer_q, rank,
                     b_ptr, b_route, b_dir, b_idx, w_ptr, w_nbr, origin, target, cap):
    """Lexicographic label search over stop and on-board states.

    Labels are ordered by (integer cost, transfers, route-rank sequence,
    legs, open boarding index).  The heap orders only by (cost, transfers);
    equal-cost labels that later improve on the full order are re-pushed,
    so the final labels do not depend on heap tie order.  ``cap < 0`` means
    no transfer cap (one layer); otherwise layer ``t`` holds labels with
    ``t`` transfers.  ``target >= 0`` stops once that stop's arrival label
    is final.  Returns ``(q, transfers, parent, board, per_layer)``.
    """
    tot_len = r_stops.shape[0]
    per_layer = 3 * n_stops + 2 * tot_len
    n_layers = cap + 1 if cap >= 0 else 1
    n = per_layer * n_layers
    inf = np.iinfo(np.int64).max
    lab_q = np.full(n, inf, dtype=np.int64)
    lab_t = np.zeros(n, dtype=np.int64)
    parent = np.full(n, -1, dtype=np.int64)
    board = np.full(n, -1, dtype=np.int64)
    start = origin
    lab_q[start] = 0
    heap = [(np.int64(0), np.int64(0), np.int64(0), np.int64(start))]
    seq = 1
    tgt = n_stops + target if target >= 0 else -1
    while len(heap) > 0:
        q, t, _, st = heapq.heappop(heap)
        if tgt >= 0 and lab_q[tgt] != inf and (q > lab_q[tgt] or (q == lab_q[tgt] and t > lab_t[tgt])):
            break
        if q != lab_q[st] or t != lab_t[st]:
            continue
        layer, kind, a, b, c = _decode(st, per_layer, n_stops, tot_len, pos_route, r_off)
        base = layer * per_layer
        n_walk = 0
        nt = t
        # collect (state, q, t, parent, board) candidates, then relax each
        if kind == 1:
            k, d, j = a, b, c
            cand_n = 0
            cs = np.empty(2, dtype=np.int64)
            cq = np.empty(2, dtype=np.int64)
            cp = np.empty(2, dtype=np.int64)
            cb = np.empty(2, dtype=np.int64)
            j2 = j + d
            if 0 <= j2 < r_len[k]:
                seg = j if d == 1 else j2
                cs[cand_n] = st + d
                cq[cand_n] = q + seg_q[r_off[k] + seg]
                cp[cand_n] = parent[st]
                cb[cand_n] = board[st]
                cand_n += 1
            cs[cand_n] = base + n_stops + r_stops[r_off[k] + j]
            cq[cand_n] = q
            cp[cand_n] = st
            cb[cand_n] = -1
            cand_n += 1
        else:
            phase, s = a, b
            if phase == 1:
                n_walk = w_ptr[s + 1] - w_ptr[s]
            if phase != 0:
                nt = t + 1
            n_board = b_ptr[s + 1] - b_ptr[s]
            if cap >= 0 and nt > cap:
                n_board = 0
            cs = np.empty(n_walk + n_board, dtype=np.int64)
            cq = np.empty(n_walk + n_board, dtype=np.int64)
            cp = np.empty(n_walk + n_board, dtype=np.int64)
            cb = np.empty(n_walk + n_board, dtype=np.int64)
            cand_n = 0
            for e in range(n_walk):
                cs[cand_n] = base + 2 * n_stops + w_nbr[w_ptr[s] + e]
                cq[cand_n] = q
                cp[cand_n] = st
                cb[cand_n] = -1
                cand_n += 1
            extra = xfer_q if phase != 0 else 0
            nbase = (nt if cap >= 0 else 0) * per_layer
            for e in range(b_ptr[s], b_ptr[s] + n_board):
                k = b_route[e]
                d = b_dir[e]
                i = b_idx[e]
                j = i + d
                seg = i if d == 1 else j
                blk = 0 if d == 1 else tot_len
                cs[cand_n] = nbase + 3 * n_stops + blk + r_off[k] + j
                cq[cand_n] = q + board_q[k] + extra + seg_q[r_off[k] + seg]
                cp[cand_n] = st
                cb[cand_n] = i
                cand_n += 1
        for ci in range(cand_n):
            s2 = cs[ci]
            q2 = cq[ci]
            t2 = t if (kind == 1 or ci < n_walk) else nt
            if q2 > lab_q[s2] or (q2 == lab_q[s2] and t2 > lab_t[s2]):
                continue
            better = q2 < lab_q[s2] or t2 < lab_t[s2]
            if not better:
                if cp[ci] == parent[s2] and cb[ci] == board[s2]:
                    continue
                new = _signature(s2, cp[ci], cb[ci], parent, board, per_layer, n_stops, tot_len,
                                 pos_route, r_off, rank)
                old = _signature(s2, parent[s2], board[s2], parent, board, per_layer, n_stops, tot_len,
                                 pos_route, r_off, rank)
                for x in range(new.shape[0]):
                    if new[x] != old[x]:
                        better = new[x] < old[x]
                        break
            if better:
                lab_q[s2] = q2
                lab_t[s2] = t2
                parent[s2] = cp[ci]
                board[s2] = cb[ci]
                heapq.heappush(heap, (q2, t2, np.int64(seq), s2))
                seq += 1
    return lab_q, lab_t, parent, board, per_layer


brandes_py = _brandes_py
haversine_matrix_np = _haversine_matrix_np
label_search_py = _label_search_py

if JIT_ENABLED:
    brandes_nb = njit(cache=True)(_brandes_py)
    haversine_matrix_nb = njit(cache=True)(_haversine_matrix_loop)
    brandes = brandes_nb
    _haversine_matrix = haversine_matrix_nb
    _decode = njit(cache=True)(_decode)
    _chain_legs = njit(cache=True)(_chain_legs)
    _signature = njit(cache=True)(_signature)
    label_search_nb = njit(cache=True)(_label_search_py)
else:
    brandes_nb = None
    haversine_matrix_nb = None
    label_search_nb = None
    brandes = brandes_py
    _haversine_matrix = haversine_matrix_np


def haversine_matrix(lat1, lon1, lat2, lon2):
    """Great-circle distances in metres between two coordinate sets, shape (n, m)."""
    return _haversine_matrix(
        np.ascontiguousarray(lat1, dtype=np.float64),
        np.ascontiguousarray(lon1, dtype=np.float64),
        np.ascontiguousarray(lat2, dtype=np.float64),
        np.ascontiguousarray(lon2, dtype=np.float64),
    )


def to_csr(n, src, dst):
    """Forward and reverse CSR arrays for a directed simple graph on ``n`` nodes."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    fwd = np.lexsort((dst, src))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    indptr = np.cumsum(indptr)
    rev = np.lexsort((src, dst))
    rindptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(rindptr, dst + 1, 1)
    rindptr = np.cumsum(rindptr)
    return indptr, dst[fwd].copy(), rindptr, src[rev].copy()
