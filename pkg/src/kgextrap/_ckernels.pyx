# cython: language_level=3
"""Compiled twins of ``_pykernels``; results must match bit for bit."""
import numpy as np
cimport numpy as cnp

cnp.import_array()

N_KINDS = 4


def segment_sum(values, index, Py_ssize_t n_groups):
    values = np.ascontiguousarray(values, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] idx = np.ascontiguousarray(index, dtype=np.int64)
    flat_in = values.reshape(values.shape[0], -1)
    cdef const double[:, ::1] src = flat_in
    out = np.zeros((n_groups, flat_in.shape[1]), dtype=np.float64)
    cdef double[:, ::1] dst = out
    cdef Py_ssize_t n = src.shape[0], d = src.shape[1], i, j, g
    for i in range(n):
        g = idx[i]
        if g < 0 or g >= n_groups:
            raise IndexError(f"segment index {g} out of range for {n_groups} groups")
        for j in range(d):
            dst[g, j] += src[i, j]
    return out.reshape((n_groups,) + values.shape[1:])


def rpg_adjacency(heads, rels, tails, Py_ssize_t n_relations):
    cdef const cnp.int64_t[::1] h = np.ascontiguousarray(heads, dtype=np.int64)
    cdef const cnp.int64_t[::1] r = np.ascontiguousarray(rels, dtype=np.int64)
    cdef const cnp.int64_t[::1] t = np.ascontiguousarray(tails, dtype=np.int64)
    adj_arr = np.zeros((4, n_relations, n_relations), dtype=np.uint8)
    cdef cnp.uint8_t[:, :, ::1] adj = adj_arr
    cdef Py_ssize_t n = h.shape[0]
    if n == 0:
        return adj_arr.astype(bool)
    cdef Py_ssize_t n_ent = max(np.max(heads), np.max(tails)) + 1
    # CSR of incidences per entity; slot 0 = head, 1 = tail
    counts = np.zeros(n_ent + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] ptr = counts
    cdef Py_ssize_t i, j, a, b, e, lo, hi, pos, kind
    for i in range(n):
        ptr[h[i] + 1] += 1
        ptr[t[i] + 1] += 1
    for e in range(n_ent):
        ptr[e + 1] += ptr[e]
    inc_rel_arr = np.empty(2 * n, dtype=np.int64)
    inc_slot_arr = np.empty(2 * n, dtype=np.int64)
    fill_arr = np.array(counts[:-1], dtype=np.int64)
    cdef cnp.int64_t[::1] inc_rel = inc_rel_arr
    cdef cnp.int64_t[::1] inc_slot = inc_slot_arr
    cdef cnp.int64_t[::1] fill = fill_arr
    for i in range(n):
        pos = fill[h[i]]
        inc_rel[pos] = r[i]
        inc_slot[pos] = 0
        fill[h[i]] += 1
        pos = fill[t[i]]
        inc_rel[pos] = r[i]
        inc_slot[pos] = 1
        fill[t[i]] += 1
    for e in range(n_ent):
        lo = ptr[e]
        hi = ptr[e + 1]
        for a in range(lo, hi):
            for b in range(lo, hi):
                if a == b:
                    continue
                if inc_slot[a] == 1 and inc_slot[b] == 0:
                    kind = 0
                elif inc_slot[a] == 0 and inc_slot[b] == 1:
                    kind = 1
                elif inc_slot[a] == 0:
                    kind = 2
                else:
                    kind = 3
                adj[kind, inc_rel[a], inc_rel[b]] = 1
    return adj_arr.astype(bool)


def random_walk(indptr, indices, Py_ssize_t start, uniforms):
    cdef const cnp.int64_t[::1] ptr = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const cnp.int64_t[::1] nbr = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const double[::1] u = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef Py_ssize_t steps = u.shape[0], i, cur = start, deg, k, n_out = 1
    path_arr = np.empty(steps + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] path = path_arr
    path[0] = start
    for i in range(steps):
        deg = ptr[cur + 1] - ptr[cur]
        if deg == 0:
            break
        k = <Py_ssize_t>(u[i] * deg)
        if k >= deg:
            k = deg - 1
        cur = nbr[ptr[cur] + k]
        path[n_out] = cur
        n_out += 1
    return path_arr[:n_out].copy()
