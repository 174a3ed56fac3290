# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: ensemble prediction, path-dependent tree SHAP, level split scan.

The pure-Python twins live in ``_fallback.py`` and must produce bit-identical
results; keep the arithmetic order of the two in step.
"""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

ctypedef cnp.int64_t i64


cdef struct PathElement:
    i64 feature
    double zero_fraction
    double one_fraction
    double pweight


def predict_margin(const i64[::1] feature, const double[::1] threshold,
                   const i64[::1] left, const i64[::1] right,
                   const double[::1] value, const i64[::1] roots,
                   const double[:, ::1] X, double base_score):
    cdef Py_ssize_t n = X.shape[0], n_trees = roots.shape[0]
    cdef Py_ssize_t i, t
    cdef i64 node
    cdef double acc
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] out_v = out
    with nogil:
        for i in range(n):
            acc = base_score
            for t in range(n_trees):
                node = roots[t]
                while feature[node] >= 0:
                    if X[i, feature[node]] < threshold[node]:
                        node = left[node]
                    else:
                        node = right[node]
                acc = acc + value[node]
            out_v[i] = acc
    return out


cdef inline void extend_path(PathElement* path, Py_ssize_t depth, double zero_fraction,
                             double one_fraction, i64 feature) noexcept nogil:
    cdef Py_ssize_t i
    path[depth].feature = feature
    path[depth].zero_fraction = zero_fraction
    path[depth].one_fraction = one_fraction
    path[depth].pweight = 1.0 if depth == 0 else 0.0
    i = depth - 1
    while i >= 0:
        path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) / <double>(depth + 1)
        path[i].pweight = zero_fraction * path[i].pweight * (depth - i) / <double>(depth + 1)
        i -= 1


cdef inline void unwind_path(PathElement* path, Py_ssize_t depth, Py_ssize_t path_index) noexcept nogil:
    cdef double one_fraction = path[path_index].one_fraction
    cdef double zero_fraction = path[path_index].zero_fraction
    cdef double next_one_portion = path[depth].pweight
    cdef double tmp
    cdef Py_ssize_t i = depth - 1
    while i >= 0:
        if one_fraction != 0:
            tmp = path[i].pweight
            path[i].pweight = next_one_portion * (depth + 1) / ((i + 1) * one_fraction)
            next_one_portion = tmp - path[i].pweight * zero_fraction * (depth - i) / <double>(depth + 1)
        else:
            path[i].pweight = (path[i].pweight * (depth + 1)) / (zero_fraction * (depth - i))
        i -= 1
    for i in range(path_index, depth):
        path[i].feature = path[i + 1].feature
        path[i].zero_fraction = path[i + 1].zero_fraction
        path[i].one_fraction = path[i + 1].one_fraction


cdef inline double unwound_path_sum(PathElement* path, Py_ssize_t depth, Py_ssize_t path_index) noexcept nogil:
    cdef double one_fraction = path[path_index].one_fraction
    cdef double zero_fraction = path[path_index].zero_fraction
    cdef double next_one_portion = path[depth].pweight
    cdef double total = 0.0
    cdef double tmp
    cdef Py_ssize_t i = depth - 1
    while i >= 0:
        if one_fraction != 0:
            tmp = next_one_portion * (depth + 1) / ((i + 1) * one_fraction)
            total += tmp
            next_one_portion = path[i].pweight - tmp * zero_fraction * ((depth - i) / <double>(depth + 1))
        elif zero_fraction != 0:
            total += (path[i].pweight / zero_fraction) / ((depth - i) / <double>(depth + 1))
        i -= 1
    return total


cdef void shap_recurse(const i64* feature, const double* threshold, const i64* left,
                       const i64* right, const double* value, const double* cover,
                       const double* x, double* phi, i64 node, Py_ssize_t depth,
                       PathElement* parent_path, double parent_zero, double parent_one,
                       i64 parent_feature) noexcept nogil:
    cdef PathElement* path = parent_path + depth + 1
    cdef Py_ssize_t i, path_index
    cdef i64 split, hot, cold
    cdef double w, incoming_zero = 1.0, incoming_one = 1.0
    for i in range(depth + 1):
        path[i] = parent_path[i]
    extend_path(path, depth, parent_zero, parent_one, parent_feature)

    split = feature[node]
    if split < 0:
        for i in range(1, depth + 1):
            w = unwound_path_sum(path, depth, i)
            phi[path[i].feature] += w * (path[i].one_fraction - path[i].zero_fraction) * value[node]
        return

    if x[split] < threshold[node]:
        hot = left[node]
        cold = right[node]
    else:
        hot = right[node]
        cold = left[node]

    path_index = 0
    while path_index <= depth:
        if path[path_index].feature == split:
            break
        path_index += 1
    if path_index != depth + 1:
        incoming_zero = path[path_index].zero_fraction
        incoming_one = path[path_index].one_fraction
        unwind_path(path, depth, path_index)
        depth -= 1

    w = cover[node]
    shap_recurse(feature, threshold, left, right, value, cover, x, phi, hot, depth + 1, path,
                 cover[hot] / w * incoming_zero, incoming_one, split)
    shap_recurse(feature, threshold, left, right, value, cover, x, phi, cold, depth + 1, path,
                 cover[cold] / w * incoming_zero, 0.0, split)


def tree_shap(const i64[::1] feature, const double[::1] threshold,
              const i64[::1] left, const i64[::1] right,
              const double[::1] value, const double[::1] cover,
              const i64[::1] roots, i64 max_depth,
              const double[:, ::1] X, double[:, ::1] phi,
              Py_ssize_t row_start, Py_ssize_t row_end):
    """Accumulate per-feature attributions for rows [row_start, row_end) into ``phi``."""
    cdef Py_ssize_t n_trees = roots.shape[0]
    cdef Py_ssize_t buf_len = (max_depth + 2) * (max_depth + 3) // 2
    cdef Py_ssize_t i, t
    cdef PathElement* buf = <PathElement*> malloc(buf_len * sizeof(PathElement))
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(row_start, row_end):
                for t in range(n_trees):
                    shap_recurse(&feature[0], &threshold[0], &left[0], &right[0], &value[0],
                                 &cover[0], &X[i, 0], &phi[i, 0], roots[t], 0, buf, 1.0, 1.0, -1)
    finally:
        free(buf)


def level_best_splits(const double[:, ::1] X, const i64[:, ::1] sorted_idx,
                      const i64[::1] node_of, Py_ssize_t n_nodes,
                      const double[::1] g, const double[::1] h,
                      double l2, double min_child_cover):
    """Best (feature, threshold) per active node by exact scan over presorted columns.

    ``node_of[i]`` is the active node of sample i at this level or -1.
    Returns (best_feature, best_threshold, best_gain, G, H, count) arrays of
    length ``n_nodes``; best_feature is -1 where no split has positive gain.
    """
    cdef Py_ssize_t n = X.shape[0], n_features = X.shape[1]
    cdef Py_ssize_t f, k, i
    cdef i64 node
    cdef double v, thr, gl, hl, gr, hr, gain, cnt_l, cnt_r, parent

    G_a = np.zeros(n_nodes)
    H_a = np.zeros(n_nodes)
    C_a = np.zeros(n_nodes)
    bf_a = np.full(n_nodes, -1, dtype=np.int64)
    bt_a = np.zeros(n_nodes)
    bg_a = np.zeros(n_nodes)
    gl_a = np.zeros(n_nodes)
    hl_a = np.zeros(n_nodes)
    cl_a = np.zeros(n_nodes)
    last_a = np.zeros(n_nodes)
    cdef double[::1] G = G_a, H = H_a, C = C_a, bt = bt_a, bg = bg_a
    cdef double[::1] GL = gl_a, HL = hl_a, CL = cl_a, last = last_a
    cdef i64[::1] bf = bf_a

    with nogil:
        for i in range(n):
            node = node_of[i]
            if node >= 0:
                G[node] += g[i]
                H[node] += h[i]
                C[node] += 1.0

        for f in range(n_features):
            for node in range(n_nodes):
                GL[node] = 0.0
                HL[node] = 0.0
                CL[node] = 0.0
            for k in range(n):
                i = sorted_idx[f, k]
                node = node_of[i]
                if node < 0:
                    continue
                v = X[i, f]
                if CL[node] > 0 and v != last[node]:
                    cnt_l = CL[node]
                    cnt_r = C[node] - cnt_l
                    if cnt_l >= min_child_cover and cnt_r >= min_child_cover:
                        gl = GL[node]
                        hl = HL[node]
                        gr = G[node] - gl
                        hr = H[node] - hl
                        if hl + l2 > 0 and hr + l2 > 0 and H[node] + l2 > 0:
                            parent = G[node] * G[node] / (H[node] + l2)
                            gain = 0.5 * (gl * gl / (hl + l2) + gr * gr / (hr + l2) - parent)
                            if gain > bg[node]:
                                thr = 0.5 * (last[node] + v)
                                if not (last[node] < thr):
                                    thr = v
                                bg[node] = gain
                                bf[node] = f
                                bt[node] = thr
                GL[node] += g[i]
                HL[node] += h[i]
                CL[node] += 1.0
                last[node] = v
    return bf_a, bt_a, bg_a, G_a, H_a, C_a
