"""Pure-Python twins of the compiled kernels in ``_kernels.pyx``.

Same signatures, same arithmetic order, so both backends produce
bit-identical models and attributions. Slow; used when the extension is not
built or when ``ADVEXPLAIN_PURE_PYTHON=1``.
"""

import numpy as np


def predict_margin(feature, threshold, left, right, value, roots, X, base_score):
    feature = feature.tolist()
    threshold = threshold.tolist()
    left = left.tolist()
    right = right.tolist()
    value = value.tolist()
    roots = roots.tolist()
    out = np.empty(X.shape[0], dtype=np.float64)
    for i, x in enumerate(X.tolist()):
        acc = base_score
        for node in roots:
            while feature[node] >= 0:
                node = left[node] if x[feature[node]] < threshold[node] else right[node]
            acc = acc + value[node]
        out[i] = acc
    return out


# A path element is a 4-list: [feature, zero_fraction, one_fraction, pweight].


def _extend_path(path, depth, zero_fraction, one_fraction, feature):
    path[depth] = [feature, zero_fraction, one_fraction, 1.0 if depth == 0 else 0.0]
    for i in range(depth - 1, -1, -1):
        path[i + 1][3] += one_fraction * path[i][3] * (i + 1) / float(depth + 1)
        path[i][3] = zero_fraction * path[i][3] * (depth - i) / float(depth + 1)


def _unwind_path(path, depth, path_index):
    one_fraction = path[path_index][2]
    zero_fraction = path[path_index][1]
    next_one_portion = path[depth][3]
    for i in range(depth - 1, -1, -1):
        if one_fraction != 0:
            tmp = path[i][3]
            path[i][3] = next_one_portion * (depth + 1) / ((i + 1) * one_fraction)
            next_one_portion = tmp - path[i][3] * zero_fraction * (depth - i) / float(depth + 1)
        else:
            path[i][3] = (path[i][3] * (depth + 1)) / (zero_fraction * (depth - i))
    for i in range(path_index, depth):
        path[i][0] = path[i + 1][0]
        path[i][1] = path[i + 1][1]
        path[i][2] = path[i + 1][2]


def _unwound_path_sum(path, depth, path_index):
    one_fraction = path[path_index][2]
    zero_fraction = path[path_index][1]
    next_one_portion = path[depth][3]
    total = 0.0
    for i in range(depth - 1, -1, -1):
        if one_fraction != 0:
            tmp = next_one_portion * (depth + 1) / ((i + 1) * one_fraction)
            total += tmp
            next_one_portion = path[i][3] - tmp * zero_fraction * ((depth - i) / float(depth + 1))
        elif zero_fraction != 0:
            total += (path[i][3] / zero_fraction) / ((depth - i) / float(depth + 1))
    return total


def _shap_recurse(tree, x, phi, node, depth, parent_path, parent_zero, parent_one, parent_feature):
    feature, threshold, left, right, value, cover = tree
    # the slot at ``depth`` is written by _extend_path
    path = [list(el) for el in parent_path[:depth]]
    path.append(None)
    _extend_path(path, depth, parent_zero, parent_one, parent_feature)

    split = feature[node]
    if split < 0:
        for i in range(1, depth + 1):
            w = _unwound_path_sum(path, depth, i)
            phi[path[i][0]] += w * (path[i][2] - path[i][1]) * value[node]
        return

    if x[split] < threshold[node]:
        hot, cold = left[node], right[node]
    else:
        hot, cold = right[node], left[node]

    incoming_zero = incoming_one = 1.0
    path_index = next((k for k in range(depth + 1) if path[k][0] == split), depth + 1)
    if path_index != depth + 1:
        incoming_zero = path[path_index][1]
        incoming_one = path[path_index][2]
        _unwind_path(path, depth, path_index)
        depth -= 1

    w = cover[node]
    _shap_recurse(tree, x, phi, hot, depth + 1, path, cover[hot] / w * incoming_zero, incoming_one, split)
    _shap_recurse(tree, x, phi, cold, depth + 1, path, cover[cold] / w * incoming_zero, 0.0, split)


def tree_shap(feature, threshold, left, right, value, cover, roots, max_depth, X, phi, row_start, row_end):
    tree = (feature.tolist(), threshold.tolist(), left.tolist(), right.tolist(), value.tolist(), cover.tolist())
    roots = roots.tolist()
    for i in range(row_start, row_end):
        x = X[i].tolist()
        acc = phi[i].tolist()
        for root in roots:
            _shap_recurse(tree, x, acc, root, 0, [], 1.0, 1.0, -1)
        phi[i] = acc


def level_best_splits(X, sorted_idx, node_of, n_nodes, g, h, l2, min_child_cover):
    n, n_features = X.shape
    G = np.zeros(n_nodes)
    H = np.zeros(n_nodes)
    C = np.zeros(n_nodes)
    bf = np.full(n_nodes, -1, dtype=np.int64)
    bt = np.zeros(n_nodes)
    bg = np.zeros(n_nodes)

    members = [np.flatnonzero(node_of == node) for node in range(n_nodes)]
    for node, idx in enumerate(members):
        if idx.size:
            # cumsum is a strict left-to-right sum, matching the compiled loop.
            G[node] = np.cumsum(g[idx])[-1]
            H[node] = np.cumsum(h[idx])[-1]
            C[node] = float(idx.size)

    active = node_of >= 0
    for f in range(n_features):
        order = sorted_idx[f][active[sorted_idx[f]]]
        nodes_in_order = node_of[order]
        by_node = np.argsort(nodes_in_order, kind="stable")
        bounds = np.searchsorted(nodes_in_order[by_node], np.arange(n_nodes + 1))
        for node in range(n_nodes):
            seq = order[by_node[bounds[node] : bounds[node + 1]]]
            if seq.size < 2:
                continue
            v = X[seq, f]
            cg = np.cumsum(g[seq]).tolist()
            ch = np.cumsum(h[seq]).tolist()
            v = v.tolist()
            Gn, Hn, Cn = G[node], H[node], C[node]
            for k in range(1, len(v)):
                if v[k] == v[k - 1]:
                    continue
                cnt_l = float(k)
                cnt_r = Cn - cnt_l
                if cnt_l < min_child_cover or cnt_r < min_child_cover:
                    continue
                gl, hl = cg[k - 1], ch[k - 1]
                gr, hr = Gn - gl, Hn - hl
                if not (hl + l2 > 0 and hr + l2 > 0 and Hn + l2 > 0):
                    continue
                parent = Gn * Gn / (Hn + l2)
                gain = 0.5 * (gl * gl / (hl + l2) + gr * gr / (hr + l2) - parent)
                if gain > bg[node]:
                    thr = 0.5 * (v[k - 1] + v[k])
                    if not (v[k - 1] < thr):
                        thr = v[k]
                    bg[node] = gain
                    bf[node] = f
                    bt[node] = thr
    return bf, bt, bg, G, H, C
