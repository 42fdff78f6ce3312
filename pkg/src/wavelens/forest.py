"""Regression forest over binary mask features.

Hand-rolled so the split rule, tie handling, and importance accounting
are pinned down exactly; library forests leave those unspecified across
versions. Trees live in flat preallocated arrays and are built with an
explicit stack. The split gain uses the sum-of-squares identity

    gain = S_L^2 / n_L + S_R^2 / n_R - S_P^2 / n_P

which equals the total squared-error reduction of the split.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _grow_tree(X, y, idx, feat_pool, m_try, min_leaf, max_depth, min_gain,
               feat, left, right, value, importance):
    """Build one tree in place over the rows listed in ``idx``.

    ``feat[node] == -1`` marks a leaf. Gains accumulate into
    ``importance`` per split feature. Returns the node count.
    """
    n = idx.size
    m = X.shape[1]
    cap = idx.size * 2 + 8
    stack_lo = np.empty(cap, np.int64)
    stack_hi = np.empty(cap, np.int64)
    stack_node = np.empty(cap, np.int64)
    stack_depth = np.empty(cap, np.int64)
    scratch = np.empty(m, np.int64)
    pool_pos = 0

    stack_lo[0] = 0
    stack_hi[0] = n
    stack_node[0] = 0
    stack_depth[0] = 0
    top = 1
    num_nodes = 1
    while top > 0:
        top -= 1
        lo = stack_lo[top]
        hi = stack_hi[top]
        node = stack_node[top]
        depth = stack_depth[top]
        cnt = hi - lo
        total = 0.0
        for r in range(lo, hi):
            total += y[idx[r]]
        feat[node] = -1
        value[node] = total / cnt
        if cnt < 2 or cnt < 2 * min_leaf or depth >= max_depth:
            continue

        # draw m_try distinct candidate features (partial Fisher-Yates
        # fed from the pregenerated pool)
        for k in range(m):
            scratch[k] = k
        for j in range(m_try):
            r = feat_pool[pool_pos % feat_pool.size]
            pool_pos += 1
            pick = j + r % (m - j)
            tmp = scratch[j]
            scratch[j] = scratch[pick]
            scratch[pick] = tmp

        best_gain = min_gain
        best_f = -1
        for j in range(m_try):
            f = scratch[j]
            s1 = 0.0
            n1 = 0
            for r in range(lo, hi):
                if X[idx[r], f] == 1:
                    s1 += y[idx[r]]
                    n1 += 1
            n0 = cnt - n1
            if n1 < min_leaf or n0 < min_leaf:
                continue
            s0 = total - s1
            gain = s0 * s0 / n0 + s1 * s1 / n1 - total * total / cnt
            if gain > best_gain or (best_f >= 0 and gain == best_gain and f < best_f):
                best_gain = gain
                best_f = f
        if best_f < 0:
            continue

        # partition rows: bit 0 first (left child), bit 1 after
        i = lo
        j2 = hi - 1
        while i <= j2:
            if X[idx[i], best_f] == 0:
                i += 1
            else:
                tmp2 = idx[i]
                idx[i] = idx[j2]
                idx[j2] = tmp2
                j2 -= 1
        split = i

        importance[best_f] += best_gain
        feat[node] = best_f
        li = num_nodes
        ri = num_nodes + 1
        num_nodes += 2
        left[node] = li
        right[node] = ri
        stack_lo[top] = lo
        stack_hi[top] = split
        stack_node[top] = li
        stack_depth[top] = depth + 1
        top += 1
        stack_lo[top] = split
        stack_hi[top] = hi
        stack_node[top] = ri
        stack_depth[top] = depth + 1
        top += 1
    return num_nodes


@njit(cache=True)
def _accumulate_predictions(X, feat, left, right, value, out):
    for i in range(X.shape[0]):
        node = 0
        while feat[node] >= 0:
            if X[i, feat[node]] == 0:
                node = left[node]
            else:
                node = right[node]
        out[i] += value[node]


def fit_forest(masks, scores, *, num_trees, max_depth, min_samples_leaf,
               features_per_split, bootstrap, generator):
    """Fit the forest and return (raw importance gains, training R^2,
    total centered sum of squares).

    Scores are centered before building; the gain identity is shift
    invariant so this only improves conditioning. The gain floor
    1e-12 * max(1, total SS) suppresses float-dust splits on flat data.
    """
    X = np.ascontiguousarray(masks, dtype=np.uint8)
    y = np.asarray(scores, dtype=np.float64)
    n, m = X.shape
    y = y - y.mean()
    total_ss = float(np.dot(y, y))
    min_gain = 1e-12 * max(1.0, total_ss)
    depth_cap = 2**31 if max_depth is None else int(max_depth)

    importance = np.zeros(m)
    preds = np.zeros(n)
    cap = 2 * n + 8
    feat = np.empty(cap, np.int64)
    left = np.empty(cap, np.int64)
    right = np.empty(cap, np.int64)
    value = np.empty(cap, np.float64)
    base_idx = np.arange(n, dtype=np.int64)
    for _ in range(num_trees):
        if bootstrap:
            idx = generator.integers(0, n, size=n, dtype=np.int64)
        else:
            idx = base_idx.copy()
        pool = generator.integers(0, 2**62, size=n * features_per_split + 16, dtype=np.int64)
        _grow_tree(X, y, idx, pool, features_per_split, min_samples_leaf,
                   depth_cap, min_gain, feat, left, right, value, importance)
        _accumulate_predictions(X, feat, left, right, value, preds)
    preds /= num_trees
    resid = y - preds
    ss_res = float(np.dot(resid, resid))
    r2 = 0.0 if total_ss <= 0.0 else 1.0 - ss_res / total_ss
    return importance, r2, total_ss
