"""Independent brute-force reference implementations used as test oracles.

These deliberately favor directness over speed: full pairwise matrices,
explicit loops, one-shot broadcasting. They must stay independent of the
package's optimized code paths.
"""

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def sample_entropy_reference(x, m, r):
    """One-shot O(N^2) sample entropy from stacked template matrices."""
    x = np.asarray(x, dtype=np.float64)
    n_templates = x.size - m
    tm = sliding_window_view(x, m)[:n_templates]
    tm1 = sliding_window_view(x, m + 1)[:n_templates]
    dm = np.abs(tm[:, None, :] - tm[None, :, :]).max(axis=2)
    dm1 = np.abs(tm1[:, None, :] - tm1[None, :, :]).max(axis=2)
    iu = np.triu_indices(n_templates, k=1)
    b = int((dm[iu] < r).sum())
    a = int((dm1[iu] < r).sum())
    if a == 0:
        return math.log(max(b, 1)) + math.log(n_templates)
    return math.log(b) - math.log(a)


def fuzzy_entropy_reference(x, m, r, n):
    """One-shot O(N^2) fuzzy entropy with mean-centered templates."""
    x = np.asarray(x, dtype=np.float64)
    n_templates = x.size - m

    def phi(length):
        t = sliding_window_view(x, length)[:n_templates]
        c = t - t.mean(axis=1, keepdims=True)
        d = np.abs(c[:, None, :] - c[None, :, :]).max(axis=2)
        s = np.exp(-(d**n) / r)
        row_means = (s.sum(axis=1) - 1.0) / (n_templates - 1)
        return float(np.mean(row_means))

    return math.log(phi(m)) - math.log(phi(m + 1))


def diagonal_average_reference(mat):
    """Per-anti-diagonal means gathered by explicit index loops."""
    mat = np.asarray(mat, dtype=np.float64)
    rows, cols = mat.shape
    out = np.zeros(rows + cols - 1)
    for d in range(rows + cols - 1):
        cells = [mat[i, d - i] for i in range(rows) if 0 <= d - i < cols]
        out[d] = float(np.mean(cells))
    return out


def best_split_reference(x, y, margin0):
    """Enumerate every threshold of a 1-D feature for the first boosting
    round of binary logloss and return the gain-maximizing threshold."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    p = 1.0 / (1.0 + math.exp(-margin0))
    g = np.full_like(y, p) - y
    h = np.full_like(y, p * (1 - p))
    order = np.argsort(x)
    xs, gs, hs = x[order], g[order], h[order]
    total_gain = None
    best_thr = None
    g_tot, h_tot = gs.sum(), hs.sum()
    for k in range(len(xs) - 1):
        if xs[k + 1] <= xs[k]:
            continue
        gl, hl = gs[: k + 1].sum(), hs[: k + 1].sum()
        gr, hr = g_tot - gl, h_tot - hl
        gain = gl**2 / hl + gr**2 / hr - g_tot**2 / h_tot
        if total_gain is None or gain > total_gain:
            total_gain = gain
            best_thr = 0.5 * (xs[k] + xs[k + 1])
    return best_thr, total_gain


def wilcoxon_exact_reference(diff):
    """Two-sided p by enumerating every sign assignment of |diff| midranks."""
    diff = np.asarray(diff, dtype=np.float64)
    diff = diff[diff != 0]
    n = diff.size
    absd = np.abs(diff)
    order = np.argsort(absd, kind="stable")
    ranks = np.empty(n)
    sorted_vals = absd[order]
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    w_obs = ranks[diff > 0].sum()
    mu = n * (n + 1) / 4.0
    count = 0
    for mask in range(2**n):
        w = sum(ranks[k] for k in range(n) if (mask >> k) & 1)
        if abs(w - mu) >= abs(w_obs - mu) - 1e-12:
            count += 1
    return count / 2**n


def shapley_interactions_reference(value_fn, n):
    """Direct pairwise interaction sum over all subsets excluding {i, j}."""
    from itertools import combinations

    fact = [math.factorial(k) for k in range(n + 1)]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            rest = [f for f in range(n) if f not in (i, j)]
            total = 0.0
            for size in range(n - 1):
                w = fact[size] * fact[n - size - 2] / (2 * fact[n - 1])
                for combo in combinations(rest, size):
                    t = frozenset(combo)
                    delta = (
                        value_fn(t | {i, j})
                        - value_fn(t | {i})
                        - value_fn(t | {j})
                        + value_fn(t)
                    )
                    total += w * delta
            out[i, j] = out[j, i] = total
    return out
