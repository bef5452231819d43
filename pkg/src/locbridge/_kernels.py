"""Inner loop of the localized conditional mean.

A stacked group of dependency sets needs, for every query ``b`` and set
``g``, a softmax over the M training samples followed by a weighted mean.
Plain numpy materializes several (B, G, M) temporaries and is memory
bound. Here the queries are processed in cache-sized blocks: a compiled
loop writes the max-shifted logits into one scratch buffer, numpy's
vectorized ``exp`` runs in place, and the sums follow.
"""

import numpy as np
from numba import njit

# scratch buffer size in doubles (4 MB)
_BLOCK_ELEMENTS = 1 << 19

# exp() of anything below this is subnormal; such terms are < 1e-307 relative
# to the largest one (which is exactly 1), cannot change the sums, and make
# the arithmetic an order of magnitude slower, so they are flushed to zero.
_FLUSH_BELOW = -708.0


@njit(cache=True)
def _shifted_logits(q, scaled, log_v, denom, buf, top, nearest):
    """Fill ``buf[b, g, j] = logit - max_j logit`` for one block of queries."""
    B, G, k = q.shape
    M = scaled.shape[1]
    for b in range(B):
        for g in range(G):
            t = -np.inf
            best = np.inf
            j_best = 0
            for j in range(M):
                s = 0.0
                for i in range(k):
                    diff = q[b, g, i] - scaled[g, j, i]
                    s += diff * diff
                if s < best:
                    best = s
                    j_best = j
                lj = log_v[g, j] - s / denom
                buf[b, g, j] = lj
                if lj > t:
                    t = lj
            for j in range(M):
                shifted = buf[b, g, j] - t
                buf[b, g, j] = shifted if shifted >= _FLUSH_BELOW else -np.inf
            top[b, g] = t
            nearest[b, g] = j_best


def group_means(q, scaled, log_v, values, denom):
    """Softmax-weighted means of ``values`` for stacked sets.

    Parameters
    ----------
    q : (B, G, k) scaled queries
    scaled : (G, M, k) scaled restricted samples
    log_v : (G, M) log Sinkhorn weights (zeros for KDE)
    values : (G, M) training values of the target coordinates
    denom : float
        ``kernel_scale * epsilon``; the logits are ``log_v - sq / denom``.

    Returns
    -------
    mean : (B, G)
    log_norm : (B, G)
        ``log sum_j exp(logit_j)``, used for the far-field test.
    nearest : (B, G)
        Index of the closest sample in the scaled metric.
    """
    B, G, _ = q.shape
    M = values.shape[1]
    mean = np.empty((B, G))
    log_norm = np.empty((B, G))
    nearest = np.empty((B, G), dtype=np.int64)
    top = np.empty((B, G))
    step = max(1, _BLOCK_ELEMENTS // (G * M))
    buf = np.empty((min(step, B), G, M))
    q = np.ascontiguousarray(q)
    for start in range(0, B, step):
        stop = min(start + step, B)
        w = buf[:stop - start]
        _shifted_logits(q[start:stop], scaled, log_v, denom, w,
                        top[start:stop], nearest[start:stop])
        np.exp(w, out=w)
        total = w.sum(axis=2)
        mean[start:stop] = np.einsum("bgm,gm->bg", w, values) / total
        log_norm[start:stop] = top[start:stop] + np.log(total)
    return mean, log_norm, nearest
