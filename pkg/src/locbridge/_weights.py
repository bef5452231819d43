"""Log-domain kernel weights shared by the bridge, localized and KDE estimators."""

import numpy as np

from .exceptions import FarFieldError, ParameterError

#: Raw kernel entries are never allowed below this value.
UNDERFLOW_FLOOR = 1e-300
LOG_FLOOR = np.log(UNDERFLOW_FLOOR)

FAR_FIELD_POLICIES = ("nearest", "raise")


def check_far_field(policy):
    if policy not in FAR_FIELD_POLICIES:
        raise ParameterError(
            f"far_field must be one of {FAR_FIELD_POLICIES}, got {policy!r}")
    return policy


def floored_exp(log_values):
    return np.maximum(np.exp(log_values), UNDERFLOW_FLOOR)


def normalized_weights(logits, sq_dist, far_field="nearest"):
    """Softmax over the last axis with a max shift.

    ``logits`` holds ``log v_j - |x - x_j|^2 / scale`` (or the plain negative
    scaled distance for KDE weights). When the unshifted normalizer
    ``sum_j exp(logits_j)`` falls below :data:`UNDERFLOW_FLOOR` the query is
    in the far field; the weight then either collapses onto the nearest
    sample (by ``sq_dist``) or :class:`FarFieldError` is raised.
    """
    top = logits.max(axis=-1, keepdims=True)
    w = np.exp(logits - top)
    total = w.sum(axis=-1, keepdims=True)
    w /= total
    far = (top[..., 0] + np.log(total[..., 0])) < LOG_FLOOR
    if np.any(far):
        if far_field == "raise":
            raise FarFieldError(
                f"{int(far.sum())} queries lie in the far field of the data")
        rows = np.nonzero(far)
        nearest = np.argmin(sq_dist[rows], axis=-1)
        w[rows] = 0.0
        w[rows + (nearest,)] = 1.0
    return w


def weighted_cov(w, R):
    """``R^T D(w) R - (R^T w)(R^T w)^T`` per batch and set.

    ``w`` has shape (B, G, M) and ``R`` (G, M, k). The global and localized
    estimators share this routine so that a full-window localization gives
    bitwise the same matrices; their square roots are ill-conditioned when
    ``M <= d`` and would amplify roundoff differences.
    """
    # contiguous per-matrix products keep every (b, g) entry independent of
    # how many sets are stacked
    Rb = np.ascontiguousarray(np.broadcast_to(R[None], w.shape[:-1] + R.shape[-2:]))
    weighted = np.ascontiguousarray(np.swapaxes(w[..., None] * Rb, -1, -2))
    second = np.matmul(weighted, Rb)
    mu = np.matmul(w[..., None, :], Rb)[..., 0, :]
    S = second - mu[..., :, None] * mu[..., None, :]
    return 0.5 * (S + np.swapaxes(S, -1, -2))
