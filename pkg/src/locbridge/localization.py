"""Localized Schrödinger bridges over coordinate dependency sets.

Each updated coordinate ``alpha`` owns a dependency set ``members`` (the
coordinates its conditional expectation depends on). One small bridge is
fitted per set on the restricted samples; the conditional mean of
coordinate ``alpha`` is then a convex combination of the training values of
that coordinate, so every localized mean stays inside the data box.

Indices are 0-based in memory. Files store them 1-based (see
:func:`sets_to_lists`).
"""

from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (check_metric_scales, check_positive,
                          check_positive_int, check_query, check_samples)
from ._kernels import group_means
from ._weights import LOG_FLOOR, check_far_field, normalized_weights, weighted_cov
from .bridge import kernel_matrix, sinkhorn_fit
from .exceptions import (ConvergenceError, DataError, FarFieldError, NumericalError,
                         ParameterError)

__all__ = [
    "DependencySet",
    "ContainmentBox",
    "LocalizedSchrodingerBridge",
    "periodic_stencil_sets",
    "temporal_markov_sets",
    "closure_pair_sets",
    "full_window_sets",
    "sets_to_lists",
    "sets_from_lists",
    "fit_localized",
    "local_probability_vector",
    "local_conditional_mean",
    "localized_mean_vector",
    "local_conditional_cov",
    "local_noise_component",
    "psd_sqrt",
]


@dataclass(frozen=True)
class DependencySet:
    """Coordinates on which the update of coordinate ``alpha`` depends."""

    alpha: int
    members: tuple

    def __post_init__(self):
        members = tuple(int(m) for m in self.members)
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "alpha", int(self.alpha))
        if len(set(members)) != len(members):
            raise ParameterError(f"duplicate members in {members}")
        if self.alpha not in members:
            raise ParameterError(
                f"alpha={self.alpha} must belong to its own dependency set {members}")
        if min(members) < 0:
            raise ParameterError("dependency-set indices must be non-negative")

    @property
    def size(self):
        return len(self.members)

    @property
    def target_position(self):
        """Position of ``alpha`` inside ``members``."""
        return self.members.index(self.alpha)


@dataclass(frozen=True)
class ContainmentBox:
    """Componentwise min/max box of the training data."""

    lower: np.ndarray
    upper: np.ndarray

    def contains(self, x):
        x = np.asarray(x)
        return bool(np.all((x >= self.lower) & (x <= self.upper)))

    def violations(self, x):
        """Number of entries of ``x`` (shape (..., d)) outside the box."""
        x = np.asarray(x)
        return int(np.count_nonzero((x < self.lower) | (x > self.upper)))


def periodic_stencil_sets(d, radius):
    """``{alpha - radius, ..., alpha + radius}`` with periodic wraparound."""
    d = check_positive_int(d, "d")
    radius = check_positive_int(radius, "radius", allow_zero=True)
    if 2 * radius + 1 > d:
        raise ParameterError(f"radius={radius} too large for d={d}")
    return [DependencySet(a, [(a + o) % d for o in range(-radius, radius + 1)])
            for a in range(d)]


def temporal_markov_sets(s, K):
    """Sets for a Markov time series of ``K + 1`` states in ``R^s``.

    The first state depends only on itself; every later state at time ``k``
    depends on the states at ``k - 1`` and ``k``. The augmented dimension
    is ``d = (K + 1) s``.
    """
    s = check_positive_int(s, "s")
    K = check_positive_int(K, "K")
    if K < 2:
        raise ParameterError("K must be at least 2")
    sets = [DependencySet(a, range(s)) for a in range(s)]
    for l in range(K):
        block = range(s * l, s * (l + 2))
        sets.extend(DependencySet(a, block) for a in range(s * (l + 1), s * (l + 2)))
    return sets


def closure_pair_sets(K):
    """Sets for closure sampling on stacked ``(z, psi)`` of dimension ``2K``.

    Only the ``psi`` coordinates ``K + k`` are updated; each depends on the
    three periodic ``z`` neighbours and the three periodic ``psi`` neighbours.
    """
    K = check_positive_int(K, "K")
    if K < 3:
        raise ParameterError("K must be at least 3")
    sets = []
    for k in range(K):
        ring = [(k - 1) % K, k, (k + 1) % K]
        sets.append(DependencySet(K + k, ring + [K + r for r in ring]))
    return sets


def full_window_sets(d):
    """Every coordinate depends on all ``d`` coordinates (no localization)."""
    return [DependencySet(a, range(d)) for a in range(d)]


def sets_to_lists(sets):
    """Serialize as ``[[alpha, m_1, m_2, ...], ...]`` with 1-based indices."""
    return [[s.alpha + 1] + [m + 1 for m in s.members] for s in sets]


def sets_from_lists(lists):
    """Inverse of :func:`sets_to_lists`."""
    out = []
    for row in lists:
        row = [int(i) for i in row]
        if len(row) < 2 or min(row) < 1:
            raise DataError(f"malformed dependency-set record {row!r}")
        out.append(DependencySet(row[0] - 1, [i - 1 for i in row[1:]]))
    return out


def psd_sqrt(S):
    """Symmetric square root of a (batch of) PSD matrices; negative
    eigenvalues from roundoff are clamped to zero."""
    try:
        lam, V = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    root = np.sqrt(np.clip(lam, 0.0, None))
    return (V * root[..., None, :]) @ np.swapaxes(V, -1, -2)


class _Group:
    """Dependency sets of equal cardinality, stacked for vectorized queries."""

    def __init__(self, index, sets, X, scales, log_v):
        self.index = np.asarray(index)
        self.alphas = np.array([s.alpha for s in sets])
        self.members = np.array([s.members for s in sets])
        self.target = np.array([s.target_position for s in sets])
        self.data = np.ascontiguousarray(X[:, self.members].transpose(1, 0, 2))  # (G, M, k)
        self.scaled = np.ascontiguousarray(self.data / scales[self.members][:, None, :])
        self.inv_scales = 1.0 / scales[self.members]              # (G, k)
        self.values = np.ascontiguousarray(X[:, self.alphas].T)    # (G, M)
        self.log_v = log_v                                         # (G, M)
        self.lower = self.values.min(axis=1)
        self.upper = self.values.max(axis=1)

    def sq_dist(self, Xq):
        q = Xq[:, self.members] * self.inv_scales                 # (B, G, k)
        sq = np.zeros((Xq.shape[0],) + self.values.shape)
        for k in range(self.members.shape[1]):
            sq += (q[:, :, None, k] - self.scaled[None, :, :, k]) ** 2
        return sq


class _LocalizedBase(TransformerMixin, BaseEstimator):
    """Shared query machinery; subclasses supply the weights and kernel scale."""

    # squared distance is divided by kernel_scale * epsilon
    _kernel_scale = 4.0

    def _setup(self, X, sets, log_v):
        self.data_ = X
        self.n_features_in_ = X.shape[1]
        self.sets_ = tuple(sets)
        self._lower, self._upper = X.min(axis=0), X.max(axis=0)
        by_size = {}
        for i, s in enumerate(sets):
            by_size.setdefault(s.size, []).append(i)
        self._groups = []
        self._where = {}
        for size in sorted(by_size):
            idx = by_size[size]
            g = _Group(idx, [sets[i] for i in idx], X, self.metric_scales_,
                       log_v[idx])
            for pos, i in enumerate(idx):
                self._where[sets[i].alpha] = (len(self._groups), pos)
            self._groups.append(g)

    def _validate_sets(self, d):
        sets = full_window_sets(d) if self.sets is None else list(self.sets)
        if not sets:
            raise ParameterError("at least one dependency set is required")
        for s in sets:
            if not isinstance(s, DependencySet):
                raise ParameterError(f"expected DependencySet, got {type(s).__name__}")
            if max(s.members) >= d:
                raise ParameterError(
                    f"dependency set of alpha={s.alpha} references coordinate "
                    f"{max(s.members)} but d={d}")
        alphas = [s.alpha for s in sets]
        if len(set(alphas)) != len(alphas):
            raise ParameterError("each coordinate may own at most one dependency set")
        return sets

    # -- batched internals on validated (B, d) arrays -------------------
    def _group_weights(self, g, Xq):
        sq = g.sq_dist(Xq)
        logits = g.log_v - sq / (self._kernel_scale * self.epsilon)
        return normalized_weights(logits, sq, self.far_field)

    def _means(self, Xq):
        out = Xq.copy()
        for g in self._groups:
            q = Xq[:, g.members] * g.inv_scales
            m, log_norm, nearest = group_means(
                q, g.scaled, g.log_v, g.values, self._kernel_scale * self.epsilon)
            far = log_norm < LOG_FLOOR
            if np.any(far):
                if self.far_field == "raise":
                    raise FarFieldError(
                        f"{int(far.sum())} queries lie in the far field of the data")
                rows, cols = np.nonzero(far)
                m[rows, cols] = g.values[cols, nearest[rows, cols]]
            out[:, g.alphas] = np.clip(m, g.lower, g.upper)
        return out

    def _means_and_noise(self, Xq, xi):
        """Localized means plus the data-aware noise ``xi_alpha``.

        Coordinates without a dependency set keep their value and get no noise.
        """
        mean = Xq.copy()
        noise = np.zeros_like(Xq)
        for g in self._groups:
            w = self._group_weights(g, Xq)
            m = np.einsum("bgm,gm->bg", w, g.values)
            mean[:, g.alphas] = np.clip(m, g.lower, g.upper)
            S = weighted_cov(w, g.data)
            root = psd_sqrt(S)                                     # (B, G, k, k)
            rows = np.take_along_axis(
                root, g.target[None, :, None, None], axis=2)[:, :, 0, :]
            noise[:, g.alphas] = np.einsum("bgk,bgk->bg", rows, xi[:, g.members])
        return mean, noise

    # -- public -----------------------------------------------------------
    def transform(self, X):
        return localized_mean_vector(self, X)

    def containment_box(self):
        check_is_fitted(self)
        return ContainmentBox(self._lower.copy(), self._upper.copy())

    def bounds(self):
        check_is_fitted(self)
        return self._lower, self._upper

    @property
    def alphas_(self):
        return np.array([s.alpha for s in self.sets_])

    def _locate(self, alpha):
        check_is_fitted(self)
        try:
            return self._where[int(alpha)]
        except KeyError:
            raise ParameterError(f"coordinate {alpha} has no dependency set") from None

    def _set_weights(self, alpha, x_restricted):
        gi, pos = self._locate(alpha)
        g = self._groups[gi]
        xr = np.asarray(x_restricted, dtype=np.float64)
        single = xr.ndim == 1
        xr = np.atleast_2d(xr)
        k = g.members.shape[1]
        if xr.shape[1] != k:
            raise DataError(f"restricted query has {xr.shape[1]} entries, expected {k}")
        if not np.all(np.isfinite(xr)):
            raise DataError("restricted query contains NaN or infinite entries")
        diff = (xr * g.inv_scales[pos])[:, None, :] - g.scaled[pos][None]
        sq = np.einsum("bmk,bmk->bm", diff, diff)
        logits = g.log_v[pos] - sq / (self._kernel_scale * self.epsilon)
        return g, pos, normalized_weights(logits, sq, self.far_field), single


def _fit_one(X, s, epsilon, scales, tol, max_iter):
    T = kernel_matrix(X[:, s.members], epsilon, scales[list(s.members)])
    try:
        return sinkhorn_fit(T, tol, max_iter, return_info=True)
    except ConvergenceError as exc:
        raise ConvergenceError(f"alpha={s.alpha}: {exc}", exc.residual,
                               exc.n_iter, alpha=s.alpha) from exc


class LocalizedSchrodingerBridge(_LocalizedBase):
    """One Schrödinger bridge per dependency set.

    Parameters
    ----------
    sets : sequence of DependencySet, optional
        ``None`` gives every coordinate the full window, which reproduces the
        global :class:`~locbridge.bridge.SchrodingerBridge`.
    epsilon : float, default=1.0
    metric_scales : array-like of shape (n_features,), optional
    sinkhorn_tol : float, default=1e-8
    max_iter : int, default=10000
    far_field : {"nearest", "raise"}, default="nearest"
    n_jobs : int, optional
        Parallel Sinkhorn fits over the sets (joblib semantics).

    Attributes
    ----------
    sets_ : tuple of DependencySet
    local_weights_ : ndarray of shape (n_sets, M)
        Sinkhorn vector of every set, in the order of ``sets_``.
    sinkhorn_residuals_ : ndarray of shape (n_sets,)
    """

    def __init__(self, sets=None, epsilon=1.0, metric_scales=None,
                 sinkhorn_tol=1e-8, max_iter=10_000, far_field="nearest",
                 n_jobs=None):
        self.sets = sets
        self.epsilon = epsilon
        self.metric_scales = metric_scales
        self.sinkhorn_tol = sinkhorn_tol
        self.max_iter = max_iter
        self.far_field = far_field
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        X = check_samples(X)
        check_positive(self.epsilon, "epsilon")
        check_far_field(self.far_field)
        self.metric_scales_ = check_metric_scales(self.metric_scales, X.shape[1])
        sets = self._validate_sets(X.shape[1])
        fits = Parallel(n_jobs=self.n_jobs)(
            delayed(_fit_one)(X, s, self.epsilon, self.metric_scales_,
                              self.sinkhorn_tol, self.max_iter) for s in sets)
        return self._restore(X, np.array([f[0] for f in fits]),
                             np.array([f[1] for f in fits]))

    def _restore(self, X, weights, residuals):
        # fitted state from known Sinkhorn vectors (used by load_model)
        self.metric_scales_ = check_metric_scales(self.metric_scales, X.shape[1])
        sets = self._validate_sets(X.shape[1])
        self.local_weights_ = weights
        self.sinkhorn_residuals_ = residuals
        self._setup(X, sets, np.log(weights))
        return self

    def local_transition_matrix(self, alpha):
        """``P_alpha = D(v_alpha) T_alpha D(v_alpha)``."""
        gi, pos = self._locate(alpha)
        g = self._groups[gi]
        s = self.sets_[g.index[pos]]
        T = kernel_matrix(self.data_[:, s.members], self.epsilon,
                          self.metric_scales_[list(s.members)])
        v = self.local_weights_[g.index[pos]]
        return v[:, None] * T * v[None, :]

    def sample(self, n_samples, scheme="localized_split_step",
               n_decorrelation=10, random_state=0, **kwargs):
        """Draw new samples; see :func:`locbridge.samplers.generate`."""
        from .samplers import SamplerConfig, generate
        config = SamplerConfig(scheme=scheme, epsilon=self.epsilon,
                               n_decorrelation=n_decorrelation,
                               n_samples=n_samples, seed=random_state, **kwargs)
        return generate(self, config)


def fit_localized(X, sets, epsilon, metric_scales=None, sinkhorn_tol=1e-8,
                  max_iter=10_000, n_jobs=None):
    return LocalizedSchrodingerBridge(
        sets=sets, epsilon=epsilon, metric_scales=metric_scales,
        sinkhorn_tol=sinkhorn_tol, max_iter=max_iter, n_jobs=n_jobs).fit(X)


def local_probability_vector(model, alpha, x_restricted):
    """Weights ``w_alpha`` over the M samples for a restricted query."""
    _, _, w, single = model._set_weights(alpha, x_restricted)
    return w[0] if single else w


def local_conditional_mean(model, alpha, x_restricted):
    g, pos, w, single = model._set_weights(alpha, x_restricted)
    m = np.clip(w @ g.values[pos], g.lower[pos], g.upper[pos])
    return m[0] if single else m


def localized_mean_vector(model, x):
    """Vector of localized means; coordinates without a set pass through."""
    check_is_fitted(model)
    xq, single = check_query(x, model.n_features_in_)
    out = model._means(xq)
    return out[0] if single else out


def local_conditional_cov(model, alpha, x_restricted):
    """Weighted covariance of the restricted samples, shape (d_alpha, d_alpha)."""
    g, pos, w, single = model._set_weights(alpha, x_restricted)
    S = weighted_cov(w[:, None, :], g.data[pos][None])[:, 0]
    return S[0] if single else S


def local_noise_component(model, alpha, x_restricted, xi_restricted):
    """Entry of ``sqrt(S_alpha) xi`` belonging to coordinate ``alpha``."""
    gi, pos = model._locate(alpha)
    tp = model._groups[gi].target[pos]
    S = local_conditional_cov(model, alpha, x_restricted)
    xi = np.asarray(xi_restricted, dtype=np.float64)
    root = psd_sqrt(S)
    return root[..., tp, :] @ xi if root.ndim == 2 else np.einsum(
        "bk,bk->b", root[:, tp, :], np.atleast_2d(xi))
