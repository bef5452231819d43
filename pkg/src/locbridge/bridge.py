"""Global Schrödinger bridge: kernel matrix, Sinkhorn scaling and the
induced conditional mean, covariance and score.

Training data follow the scikit-learn convention: one sample per row, so
``X`` has shape ``(n_samples, n_features)`` = ``(M, d)``.
"""

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (check_metric_scales, check_positive,
                          check_positive_int, check_query, check_samples)
from ._weights import check_far_field, floored_exp, normalized_weights, weighted_cov
from .exceptions import ConvergenceError, DataError

__all__ = [
    "SchrodingerBridge",
    "kernel_matrix",
    "inner_product_kernel_matrix",
    "sinkhorn_fit",
    "transition_vector",
    "probability_vector",
    "conditional_mean",
    "conditional_cov",
    "bridge_score",
    "log_bridge_density",
]

# exp() overflows a double just above 709.78
_MAX_EXPONENT = 700.0


def _scaled_sq_distances(A, B, scales):
    return cdist(A / scales, B / scales, metric="sqeuclidean")


def kernel_matrix(X, epsilon, metric_scales=None):
    """Unnormalized transition kernel ``exp(-|x_k - x_j|^2 / (4 epsilon))``.

    Parameters
    ----------
    X : array-like of shape (M, d)
        Training samples, one per row.
    epsilon : float
        Bandwidth, identical to the Langevin step size.
    metric_scales : array-like of shape (d,), optional
        Per-coordinate divisors applied before taking distances.

    Returns
    -------
    T : ndarray of shape (M, M)
        Symmetric, unit diagonal, entries floored at ``1e-300``.
    """
    X = check_samples(X)
    epsilon = check_positive(epsilon, "epsilon")
    scales = check_metric_scales(metric_scales, X.shape[1])
    sq = _scaled_sq_distances(X, X, scales)
    np.fill_diagonal(sq, 0.0)
    return floored_exp(-sq / (4.0 * epsilon))


def inner_product_kernel_matrix(X, epsilon, return_shift=False):
    """Kernel ``exp(x_k . x_j / (2 epsilon))``.

    Sinkhorn scaling of this matrix yields the same bistochastic ``P`` as
    :func:`kernel_matrix` (only the scaling vector differs). If the largest
    exponent would overflow, every exponent is shifted down by the maximum;
    the shift is returned when ``return_shift`` is true.
    """
    X = check_samples(X)
    epsilon = check_positive(epsilon, "epsilon")
    G = X @ X.T / (2.0 * epsilon)
    G = 0.5 * (G + G.T)
    top = G.max()
    shift = top if top > _MAX_EXPONENT else 0.0
    T = floored_exp(G - shift)
    return (T, shift) if return_shift else T


def sinkhorn_fit(T, tol=1e-8, max_iter=10_000, damping=1.0, return_info=False):
    """Symmetric Sinkhorn scaling ``P = D(v) T D(v)`` with unit row sums.

    Iterates ``v <- v * (v * T v) ** (-damping / 2)``; with the default
    ``damping=1`` this is the geometric-mean update ``v <- sqrt(v / (T v))``.

    Parameters
    ----------
    T : ndarray of shape (M, M)
        Symmetric matrix with strictly positive entries.
    tol : float
        Stop once ``max_k |sum_j P_jk - 1| <= tol``.
    max_iter : int
    damping : float in (0, 1]
    return_info : bool
        Also return ``(residual, n_iter)``.

    Raises
    ------
    ConvergenceError
        If ``tol`` is not reached within ``max_iter`` iterations.
    """
    T = np.asarray(T, dtype=np.float64)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise DataError(f"T must be square, got shape {T.shape}")
    if not np.all(np.isfinite(T)) or np.any(T <= 0):
        raise DataError("T must have strictly positive finite entries")
    tol = check_positive(tol, "tol")
    max_iter = check_positive_int(max_iter, "max_iter")
    damping = check_positive(damping, "damping")

    v = 1.0 / np.sqrt(T.sum(axis=1))
    residual = np.inf
    for n_iter in range(max_iter + 1):
        row = v * (T @ v)
        residual = np.max(np.abs(row - 1.0))
        if residual <= tol:
            break
        if n_iter == max_iter:
            raise ConvergenceError(
                f"Sinkhorn did not converge in {max_iter} iterations "
                f"(residual {residual:.3e} > tol {tol:.1e})",
                residual=residual, n_iter=n_iter)
        v = v * row ** (-0.5 * damping)
    if return_info:
        return v, residual, n_iter
    return v


class SchrodingerBridge(TransformerMixin, BaseEstimator):
    """Sample-based Schrödinger bridge for the Langevin semigroup.

    ``transform`` maps query points to the conditional mean ``m(x; epsilon)``,
    i.e. it acts as a data-driven denoiser.

    Parameters
    ----------
    epsilon : float, default=1.0
        Kernel bandwidth and Langevin step size.
    metric_scales : array-like of shape (n_features,), optional
        Per-coordinate divisors inside squared distances.
    sinkhorn_tol : float, default=1e-8
    max_iter : int, default=10000
    far_field : {"nearest", "raise"}, default="nearest"
        What to do when every kernel weight of a query underflows.

    Attributes
    ----------
    data_ : ndarray of shape (M, d)
    v_ : ndarray of shape (M,)
        Sinkhorn weights.
    metric_scales_ : ndarray of shape (d,)
    sinkhorn_residual_ : float
    n_iter_ : int
    """

    def __init__(self, epsilon=1.0, metric_scales=None, sinkhorn_tol=1e-8,
                 max_iter=10_000, far_field="nearest"):
        self.epsilon = epsilon
        self.metric_scales = metric_scales
        self.sinkhorn_tol = sinkhorn_tol
        self.max_iter = max_iter
        self.far_field = far_field

    def fit(self, X, y=None):
        X = check_samples(X)
        check_far_field(self.far_field)
        self.metric_scales_ = check_metric_scales(self.metric_scales, X.shape[1])
        T = kernel_matrix(X, self.epsilon, self.metric_scales_)
        v, residual, n_iter = sinkhorn_fit(
            T, self.sinkhorn_tol, self.max_iter, return_info=True)
        return self._restore(X, v, residual, n_iter)

    def _restore(self, X, v, residual=np.nan, n_iter=0):
        # fitted state from known Sinkhorn weights (used by load_model)
        self.metric_scales_ = check_metric_scales(self.metric_scales, X.shape[1])
        self.v_, self.sinkhorn_residual_, self.n_iter_ = v, residual, n_iter
        self.data_ = X
        self.n_features_in_ = X.shape[1]
        self._scaled_data = X / self.metric_scales_
        self._log_v = np.log(self.v_)
        self._lower, self._upper = X.min(axis=0), X.max(axis=0)
        return self

    def transform(self, X):
        return conditional_mean(self, X)

    def transition_matrix(self):
        """Bistochastic ``P = D(v) T D(v)`` on the training samples."""
        check_is_fitted(self)
        T = kernel_matrix(self.data_, self.epsilon, self.metric_scales_)
        return self.v_[:, None] * T * self.v_[None, :]

    def probability_vector(self, X):
        return probability_vector(self, X)

    def conditional_cov(self, X):
        return conditional_cov(self, X)

    def grad_log_density(self, X):
        return bridge_score(self, X)

    def bounds(self):
        """Componentwise min/max box of the training data."""
        check_is_fitted(self)
        return self._lower, self._upper

    def sample(self, n_samples, scheme="split_step", n_decorrelation=10,
               random_state=0, **kwargs):
        """Draw new samples; see :func:`locbridge.samplers.generate`."""
        from .samplers import SamplerConfig, generate
        config = SamplerConfig(scheme=scheme, epsilon=self.epsilon,
                               n_decorrelation=n_decorrelation,
                               n_samples=n_samples, seed=random_state, **kwargs)
        return generate(self, config)


def _query_sq(model, x):
    check_is_fitted(model)
    xq, single = check_query(x, model.n_features_in_)
    sq = cdist(xq / model.metric_scales_, model._scaled_data, metric="sqeuclidean")
    return xq, single, sq


def _unbatch(values, single):
    return values[0] if single else values


def transition_vector(model, x):
    """Raw kernel column ``t(x)``, floored at ``1e-300``."""
    _, single, sq = _query_sq(model, x)
    return _unbatch(floored_exp(-sq / (4.0 * model.epsilon)), single)


def _weights(model, sq):
    logits = model._log_v - sq / (4.0 * model.epsilon)
    return normalized_weights(logits, sq, model.far_field)


def probability_vector(model, x):
    """``w(x) = D(v) t(x) / (v^T t(x))``, evaluated in the log domain."""
    _, single, sq = _query_sq(model, x)
    return _unbatch(_weights(model, sq), single)


def _mean(model, w):
    m = w @ model.data_
    # roundoff guard: a convex combination cannot leave the data box
    return np.clip(m, model._lower, model._upper)


def conditional_mean(model, x):
    """``m(x; epsilon) = X^T w(x)``, the bridge estimate of E[X(eps) | X(0)=x]."""
    _, single, sq = _query_sq(model, x)
    return _unbatch(_mean(model, _weights(model, sq)), single)


def conditional_cov(model, x):
    """Covariance of the samples under ``w(x)``: ``X D(w) X^T - m m^T``."""
    _, single, sq = _query_sq(model, x)
    S = weighted_cov(_weights(model, sq)[:, None, :], model.data_[None])[:, 0]
    return _unbatch(S, single)


def bridge_score(model, x):
    """Gradient of ``log p_eps`` with ``p_eps(x) = (v^T t(x))^2``: ``(m - x) / eps``."""
    xq, single, sq = _query_sq(model, x)
    m = _mean(model, _weights(model, sq))
    return _unbatch((m - xq) / model.epsilon, single)


def log_bridge_density(model, x):
    """``2 log(v^T t(x))``; the potential whose gradient is :func:`bridge_score`."""
    _, single, sq = _query_sq(model, x)
    logits = model._log_v - sq / (4.0 * model.epsilon)
    top = logits.max(axis=1)
    out = 2.0 * (top + np.log(np.exp(logits - top[:, None]).sum(axis=1)))
    return _unbatch(out, single)
