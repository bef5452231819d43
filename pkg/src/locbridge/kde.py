"""Gaussian kernel denoising and its score via Tweedie's formula.

Compared with the bridge, the weights carry no Sinkhorn vector and the
squared distance is divided by ``2 epsilon`` instead of ``4 epsilon``.
"""

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (check_metric_scales, check_positive, check_query,
                          check_samples)
from ._weights import check_far_field, normalized_weights
from .localization import _LocalizedBase, localized_mean_vector

__all__ = [
    "KernelDenoiser",
    "LocalizedKernelDenoiser",
    "kde_weights",
    "kde_denoiser",
    "kde_score",
    "log_kde",
    "localized_kde_update",
]


class KernelDenoiser(TransformerMixin, BaseEstimator):
    """Equally weighted Gaussian KDE with bandwidth ``epsilon``.

    ``transform`` returns the denoiser ``D(x; epsilon)``.
    """

    def __init__(self, epsilon=1.0, metric_scales=None, far_field="nearest"):
        self.epsilon = epsilon
        self.metric_scales = metric_scales
        self.far_field = far_field

    def fit(self, X, y=None):
        X = check_samples(X)
        check_positive(self.epsilon, "epsilon")
        check_far_field(self.far_field)
        self.metric_scales_ = check_metric_scales(self.metric_scales, X.shape[1])
        self.data_ = X
        self.n_features_in_ = X.shape[1]
        self._scaled_data = X / self.metric_scales_
        self._lower, self._upper = X.min(axis=0), X.max(axis=0)
        return self

    def transform(self, X):
        return kde_denoiser(self, X)

    def bounds(self):
        check_is_fitted(self)
        return self._lower, self._upper

    def grad_log_density(self, X):
        return kde_score(self, X)


def _sq(model, x):
    check_is_fitted(model)
    xq, single = check_query(x, model.n_features_in_)
    sq = cdist(xq / model.metric_scales_, model._scaled_data, metric="sqeuclidean")
    return xq, single, sq


def _weights(model, sq):
    return normalized_weights(-sq / (2.0 * model.epsilon), sq, model.far_field)


def kde_weights(model, x):
    _, single, sq = _sq(model, x)
    w = _weights(model, sq)
    return w[0] if single else w


def _denoise(model, w):
    return np.clip(w @ model.data_, model._lower, model._upper)


def kde_denoiser(model, x):
    _, single, sq = _sq(model, x)
    D = _denoise(model, _weights(model, sq))
    return D[0] if single else D


def kde_score(model, x):
    """``-(x - D(x; epsilon)) / epsilon``."""
    xq, single, sq = _sq(model, x)
    s = -(xq - _denoise(model, _weights(model, sq))) / model.epsilon
    return s[0] if single else s


def log_kde(model, x):
    """``log sum_j exp(-|x - x_j|^2 / (2 epsilon))`` (unnormalized)."""
    _, single, sq = _sq(model, x)
    logits = -sq / (2.0 * model.epsilon)
    top = logits.max(axis=1)
    out = top + np.log(np.exp(logits - top[:, None]).sum(axis=1))
    return out[0] if single else out


class LocalizedKernelDenoiser(_LocalizedBase):
    """Per-coordinate KDE denoisers over dependency sets.

    Parameters
    ----------
    sets : sequence of DependencySet, optional
        ``None`` means the full window for every coordinate.
    epsilon : float, default=1.0
    metric_scales : array-like, optional
    far_field : {"nearest", "raise"}, default="nearest"
    """

    _kernel_scale = 2.0

    def __init__(self, sets=None, epsilon=1.0, metric_scales=None,
                 far_field="nearest"):
        self.sets = sets
        self.epsilon = epsilon
        self.metric_scales = metric_scales
        self.far_field = far_field

    def fit(self, X, y=None):
        X = check_samples(X)
        check_positive(self.epsilon, "epsilon")
        check_far_field(self.far_field)
        self.metric_scales_ = check_metric_scales(self.metric_scales, X.shape[1])
        sets = self._validate_sets(X.shape[1])
        self._setup(X, sets, np.zeros((len(sets), X.shape[0])))
        return self


def localized_kde_update(model, sets=None, x=None):
    """Localized denoiser ``X_alpha <- X_alpha^T w~_alpha(x_[alpha])``.

    ``model`` is either a fitted :class:`LocalizedKernelDenoiser` (``sets``
    omitted) or a fitted :class:`KernelDenoiser`, in which case ``sets``
    selects the dependency sets.
    """
    if isinstance(model, KernelDenoiser):
        check_is_fitted(model)
        model = LocalizedKernelDenoiser(
            sets=sets, epsilon=model.epsilon, metric_scales=model.metric_scales,
            far_field=model.far_field).fit(model.data_)
    return localized_mean_vector(model, x)
