"""Time-stepping schemes built on the bridge and KDE estimators.

Every step function takes the current state ``x`` (shape ``(d,)`` or a batch
``(B, d)``) and a standard normal draw ``xi`` of the same shape, and returns
the next state. Drawing ``xi`` is left to the caller, which keeps steps pure
and lets :func:`generate` give each chain its own seeded stream.

Localized schemes share one full-dimensional draw across all dependency
sets. Coordinates that own no dependency set are carried over unchanged;
this is how the conditioning variables of a closure model are held fixed.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive, check_positive_int
from .bridge import SchrodingerBridge, conditional_cov
from .exceptions import BlowUpError, DataError, ParameterError
from .kde import KernelDenoiser, LocalizedKernelDenoiser
from .localization import LocalizedSchrodingerBridge, psd_sqrt

__all__ = [
    "SCHEMES",
    "ChainState",
    "SamplerConfig",
    "Clamp",
    "em_step",
    "data_aware_step",
    "split_step",
    "localized_em_step",
    "localized_split_step",
    "localized_data_aware_step",
    "kde_split_step",
    "localized_kde_step",
    "bayes_step",
    "conditional_step",
    "advance",
    "generate",
    "closure_simulate",
    "chain_seed",
]

# scheme -> (model family, noise placement, noise kind)
_SCHEME_TABLE = {
    "em": ("bridge", "post", "isotropic"),
    "data_aware": ("bridge", "post", "data_aware"),
    "split_step": ("bridge", "pre", "isotropic"),
    "localized_em": ("localized", "post", "isotropic"),
    "localized_data_aware": ("localized", "post", "data_aware"),
    "localized_split_step": ("localized", "pre", "isotropic"),
    "kde_split_step": ("kde", "pre", "isotropic"),
    "localized_kde": ("localized_kde", "pre", "isotropic"),
}
SCHEMES = tuple(_SCHEME_TABLE)

_MODEL_TYPES = {
    "bridge": SchrodingerBridge,
    "localized": LocalizedSchrodingerBridge,
    "kde": KernelDenoiser,
    "localized_kde": LocalizedKernelDenoiser,
}

#: Chains whose state exceeds this magnitude are aborted.
BLOW_UP_LIMIT = 1e6


@dataclass(frozen=True)
class Clamp:
    """Coordinates held at fixed values (0-based indices)."""

    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.intp).ravel()
        val = np.broadcast_to(np.asarray(self.values, dtype=np.float64), idx.shape).copy()
        if len(np.unique(idx)) != len(idx):
            raise ParameterError("clamp indices must be distinct")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    def apply(self, x):
        x[..., self.indices] = self.values
        return x

    def check(self, d):
        if len(self.indices) and (self.indices.min() < 0 or self.indices.max() >= d):
            raise ParameterError(f"clamp indices out of range for d={d}")


def _as_clamp(clamp):
    if clamp is None or isinstance(clamp, Clamp):
        return clamp
    indices, values = clamp
    return Clamp(indices, values)


def _check_scheme(model, scheme):
    if scheme not in _SCHEME_TABLE:
        raise ParameterError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    family = _SCHEME_TABLE[scheme][0]
    if not isinstance(model, _MODEL_TYPES[family]):
        raise ParameterError(
            f"scheme {scheme!r} needs a fitted {_MODEL_TYPES[family].__name__}, "
            f"got {type(model).__name__}")
    check_is_fitted(model)
    return _SCHEME_TABLE[scheme]


def _target_mask(model):
    """Coordinates the scheme writes to."""
    mask = np.zeros(model.n_features_in_, dtype=bool)
    if hasattr(model, "sets_"):
        mask[model.alphas_] = True
    else:
        mask[:] = True
    return mask


def _project(model, family, x):
    if family == "bridge":
        return model.transform(x)
    if family == "kde":
        return model.transform(x)
    return model._means(x)


def _advance(model, scheme, x, xi, clamp=None, likelihood_grad=None):
    family, placement, noise_kind = _check_scheme(model, scheme)
    eps = model.epsilon
    local = family in ("localized", "localized_kde")
    x = np.array(x, dtype=np.float64)
    if clamp is not None:
        clamp.apply(x)

    if placement == "pre":
        if likelihood_grad is not None:
            raise ParameterError("likelihood drift is only defined for em/data-aware schemes")
        half = x + np.sqrt(2.0 * eps) * xi
        if clamp is not None:
            clamp.apply(half)
        out = _project(model, family, half)
        if local:
            keep = ~_target_mask(model)
            out[:, keep] = x[:, keep]
    else:
        if noise_kind == "isotropic":
            out = _project(model, family, x)
            noise = np.sqrt(2.0 * eps) * xi
        elif local:
            out, noise = model._means_and_noise(x, xi)
        else:
            out = _project(model, family, x)
            root = psd_sqrt(conditional_cov(model, x))
            noise = np.einsum("bij,bj->bi", root, xi)
        if likelihood_grad is not None:
            g = np.asarray(likelihood_grad(x), dtype=np.float64).reshape(x.shape)
            if not np.all(np.isfinite(g)):
                raise DataError("likelihood gradient is not finite")
            noise = noise + eps * g
        if local:
            noise = noise * _target_mask(model)
        out = out + noise

    if clamp is not None:
        clamp.apply(out)
    return out


def advance(model, scheme, x, xi, clamp=None, likelihood_grad=None):
    """One step of ``scheme`` from state(s) ``x`` with standard normal ``xi``."""
    x = np.asarray(x, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    if x.shape != xi.shape:
        raise DataError(f"state {x.shape} and noise {xi.shape} shapes differ")
    single = x.ndim == 1
    out = _advance(model, scheme, np.atleast_2d(x), np.atleast_2d(xi),
                   _as_clamp(clamp), likelihood_grad)
    return out[0] if single else out


def em_step(model, x, xi):
    """``m(x) + sqrt(2 eps) xi`` with a global bridge."""
    return advance(model, "em", x, xi)


def data_aware_step(model, x, xi):
    """``m(x) + sqrt(S(x)) xi`` with the data-aware covariance."""
    return advance(model, "data_aware", x, xi)


def split_step(model, x, xi, data_aware=False):
    """Noising followed by projection onto the conditional mean.

    With ``data_aware=True`` the noising uses ``sqrt(S(x))`` instead of
    ``sqrt(2 eps)``.
    """
    if not data_aware:
        return advance(model, "split_step", x, xi)
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2, xi2 = np.atleast_2d(x), np.atleast_2d(np.asarray(xi, dtype=np.float64))
    root = psd_sqrt(conditional_cov(model, x2))
    out = model.transform(x2 + np.einsum("bij,bj->bi", root, xi2))
    return out[0] if single else out


def localized_em_step(model, x, xi):
    return advance(model, "localized_em", x, xi)


def localized_split_step(model, x, xi):
    return advance(model, "localized_split_step", x, xi)


def localized_data_aware_step(model, x, xi):
    return advance(model, "localized_data_aware", x, xi)


def kde_split_step(model, x, xi):
    return advance(model, "kde_split_step", x, xi)


def localized_kde_step(model, x, xi):
    return advance(model, "localized_kde", x, xi)


def bayes_step(model, x, xi, likelihood_grad, data_aware=False):
    """Prior step plus the likelihood drift ``eps * grad log pi(y | x)``.

    Works with a global bridge or, component by component, with a localized one.
    """
    local = isinstance(model, LocalizedSchrodingerBridge)
    scheme = ("localized_" if local else "") + ("data_aware" if data_aware else "em")
    return advance(model, scheme, x, xi, likelihood_grad=likelihood_grad)


def conditional_step(model, x, xi, clamp, scheme="localized_split_step"):
    """Step of ``scheme`` with the clamped coordinates held at their values.

    Clamped coordinates are overwritten after the noising assignment (before
    the projection) and again on the output.
    """
    return advance(model, scheme, x, xi, clamp=clamp)


@dataclass
class ChainState:
    """Sampler state ``X(n)`` with its step counter and random stream."""

    x: np.ndarray
    step: int = 0
    rng: Optional[np.random.Generator] = None

    def advance(self, model, scheme, clamp=None, likelihood_grad=None):
        if self.rng is None:
            raise ParameterError("ChainState needs a random generator to advance")
        xi = self.rng.standard_normal(np.shape(self.x))
        x = advance(model, scheme, self.x, xi, clamp, likelihood_grad)
        _guard(x, self.step + 1)
        return ChainState(x, self.step + 1, self.rng)


@dataclass
class SamplerConfig:
    """Parameters of :func:`generate`.

    ``mode="restart"`` follows the restart loop: every output starts from a
    uniformly drawn training sample and runs ``n_decorrelation`` steps.
    ``mode="long_chain"`` runs one chain and emits every
    ``n_decorrelation``-th state.
    """

    scheme: str = "localized_split_step"
    epsilon: Optional[float] = None
    n_decorrelation: int = 10
    n_samples: int = 1000
    seed: int = 0
    clamp: Optional[object] = None
    likelihood_grad: Optional[Callable] = None
    mode: str = "restart"
    batch_size: int = 64

    def validate(self, model):
        _check_scheme(model, self.scheme)
        if self.epsilon is not None and float(self.epsilon) != float(model.epsilon):
            raise ParameterError(
                f"config epsilon {self.epsilon} differs from the model's {model.epsilon}")
        check_positive_int(self.n_decorrelation, "n_decorrelation", allow_zero=True)
        check_positive_int(self.n_samples, "n_samples", allow_zero=True)
        check_positive_int(self.batch_size, "batch_size")
        if self.mode not in ("restart", "long_chain"):
            raise ParameterError(f"unknown mode {self.mode!r}")
        clamp = _as_clamp(self.clamp)
        if clamp is not None:
            clamp.check(model.n_features_in_)
        return clamp


def chain_seed(seed, j):
    """Independent stream of chain ``j``, fixed by ``(seed, j)`` alone."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(j),)))


def _guard(x, step):
    if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > BLOW_UP_LIMIT:
        raise BlowUpError(f"state left the admissible range at step {step}", step)


def generate(model, config):
    """Draw ``config.n_samples`` new samples; returns an array (N, d)."""
    clamp = config.validate(model)
    X = model.data_
    M, d = X.shape
    N, n_c = config.n_samples, config.n_decorrelation
    out = np.empty((N, d))

    def step(x, xi):
        return _advance(model, config.scheme, x, xi, clamp, config.likelihood_grad)

    if config.mode == "long_chain":
        rng = chain_seed(config.seed, 0)
        x = X[rng.integers(M)][None].copy()
        if clamp is not None:
            clamp.apply(x)
        for i in range(N):
            xi = rng.standard_normal((n_c, d))
            for n in range(n_c):
                x = step(x, xi[n:n + 1])
                _guard(x, i * n_c + n + 1)
            out[i] = x[0]
        return out

    for start in range(0, N, config.batch_size):
        chains = range(start, min(start + config.batch_size, N))
        x = np.empty((len(chains), d))
        xi = np.empty((len(chains), n_c, d))
        for b, j in enumerate(chains):
            rng = chain_seed(config.seed, j)
            x[b] = X[rng.integers(M)]
            xi[b] = rng.standard_normal((n_c, d))
        if clamp is not None:
            clamp.apply(x)
        for n in range(n_c):
            x = step(x, xi[:, n])
            _guard(x, n + 1)
        out[start:start + len(chains)] = x
    return out


def closure_simulate(model, z0, dt, n_steps, n_c=100, seed=0, forcing=20.0,
                     scheme="localized_split_step", closure=None, return_psi=False):
    """Euler integration of ``dz/dt = G(z) + psi(z)`` with sampled closure.

    At every step the ``psi`` block is drawn by running ``n_c`` conditional
    steps with the ``z`` block clamped at the current state, each run
    restarting from a uniformly chosen training sample.

    Parameters
    ----------
    model : fitted estimator on stacked ``(z, psi)`` samples of dimension 2K
    z0 : array of shape (K,)
    dt : float
    n_steps : int
    n_c : int
        Decorrelation steps per closure draw.
    seed : int
    forcing : float
        ``F`` in the truncated drift.
    closure : callable, optional
        Deterministic replacement ``z -> psi``; bypasses the sampler.
    return_psi : bool

    Returns
    -------
    z : ndarray of shape (n_steps + 1, K)
    psi : ndarray of shape (n_steps, K), only if ``return_psi``
    """
    from .testbeds import truncated_drift

    z = np.asarray(z0, dtype=np.float64).copy()
    K = z.shape[0]
    dt = check_positive(dt, "dt")
    n_steps = check_positive_int(n_steps, "n_steps", allow_zero=True)
    n_c = check_positive_int(n_c, "n_c", allow_zero=True)
    if closure is None:
        _check_scheme(model, scheme)
        if model.n_features_in_ != 2 * K:
            raise DataError(f"model has {model.n_features_in_} features, expected {2 * K}")
    rng = np.random.default_rng(seed)
    zs = np.empty((n_steps + 1, K))
    psis = np.empty((n_steps, K))
    zs[0] = z
    z_idx = np.arange(K)
    for m in range(n_steps):
        if closure is not None:
            psi = np.asarray(closure(z), dtype=np.float64)
        else:
            clamp = Clamp(z_idx, z)
            x = model.data_[rng.integers(model.data_.shape[0])][None].copy()
            xi = rng.standard_normal((n_c, 2 * K))
            for n in range(n_c):
                x = _advance(model, scheme, x, xi[n:n + 1], clamp)
            psi = x[0, K:]
        z = z + (truncated_drift(z, forcing) + psi) * dt
        if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > BLOW_UP_LIMIT:
            raise BlowUpError(f"closure model blew up at step {m + 1}", m + 1)
        zs[m + 1] = z
        psis[m] = psi
    return (zs, psis) if return_psi else zs
