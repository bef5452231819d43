"""Data generators for the three benchmark problems.

* periodic Gaussian with banded precision (``gauss_tridiag`` / ``gauss_laplacian``)
* trajectories of the double-well SDE ``dZ = (Z - Z^3) dt + sqrt(0.2) dB``
* the two-scale Lorenz-96 system and the closure term of its slow variables
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import solve_triangular

from ._validation import check_positive, check_positive_int
from .exceptions import BlowUpError, ParameterError

__all__ = [
    "PeriodicGaussianSpec",
    "BimodalSdeSpec",
    "Lorenz96Spec",
    "sample_periodic_gaussian",
    "reference_em_gaussian_step",
    "em_stationary_covariance",
    "bimodal_drift",
    "bimodal_trajectories",
    "truncated_drift",
    "lorenz96_tendency",
    "lorenz96_rk4_step",
    "lorenz96_spinup",
    "lorenz96_generate",
    "closure_residual",
    "Lorenz96Data",
]


# --------------------------------------------------------------------------
# periodic Gaussian
# --------------------------------------------------------------------------
@dataclass
class PeriodicGaussianSpec:
    """Zero-mean Gaussian whose precision is a periodic tridiagonal matrix.

    The precision has ``diagonal`` on the diagonal and ``off_diagonal`` on
    the two (periodically wrapped) neighbour bands.
    """

    d: int = 101
    diagonal: float = 2.0
    off_diagonal: float = -0.5
    L: float = None

    @classmethod
    def tridiagonal(cls, d=101):
        """diag 2, off-diagonal -0.5 (the ``gauss_tridiag`` experiment)."""
        return cls(d=d, diagonal=2.0, off_diagonal=-0.5)

    @classmethod
    def laplacian(cls, d=101, L=None):
        """``I - Laplacian`` on a periodic grid of length ``L`` (``h = L/d``).

        The Laplacian stencil is ``(x_{a-1} - 2 x_a + x_{a+1}) / (2 h^2)``,
        so the EM weights are ``eps / (2 h^2)`` and ``1 - eps (1 + 1/h^2)``.
        """
        L = float(d) if L is None else float(L)
        h = L / d
        return cls(d=d, diagonal=1.0 + 1.0 / h**2, off_diagonal=-0.5 / h**2, L=L)

    @property
    def h(self):
        return (self.L if self.L is not None else self.d) / self.d

    def precision(self, dense=True):
        d = self.d
        P = sparse.diags([self.off_diagonal, self.diagonal, self.off_diagonal],
                         [-1, 0, 1], shape=(d, d), format="lil")
        P[0, d - 1] += self.off_diagonal
        P[d - 1, 0] += self.off_diagonal
        return P.toarray() if dense else P.tocsc()

    def covariance(self):
        return np.linalg.inv(self.precision())


def sample_periodic_gaussian(spec, M, seed=0):
    """``M`` draws from ``N(0, precision^{-1})``, one per row.

    Uses ``x = R^{-1} z`` with ``precision = R^T R`` the Cholesky factor.
    """
    M = check_positive_int(M, "M")
    Q = spec.precision()
    try:
        R = np.linalg.cholesky(Q).T
    except np.linalg.LinAlgError as exc:
        raise ParameterError(f"precision is not positive definite: {exc}") from exc
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((spec.d, M))
    return solve_triangular(R, Z, lower=False).T


def _em_weights(spec, epsilon):
    w_side = -spec.off_diagonal * epsilon
    w_center = 1.0 - spec.diagonal * epsilon
    return w_side, w_center


def reference_em_gaussian_step(spec, x, epsilon, xi):
    """Euler-Maruyama step for the Gaussian with known precision.

    ``X_a <- w_side (X_{a-1} + X_{a+1}) + w_center X_a + sqrt(2 eps) xi_a``.
    For the Laplacian target these weights are ``eps / (2 h^2)`` and
    ``1 - eps (1 + 1/h^2)``.
    """
    epsilon = check_positive(epsilon, "epsilon")
    w_side, w_center = _em_weights(spec, epsilon)
    if w_center < 0:
        raise ParameterError(
            f"step size {epsilon} makes the centre weight negative ({w_center:.3g})")
    x = np.asarray(x, dtype=np.float64)
    neighbours = np.roll(x, 1, axis=-1) + np.roll(x, -1, axis=-1)
    return w_side * neighbours + w_center * x + np.sqrt(2.0 * epsilon) * np.asarray(xi)


def em_stationary_covariance(spec, epsilon):
    """Exact stationary covariance of :func:`reference_em_gaussian_step`.

    For ``X' = (I - eps A) X + sqrt(2 eps) xi`` it is ``(A - eps A^2 / 2)^{-1}``,
    which tends to ``A^{-1}`` as ``eps -> 0``.
    """
    A = spec.precision()
    return np.linalg.inv(A - 0.5 * epsilon * A @ A)


# --------------------------------------------------------------------------
# bimodal SDE
# --------------------------------------------------------------------------
@dataclass
class BimodalSdeSpec:
    noise_intensity: float = 0.2
    record_interval: float = 5.0
    intervals: int = 100
    fine_step: float = 1e-3

    @property
    def d(self):
        return self.intervals + 1

    @property
    def substeps(self):
        n = self.record_interval / self.fine_step
        if abs(n - round(n)) > 1e-9 * n:
            raise ParameterError("fine_step must divide record_interval")
        return int(round(n))


def bimodal_drift(z):
    return z - z**3


def bimodal_trajectories(spec, M, seed=0):
    """``M`` independent trajectories recorded at ``t_k = k * record_interval``.

    Returns an array of shape (M, intervals + 1); ``Z(0) ~ N(0, 1)``.
    """
    M = check_positive_int(M, "M")
    rng = np.random.default_rng(seed)
    n_sub = spec.substeps
    h = spec.fine_step
    amp = np.sqrt(spec.noise_intensity * h)
    out = np.empty((M, spec.d))
    z = rng.standard_normal(M)
    out[:, 0] = z
    for k in range(1, spec.d):
        noise = rng.standard_normal((n_sub, M))
        for n in range(n_sub):
            z = z + bimodal_drift(z) * h + amp * noise[n]
        out[:, k] = z
    return out


# --------------------------------------------------------------------------
# two-scale Lorenz-96
# --------------------------------------------------------------------------
@dataclass
class Lorenz96Spec:
    K: int = 12
    J: int = 24
    F: float = 20.0
    c: float = 10.0
    b: float = 10.0
    h_coupling: float = 1.0
    rk4_step: float = 5e-4
    record_interval: float = 5e-3
    spinup_records: int = 10_000

    @property
    def substeps(self):
        return int(round(self.record_interval / self.rk4_step))


def truncated_drift(z, F=20.0):
    """Resolved slow tendency ``-z_{k-1}(z_{k-2} - z_{k+1}) - z_k + F``."""
    z = np.asarray(z, dtype=np.float64)
    return (-np.roll(z, 1, -1) * (np.roll(z, 2, -1) - np.roll(z, -1, -1))
            - z + F)


def lorenz96_tendency(spec, z, y):
    """Right-hand side of the coupled system.

    ``y`` is flattened with index ``k * J + j`` so the wraparound
    ``y_{j+J,k} = y_{j,k+1}`` becomes a plain periodic shift.
    """
    coupling = spec.h_coupling * spec.c / spec.b
    dz = truncated_drift(z, spec.F) - coupling * y.reshape(spec.K, spec.J).sum(axis=1)
    dy = (-spec.c * spec.b * np.roll(y, -1) * (np.roll(y, -2) - np.roll(y, 1))
          - spec.c * y + coupling * np.repeat(z, spec.J))
    return dz, dy


def lorenz96_rk4_step(spec, z, y, dt=None):
    dt = spec.rk4_step if dt is None else dt
    k1z, k1y = lorenz96_tendency(spec, z, y)
    k2z, k2y = lorenz96_tendency(spec, z + 0.5 * dt * k1z, y + 0.5 * dt * k1y)
    k3z, k3y = lorenz96_tendency(spec, z + 0.5 * dt * k2z, y + 0.5 * dt * k2y)
    k4z, k4y = lorenz96_tendency(spec, z + dt * k3z, y + dt * k3y)
    return (z + dt / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z),
            y + dt / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y))


def _advance_record(spec, z, y, n_sub, dt):
    for _ in range(n_sub):
        z, y = lorenz96_rk4_step(spec, z, y, dt)
    return z, y


def lorenz96_spinup(spec, seed=0):
    """Random initial state ``z ~ N(0, 1)``, ``y ~ N(0, 1/b^2)`` integrated
    for ``spinup_records`` record intervals."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(spec.K)
    y = rng.standard_normal(spec.K * spec.J) / spec.b
    for r in range(spec.spinup_records):
        z, y = _advance_record(spec, z, y, spec.substeps, spec.rk4_step)
        if not np.all(np.isfinite(z)):
            raise BlowUpError(f"Lorenz-96 spin-up blew up at record {r}", r)
    return z, y


def closure_residual(z_now, z_next, dt, F):
    """``(z_next - z_now) / dt - G(z_now)``."""
    return (z_next - z_now) / dt - truncated_drift(z_now, F)


@dataclass
class Lorenz96Data:
    """Stacked training samples ``(z, psi)`` plus the fast-variable record."""

    samples: np.ndarray
    z: np.ndarray
    sigma_z: float
    sigma_psi: float
    y_std: float = None
    extras: dict = field(default_factory=dict)

    @property
    def metric_scales(self):
        K = self.z.shape[1]
        return np.r_[np.full(K, self.sigma_z), np.full(K, self.sigma_psi)]


def lorenz96_generate(spec, M, seed=0):
    """Record ``M`` slow states and extract ``M - 1`` closure samples.

    Returns
    -------
    Lorenz96Data
        ``samples`` has shape (M - 1, 2K) with rows ``(z_j, psi_j)``;
        ``z`` holds all ``M`` recorded slow states.
    """
    M = check_positive_int(M, "M")
    if M < 2:
        raise ParameterError("need at least two recorded states")
    z, y = lorenz96_spinup(spec, seed)
    zs = np.empty((M, spec.K))
    y_sq = 0.0
    y_sum = 0.0
    zs[0] = z
    for r in range(1, M):
        z, y = _advance_record(spec, z, y, spec.substeps, spec.rk4_step)
        if not np.all(np.isfinite(z)):
            raise BlowUpError(f"Lorenz-96 run blew up at record {r}", r)
        zs[r] = z
        y_sum += y.mean()
        y_sq += (y**2).mean()
    y_mean = y_sum / (M - 1)
    y_std = float(np.sqrt(max(y_sq / (M - 1) - y_mean**2, 0.0)))
    psi = closure_residual(zs[:-1], zs[1:], spec.record_interval, spec.F)
    samples = np.hstack([zs[:-1], psi])
    return Lorenz96Data(samples=samples, z=zs,
                        sigma_z=float(zs[:-1].std()), sigma_psi=float(psi.std()),
                        y_std=y_std)
