import numpy as np
import pytest

from locbridge.testbeds import (BimodalSdeSpec, Lorenz96Spec, PeriodicGaussianSpec,
                                bimodal_trajectories, closure_residual,
                                em_stationary_covariance, lorenz96_generate,
                                lorenz96_rk4_step, lorenz96_tendency,
                                reference_em_gaussian_step, sample_periodic_gaussian,
                                truncated_drift)


def test_tridiagonal_precision_structure():
    Q = PeriodicGaussianSpec.tridiagonal(5).precision()
    assert Q[0, 0] == 2.0 and Q[0, 1] == -0.5 and Q[0, 4] == -0.5 and Q[0, 2] == 0.0
    assert np.allclose(Q, Q.T)


def test_target_covariance_values():
    C = PeriodicGaussianSpec.tridiagonal(101).covariance()
    assert C[50, 50] == pytest.approx(0.577, abs=1e-3)
    assert C[50, 51] == pytest.approx(0.155, abs=1e-3)
    assert C[50, 52] == pytest.approx(0.041, abs=1e-3)
    assert C[50, 53] == pytest.approx(0.011, abs=1e-3)


def test_laplacian_unit_spacing_is_tridiagonal():
    a = PeriodicGaussianSpec.laplacian(9).precision()
    b = PeriodicGaussianSpec.tridiagonal(9).precision()
    assert np.array_equal(a, b)
    spec = PeriodicGaussianSpec.laplacian(10, L=5.0)
    assert spec.h == 0.5 and spec.diagonal == 5.0 and spec.off_diagonal == -2.0


def test_sample_covariance_converges():
    spec = PeriodicGaussianSpec.tridiagonal(7)
    X = sample_periodic_gaussian(spec, 200_000, seed=0)
    assert np.allclose(np.cov(X.T), spec.covariance(), atol=0.01)


def test_reference_em_step_weights(rng):
    spec = PeriodicGaussianSpec.laplacian(8, L=4.0)
    x = rng.normal(size=8)
    eps = 0.05
    out = reference_em_gaussian_step(spec, x, eps, np.zeros(8))
    assert np.allclose(out, x - eps * spec.precision() @ x)


def test_em_stationary_covariance_solves_lyapunov():
    spec = PeriodicGaussianSpec.tridiagonal(9)
    eps = 0.2
    B = np.eye(9) - eps * spec.precision()
    C = em_stationary_covariance(spec, eps)
    assert np.allclose(B @ C @ B.T + 2 * eps * np.eye(9), C)


def test_em_step_rejects_unstable_step():
    with pytest.raises(ValueError):
        reference_em_gaussian_step(PeriodicGaussianSpec.tridiagonal(5), np.zeros(5), 1.0, np.zeros(5))


def test_bimodal_trajectories_shape_and_start():
    spec = BimodalSdeSpec(record_interval=0.5, intervals=10, fine_step=0.01)
    Z = bimodal_trajectories(spec, 300, seed=1)
    assert Z.shape == (300, 11)
    assert abs(Z[:, 0].mean()) < 0.2
    # the double well pushes mass towards +-1
    assert np.mean(np.abs(np.abs(Z[:, -1]) - 1) < 0.5) > 0.7


def test_bimodal_spec_substeps():
    assert BimodalSdeSpec().substeps == 5000
    assert BimodalSdeSpec().d == 101


def test_truncated_drift_indices():
    z = np.arange(1.0, 6.0)
    k = 2
    expected = -z[1] * (z[0] - z[3]) - z[2] + 20.0
    assert truncated_drift(z)[k] == pytest.approx(expected)


def test_lorenz96_advection_conserves_energy(rng):
    # without damping, forcing and coupling the quadratic terms conserve energy
    spec = Lorenz96Spec(K=6, J=4, F=0.0, c=1.0, b=1.0, h_coupling=0.0)
    z = rng.normal(size=6)
    y = rng.normal(size=24)
    dz, dy = lorenz96_tendency(spec, z, y)
    assert z @ (dz + z) == pytest.approx(0.0, abs=1e-12)
    assert y @ (dy + spec.c * y) == pytest.approx(0.0, abs=1e-12)


def test_lorenz96_rk4_fourth_order(rng):
    spec = Lorenz96Spec(K=4, J=3)
    z0, y0 = rng.normal(size=4), rng.normal(size=12) / 10

    def run(dt, n):
        z, y = z0, y0
        for _ in range(n):
            z, y = lorenz96_rk4_step(spec, z, y, dt)
        return np.r_[z, y]

    ref = run(1e-5, 400)
    e1 = np.abs(run(4e-4, 10) - ref).max()
    e2 = np.abs(run(2e-4, 20) - ref).max()
    assert 12 < e1 / e2 < 20


def test_lorenz96_generate_closure_samples():
    spec = Lorenz96Spec(spinup_records=20)
    data = lorenz96_generate(spec, 30, seed=0)
    assert data.samples.shape == (29, 24)
    assert data.z.shape == (30, 12)
    psi = closure_residual(data.z[:-1], data.z[1:], spec.record_interval, spec.F)
    assert np.array_equal(data.samples[:, 12:], psi)
    assert data.metric_scales.shape == (24,)
    assert data.sigma_psi > 0 and data.sigma_z > 0
