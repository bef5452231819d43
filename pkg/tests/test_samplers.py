import numpy as np
import pytest

from locbridge import (BlowUpError, ChainState, Clamp, DataError, KernelDenoiser,
                       LocalizedKernelDenoiser, LocalizedSchrodingerBridge,
                       ParameterError, SamplerConfig, SchrodingerBridge,
                       closure_pair_sets, closure_simulate, conditional_cov,
                       generate, periodic_stencil_sets, psd_sqrt)
from locbridge.samplers import (advance, bayes_step, chain_seed, conditional_step,
                                data_aware_step, em_step, kde_split_step,
                                localized_data_aware_step, localized_em_step,
                                localized_kde_step, localized_split_step, split_step)
from locbridge.testbeds import truncated_drift


@pytest.fixture(scope="module")
def models(gauss_small):
    d = gauss_small.shape[1]
    sets = periodic_stencil_sets(d, 1)
    return dict(
        bridge=SchrodingerBridge(epsilon=0.5).fit(gauss_small),
        local=LocalizedSchrodingerBridge(sets=sets, epsilon=0.5).fit(gauss_small),
        full=LocalizedSchrodingerBridge(sets=None, epsilon=0.5).fit(gauss_small),
        kde=KernelDenoiser(epsilon=0.5).fit(gauss_small),
        local_kde=LocalizedKernelDenoiser(sets=sets, epsilon=0.5).fit(gauss_small),
        full_kde=LocalizedKernelDenoiser(epsilon=0.5).fit(gauss_small),
    )


@pytest.fixture
def state(rng, gauss_small):
    d = gauss_small.shape[1]
    return rng.normal(size=(3, d)), rng.normal(size=(3, d))


def test_em_step(models, state):
    x, xi = state
    m = models["bridge"]
    assert np.allclose(em_step(m, x, xi), m.transform(x) + np.sqrt(1.0) * xi)


def test_data_aware_step(models, state):
    x, xi = state
    m = models["bridge"]
    root = psd_sqrt(conditional_cov(m, x))
    expected = m.transform(x) + np.einsum("bij,bj->bi", root, xi)
    assert np.allclose(data_aware_step(m, x, xi), expected)


def test_split_step(models, state):
    x, xi = state
    m = models["bridge"]
    assert np.allclose(split_step(m, x, xi), m.transform(x + xi))
    root = psd_sqrt(conditional_cov(m, x))
    expected = m.transform(x + np.einsum("bij,bj->bi", root, xi))
    assert np.allclose(split_step(m, x, xi, data_aware=True), expected)


def test_localized_split_step(models, state):
    x, xi = state
    m = models["local"]
    assert np.allclose(localized_split_step(m, x, xi), m.transform(x + xi))


def test_localized_data_aware_noise_rows(models, state, gauss_small):
    from locbridge import local_noise_component
    x, xi = state
    m = models["local"]
    out = localized_data_aware_step(m, x[0], xi[0])
    mean = m.transform(x[0])
    for s in m.sets_:
        idx = list(s.members)
        noise = local_noise_component(m, s.alpha, x[0][idx], xi[0][idx])
        assert out[s.alpha] == pytest.approx(mean[s.alpha] + noise, rel=1e-10)


@pytest.mark.parametrize("loc, glob, loc_step, glob_step", [
    ("full", "bridge", localized_em_step, em_step),
    ("full", "bridge", localized_split_step, split_step),
    ("full", "bridge", localized_data_aware_step, data_aware_step),
    ("full_kde", "kde", localized_kde_step, kde_split_step),
])
def test_full_window_schemes_match_global(models, state, loc, glob, loc_step, glob_step):
    x, xi = state
    diff = np.abs(loc_step(models[loc], x, xi) - glob_step(models[glob], x, xi))
    assert diff.max() <= 1e-12


def test_scheme_model_mismatch(models, state):
    x, xi = state
    with pytest.raises(ParameterError):
        advance(models["local"], "em", x, xi)
    with pytest.raises(ParameterError):
        advance(models["bridge"], "nope", x, xi)
    with pytest.raises(DataError):
        advance(models["bridge"], "em", x, xi[:, :3])


def test_clamp_holds_coordinates(models, state):
    x, xi = state
    clamp = Clamp([0, 4], [0.25, -0.5])
    for scheme, model in [("localized_split_step", "local"), ("localized_data_aware", "local"),
                          ("split_step", "bridge")]:
        out = conditional_step(models[model], x, xi, clamp, scheme=scheme)
        assert np.all(out[:, 0] == 0.25) and np.all(out[:, 4] == -0.5)


def test_clamp_applied_before_projection(models, state):
    x, xi = state
    m = models["local"]
    clamp = Clamp([2], [0.1])
    half = x + xi
    half[:, 2] = 0.1
    expected = m.transform(half)
    expected[:, 2] = 0.1
    assert np.allclose(conditional_step(m, x, xi, clamp), expected)


def test_bayes_drift(models, state):
    x, xi = state
    grad = lambda z: -z
    m = models["bridge"]
    expected = em_step(m, x, xi) + 0.5 * (-x)
    assert np.allclose(bayes_step(m, x, xi, grad), expected)
    with pytest.raises(ParameterError):
        advance(m, "split_step", x, xi, likelihood_grad=grad)


def test_bayes_drift_localized_masked_to_targets(gauss_small, rng):
    from locbridge import DependencySet
    m = LocalizedSchrodingerBridge(sets=[DependencySet(1, (0, 1, 2))], epsilon=0.5).fit(gauss_small)
    x = rng.normal(size=gauss_small.shape[1])
    out = bayes_step(m, x, np.zeros_like(x), lambda z: np.ones_like(z))
    keep = np.arange(x.size) != 1
    assert np.array_equal(out[keep], x[keep])


def test_generate_shapes_and_determinism(models):
    cfg = SamplerConfig(scheme="localized_split_step", n_samples=10, n_decorrelation=3, seed=7)
    a = generate(models["local"], cfg)
    b = generate(models["local"], cfg)
    assert a.shape == (10, 11)
    assert np.array_equal(a, b)
    c = generate(models["local"], SamplerConfig(scheme="localized_split_step", n_samples=10,
                                                n_decorrelation=3, seed=8))
    assert not np.array_equal(a, c)


def test_chain_results_independent_of_batch_size(models):
    base = dict(scheme="localized_data_aware", n_samples=9, n_decorrelation=4, seed=1)
    a = generate(models["local"], SamplerConfig(batch_size=2, **base))
    b = generate(models["local"], SamplerConfig(batch_size=9, **base))
    assert np.allclose(a, b, atol=1e-13, rtol=0)


def test_generate_single_chain_matches_manual_loop(models, gauss_small):
    m = models["local"]
    cfg = SamplerConfig(scheme="localized_em", n_samples=3, n_decorrelation=5, seed=4, batch_size=1)
    out = generate(m, cfg)
    rng = chain_seed(4, 2)
    x = gauss_small[rng.integers(40)][None]
    xi = rng.standard_normal((5, 11))
    for n in range(5):
        x = localized_em_step(m, x, xi[n:n + 1])
    assert np.array_equal(out[2], x[0])


def test_generate_zero_samples_and_long_chain(models):
    assert generate(models["local"], SamplerConfig(n_samples=0)).shape == (0, 11)
    out = generate(models["local"], SamplerConfig(n_samples=20, n_decorrelation=2, mode="long_chain"))
    assert out.shape == (20, 11) and np.all(np.isfinite(out))


def test_config_validation(models):
    with pytest.raises(ParameterError):
        generate(models["local"], SamplerConfig(epsilon=0.1))
    with pytest.raises(ParameterError):
        generate(models["local"], SamplerConfig(mode="forever"))
    with pytest.raises(ParameterError):
        generate(models["local"], SamplerConfig(clamp=([99], [0.0])))


def test_blow_up_guard(models):
    # projections stay in the data box; only an external drift can escape
    state0 = ChainState(np.zeros(11), 0, np.random.default_rng(0))
    with pytest.raises(BlowUpError) as err:
        state0.advance(models["bridge"], "em", likelihood_grad=lambda z: np.full_like(z, 1e8))
    assert err.value.step == 1


def test_chain_state_advances(models):
    s = ChainState(np.zeros(11), 0, np.random.default_rng(0)).advance(models["local"], "localized_split_step")
    assert s.step == 1 and s.x.shape == (11,)


def test_closure_simulate_with_deterministic_closure():
    z0 = np.linspace(-1, 1, 6)
    zs = closure_simulate(None, z0, 1e-3, 5, closure=lambda z: np.zeros_like(z), forcing=8.0)
    z = z0.copy()
    for _ in range(5):
        z = z + truncated_drift(z, 8.0) * 1e-3
    assert np.allclose(zs[-1], z) and zs.shape == (6, 6)


def test_closure_simulate_sampled(rng):
    K = 4
    z = rng.normal(size=(60, K))
    psi = -0.5 * z + 0.1 * rng.normal(size=(60, K))
    model = LocalizedSchrodingerBridge(sets=closure_pair_sets(K), epsilon=0.1).fit(np.hstack([z, psi]))
    zs, ps = closure_simulate(model, z[0], 1e-3, 4, n_c=3, seed=2, return_psi=True)
    assert zs.shape == (5, K) and ps.shape == (4, K)
    lo, hi = model.bounds()
    assert np.all((ps >= lo[K:]) & (ps <= hi[K:]))
    again = closure_simulate(model, z[0], 1e-3, 4, n_c=3, seed=2)
    assert np.array_equal(zs, again)
