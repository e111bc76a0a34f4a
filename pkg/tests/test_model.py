import itertools

import mpmath
import numpy as np
import pytest
from scipy import integrate, stats

from pfsmooth.model import (
    DiscreteHmmParams,
    GrowthModelParams,
    LinearGaussianParams,
    discrete_hmm_model,
    growth_model,
    growth_transition_mean,
    hmm_forward_backward,
    kalman_smoother,
    linear_gaussian_model,
    simulate_data,
)


def test_growth_mean_at_origin():
    assert growth_transition_mean(0, 0.0) == 8.0
    assert growth_transition_mean(3, 0.0) == pytest.approx(8 * np.cos(3.6))


def test_growth_mean_at_x_one():
    # 0.5 + 12.5 from the state terms
    k = 5
    assert growth_transition_mean(k, 1.0) - 8 * np.cos(1.2 * k) == pytest.approx(13.0)


def test_growth_mean_matches_high_precision():
    mpmath.mp.dps = 30
    x = mpmath.mpf(2)
    expected = x / 2 + 25 * x / (1 + x**2) + 8 * mpmath.cos(mpmath.mpf("1.2"))
    assert growth_transition_mean(1, 2.0) == pytest.approx(float(expected), abs=1e-13)
    assert float(expected) == pytest.approx(13.898862, abs=1e-6)


def test_noise_free_growth_simulation_follows_the_mean_map():
    model = growth_model(GrowthModelParams(0.0, 0.0, 0.0))
    x, obs = simulate_data(model, 10, seed=3)
    expected = [0.0]
    for k in range(9):
        # internal step k -> k+1 is 1-based time k + 2
        expected.append(growth_transition_mean(k + 2, expected[-1]))
    np.testing.assert_allclose(x, expected, rtol=0, atol=1e-12)
    np.testing.assert_allclose(obs.y, np.array(expected) ** 2 / 20, atol=1e-12)


def test_simulation_is_deterministic_given_seed():
    model = growth_model()
    a = simulate_data(model, 50, seed=11)
    b = simulate_data(model, 50, seed=11)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1].y, b[1].y)
    assert len(a[1]) == 50


def test_linear_gaussian_stationary_variance():
    phi, q = 0.5, 1.0
    stationary = q / (1 - phi**2)
    model = linear_gaussian_model(LinearGaussianParams(phi=phi, state_noise_var=q,
                                                       init_var=stationary))
    x, _ = simulate_data(model, 1000, seed=2024)
    assert abs(x.var() - stationary) < 0.1 * stationary


def test_hmm_simulation_uses_valid_symbols(hmm3):
    x, obs = simulate_data(hmm3, 200, seed=1)
    assert set(np.unique(x)) <= {0, 1, 2}
    assert set(np.unique(obs.y)) <= {0, 1, 2}


def test_zero_variance_density_is_rejected():
    model = growth_model(GrowthModelParams(0.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        model.transition_logdensity(0, np.zeros(2), np.zeros(2))


@pytest.mark.parametrize("bad", [
    dict(state_noise_var=0.0), dict(obs_noise_var=-1.0), dict(init_var=0.0)])
def test_linear_gaussian_params_validation(bad):
    with pytest.raises(ValueError):
        LinearGaussianParams(**bad)


def test_growth_params_validation():
    with pytest.raises(ValueError):
        GrowthModelParams(sigmaV_sq=-1.0)


def test_hmm_params_validation():
    with pytest.raises(ValueError):
        DiscreteHmmParams(np.array([[0.5, 0.6], [0.5, 0.5]]), np.eye(2), np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        DiscreteHmmParams(np.eye(2), np.eye(2), np.array([0.7, 0.4]))
    with pytest.raises(ValueError):
        DiscreteHmmParams(np.array([[1.0]]), np.array([[1.0]]), np.array([1.0]))


# --------------------------------------------------------------------------
# densities


@pytest.mark.parametrize("make", [lambda: growth_model(), lambda: linear_gaussian_model(
    LinearGaussianParams(phi=0.7, state_noise_var=2.0))])
def test_transition_density_integrates_to_one(make):
    model = make()
    for k in (0, 3, 17):
        for x in (-15.0, -2.0, 0.0, 0.3, 4.0, 20.0):
            total, _ = integrate.quad(
                lambda xp: np.exp(model.transition_logdensity(k, x, xp)), -80, 80,
                limit=200, points=[0.0])
            assert total == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize("make", [lambda: growth_model(), lambda: linear_gaussian_model()])
def test_transition_bound_holds_under_random_probing(make):
    model = make()
    rng = np.random.default_rng(0)
    x = rng.normal(0, 10, 5000)
    xp = rng.normal(0, 10, 5000)
    k = rng.integers(0, 50)
    assert np.all(np.exp(model.transition_logdensity(k, x, xp)) <= model.transition_density_bound)
    # the bound is attained at the mode
    mode = growth_transition_mean(k + 2, x) if model.name == "growth" else model.params.phi * x
    np.testing.assert_allclose(np.exp(model.transition_logdensity(k, x, mode)),
                               model.transition_density_bound)


def test_hmm_transition_bound(hmm3):
    s = np.arange(3)
    q = np.exp(hmm3.transition_logdensity(0, s[:, None], s[None, :]))
    assert q.max() <= hmm3.transition_density_bound
    np.testing.assert_allclose(q.sum(axis=1), 1.0)


# --------------------------------------------------------------------------
# Kalman smoother


def _dense_gaussian_oracle(p, y):
    """Condition the joint Gaussian of (X_0..X_n, Y_0..Y_n) on Y directly."""
    n1 = len(y)
    var = np.empty(n1)
    var[0] = p.init_var
    for k in range(1, n1):
        var[k] = p.phi**2 * var[k - 1] + p.state_noise_var
    mean_x = p.init_mean * p.phi ** np.arange(n1)
    cov_x = np.empty((n1, n1))
    for i in range(n1):
        for j in range(n1):
            lo, hi = min(i, j), max(i, j)
            cov_x[i, j] = p.phi ** (hi - lo) * var[lo]
    c = p.obs_coeff
    cov_xy = c * cov_x
    cov_yy = c * c * cov_x + p.obs_noise_var * np.eye(n1)
    mean_y = c * mean_x
    gain = np.linalg.solve(cov_yy, cov_xy.T).T
    post_mean = mean_x + gain @ (y - mean_y)
    post_cov = cov_x - gain @ cov_xy.T
    loglik = stats.multivariate_normal(mean_y, cov_yy).logpdf(y)
    return post_mean, np.diag(post_cov), loglik


@pytest.mark.parametrize("seed,n1", [(0, 6), (1, 11), (2, 3), (5, 1)])
def test_kalman_matches_dense_gaussian_conditioning(seed, n1):
    rng = np.random.default_rng(seed)
    p = LinearGaussianParams(phi=rng.uniform(-0.95, 0.95), state_noise_var=rng.uniform(0.2, 2),
                             obs_coeff=rng.uniform(0.3, 2), obs_noise_var=rng.uniform(0.2, 2),
                             init_mean=rng.normal(), init_var=rng.uniform(0.5, 3))
    y = rng.normal(0, 2, n1)
    res = kalman_smoother(p, y)
    mean, var, loglik = _dense_gaussian_oracle(p, y)
    np.testing.assert_allclose(res.smoothed_means, mean, atol=1e-9)
    np.testing.assert_allclose(res.smoothed_vars, var, atol=1e-9)
    assert res.log_likelihood == pytest.approx(loglik, abs=1e-8)


def test_kalman_with_uninformative_observations():
    p = LinearGaussianParams(phi=0.8, obs_coeff=0.0, obs_noise_var=2.0, init_mean=1.5)
    y = np.array([0.3, -1.0, 2.0, 0.5])
    res = kalman_smoother(p, y)
    np.testing.assert_allclose(res.smoothed_means, 1.5 * 0.8 ** np.arange(4), atol=1e-12)
    assert res.log_likelihood == pytest.approx(stats.norm(0, np.sqrt(2.0)).logpdf(y).sum())


def test_kalman_single_observation_is_conjugate_update():
    p = LinearGaussianParams(init_mean=1.0, init_var=2.0, obs_coeff=1.0, obs_noise_var=0.5)
    res = kalman_smoother(p, np.array([3.0]))
    post_var = 1.0 / (1 / 2.0 + 1 / 0.5)
    assert res.smoothed_vars[0] == pytest.approx(post_var)
    assert res.smoothed_means[0] == pytest.approx(post_var * (1.0 / 2.0 + 3.0 / 0.5))


# --------------------------------------------------------------------------
# forward-backward


def _enumerate_paths(params, y):
    a, b, pi = params.transition_matrix, params.emission_matrix, params.initial_distribution
    s, n1 = params.n_states, len(y)
    marg = np.zeros((n1, s))
    pair = np.zeros((max(n1 - 1, 0), s, s))
    total = 0.0
    for path in itertools.product(range(s), repeat=n1):
        p = pi[path[0]] * b[path[0], y[0]]
        for k in range(1, n1):
            p *= a[path[k - 1], path[k]] * b[path[k], y[k]]
        total += p
        for k in range(n1):
            marg[k, path[k]] += p
        for k in range(n1 - 1):
            pair[k, path[k], path[k + 1]] += p
    return marg / total, pair / total, np.log(total)


def _random_hmm(rng, s, m):
    a = rng.dirichlet(np.ones(s), size=s)
    b = rng.dirichlet(np.ones(m), size=s)
    pi = rng.dirichlet(np.ones(s))
    return DiscreteHmmParams(a, b, pi)


@pytest.mark.parametrize("s,n1,seed", [(2, 5, 0), (3, 7, 1), (3, 4, 2), (2, 7, 3), (3, 1, 4)])
def test_forward_backward_matches_enumeration(s, n1, seed):
    rng = np.random.default_rng(seed)
    params = _random_hmm(rng, s, 3)
    y = rng.integers(0, 3, n1)
    res = hmm_forward_backward(params, y)
    marg, pair, loglik = _enumerate_paths(params, y)
    np.testing.assert_allclose(res.marginals, marg, atol=1e-12)
    np.testing.assert_allclose(res.pairwise, pair, atol=1e-12)
    assert res.log_likelihood == pytest.approx(loglik, abs=1e-12)


def test_forward_backward_uniform_model():
    params = DiscreteHmmParams(np.full((3, 3), 1 / 3), np.full((3, 2), 0.5), np.full(3, 1 / 3))
    res = hmm_forward_backward(params, np.array([0, 1, 1, 0]))
    np.testing.assert_allclose(res.marginals, 1 / 3)


def test_forward_backward_single_observation(hmm3_params):
    res = hmm_forward_backward(hmm3_params, np.array([2]))
    expected = hmm3_params.initial_distribution * hmm3_params.emission_matrix[:, 2]
    np.testing.assert_allclose(res.marginals[0], expected / expected.sum())


def test_forward_backward_pairwise_consistency(hmm3_params):
    y = np.array([0, 2, 1, 1, 0, 2])
    res = hmm_forward_backward(hmm3_params, y)
    np.testing.assert_allclose(res.pairwise.sum(axis=2), res.marginals[:-1], atol=1e-12)
    np.testing.assert_allclose(res.pairwise.sum(axis=1), res.marginals[1:], atol=1e-12)
    np.testing.assert_allclose(res.marginals.sum(axis=1), 1.0, atol=1e-12)


def test_forward_backward_long_record_does_not_underflow(hmm3_params):
    model = discrete_hmm_model(hmm3_params)
    _, obs = simulate_data(model, 5000, seed=0)
    res = hmm_forward_backward(hmm3_params, obs)
    assert np.isfinite(res.log_likelihood)
    assert res.log_likelihood < -1000
