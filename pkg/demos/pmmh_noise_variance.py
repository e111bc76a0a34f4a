"""
Learning an observation-noise variance with PMMH
================================================

When a parameter is unknown the particle system and the parameter are
updated jointly.  Here the observation-noise variance of a linear-Gaussian
model gets an inverse-gamma prior, and the chain's posterior mean is
compared with a quadrature of prior times Kalman likelihood.
"""

import numpy as np
from scipy import integrate, stats

from pfsmooth import ChainConfig, LinearGaussianParams, kalman_smoother, linear_gaussian_model
from pfsmooth import log_random_walk, run_chain, simulate_data, tavc

truth = LinearGaussianParams(phi=0.8, obs_noise_var=0.5)
x, obs = simulate_data(linear_gaussian_model(truth), 20, seed=0)
prior = stats.invgamma(3.0, scale=2.0)


def params_for(v):
    return LinearGaussianParams(phi=0.8, obs_noise_var=float(v))


def log_post(v):
    return prior.logpdf(v) + kalman_smoother(params_for(v), obs).log_likelihood


shift = max(log_post(v) for v in np.linspace(0.05, 4, 80))
norm, _ = integrate.quad(lambda v: np.exp(log_post(v) - shift), 1e-6, 30, limit=200)
first, _ = integrate.quad(lambda v: v * np.exp(log_post(v) - shift), 1e-6, 30, limit=200)
print(f"posterior mean by quadrature: {first / norm:.4f}")

param_model = log_random_walk(lambda th: float(prior.logpdf(th[0])), 0.5)
config = ChainConfig(sampler="pmmh", modes=("bsm",), N=50, R=4000, seed=2, theta0=[1.0])
result = run_chain(config, lambda th: linear_gaussian_model(params_for(th[0])), obs,
                   param_model)
theta = result.theta[:, 0]
se = np.sqrt(tavc(theta) / len(theta))
print(f"PMMH posterior mean: {theta.mean():.4f} +/- {se:.4f} "
      f"(acceptance {result.acceptance_rate:.2f})")
print("smoothed state means at k = 0, 10, 19:", np.round(result.means("bsm")[[0, 10, 19]], 3))
