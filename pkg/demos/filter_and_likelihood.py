"""
Particle filtering and the likelihood estimate
==============================================

Run the auxiliary particle filter on a linear-Gaussian model, where the
Kalman filter gives the exact likelihood, and watch the estimate of
``Z`` tighten as the particle count grows.
"""

import numpy as np

from pfsmooth import LinearGaussianParams, kalman_smoother, linear_gaussian_model, run_filter
from pfsmooth import simulate_data

params = LinearGaussianParams(phi=0.9, state_noise_var=1.0, obs_noise_var=1.0)
model = linear_gaussian_model(params)
x, obs = simulate_data(model, 30, seed=1)

exact = kalman_smoother(params, obs).log_likelihood
print(f"exact log-likelihood: {exact:.4f}")

# The estimate of Z itself is unbiased; on the log scale it sits slightly low
# and its spread shrinks like 1/sqrt(N).
for N in (10, 100, 1000):
    lz = np.array([run_filter(model, obs, N, seed).log_z for seed in range(200)])
    ratio = np.exp(lz - exact)
    se = ratio.std(ddof=1) / np.sqrt(len(ratio))
    print(f"N={N:5d}  mean log Z {lz.mean():9.4f}  sd {lz.std(ddof=1):.4f}  "
          f"mean Z/Z_exact {ratio.mean():.3f} +/- {se:.3f}")

# A trace keeps every cloud and its genealogy.
trace = run_filter(model, obs, 200, 0)
last = trace.clouds[-1]
print("filter mean at the last time:", float(last.normalised_weights() @ last.positions))
print("Kalman filter mean:         ", kalman_smoother(params, obs).filtered_means[-1])
