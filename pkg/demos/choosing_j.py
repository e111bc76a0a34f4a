"""
How many backward trajectories per sweep?
=========================================

With ``J`` trajectories per particle system the variance of a smoothed
mean is about ``(sigma^2 / J + sigma_inf^2) / R``.  Extra trajectories
only pay off while the within-system spread ``sigma^2`` dominates the
between-sweep term, weighted by what each costs.
"""

import numpy as np

from pfsmooth import efficiency, estimator_variance, j_opt, recommend_j, tavc

rng = np.random.default_rng(0)

# A synthetic chain: an AR(1) stream plays the Rao-Blackwellised estimate.
R, phi = 20_000, 0.5
e = rng.standard_normal(R)
stream = np.empty(R)
stream[0] = e[0]
for t in range(1, R):
    stream[t] = phi * stream[t - 1] + e[t]
print(f"TAVC estimate {tavc(stream):.3f} (analytic 4.0)")

sigma_sq, sigma_inf_sq = 6.0, 4.0
tau_pf, tau_bs = 0.02, 0.0005  # seconds per filter run and per trajectory
for J in (1, 5, 25, 100):
    var = estimator_variance(sigma_sq, sigma_inf_sq, J, R)
    cost = R * (tau_pf + J * tau_bs)
    print(f"J={J:3d}  variance {var:.2e}  efficiency {efficiency(var, cost):9.1f}")

print(f"J_opt = {j_opt(sigma_sq, sigma_inf_sq, tau_bs, tau_pf):.2f}")

# Per-time J_opt values are summarised by their geometric mean.
print("recommended J:", recommend_j([0.74, 3.0, 7.5, 12.0, 18.9]))
