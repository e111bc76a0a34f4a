"""
Genealogy versus backward sampling
==================================

On the nonlinear growth model the genealogy of a particle system collapses
onto a handful of early ancestors.  Backward sampling through the filter
clouds does not, and its accept-reject version is much cheaper than
computing every backward kernel.
"""

import time

import numpy as np

from pfsmooth import backward_paths_ar, backward_paths_exact, backward_smoothing_marginals
from pfsmooth import genealogy_marginals, growth_model, run_filter, simulate_data

model = growth_model()
x, obs = simulate_data(model, 50, seed=3)
trace = run_filter(model, obs, 500, 4)

gt = genealogy_marginals(trace).weights
bsm = backward_smoothing_marginals(trace).weights
for k in (0, 25, 49):
    print(f"k={k:2d}  distinct ancestors in the genealogy: {np.count_nonzero(gt[k]):3d}   "
          f"particles with backward-smoothing mass: {np.count_nonzero(bsm[k] > 1e-12):3d}")

rng = np.random.default_rng(5)
t0 = time.perf_counter()
exact = backward_paths_exact(trace, rng, 25)
t1 = time.perf_counter()
ar, stats = backward_paths_ar(trace, rng, 25)
t2 = time.perf_counter()
print(f"25 trajectories: exact kernel {1e3 * (t1 - t0):.1f} ms, "
      f"accept-reject {1e3 * (t2 - t1):.1f} ms")
print(f"accept-reject acceptance rate {stats.acceptance_rate:.3f}, "
      f"fallbacks to the exact kernel {stats.fallbacks}")

# Both samplers target the same law; compare smoothed means at a few times.
states = np.array([c.positions for c in trace.clouds])
for k in (0, 25, 49):
    print(f"k={k:2d}  BSM {bsm[k] @ states[k]:7.3f}   "
          f"exact BS {states[k][exact[:, k]].mean():7.3f}   "
          f"AR BS {states[k][ar[:, k]].mean():7.3f}   true x {x[k]:7.3f}")
