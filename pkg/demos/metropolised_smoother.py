"""
The Metropolised smoother and its four estimators
=================================================

An independent Metropolis-Hastings chain over whole particle systems.  Each
sweep proposes a fresh filter run, accepts it with the ratio of likelihood
estimates and extracts smoothed means by genealogy tracing (gt), its
Rao-Blackwellisation (gtrb), 25 backward trajectories (bs25) and backward
smoothing (bsm).  A short chain is enough to see the standard errors order
themselves; it is also short enough that the stationarity check on some
time points may complain, which is the cue to run longer.
"""

import numpy as np

from pfsmooth import ChainConfig, growth_model, run_chain, simulate_data, variance_report

model = growth_model()
x, obs = simulate_data(model, 50, seed=2024)

config = ChainConfig(modes=("gt", "gtrb", "bs:25", "bsm"), N=200, R=300, seed=1)
result = run_chain(config, model, obs)
print(f"acceptance rate {result.acceptance_rate:.2f}, "
      f"accept-reject acceptance {result.is_stats.acceptance_rate:.2f}")

labels = ("gt", "gtrb", "bs25", "bsm")
report = variance_report({lab: result.series(lab) for lab in labels},
                         {"bs25": result.within_var("bs25")}, result.tau_pf,
                         {lab: result.tau(lab) for lab in labels})

print(" k   " + "".join(f"{lab:>16s}" for lab in labels))
for k in (0, 10, 20, 30, 40, 49):
    cells = "".join(f"{report.methods[lab].mean[k]:8.3f} ({report.methods[lab].std_err[k]:.3f})"
                    for lab in labels)
    print(f"{k:2d}  {cells}")

j = report.geometric_j("bs25")
print("suggested trajectories per sweep:", j)
