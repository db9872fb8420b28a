"""
Auditing feature spans for flat extrema
=======================================

Aggregation features are constant on cells, so every combination reaches
its maximum on a whole cell.  A tent peaks at a single grid point, which on
a fine grid is as good as measure zero.
"""

import numpy as np

from pbelab.builders import partition_indicators, random_partition, tent, uniform_grid, uniform_grid_measure
from pbelab.flatness import flatness_audit, limit_mass_curve
from pbelab.mdp import Measure
from pbelab.projection import FeatureSet

rng = np.random.default_rng(0)
phi = partition_indicators(random_partition(10, 3, rng), 3)
mu = Measure(rng.dirichlet(np.ones(10)))
verdict = flatness_audit(phi, mu, n_random=128)
print("aggregation:", verdict.overall, verdict.certificate_kind, "cell masses", verdict.cell_masses.round(3))

# %%
x, _ = uniform_grid(2001)
tent_phi = FeatureSet(tent(x))
grid_mu = uniform_grid_measure(2001)
verdict = flatness_audit(tent_phi, grid_mu, n_random=8)
r = verdict.reports[0]
print(f"tent: flat={r.flat}, mass at max={r.mass_at_max:.2e}, zero-mass threshold={r.zero_mass:.2e}")

# %%
# The mass near the peak shrinks linearly as the level approaches the maximum.
for G, mass in limit_mass_curve(tent_phi, [1.0], grid_mu, [0.5, 0.9, 0.99, 0.999]):
    print(f"  mass of {{phi >= {G} max}} = {mass:.4f}")
