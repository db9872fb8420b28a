"""
Residual gradient on an aliased chain
=====================================

Gradient descent on the Bellman error reaches zero error when the value is
representable.  With aliased states it settles on a least-squares point
with a positive error floor, away from the best fit of the true value.
"""

import numpy as np

from pbelab import bellman_error, stationary_distribution, sutton_barto_pair
from pbelab.algorithms import bellman_error_minimizer, residual_gradient
from pbelab.mdp import exact_value

pair = sutton_barto_pair()
for name, mdp, phi in (("chain 1", pair.mdp1, pair.phi1), ("chain 2", pair.mdp2, pair.phi2)):
    mu = stationary_distribution(mdp)
    trace = residual_gradient(mdp, phi, mu, w0=[0.5, 0.5])
    print(f"{name}: {trace.verdict}, w = {trace.final.round(6)}, "
          f"error = {bellman_error(mdp, phi, trace.final, mu):.4f}")

# %%
mdp, phi = pair.mdp2, pair.phi2
mu = stationary_distribution(mdp)
sq = np.sqrt(mu.weights)
w_fit, *_ = np.linalg.lstsq(sq[:, None] * phi.table.T, sq * exact_value(mdp), rcond=None)
print("error minimizer", bellman_error_minimizer(mdp, phi, mu).round(4), "best value fit", w_fit.round(4))
