"""
Two chains that linear TD cannot tell apart
============================================

A two-state chain with zero reward and a three-state chain whose last two
states share a feature produce the same projected system, so every
algorithm that only sees that system returns the same weights for both.
"""

import numpy as np

from pbelab import assemble_system, bellman_error, stationary_distribution, sutton_barto_pair
from pbelab.algorithms import expected_td_lambda, sampled_td_lambda
from pbelab.mdp import exact_value

pair = sutton_barto_pair(gamma=0.9)
mu1 = stationary_distribution(pair.mdp1)
mu2 = stationary_distribution(pair.mdp2)
print("stationary:", mu1.weights, mu2.weights)

# %%
# The projected quantities coincide entry by entry.
s1 = assemble_system(pair.mdp1, pair.phi1, pair.psi1, mu1)
s2 = assemble_system(pair.mdp2, pair.phi2, pair.psi2, mu2)
print("A:", s1.A.tolist(), "B:", s1.B.round(4).tolist(), "b:", s1.b.tolist())
print("max |difference|:", max(np.abs(s1.B - s2.B).max(), np.abs(s1.b - s2.b).max()))

# %%
# Yet the true values differ, and so does the Bellman error of w = 0.
print("true values:", exact_value(pair.mdp1), exact_value(pair.mdp2).round(4))
w0 = np.zeros(2)
print("Bellman error at 0:", bellman_error(pair.mdp1, pair.phi1, w0, mu1),
      bellman_error(pair.mdp2, pair.phi2, w0, mu2))

# %%
# Expected and sampled TD land on the same point for both chains.
for name, mdp, phi, psi, mu in (("chain 1", pair.mdp1, pair.phi1, pair.psi1, mu1),
                                ("chain 2", pair.mdp2, pair.phi2, pair.psi2, mu2)):
    expected = expected_td_lambda(mdp, phi, psi, mu, w0=[1.0, -1.0])
    sampled = sampled_td_lambda(mdp, phi, 100_000, seed=0)
    print(f"{name}: expected -> {expected.final.round(8)} ({expected.verdict}), "
          f"sampled -> {sampled.final.round(3)}")
