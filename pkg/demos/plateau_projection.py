"""
Projections that keep natural algorithms convergent
===================================================

Trapezoid features with flat tops, paired with projection directions that
live on the plateaus, satisfy the extremum condition for every span
element.  Expected TD then converges to the projected fixed point, and
representative-state value iteration on plateau points does as well.
"""

import numpy as np

from pbelab import assemble_system, expected_td_lambda, solve_system, stationary_distribution, theorem2_check
from pbelab.algorithms import representative_value_iteration
from pbelab.builders import diffusion_mdp, plateau_basis, trapezoid_features, uniform_grid

x, h = uniform_grid(200)
phi, masks = trapezoid_features(x, 5)
mdp = diffusion_mdp(x, 0.05, 0.95, reward=np.sin(2 * np.pi * x), widths=h)
mu = stationary_distribution(mdp)
psi = plateau_basis(masks, mu)

check = theorem2_check(phi, psi, mu, G=0.95)
print(f"condition holds: {check.passed} ({check.certificate_kind}), uniform witness: {check.uniform_witness}")

# %%
w_star = solve_system(assemble_system(mdp, phi, psi, mu))
trace = expected_td_lambda(mdp, phi, psi, mu, iters=100_000)
print(f"TD: {trace.verdict} after {len(trace.iterates) - 1} steps, |w - w*| = {trace.residuals[-1]:.1e}")

# %%
reps = [int(np.flatnonzero(m)[len(np.flatnonzero(m)) // 2]) for m in masks]
rvi = representative_value_iteration(mdp, phi, reps)
print("representative states", reps, "->", rvi.verdict, rvi.final.round(4))
