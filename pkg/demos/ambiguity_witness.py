"""
Building an ambiguity witness from a non-flat feature
=====================================================

For a tent feature with a constant projection direction, a target function
``f`` can be found that keeps the projected equation intact while staying
inside the tent's range.  Mixing between the tent's extreme states turns
``f`` into a transition matrix, and the resulting system is singular: two
rewards with different values share all projected quantities.
"""

import numpy as np

from pbelab import assemble_system, construct_f, detect_ambiguity, environment_from_f, witness_from_nullspace
from pbelab.builders import tent, uniform_grid
from pbelab.mdp import FiniteMdp, Measure
from pbelab.projection import FeatureSet, normalize_basis

n, G = 2001, 0.99
x, h = uniform_grid(n)
mu = Measure.uniform(n, h)
phi = FeatureSet(tent(x))
psi = normalize_basis(np.ones((1, n)), mu)
template = FiniteMdp(np.full((n, n), 1.0 / n), np.zeros(n), G, 0.0, h)

fc = construct_f(phi.table[0], psi, mu, G)
print(f"feasible={fc.feasible}  f in [{fc.f.min():.4f}, {fc.f.max():.4f}]  residual={fc.eqn4_residual:.1e}")
print(f"mass above G^2 max = {fc.mass_upper:.4f}, sufficient bound = {fc.bound_upper:.4f}")

# %%
env = environment_from_f(fc.f, phi.table[0], template)
system = assemble_system(env, phi, psi, mu)
print("A - gamma B =", system.matrix, "rank", system.rank)

# %%
v = detect_ambiguity(system)[:, 0]
wit = witness_from_nullspace(env, phi, psi, mu, v, xi=1.0)
print("weights:", wit.base.w, "vs", wit.alternate.w)
print("shared (A, B, b) up to", wit.max_abc_discrepancy)
print("Bellman residuals:", wit.base.bellman_residual(phi), wit.alternate.bellman_residual(phi))
