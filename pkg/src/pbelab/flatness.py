"""Flat-extrema audits of feature spans.

A function has a flat maximum when the set where it attains its maximum has
positive mass under the stationary measure, and likewise for the minimum.
Natural algorithms are safe exactly when every non-zero element of the
feature span has flat extrema.  On a discretized continuum "positive mass"
degenerates, so a grid measure treats anything up to 1.5 cells of mass as
measure zero; reports always carry the masses so borderline cases can be
judged by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .errors import DimensionMismatch, ZeroDirection
from .mdp import SUPPORT_EPS, Measure
from .projection import FeatureSet, ProjectionBasis

LEVEL_RTOL = 1e-12
CELL_FLOOR = 1.5


def zero_mass_threshold(mu: Measure) -> float:
    """Largest mass still regarded as measure zero."""
    if mu.is_continuum:
        return max(SUPPORT_EPS, CELL_FLOOR * float(mu.weights.max()))
    return SUPPORT_EPS


def sample_directions(
    k: int, n_random: int = 512, seed: int = 0, pairs: bool = True, signed: bool = True
) -> np.ndarray:
    """Audit directions in coefficient space.

    Basis vectors come first, then pairwise differences ``e_i - e_j``, then
    ``n_random`` seeded Gaussian directions normalized to unit length.  With
    ``signed`` every deterministic direction is followed by its negative.
    """
    rows = []
    eye = np.eye(k)
    for j in range(k):
        rows.append(eye[j])
        if signed:
            rows.append(-eye[j])
    if pairs:
        for i in range(k):
            for j in range(i + 1, k):
                rows.append(eye[i] - eye[j])
                if signed:
                    rows.append(eye[j] - eye[i])
    if n_random:
        g = np.random.default_rng(seed).normal(size=(n_random, k))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        rows.extend(g)
    return np.array(rows, dtype=float).reshape(-1, k)


@dataclass(frozen=True)
class ExtremaReport:
    """Extrema of one span element and the masses of its level sets.

    ``mass_upper``/``mass_lower`` are the masses of ``{phi >= alpha*max}`` and
    ``{phi <= alpha*min}``; ``mass_at_max``/``mass_at_min`` are the same at
    ``alpha = 1`` and decide the flags against ``zero_mass``.
    """

    direction: np.ndarray
    phi_max: float
    phi_min: float
    level_alpha: float
    mass_upper: float
    mass_lower: float
    mass_at_max: float
    mass_at_min: float
    zero_mass: float
    flat_max: bool
    flat_min: bool

    @property
    def flat(self) -> bool:
        return self.flat_max and self.flat_min


def _level_masses(values, weights, level_hi, level_lo, tol):
    upper = float(weights[values >= level_hi - tol].sum())
    lower = float(weights[values <= level_lo + tol].sum())
    return upper, lower


def extrema_report(
    phi: FeatureSet, c, mu: Measure, alpha: float = 1.0, zero_mass: float | None = None
) -> ExtremaReport:
    """Extrema of ``sum_j c_j phi_j`` over the support of ``mu`` and level-set masses."""
    c = np.asarray(c, dtype=float)
    if c.shape != (phi.k,):
        raise DimensionMismatch(f"direction has shape {c.shape}, expected ({phi.k},)")
    if not np.any(c):
        raise ZeroDirection("direction must be non-zero")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if phi.n_states != mu.n_states:
        raise DimensionMismatch("features and measure disagree on the state count")
    on = mu.support()
    values = phi.values(c)[on]
    weights = mu.weights[on]
    vmax, vmin = float(values.max()), float(values.min())
    tol = LEVEL_RTOL * max(abs(vmax), abs(vmin), 1e-300)
    up, lo = _level_masses(values, weights, alpha * vmax, alpha * vmin, tol)
    at_max, at_min = _level_masses(values, weights, vmax, vmin, tol)
    zm = zero_mass_threshold(mu) if zero_mass is None else zero_mass
    return ExtremaReport(
        direction=c,
        phi_max=vmax,
        phi_min=vmin,
        level_alpha=float(alpha),
        mass_upper=up,
        mass_lower=lo,
        mass_at_max=at_max,
        mass_at_min=at_min,
        zero_mass=zm,
        flat_max=at_max > zm,
        flat_min=at_min > zm,
    )


def feature_cells(phi: FeatureSet, mu: Measure) -> tuple[np.ndarray, np.ndarray]:
    """Group support states by identical feature vectors.

    Returns the cell label of every state (-1 off the support) and the
    mu-mass of each cell.  Every span element is constant on each cell.
    """
    on = mu.support()
    cols = phi.table[:, on].T
    scale = max(float(np.abs(cols).max(initial=0.0)), 1e-300)
    keys = np.round(cols / scale, 12)
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    labels = np.full(phi.n_states, -1)
    labels[on] = inverse
    masses = np.bincount(inverse, weights=mu.weights[on])
    return labels, masses


@dataclass(frozen=True)
class FlatnessVerdict:
    reports: list[ExtremaReport]
    overall: bool
    certificate_kind: str
    cell_masses: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def failing(self) -> list[ExtremaReport]:
        return [r for r in self.reports if not r.flat]


def flatness_audit(
    phi: FeatureSet,
    mu: Measure,
    directions=None,
    alpha: float = 1.0,
    n_random: int = 512,
    seed: int = 0,
) -> FlatnessVerdict:
    """Audit the span of ``phi`` for flat extrema.

    When every cell of constant feature vector carries more than the
    zero-mass threshold, all span elements are flat and the verdict is
    certified ``aggregation-exact``.  Otherwise the verdict covers only the
    sampled directions (``sampled``) and a ``True`` means no counterexample
    was found.
    """
    if directions is None:
        directions = sample_directions(phi.k, n_random=n_random, seed=seed)
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    zm = zero_mass_threshold(mu)
    reports = [extrema_report(phi, c, mu, alpha, zm) for c in directions]
    _, masses = feature_cells(phi, mu)
    exact = masses.size > 0 and bool(masses.min() > zm)
    overall = all(r.flat for r in reports)
    return FlatnessVerdict(reports, overall, "aggregation-exact" if exact else "sampled", masses)


def limit_mass_curve(phi: FeatureSet, c, mu: Measure, G_grid) -> list[tuple[float, float]]:
    """``(G, mu[N_G])`` pairs with ``N_G = {phi >= G * phi_max}``."""
    out = []
    for G in G_grid:
        if not 0.0 <= G < 1.0:
            raise ValueError("G values must lie in [0, 1)")
        out.append((float(G), extrema_report(phi, c, mu, alpha=G).mass_upper))
    return out


@dataclass(frozen=True)
class ProjectionCheck:
    """Outcome of the projection-condition check for convergent natural algorithms.

    ``witnesses[d]`` is the first index ``i`` satisfying the condition for
    direction ``d`` (or -1).  ``certificate_kind`` is ``plateau-exact`` when
    the condition was established for the whole span, else ``sampled``.
    """

    passed: bool
    G: float
    directions: np.ndarray
    satisfied: np.ndarray
    certificate_kind: str
    violating_direction: np.ndarray | None = None

    @property
    def witnesses(self) -> np.ndarray:
        hit = self.satisfied.any(axis=1)
        return np.where(hit, self.satisfied.argmax(axis=1), -1)

    @property
    def uniform_witness(self) -> int | None:
        """An index that works for every sampled direction at once, if any."""
        good = np.flatnonzero(self.satisfied.all(axis=0))
        return int(good[0]) if good.size else None


def _projection_condition(pairing, vmax, vmin, G, tol):
    return (pairing >= G * vmax - tol) | (pairing <= G * vmin + tol)


def plateau_certificate(phi: FeatureSet, psi: ProjectionBasis, mu: Measure, tol: float = 1e-9) -> bool:
    """Exact check that every span element attains its extrema where some psi_i lives.

    Holds when each ``psi_i`` is supported on states sharing one feature
    vector ``v_i`` (so ``<psi_i, phi> = c . v_i``) and every feature vector on
    the support of ``mu`` is a convex combination of the ``v_i``.
    """
    on = mu.support()
    cols = phi.table[:, on].T
    plateau = []
    for row in psi.table[:, on]:
        supp = np.abs(row) > 0
        if not supp.any() or np.any(row[supp] < 0):
            return False
        vecs = cols[supp]
        if np.abs(vecs - vecs[0]).max() > tol:
            return False
        plateau.append(vecs[0])
    V = np.array(plateau)
    aug = np.vstack([V.T, np.ones(len(V))])
    for x in np.unique(np.round(cols, 12), axis=0):
        _, resid = nnls(aug, np.append(x, 1.0))
        if resid > tol:
            return False
    return True


def theorem2_check(
    phi: FeatureSet,
    psi: ProjectionBasis,
    mu: Measure,
    G: float,
    directions=None,
    n_random: int = 512,
    seed: int = 0,
) -> ProjectionCheck:
    """Check that every span element has an ``i`` with
    ``<psi_i, phi> >= G phi_max`` or ``<psi_i, phi> <= G phi_min``.

    Negating a direction swaps the two inequalities, so only one direction
    of each antipodal pair is sampled.
    """
    if not psi.is_normalized(mu):
        raise ValueError("projection basis must be normalized against mu")
    if directions is None:
        directions = sample_directions(phi.k, n_random=n_random, seed=seed, signed=False)
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    on = mu.support()
    chi = psi.table * mu.weights
    satisfied = np.zeros((len(directions), psi.n), dtype=bool)
    violating = None
    for d, c in enumerate(directions):
        values = phi.values(c)
        vmax, vmin = values[on].max(), values[on].min()
        pairing = chi @ values
        tol = 10 * LEVEL_RTOL * max(abs(vmax), abs(vmin), 1e-300)
        satisfied[d] = _projection_condition(pairing, vmax, vmin, G, tol)
        if violating is None and not satisfied[d].any():
            violating = c
    passed = violating is None
    kind = "plateau-exact" if passed and plateau_certificate(phi, psi, mu) else "sampled"
    return ProjectionCheck(passed, float(G), directions, satisfied, kind, violating)
