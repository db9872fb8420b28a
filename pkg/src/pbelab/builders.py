"""Constructors for grids, feature families and random models."""

from __future__ import annotations

import numpy as np

from .mdp import FiniteMdp, Measure, stationary_distribution
from .projection import FeatureSet, ProjectionBasis, normalize_basis


def uniform_grid(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Cell centres and widths of an ``n``-cell uniform grid on [0, 1]."""
    widths = np.full(n, 1.0 / n)
    centres = (np.arange(n) + 0.5) / n
    return centres, widths


def uniform_grid_measure(n: int) -> Measure:
    _, widths = uniform_grid(n)
    return Measure.uniform(n, widths)


def tent(x: np.ndarray, peak: float = 0.5) -> np.ndarray:
    """Piecewise-linear bump with a single-point maximum of 1 at ``peak``."""
    x = np.asarray(x, dtype=float)
    half = max(peak, 1.0 - peak)
    return 1.0 - np.abs(x - peak) / half


def monomial_features(x: np.ndarray, degree: int) -> FeatureSet:
    """Rows ``1, x, ..., x**degree``."""
    x = np.asarray(x, dtype=float)
    return FeatureSet(np.vstack([x**d for d in range(degree + 1)]))


def trapezoid_features(
    x: np.ndarray, k: int, plateau: float = 0.5
) -> tuple[FeatureSet, list[np.ndarray]]:
    """Partition-of-unity trapezoids with flat tops.

    Feature ``i`` equals one on a plateau around ``i / (k - 1)`` whose width
    is ``plateau`` times the spacing, and ramps linearly to zero at the
    neighbouring plateaus.  Returns the features and the boolean plateau
    masks.
    """
    if k < 2:
        raise ValueError("need at least two trapezoids")
    if not 0.0 < plateau < 1.0:
        raise ValueError("plateau fraction must lie in (0, 1)")
    x = np.asarray(x, dtype=float)
    d = 1.0 / (k - 1)
    flat = 0.5 * plateau * d
    ramp = d - 2.0 * flat
    rows, masks = [], []
    for i in range(k):
        dist = np.abs(x - i * d)
        rows.append(np.clip((d - flat - dist) / ramp, 0.0, 1.0))
        masks.append(dist <= flat)
    return FeatureSet(np.vstack(rows)), masks


def plateau_basis(masks: list[np.ndarray], mu: Measure) -> ProjectionBasis:
    """Normalized indicators of the given plateau masks."""
    return normalize_basis(np.vstack([m.astype(float) for m in masks]), mu)


def partition_indicators(labels, k: int | None = None) -> FeatureSet:
    """Aggregation features: row ``j`` is the indicator of ``labels == j``."""
    labels = np.asarray(labels, dtype=int)
    k = int(labels.max()) + 1 if k is None else k
    return FeatureSet((labels[None, :] == np.arange(k)[:, None]).astype(float))


def random_partition(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Labels of a random partition of ``n`` states into ``k`` non-empty cells."""
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    labels = np.concatenate([np.arange(k), rng.integers(0, k, size=n - k)])
    return rng.permutation(labels)


def random_mdp(
    n: int, rng: np.random.Generator, gamma: float = 0.9, lam: float = 0.0, concentration: float = 1.0
) -> FiniteMdp:
    """Dense random chain with Dirichlet rows and Gaussian rewards."""
    T = rng.dirichlet(np.full(n, concentration), size=n)
    T /= T.sum(axis=1, keepdims=True)
    R = rng.normal(size=n)
    return FiniteMdp(T, R, gamma, lam)


def diffusion_mdp(
    x: np.ndarray,
    bandwidth: float,
    gamma: float,
    lam: float = 0.0,
    reward=None,
    widths=None,
) -> FiniteMdp:
    """Gaussian random walk on grid points ``x`` with rows renormalized."""
    x = np.asarray(x, dtype=float)
    K = np.exp(-0.5 * ((x[:, None] - x[None, :]) / bandwidth) ** 2)
    T = K / K.sum(axis=1, keepdims=True)
    R = np.zeros_like(x) if reward is None else np.asarray(reward, dtype=float)
    return FiniteMdp(T, R, gamma, lam, widths)


def aggregation_model(
    n: int, k: int, rng: np.random.Generator, gamma: float = 0.9, lam: float = 0.0
) -> tuple[FiniteMdp, FeatureSet, ProjectionBasis, Measure]:
    """Random chain, random partition features and on-policy (normalized) basis."""
    mdp = random_mdp(n, rng, gamma, lam)
    phi = partition_indicators(random_partition(n, k, rng), k)
    mu = stationary_distribution(mdp)
    return mdp, phi, normalize_basis(phi.table, mu), mu
