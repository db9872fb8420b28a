"""Ambiguity: distinct environments that look identical to a natural algorithm.

A triple ``(w, R, T)`` solves the Bellman template for ``(phi, psi)`` when
the value ``phi^T w`` satisfies the TD(lambda) Bellman equation of ``(R, T)``
and the projected quantities ``(A, B, b)`` match.  Ambiguity (two template
solutions with different ``w``) is equivalent to ``A - gamma B`` having a
non-trivial null space.

This module detects ambiguity, builds explicit witness pairs from a null
vector, and implements the extremal-cut construction of a function ``f``
with ``<chi_i, phi> = G <chi_i, f>`` and ``phi_min <= f <= phi_max`` which,
for ``lam = 0``, turns into a transition matrix making ``A - gamma B``
singular.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    DomainError,
    InvalidSplit,
    NotNullVector,
    NumericalError,
    RangeViolation,
    SingularSystem,
    UnsupportedLambda,
    ValidationError,
    ZeroDirection,
)
from .mdp import (
    FiniteMdp,
    Measure,
    apply_p_lambda,
    exact_value,
    r_lambda,
    stationary_distribution,
)
from .projection import (
    FeatureSet,
    ProjectedSystem,
    ProjectionBasis,
    assemble_system,
    normalize_basis,
    numerical_rank,
)

TEMPLATE_TOL = 1e-9
RANGE_RTOL = 1e-12
EQN4_TOL = 1e-8


# --------------------------------------------------------------------------
# Bellman template and witnesses


@dataclass(frozen=True)
class TemplateSolution:
    """A parameter vector together with the environment it is exact for."""

    w: np.ndarray
    mdp: FiniteMdp

    @property
    def R(self) -> np.ndarray:
        return self.mdp.reward

    @property
    def T(self) -> np.ndarray:
        return self.mdp.transition

    def bellman_residual(self, phi: FeatureSet) -> float:
        """``max |phi^T w - R^(lam) - gamma P^(lam) phi^T w|``."""
        v = phi.table.T @ self.w
        resid = v - r_lambda(self.mdp) - self.mdp.gamma * apply_p_lambda(self.mdp, v)
        return float(np.abs(resid).max())


@dataclass(frozen=True)
class AmbiguityWitness:
    """Two template solutions sharing ``(A, B, b)`` but not ``w``.

    ``base_adjusted`` is set when the base MDP's value was not representable
    by the features and its reward was replaced by the one that makes the
    least-squares fit exact.
    """

    base: TemplateSolution
    alternate: TemplateSolution
    xi: float
    null_vector: np.ndarray
    shared_system: ProjectedSystem
    max_abc_discrepancy: float
    base_adjusted: bool = False

    @property
    def w_gap(self) -> float:
        return float(np.linalg.norm(self.alternate.w - self.base.w))


def detect_ambiguity(system: ProjectedSystem) -> np.ndarray | None:
    """Basis of ``ker(A - gamma B)`` as columns, or ``None`` if trivial."""
    return system.nullspace


def reward_for_value(mdp: FiniteMdp, v) -> np.ndarray:
    """The reward whose TD(lambda) Bellman equation under ``mdp.transition`` has fixed point ``v``.

    Solves ``R^(lam) = v - gamma P^(lam) v`` for ``R`` through
    ``R = (I - lam gamma T) R^(lam)``.
    """
    target = v - mdp.gamma * apply_p_lambda(mdp, v)
    if mdp.lam == 0.0:
        return target
    return target - mdp.lam * mdp.gamma * (mdp.transition @ target)


def _abc_discrepancy(s1: ProjectedSystem, s2: ProjectedSystem) -> float:
    return float(
        max(np.abs(s1.A - s2.A).max(), np.abs(s1.B - s2.B).max(), np.abs(s1.b - s2.b).max())
    )


def witness_from_nullspace(
    base_mdp: FiniteMdp,
    phi: FeatureSet,
    psi: ProjectionBasis,
    mu: Measure,
    v,
    xi: float = 1.0,
    w_base=None,
) -> AmbiguityWitness:
    """Build the alternate template solution ``w* + xi v`` with ``T`` unchanged.

    The alternate reward is chosen so that ``phi^T (w* + xi v)`` is its exact
    TD(lambda) value.  Both environments are then reassembled from scratch
    and their ``(A, B, b)`` compared.

    Raises
    ------
    NotNullVector
        If ``(A - gamma B) v`` is not zero to tolerance.
    ValidationError
        If ``xi`` or ``v`` would give a degenerate pair (no gap in ``w``).
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (phi.k,):
        raise ValidationError(f"null vector has shape {v.shape}, expected ({phi.k},)")
    if not xi > 0:
        raise ValidationError("xi must be positive")
    system = assemble_system(base_mdp, phi, psi, mu)
    M = system.matrix
    scale = max(1.0, float(np.abs(M).max()))
    if np.abs(M @ v).max() > TEMPLATE_TOL * scale * max(1.0, np.abs(v).max()):
        raise NotNullVector("(A - gamma B) v is not zero")

    adjusted = False
    if w_base is None:
        # The TD(lambda) operator shares the Bellman fixed point.
        v_star = exact_value(base_mdp)
        w_star, *_ = np.linalg.lstsq(phi.table.T, v_star, rcond=None)
        fit = phi.table.T @ w_star
        if np.abs(fit - v_star).max() > TEMPLATE_TOL * max(1.0, np.abs(v_star).max()):
            adjusted = True
    else:
        w_star = np.asarray(w_base, dtype=float)
        adjusted = True
    if adjusted:
        base_mdp = base_mdp.replace(reward=reward_for_value(base_mdp, phi.table.T @ w_star))
        system = assemble_system(base_mdp, phi, psi, mu)

    w_alt = w_star + xi * v
    alt_mdp = base_mdp.replace(reward=reward_for_value(base_mdp, phi.table.T @ w_alt))
    base = TemplateSolution(w_star, base_mdp)
    alt = TemplateSolution(w_alt, alt_mdp)
    if np.linalg.norm(w_alt - w_star) <= 1e-8:
        raise ValidationError("witness pair has identical parameters")
    for sol in (base, alt):
        scale_v = max(1.0, float(np.abs(phi.table.T @ sol.w).max()))
        if sol.bellman_residual(phi) > TEMPLATE_TOL * scale_v:
            raise NumericalError("template Bellman constraint not met by constructed solution")
    again = assemble_system(base_mdp, phi, psi, mu)
    other = assemble_system(alt_mdp, phi, psi, mu)
    return AmbiguityWitness(
        base, alt, float(xi), v, system, _abc_discrepancy(again, other), adjusted
    )


# --------------------------------------------------------------------------
# Extremal-cut construction


@dataclass(frozen=True)
class ChiBasis:
    """Densities ``chi_i = psi_i * mu`` on the grid, with the cell widths they integrate against."""

    table: np.ndarray
    widths: np.ndarray

    def integrate(self, values) -> np.ndarray:
        """``int chi_i(s) values(s) ds`` for every ``i``."""
        return (self.table * self.widths) @ np.asarray(values, dtype=float)

    def gram(self) -> np.ndarray:
        """``X_ij = int chi_i chi_j ds`` (unweighted inner product)."""
        return (self.table * self.widths) @ self.table.T


def chi_basis(psi: ProjectionBasis, mu: Measure) -> ChiBasis:
    return ChiBasis(psi.table * mu.density, mu.widths)


def check_eqn4(f, phi_dir, psi: ProjectionBasis, mu: Measure, G: float) -> np.ndarray:
    """Residual ``int chi_i phi - G int chi_i f`` for every ``i``."""
    chi = chi_basis(psi, mu)
    return chi.integrate(phi_dir) - G * chi.integrate(f)


@dataclass(frozen=True)
class FConstruction:
    """Result of the extremal-cut construction for one span element.

    ``failed`` lists the range bounds violated by ``f`` (``upper``, ``lower``
    and ``range`` if either); it is empty exactly when ``feasible``.  The
    sufficient mass bounds ``mass <= G / (C (1 + G))`` are reported
    separately and never decide feasibility.
    """

    f: np.ndarray
    feasible: bool
    failed: tuple[str, ...]
    G: float
    phi_max: float
    phi_min: float
    eqn4_residual: float
    delta: np.ndarray
    g: np.ndarray
    delta_minus: np.ndarray
    g_minus: np.ndarray
    C: float
    mass_upper: float
    bound_upper: float
    mass_lower: float
    bound_lower: float

    @property
    def c_bound_upper_ok(self) -> bool:
        return self.mass_upper <= self.bound_upper

    @property
    def c_bound_lower_ok(self) -> bool:
        return self.mass_lower <= self.bound_lower


def construct_f(phi_dir, psi: ProjectionBasis, mu: Measure, G: float) -> FConstruction:
    """Cap ``phi / G`` at ``G phi_max`` (and ``G phi_min``) and spread the cuts over ``chi``.

    With ``delta = max(0, phi/G - G phi_max)`` and
    ``delta_minus = max(0, G phi_min - phi/G)`` the candidate is

        f = phi/G - delta + g + delta_minus - g_minus,
        g = chi^T X^-1 <chi, delta>,  g_minus = chi^T X^-1 <chi, delta_minus>,

    which satisfies ``<chi_i, phi> = G <chi_i, f>`` by construction.  It is
    feasible when it also stays inside ``[phi_min, phi_max]``.  States where
    every ``chi_i`` vanishes do not enter the equation and get
    ``clip(phi / G)``.
    """
    phi = np.asarray(phi_dir, dtype=float)
    if phi.shape != (mu.n_states,):
        raise ValidationError(f"phi has shape {phi.shape}, expected ({mu.n_states},)")
    if not np.any(phi):
        raise ZeroDirection("phi must not vanish identically")
    if not 0.0 < G < 1.0:
        raise DomainError(f"G must lie in (0, 1), got {G}")
    chi = chi_basis(psi, mu)
    X = chi.gram()
    rank, _ = numerical_rank(X)
    if rank < X.shape[0]:
        raise SingularSystem("chi functions are linearly dependent; X is singular")
    X_inv = np.linalg.inv(X)

    vmax, vmin = float(phi.max()), float(phi.min())
    delta = np.maximum(0.0, phi / G - G * vmax)
    delta_minus = np.maximum(0.0, G * vmin - phi / G)
    g = chi.table.T @ np.linalg.solve(X, chi.integrate(delta))
    g_minus = chi.table.T @ np.linalg.solve(X, chi.integrate(delta_minus))
    f = phi / G - delta + g + delta_minus - g_minus
    dead = ~np.any(chi.table != 0.0, axis=0)
    f[dead] = np.clip(phi[dead] / G, vmin, vmax)

    tol = RANGE_RTOL * max(abs(vmax), abs(vmin))
    failed = []
    if f.max() > vmax + tol:
        failed.append("upper")
    if f.min() < vmin - tol:
        failed.append("lower")
    if failed:
        failed.append("range")
    resid = check_eqn4(f, phi, psi, mu, G)
    eqn4 = float(np.abs(resid).max())
    if eqn4 > EQN4_TOL * max(1.0, abs(vmax), abs(vmin)):
        failed.append("eqn4")

    # Sufficient condition from the existence proof; sup|psi| keeps it a valid bound.
    C = float(np.abs(chi.table).max() * np.abs(X_inv).sum(axis=1).max() * np.abs(psi.table).max())
    bound = G / (C * (1.0 + G)) if C > 0 else np.inf
    w = mu.weights
    mass_up = float(w[phi >= G * G * vmax].sum()) if vmax > 0 else 0.0
    mass_lo = float(w[phi <= G * G * vmin].sum()) if vmin < 0 else 0.0
    return FConstruction(
        f=f,
        feasible=not failed,
        failed=tuple(failed),
        G=float(G),
        phi_max=vmax,
        phi_min=vmin,
        eqn4_residual=eqn4,
        delta=delta,
        g=g,
        delta_minus=delta_minus,
        g_minus=g_minus,
        C=C,
        mass_upper=mass_up,
        bound_upper=bound,
        mass_lower=mass_lo,
        bound_lower=bound,
    )


def environment_from_f(f, phi_dir, mdp_template: FiniteMdp, tol: float = 1e-12) -> FiniteMdp:
    """Transition matrix with ``(T phi)(s) = f(s)`` by two-point mixing (``lam = 0`` only).

    Row ``s`` puts ``beta(s) = (f(s) - phi_min) / (phi_max - phi_min)`` on the
    lowest-index argmax of ``phi`` and the rest on the lowest-index argmin.
    Reward, discount and grid are taken from ``mdp_template``.
    """
    if mdp_template.lam != 0.0:
        raise UnsupportedLambda("environment synthesis is only available for lambda = 0")
    f = np.asarray(f, dtype=float)
    phi = np.asarray(phi_dir, dtype=float)
    n = mdp_template.n_states
    if f.shape != (n,) or phi.shape != (n,):
        raise ValidationError("f and phi must be vectors over the template's states")
    vmax, vmin = float(phi.max()), float(phi.min())
    if not vmin < vmax:
        raise RangeViolation("phi is constant; no mixing can reproduce a different f")
    slack = tol * max(abs(vmax), abs(vmin))
    if f.max() > vmax + slack or f.min() < vmin - slack:
        raise RangeViolation("f leaves [phi_min, phi_max]")
    beta = np.clip((f - vmin) / (vmax - vmin), 0.0, 1.0)
    hi, lo = int(np.argmax(phi)), int(np.argmin(phi))
    T = np.zeros((n, n))
    T[:, hi] += beta
    T[:, lo] += 1.0 - beta
    if np.abs(T @ phi - f).max() > max(slack, 1e-15) * 10:
        raise NumericalError("interpolation identity T phi = f violated")
    return mdp_template.replace(transition=T)


def environment_residual(mdp: FiniteMdp, f, phi_dir) -> float:
    """``max |P~^(lam) phi - f|`` with the renormalized operator ``(1-lam gamma)/(1-lam) P^(lam)``.

    Checks a candidate environment for any ``lam``; synthesis itself is only
    implemented for ``lam = 0``.
    """
    scale = (1.0 - mdp.lam * mdp.gamma) / (1.0 - mdp.lam)
    return float(np.abs(scale * apply_p_lambda(mdp, phi_dir) - np.asarray(f)).max())


# --------------------------------------------------------------------------
# Aliasing constructions


class CounterexamplePair(NamedTuple):
    mdp1: FiniteMdp
    mdp2: FiniteMdp
    phi1: FeatureSet
    phi2: FeatureSet
    psi1: ProjectionBasis
    psi2: ProjectionBasis


T1 = np.array([[0.0, 1.0], [0.5, 0.5]])
T2 = np.array([[0.0, 0.5, 0.5], [1.0, 0.0, 0.0], [0.0, 0.5, 0.5]])
# Zero mu2-weighted mean on the aliased pair, squared mu2-norm 2/3.
R2 = np.array([0.0, 1.0, -1.0])


def sutton_barto_pair(gamma: float = 0.9, lam: float = 0.0) -> CounterexamplePair:
    """The two-state / three-state pair that no natural algorithm can tell apart.

    States 2 and 3 of the second chain share one feature; both chains use
    the mu-normalized indicators of their feature cells as projection basis.
    """
    mdp1 = FiniteMdp(T1, np.zeros(2), gamma, lam)
    mdp2 = FiniteMdp(T2, R2, gamma, lam)
    phi1 = FeatureSet(np.eye(2))
    phi2 = FeatureSet([[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]])
    psi1 = normalize_basis(phi1.table, stationary_distribution(mdp1))
    psi2 = normalize_basis(phi2.table, stationary_distribution(mdp2))
    return CounterexamplePair(mdp1, mdp2, phi1, phi2, psi1, psi2)


def lift_table(table, state: int, copies: int) -> np.ndarray:
    """Duplicate column ``state`` into ``copies`` adjacent columns."""
    table = np.atleast_2d(np.asarray(table, dtype=float))
    return np.concatenate(
        [table[:, :state], np.repeat(table[:, state : state + 1], copies, axis=1), table[:, state + 1 :]],
        axis=1,
    )


def _lift_rows(rows: np.ndarray, state: int, p: np.ndarray) -> np.ndarray:
    return np.concatenate(
        [rows[:, :state], rows[:, state : state + 1] * p[None, :], rows[:, state + 1 :]], axis=1
    )


def state_split_alias(
    mdp: FiniteMdp,
    state: int,
    copies: int,
    split_probs,
    out_rows=None,
    copy_rewards=None,
    phi: FeatureSet | None = None,
) -> tuple[FiniteMdp, FeatureSet]:
    """Split ``state`` into ``copies`` aliased states sharing one feature column.

    Mass entering ``state`` is divided by ``split_probs``.  By default the
    copies duplicate the original outgoing row and reward; ``out_rows``
    (in original coordinates) and ``copy_rewards`` may differ per copy as
    long as their ``split_probs``-weighted averages reproduce the original,
    which is what keeps the projected system unchanged.  The copies occupy
    indices ``state .. state + copies - 1``.
    """
    n = mdp.n_states
    if not 0 <= state < n:
        raise InvalidSplit(f"state {state} out of range")
    if copies < 2:
        raise InvalidSplit("need at least two copies")
    p = np.asarray(split_probs, dtype=float)
    if p.shape != (copies,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise InvalidSplit("split_probs must be a distribution over the copies")
    T = mdp.transition
    if out_rows is None:
        out = np.repeat(T[state : state + 1], copies, axis=0)
    else:
        out = np.asarray(out_rows, dtype=float)
        if out.shape != (copies, n):
            raise InvalidSplit(f"out_rows must have shape ({copies}, {n})")
        if np.abs(p @ out - T[state]).max() > 1e-12:
            raise InvalidSplit("weighted copy rows must average to the original row")
    if copy_rewards is None:
        rc = np.full(copies, mdp.reward[state])
    else:
        rc = np.asarray(copy_rewards, dtype=float)
        if rc.shape != (copies,) or abs(p @ rc - mdp.reward[state]) > 1e-12:
            raise InvalidSplit("weighted copy rewards must average to the original reward")

    body = _lift_rows(T, state, p)
    T_new = np.concatenate([body[:state], _lift_rows(out, state, p), body[state + 1 :]], axis=0)
    R_new = np.concatenate([mdp.reward[:state], rc, mdp.reward[state + 1 :]])
    grid = None
    if mdp.grid is not None:
        grid = np.concatenate([mdp.grid[:state], mdp.grid[state] * p, mdp.grid[state + 1 :]])
    new_mdp = FiniteMdp(T_new, R_new, mdp.gamma, mdp.lam, grid)
    base = np.eye(n) if phi is None else phi.table
    return new_mdp, FeatureSet(lift_table(base, state, copies))
