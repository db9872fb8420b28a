"""Finite Markov reward processes and the TD(lambda) operator algebra.

A fixed policy is assumed throughout, so an MDP here is a transition matrix,
an expected-reward vector, a discount ``gamma`` and a bootstrap parameter
``lam``.  Continuous state spaces enter as uniform grids: the optional
``grid`` field carries cell widths and every integral becomes a weighted sum.

All operators are evaluated in closed form through the resolvent
``(I - lam*gamma*T)^-1``; truncated power series are only used in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    DomainError,
    NonConvergent,
    NonUnique,
    SingularSystem,
    ValidationError,
)

STOCHASTIC_TOL = 1e-12
SUPPORT_EPS = 1e-12
RANK_RTOL = 1e-10


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def check_stochastic(transition: np.ndarray, tol: float = STOCHASTIC_TOL) -> None:
    """Raise ``ValidationError`` naming the first row that is not a distribution."""
    T = np.asarray(transition, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise DimensionMismatch(f"transition must be square, got shape {T.shape}")
    for s, row in enumerate(T):
        if not np.all(np.isfinite(row)):
            raise ValidationError(f"transition row {s} has non-finite entries")
        if row.min() < -tol or row.max() > 1 + tol:
            raise ValidationError(f"transition row {s} has entries outside [0, 1]")
        if abs(row.sum() - 1.0) > tol:
            raise ValidationError(f"transition row {s} sums to {row.sum()!r}, not 1")


@dataclass(frozen=True)
class FiniteMdp:
    """A finite (or grid-discretized) Markov reward process under a fixed policy.

    Parameters
    ----------
    transition : (n, n) array
        Row-stochastic matrix, ``transition[s, t]`` is the mass moved s -> t.
    reward : (n,) array
        Expected reward collected in each state.
    gamma : float
        Discount factor in [0, 1).
    lam : float
        TD(lambda) bootstrap parameter in [0, 1).
    grid : (n,) array, optional
        Cell widths when the states discretize a continuum.
    """

    transition: np.ndarray
    reward: np.ndarray
    gamma: float
    lam: float = 0.0
    grid: np.ndarray | None = None

    def __post_init__(self):
        T = _frozen(self.transition)
        R = _frozen(self.reward)
        check_stochastic(T)
        if R.shape != (T.shape[0],):
            raise DimensionMismatch(
                f"reward has shape {R.shape}, expected ({T.shape[0]},)"
            )
        if not np.all(np.isfinite(R)):
            raise ValidationError("reward has non-finite entries")
        if not 0.0 <= self.gamma < 1.0:
            raise DomainError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not 0.0 <= self.lam < 1.0:
            raise DomainError(f"lambda must lie in [0, 1), got {self.lam}")
        object.__setattr__(self, "transition", T)
        object.__setattr__(self, "reward", R)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "lam", float(self.lam))
        if self.grid is not None:
            widths = _frozen(self.grid)
            if widths.shape != R.shape or np.any(widths <= 0):
                raise ValidationError("grid must hold one positive width per state")
            object.__setattr__(self, "grid", widths)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    def replace(self, **changes) -> "FiniteMdp":
        fields = dict(
            transition=self.transition,
            reward=self.reward,
            gamma=self.gamma,
            lam=self.lam,
            grid=self.grid,
        )
        fields.update(changes)
        return FiniteMdp(**fields)


@dataclass(frozen=True)
class Measure:
    """A probability vector over states.

    ``cell_widths`` marks the measure as a discretized continuum; flatness
    audits then treat masses of about one cell as measure zero.
    """

    weights: np.ndarray
    cell_widths: np.ndarray | None = field(default=None)

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim != 1:
            raise DimensionMismatch("measure weights must be a vector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValidationError("measure weights must be finite and non-negative")
        if abs(w.sum() - 1.0) > STOCHASTIC_TOL:
            raise ValidationError(f"measure weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", w)
        if self.cell_widths is not None:
            h = _frozen(self.cell_widths)
            if h.shape != w.shape or np.any(h <= 0):
                raise ValidationError("cell_widths must hold one positive width per state")
            object.__setattr__(self, "cell_widths", h)

    @classmethod
    def uniform(cls, n: int, cell_widths=None) -> "Measure":
        return cls(np.full(n, 1.0 / n), cell_widths)

    @property
    def n_states(self) -> int:
        return self.weights.shape[0]

    @property
    def is_continuum(self) -> bool:
        return self.cell_widths is not None

    @property
    def widths(self) -> np.ndarray:
        """Cell widths, or ones for a genuinely finite space."""
        if self.cell_widths is None:
            return np.ones(self.n_states)
        return self.cell_widths

    def support(self, eps: float = SUPPORT_EPS) -> np.ndarray:
        return self.weights > eps

    @property
    def density(self) -> np.ndarray:
        return self.weights / self.widths


def _check_vector(v, n: int, name: str = "value function") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise DimensionMismatch(f"{name} has shape {v.shape}, expected ({n},)")
    return v


def stationary_distribution(
    mdp: FiniteMdp, tol: float = 1e-12, max_iter: int = 1_000_000
) -> Measure:
    """Stationary measure of the chain by power iteration from the uniform start.

    The lazy chain ``(I + T) / 2`` is iterated so that periodic chains still
    converge; it has the same stationary vectors as ``T``.

    Raises
    ------
    NonUnique
        If ``T - I`` has a null space of dimension greater than one.
    NonConvergent
        If the L1 residual ``|mu T - mu|`` is still above ``tol`` after
        ``max_iter`` sweeps.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    T = mdp.transition
    n = mdp.n_states
    sv = np.linalg.svd(T.T - np.eye(n), compute_uv=False)
    nullity = int(np.sum(sv <= RANK_RTOL * max(1.0, sv[0])))
    if nullity > 1:
        raise NonUnique(f"chain has {nullity} independent stationary distributions")

    mu = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        muT = mu @ T
        if np.abs(muT - mu).sum() <= tol:
            mu = muT / muT.sum()
            break
        mu = 0.5 * (mu + muT)
    else:
        raise NonConvergent(f"power iteration did not reach tol={tol} in {max_iter} sweeps")
    return Measure(np.clip(mu, 0.0, None) / np.clip(mu, 0.0, None).sum(), mdp.grid)


def apply_bellman(mdp: FiniteMdp, v) -> np.ndarray:
    """One Bellman backup ``R + gamma T v``."""
    v = _check_vector(v, mdp.n_states)
    return mdp.reward + mdp.gamma * (mdp.transition @ v)


def _solve(M: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    # Cannot fail for discount < 1 and stochastic T; guarded for hand-built inputs.
    try:
        x = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"{what} is singular") from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystem(f"{what} is numerically singular")
    return x


def exact_value(mdp: FiniteMdp) -> np.ndarray:
    """Solve the Bellman equation ``(I - gamma T) V = R`` directly."""
    M = np.eye(mdp.n_states) - mdp.gamma * mdp.transition
    return _solve(M, mdp.reward, "I - gamma T")


def g_factor(gamma: float, lam: float) -> float:
    """Lambda-weighted discount ``(1 - lam) gamma / (1 - lam gamma)``."""
    if not (0.0 <= gamma < 1.0 and 0.0 <= lam < 1.0):
        raise DomainError(f"gamma and lambda must lie in [0, 1), got {gamma}, {lam}")
    return (1.0 - lam) * gamma / (1.0 - lam * gamma)


def resolvent(mdp: FiniteMdp) -> np.ndarray:
    """``(I - lam gamma T)^-1`` as a dense matrix."""
    n = mdp.n_states
    M = np.eye(n) - mdp.lam * mdp.gamma * mdp.transition
    return _solve(M, np.eye(n), "I - lambda gamma T")


def p_lambda_matrix(mdp: FiniteMdp) -> np.ndarray:
    """Matrix of the lambda-averaged transition operator ``(1-lam) T (I - lam gamma T)^-1``."""
    if mdp.lam == 0.0:
        return mdp.transition.copy()
    return (1.0 - mdp.lam) * mdp.transition @ resolvent(mdp)


def apply_p_lambda(mdp: FiniteMdp, v) -> np.ndarray:
    v = _check_vector(v, mdp.n_states)
    if mdp.lam == 0.0:
        return mdp.transition @ v
    n = mdp.n_states
    M = np.eye(n) - mdp.lam * mdp.gamma * mdp.transition
    return (1.0 - mdp.lam) * (mdp.transition @ _solve(M, v, "I - lambda gamma T"))


def r_lambda(mdp: FiniteMdp) -> np.ndarray:
    """Lambda-return reward ``(I - lam gamma T)^-1 R``."""
    if mdp.lam == 0.0:
        return mdp.reward.copy()
    n = mdp.n_states
    M = np.eye(n) - mdp.lam * mdp.gamma * mdp.transition
    return _solve(M, mdp.reward, "I - lambda gamma T")


def apply_td_lambda(mdp: FiniteMdp, v) -> np.ndarray:
    """TD(lambda) backup ``R^(lam) + gamma P^(lam) v``."""
    return r_lambda(mdp) + mdp.gamma * apply_p_lambda(mdp, v)


def mu_inner(f, g, mu: Measure) -> float:
    """Inner product ``sum_s f(s) g(s) mu(s)``."""
    n = mu.n_states
    f = _check_vector(f, n, "f")
    g = _check_vector(g, n, "g")
    return float(np.dot(f * g, mu.weights))


def mu_norm(f, mu: Measure) -> float:
    return float(np.sqrt(max(mu_inner(f, f, mu), 0.0)))


def bellman_error(mdp: FiniteMdp, phi, w, mu: Measure) -> float:
    """Squared mu-norm of the one-step Bellman residual ``(I - gamma T) Phi^T w - R``.

    ``phi`` is a ``FeatureSet`` or a ``(k, n)`` table.
    """
    table = np.asarray(getattr(phi, "table", phi), dtype=float)
    w = np.asarray(w, dtype=float)
    if table.shape[1] != mdp.n_states or mu.n_states != mdp.n_states:
        raise DimensionMismatch("features, measure and MDP disagree on the state count")
    if w.shape != (table.shape[0],):
        raise DimensionMismatch(f"w has shape {w.shape}, expected ({table.shape[0]},)")
    v = table.T @ w
    resid = v - mdp.gamma * (mdp.transition @ v) - mdp.reward
    return mu_inner(resid, resid, mu)
