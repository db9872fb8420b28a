"""Simulators for natural algorithms.

The expected-update iterations are deterministic and are the main evidence
for convergence or divergence; the sampled TD(lambda) run is a stochastic
illustration driven by a seeded trajectory.
"""

from __future__ import annotations

import bisect
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .errors import DimensionMismatch, SingularRepresentativeBlock
from .mdp import FiniteMdp, Measure, apply_bellman, stationary_distribution
from .projection import (
    FeatureSet,
    ProjectionBasis,
    ProjectedSystem,
    SingularReport,
    assemble_system,
    normalize_basis,
    numerical_rank,
    solve_system,
)

CONVERGENCE_TOL = 1e-8
DIVERGENCE_NORM = 1e8
VERDICTS = ("converged", "diverged", "oscillating", "max-iter")


class HullWarning(UserWarning):
    """Feature vectors leave the convex hull of the representative ones."""


@dataclass(frozen=True)
class RunTrace:
    """Iterates and residuals of one run.

    ``residuals[t]`` is the distance of ``iterates[t]`` to the target when a
    unique target exists, otherwise the norm of the last step (zero for the
    initial point).  ``average`` holds the Polyak average for sampled runs.
    """

    iterates: np.ndarray
    residuals: np.ndarray
    verdict: str
    step_size: float
    seed: int | None = None
    target: np.ndarray | None = None
    average: np.ndarray | None = None
    iterations: np.ndarray | None = None

    def __post_init__(self):
        if len(self.iterates) != len(self.residuals):
            raise ValueError("iterates and residuals must have equal length")
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def steps(self) -> np.ndarray:
        """Iteration number of every recorded iterate."""
        if self.iterations is not None:
            return self.iterations
        return np.arange(len(self.iterates))


def _iterate(update, w0, iters, tol, target, step, seed=None) -> RunTrace:
    """Run ``w <- update(w)`` and classify the outcome."""
    w = np.array(w0, dtype=float)
    ws = [w.copy()]
    res = [float(np.linalg.norm(w - target)) if target is not None else 0.0]
    verdict = "max-iter"
    for _ in range(iters):
        if target is not None and res[-1] <= tol:
            verdict = "converged"
            break
        w_new = update(w)
        if not np.all(np.isfinite(w_new)) or np.linalg.norm(w_new) > DIVERGENCE_NORM:
            ws.append(w_new)
            res.append(float("inf"))
            verdict = "diverged"
            break
        gap = w_new - target if target is not None else w_new - w
        w = w_new
        ws.append(w.copy())
        res.append(float(np.linalg.norm(gap)))
    else:
        if target is not None and res[-1] <= tol:
            verdict = "converged"
    if verdict == "max-iter" and target is None:
        verdict = "oscillating" if res[-1] > tol else "max-iter"
    return RunTrace(np.array(ws), np.array(res), verdict, float(step), seed, target)


def default_step(system: ProjectedSystem) -> float:
    """``0.1 / sigma_max(A - gamma B)``, or 0.1 for a zero matrix."""
    smax = float(system.singular_values[0]) if system.singular_values.size else 0.0
    return 0.1 / smax if smax > 0 else 0.1


def _update_matrix(system: ProjectedSystem) -> tuple[np.ndarray, np.ndarray]:
    # Tall systems iterate on the normal equations so that the update stays in R^k.
    M, b = system.matrix, system.b
    if system.generalized:
        return M.T @ M, M.T @ b
    return M, b


def iteration_spectral_radius(system: ProjectedSystem, step: float) -> float:
    """Spectral radius of ``I - step (A - gamma B)``."""
    M, _ = _update_matrix(system)
    return float(np.abs(np.linalg.eigvals(np.eye(M.shape[0]) - step * M)).max())


def scan_step_sizes(system: ProjectedSystem, base: float | None = None, n: int = 11) -> np.ndarray:
    """Log-spaced steps over one decade centred on ``base``."""
    base = default_step(system) if base is None else base
    return base * np.logspace(-0.5, 0.5, n)


def best_step(system: ProjectedSystem, base: float | None = None) -> tuple[float, float]:
    """Step from the scanned decade with the smallest spectral radius."""
    steps = scan_step_sizes(system, base)
    radii = [iteration_spectral_radius(system, s) for s in steps]
    i = int(np.argmin(radii))
    return float(steps[i]), float(radii[i])


def expected_td_lambda(
    mdp: FiniteMdp,
    phi: FeatureSet,
    psi: ProjectionBasis,
    mu: Measure,
    step: float | None = None,
    iters: int = 20_000,
    w0=None,
    tol: float = CONVERGENCE_TOL,
) -> RunTrace:
    """Expected-update TD(lambda): ``w <- w + step (b - (A - gamma B) w)``.

    The target is the solution of the characteristic system; a singular
    system has none, so its runs end ``oscillating`` (or ``diverged``) and
    never ``converged``.  Without an explicit ``step`` the default step is
    used, and if it is unstable the best step of a one-decade scan replaces
    it.
    """
    system = assemble_system(mdp, phi, psi, mu)
    sol = solve_system(system)
    target = None if isinstance(sol, SingularReport) else sol
    if step is None:
        step = default_step(system)
        if iteration_spectral_radius(system, step) >= 1.0:
            step, _ = best_step(system, step)
    M, b = _update_matrix(system)
    w0 = np.zeros(phi.k) if w0 is None else np.asarray(w0, dtype=float)
    if w0.shape != (phi.k,):
        raise DimensionMismatch(f"w0 has shape {w0.shape}, expected ({phi.k},)")
    return _iterate(lambda w: w + step * (b - M @ w), w0, iters, tol, target, step)


def constant_schedule(alpha: float):
    return lambda t: alpha


def harmonic_schedule(alpha0: float = 0.5, horizon: float = 1000.0):
    """``alpha0 / (1 + t / horizon)``; square-summable but not summable."""
    return lambda t: alpha0 / (1.0 + t / horizon)


def sample_trajectory(mdp: FiniteMdp, steps: int, rng: np.random.Generator, start=None) -> list[int]:
    """State sequence of length ``steps + 1`` started from the stationary measure."""
    if start is None:
        start = stationary_distribution(mdp).weights
    cum = np.cumsum(mdp.transition, axis=1)
    cum[:, -1] = 1.0
    cum_rows = [row.tolist() for row in cum]
    u = rng.random(steps + 1).tolist()
    s = int(np.searchsorted(np.cumsum(start), u[0], side="right"))
    s = min(s, mdp.n_states - 1)
    path = [s]
    for t in range(1, steps + 1):
        s = bisect.bisect_right(cum_rows[s], u[t])
        path.append(s)
    return path


def sampled_td_lambda(
    mdp: FiniteMdp,
    phi: FeatureSet,
    steps: int,
    step_schedule=None,
    seed: int = 0,
    w0=None,
    record_every: int | None = None,
) -> RunTrace:
    """Linear TD(lambda) with accumulating eligibility traces on one trajectory.

    Trace ``z <- gamma lam z + phi(s)``, TD error
    ``r(s) + gamma phi(s')w - phi(s)w`` and update ``w <- w + alpha_t delta z``.
    Residuals are distances to the on-policy fixed point when it is unique.
    """
    if phi.n_states != mdp.n_states:
        raise DimensionMismatch("features and MDP disagree on the state count")
    schedule = harmonic_schedule() if step_schedule is None else step_schedule
    if not callable(schedule):
        schedule = constant_schedule(float(schedule))
    record_every = record_every or max(1, steps // 1000)
    rng = np.random.default_rng(seed)
    mu = stationary_distribution(mdp)
    path = sample_trajectory(mdp, steps, rng, mu.weights)

    on = mu.support()
    target = None
    try:
        sol = solve_system(assemble_system(mdp, phi, normalize_basis(phi.table * on, mu), mu))
        target = None if isinstance(sol, SingularReport) else sol
    except ValueError:
        pass

    k = phi.k
    feats = [list(col) for col in phi.table.T.tolist()]
    rew = mdp.reward.tolist()
    g, decay = mdp.gamma, mdp.gamma * mdp.lam
    w = [0.0] * k if w0 is None else [float(x) for x in w0]
    z = [0.0] * k
    avg = [0.0] * k
    ws, res, when = [np.array(w)], [], [0]
    prev = np.array(w)
    for t in range(steps):
        s, s2 = path[t], path[t + 1]
        f, f2 = feats[s], feats[s2]
        z = [decay * zi + fi for zi, fi in zip(z, f)]
        delta = rew[s] + sum((g * a - c) * wi for a, c, wi in zip(f2, f, w))
        a_t = schedule(t) * delta
        w = [wi + a_t * zi for wi, zi in zip(w, z)]
        avg = [ai + (wi - ai) / (t + 1) for ai, wi in zip(avg, w)]
        if (t + 1) % record_every == 0 or t + 1 == steps:
            cur = np.array(w)
            ws.append(cur)
            when.append(t + 1)
            if target is not None:
                res.append(float(np.linalg.norm(cur - target)))
            else:
                res.append(float(np.linalg.norm(cur - prev)))
            prev = cur
    res.insert(0, float(np.linalg.norm(ws[0] - target)) if target is not None else 0.0)
    final = ws[-1]
    if not np.all(np.isfinite(final)) or np.linalg.norm(final) > DIVERGENCE_NORM:
        verdict = "diverged"
    else:
        verdict = "max-iter"
    step0 = float(schedule(0))
    return RunTrace(
        np.array(ws), np.array(res), verdict, step0, seed, target, np.array(avg), np.array(when)
    )


def _bellman_design(mdp: FiniteMdp, phi: FeatureSet) -> np.ndarray:
    # Rows are states: ((I - gamma T) Phi^T)
    X = phi.table.T
    return X - mdp.gamma * (mdp.transition @ X)


def bellman_error_gradient(mdp: FiniteMdp, phi: FeatureSet, w, mu: Measure) -> np.ndarray:
    """Gradient of the squared mu-norm Bellman error with respect to ``w``."""
    w = np.asarray(w, dtype=float)
    X = _bellman_design(mdp, phi)
    return 2.0 * X.T @ (mu.weights * (X @ w - mdp.reward))


def bellman_error_minimizer(mdp: FiniteMdp, phi: FeatureSet, mu: Measure) -> np.ndarray:
    """Minimum-norm minimizer of the Bellman error (weighted least squares)."""
    X = _bellman_design(mdp, phi)
    sq = np.sqrt(mu.weights)
    w, *_ = np.linalg.lstsq(sq[:, None] * X, sq * mdp.reward, rcond=None)
    return w


def residual_gradient(
    mdp: FiniteMdp,
    phi: FeatureSet,
    mu: Measure,
    step: float | None = None,
    iters: int = 20_000,
    w0=None,
    tol: float = CONVERGENCE_TOL,
) -> RunTrace:
    """Gradient descent on the Bellman error.

    The default step is ``1 / L`` with ``L`` the Lipschitz constant of the
    gradient.  The target is the least-squares minimizer; with a rank
    deficient design the minimizers form an affine set and the minimum-norm
    one is reached from ``w0 = 0``.
    """
    X = _bellman_design(mdp, phi)
    H = 2.0 * X.T @ (mu.weights[:, None] * X)
    if step is None:
        L = float(np.linalg.eigvalsh(H).max())
        step = 1.0 / L if L > 0 else 1.0
    target = bellman_error_minimizer(mdp, phi, mu)
    lin = 2.0 * X.T @ (mu.weights * mdp.reward)
    w0 = np.zeros(phi.k) if w0 is None else np.asarray(w0, dtype=float)
    rank, _ = numerical_rank(H)
    if rank < phi.k:
        # Project the start onto the row space so the limit is the minimum-norm minimizer.
        _, _, vh = np.linalg.svd(H)
        null = vh[rank:]
        target = target + null.T @ (null @ w0)
    return _iterate(lambda w: w - step * (H @ w - lin), w0, iters, tol, target, step)


def in_convex_hull(points: np.ndarray, vertices: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Whether each row of ``points`` is a convex combination of rows of ``vertices``."""
    aug = np.vstack([vertices.T, np.ones(len(vertices))])
    out = np.empty(len(points), dtype=bool)
    for i, p in enumerate(points):
        _, resid = nnls(aug, np.append(p, 1.0))
        out[i] = resid <= tol
    return out


def representative_basis(rep_states, mu: Measure) -> ProjectionBasis:
    """Normalized point masses at the representative states (the induced basis)."""
    rows = np.zeros((len(rep_states), mu.n_states))
    rows[np.arange(len(rep_states)), list(rep_states)] = 1.0
    return normalize_basis(rows, mu)


def representative_value_iteration(
    mdp: FiniteMdp,
    phi: FeatureSet,
    rep_states,
    iters: int = 20_000,
    w0=None,
    tol: float = CONVERGENCE_TOL,
) -> RunTrace:
    """Projected value iteration that matches the Bellman backup at chosen states.

    Each step solves ``Phi_rep^T w' = (R + gamma T Phi^T w)|_rep``.  The
    iteration is a max-norm non-expansion when every feature vector lies in
    the convex hull of the representative ones; otherwise a ``HullWarning``
    is issued and the run may diverge.  The plain one-step backup is used
    regardless of ``mdp.lam``.
    """
    rep = [int(s) for s in rep_states]
    if len(rep) != phi.k:
        raise DimensionMismatch(f"need {phi.k} representative states, got {len(rep)}")
    block = phi.table[:, rep].T
    rank, _ = numerical_rank(block)
    if rank < phi.k:
        raise SingularRepresentativeBlock("feature rows at the representative states are singular")
    if not in_convex_hull(phi.table.T, block).all():
        warnings.warn("feature vectors leave the convex hull of the representatives", HullWarning, stacklevel=2)
    X = phi.table.T
    fixed = block - mdp.gamma * (mdp.transition @ X)[rep]
    try:
        target = np.linalg.solve(fixed, mdp.reward[rep])
    except np.linalg.LinAlgError:
        target = None
    w0 = np.zeros(phi.k) if w0 is None else np.asarray(w0, dtype=float)

    def update(w):
        return np.linalg.solve(block, apply_bellman(mdp, X @ w)[rep])

    return _iterate(update, w0, iters, tol, target, 1.0)
