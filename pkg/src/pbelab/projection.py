"""Feature sets, projection bases and the characteristic linear system.

A finite-rank oblique projection is described by two families of functions
on the states: the features ``phi_1..phi_k`` spanning its image and the
directions ``psi_1..psi_n`` spanning the image of its adjoint.  The fixed
point of the projected TD(lambda) equation then solves
``(A - gamma B) w = b`` with

    A_ij = <psi_i, phi_j>_mu
    B_ij = <psi_i, P^(lam) phi_j>_mu
    b_i  = <psi_i, R^(lam)>_mu
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, SingularSystem, ValidationError, ZeroMass
from .mdp import RANK_RTOL, SUPPORT_EPS, FiniteMdp, Measure, p_lambda_matrix, r_lambda

NORMALIZATION_TOL = 1e-10
SOLVE_RESIDUAL_TOL = 1e-9


def _table(values, name: str) -> np.ndarray:
    t = np.array(values, dtype=float, copy=True)
    if t.ndim == 1:
        t = t[None, :]
    if t.ndim != 2 or t.shape[0] == 0:
        raise ValidationError(f"{name} table must be a non-empty 2-d array")
    if not np.all(np.isfinite(t)):
        raise ValidationError(f"{name} table has non-finite entries")
    t.setflags(write=False)
    return t


@dataclass(frozen=True)
class FeatureSet:
    """Features as a ``(k, n_states)`` table; row ``j`` is ``phi_j``."""

    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "table", _table(self.table, "feature"))

    @property
    def k(self) -> int:
        return self.table.shape[0]

    @property
    def n_states(self) -> int:
        return self.table.shape[1]

    def values(self, c) -> np.ndarray:
        """The span element ``sum_j c_j phi_j`` as a vector over states."""
        c = np.asarray(c, dtype=float)
        if c.shape != (self.k,):
            raise DimensionMismatch(f"direction has shape {c.shape}, expected ({self.k},)")
        return c @ self.table

    @classmethod
    def tabular(cls, n: int) -> "FeatureSet":
        return cls(np.eye(n))


@dataclass(frozen=True)
class ProjectionBasis:
    """Projection directions as an ``(n, n_states)`` table; row ``i`` is ``psi_i``."""

    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "table", _table(self.table, "projection basis"))

    @property
    def n(self) -> int:
        return self.table.shape[0]

    @property
    def n_states(self) -> int:
        return self.table.shape[1]

    def masses(self, mu: Measure) -> np.ndarray:
        """``sum_s psi_i(s) mu(s)`` for every row."""
        return self.table @ mu.weights

    def is_normalized(self, mu: Measure, tol: float = NORMALIZATION_TOL) -> bool:
        return bool(np.all(np.abs(self.masses(mu) - 1.0) <= tol))


def normalize_basis(raw, mu: Measure) -> ProjectionBasis:
    """Scale every row so that it integrates to one against ``mu``.

    Raises ``ZeroMass`` for a row whose mu-integral vanishes.
    """
    table = _table(getattr(raw, "table", raw), "projection basis")
    if table.shape[1] != mu.n_states:
        raise DimensionMismatch("projection basis and measure disagree on the state count")
    mass = table @ mu.weights
    scale = np.abs(table) @ mu.weights
    for i, (m, s) in enumerate(zip(mass, scale)):
        if abs(m) <= 1e-14 * max(s, 1e-300):
            raise ZeroMass(f"projection row {i} integrates to zero against mu")
    return ProjectionBasis(table / mass[:, None])


def numerical_rank(M: np.ndarray, rtol: float = RANK_RTOL) -> tuple[int, np.ndarray]:
    """Rank by singular-value thresholding at ``sigma_max * rtol``."""
    if M.size == 0:
        return 0, np.zeros(0)
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[0] == 0.0:
        return 0, sv
    return int(np.sum(sv > rtol * sv[0])), sv


def null_space(M: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal basis of ``ker M`` as columns of a ``(k, d)`` array."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    k = M.shape[1]
    _, sv, vh = np.linalg.svd(M, full_matrices=True)
    rank = 0 if sv.size == 0 or sv[0] == 0.0 else int(np.sum(sv > rtol * sv[0]))
    return vh[rank:].T.copy() if rank < k else np.zeros((k, 0))


@dataclass(frozen=True)
class ProjectedSystem:
    """The assembled characteristic system ``(A - gamma B) w = b``.

    ``nullspace`` is ``None`` when ``A - gamma B`` has full column rank.
    ``generalized`` flags a non-square system (``n != k``).
    """

    A: np.ndarray
    B: np.ndarray
    b: np.ndarray
    gamma: float
    lam: float
    rank: int
    singular_values: np.ndarray
    nullspace: np.ndarray | None = None

    @property
    def matrix(self) -> np.ndarray:
        return self.A - self.gamma * self.B

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def k(self) -> int:
        return self.A.shape[1]

    @property
    def generalized(self) -> bool:
        return self.n != self.k

    @property
    def is_singular(self) -> bool:
        return self.rank < self.k


@dataclass(frozen=True)
class SingularReport:
    """Returned by ``solve_system`` when ``A - gamma B`` is rank deficient.

    The solution set, when ``consistent``, is an affine space spanned by the
    columns of ``nullspace``; no representative is chosen.
    """

    rank: int
    nullspace: np.ndarray
    consistent: bool


def assemble_system(
    mdp: FiniteMdp, phi: FeatureSet, psi: ProjectionBasis, mu: Measure, check_normalized: bool = True
) -> ProjectedSystem:
    """Assemble ``A``, ``B`` and ``b`` for the projection characterised by ``(phi, psi)``.

    ``b`` pairs ``psi`` with the lambda-return reward ``R^(lam)``; for
    ``lam = 0`` this is the plain reward.
    """
    n_states = mdp.n_states
    if phi.n_states != n_states or psi.n_states != n_states or mu.n_states != n_states:
        raise DimensionMismatch(
            f"state counts disagree: mdp={n_states}, features={phi.n_states}, "
            f"basis={psi.n_states}, measure={mu.n_states}"
        )
    if check_normalized and not psi.is_normalized(mu):
        raise ValidationError("projection basis is not normalized against mu")
    chi = psi.table * mu.weights
    A = chi @ phi.table.T
    B = chi @ (p_lambda_matrix(mdp) @ phi.table.T)
    b = chi @ r_lambda(mdp)
    M = A - mdp.gamma * B
    rank, sv = numerical_rank(M)
    ns = null_space(M) if rank < M.shape[1] else None
    for arr in (A, B, b, sv):
        arr.setflags(write=False)
    return ProjectedSystem(A, B, b, mdp.gamma, mdp.lam, rank, sv, ns)


def solve_system(system: ProjectedSystem) -> np.ndarray | SingularReport:
    """Solve the characteristic system.

    Square non-singular systems are solved directly; tall systems with full
    column rank by least squares (``system.generalized`` is then set).
    Rank-deficient systems yield a ``SingularReport`` instead of a vector.
    """
    M = system.matrix
    if system.is_singular:
        w, *_ = np.linalg.lstsq(M, system.b, rcond=None)
        scale = max(1.0, float(np.abs(system.b).max(initial=0.0)))
        consistent = bool(np.linalg.norm(M @ w - system.b) <= SOLVE_RESIDUAL_TOL * scale)
        return SingularReport(system.rank, system.nullspace, consistent)
    if system.generalized:
        w, *_ = np.linalg.lstsq(M, system.b, rcond=None)
        return w
    return np.linalg.solve(M, system.b)


def oblique_project(v, phi: FeatureSet, psi: ProjectionBasis, mu: Measure) -> np.ndarray:
    """Project ``v`` onto span(phi) along the mu-orthogonal complement of span(psi)."""
    v = np.asarray(v, dtype=float)
    if v.shape != (mu.n_states,):
        raise DimensionMismatch(f"v has shape {v.shape}, expected ({mu.n_states},)")
    chi = psi.table * mu.weights
    cross = chi @ phi.table.T
    if cross.shape[0] != cross.shape[1]:
        raise SingularSystem("cross-Gram matrix is not square; projection undefined")
    rank, _ = numerical_rank(cross)
    if rank < cross.shape[0]:
        raise SingularSystem("cross-Gram matrix <psi_i, phi_j> is singular")
    coef = np.linalg.solve(cross, chi @ v)
    return phi.table.T @ coef


@dataclass(frozen=True)
class ProjectionDims:
    dim_phi: int
    dim_psi: int
    cross_rank: int

    @property
    def equal(self) -> bool:
        return self.dim_phi == self.dim_psi

    @property
    def bounded(self) -> bool:
        return self.equal and self.cross_rank == self.dim_phi

    @property
    def kind(self) -> str:
        if not self.equal:
            return "generalized finite-rank case"
        return "bounded" if self.bounded else "degenerate pairing"


def adjoint_image_dim_check(phi: FeatureSet, psi: ProjectionBasis, mu: Measure) -> ProjectionDims:
    """Compare the dimensions of span(phi) and span(psi) on the support of ``mu``.

    A mismatch is the generalized (possibly unbounded) projection case, not
    an error.
    """
    on = mu.support(SUPPORT_EPS)
    dphi, _ = numerical_rank(phi.table[:, on])
    dpsi, _ = numerical_rank(psi.table[:, on])
    cross, _ = numerical_rank((psi.table * mu.weights) @ phi.table.T)
    return ProjectionDims(dphi, dpsi, cross)


def feature_rank(phi: FeatureSet, mu: Measure) -> int:
    """Rank of the feature rows restricted to the support of ``mu``."""
    return numerical_rank(phi.table[:, mu.support(SUPPORT_EPS)])[0]
