import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pbelab.ambiguity import sutton_barto_pair
from pbelab.errors import DimensionMismatch, SingularSystem, ValidationError, ZeroMass
from pbelab.mdp import FiniteMdp, Measure, exact_value, stationary_distribution
from pbelab.projection import (
    FeatureSet,
    ProjectionBasis,
    SingularReport,
    adjoint_image_dim_check,
    assemble_system,
    feature_rank,
    normalize_basis,
    null_space,
    numerical_rank,
    oblique_project,
    solve_system,
)

from conftest import dirichlet_mdp, mdps
from test_mdp import series_p_lambda, series_r_lambda


def loop_system(mdp, phi, psi, mu):
    """A, B, b by explicit sums over states, with series operators."""
    P, Rl = series_p_lambda(mdp), series_r_lambda(mdp)
    n, k, S = psi.shape[0], phi.shape[0], mdp.n_states
    A, B, b = np.zeros((n, k)), np.zeros((n, k)), np.zeros(n)
    for i in range(n):
        for s in range(S):
            wgt = psi[i, s] * mu[s]
            b[i] += wgt * Rl[s]
            for j in range(k):
                A[i, j] += wgt * phi[j, s]
                B[i, j] += wgt * sum(P[s, t] * phi[j, t] for t in range(S))
    return A, B, b


class TestTables:
    def test_vector_becomes_single_row(self):
        assert FeatureSet([1.0, 2.0, 3.0]).k == 1

    def test_nonfinite_rejected(self):
        with pytest.raises(ValidationError):
            FeatureSet([[1.0, np.inf]])

    def test_values_shape(self):
        with pytest.raises(DimensionMismatch):
            FeatureSet(np.eye(3)).values([1.0, 2.0])

    def test_normalize(self):
        mu = Measure([0.25, 0.25, 0.5])
        psi = normalize_basis([[1, 1, 0], [0, 0, 2]], mu)
        assert psi.is_normalized(mu)
        np.testing.assert_allclose(psi.table, [[2, 2, 0], [0, 0, 2]])

    def test_zero_mass(self):
        with pytest.raises(ZeroMass):
            normalize_basis([[1.0, -1.0]], Measure([0.5, 0.5]))


class TestAssembly:
    @given(mdps(max_states=6), st.integers(1, 3), st.integers(0, 2**32 - 1))
    def test_matches_loop_oracle(self, mdp, k, seed):
        rng = np.random.default_rng(seed)
        mu = stationary_distribution(mdp)
        phi = FeatureSet(rng.normal(size=(k, mdp.n_states)))
        psi = normalize_basis(rng.uniform(0.1, 1.0, size=(k, mdp.n_states)), mu)
        sys_ = assemble_system(mdp, phi, psi, mu)
        A, B, b = loop_system(mdp, phi.table, psi.table, mu.weights)
        np.testing.assert_allclose(sys_.A, A, atol=1e-10)
        np.testing.assert_allclose(sys_.B, B, atol=1e-9)
        np.testing.assert_allclose(sys_.b, b, atol=1e-9)

    @pytest.mark.parametrize("lam", [0.0, 0.5])
    def test_counterexample_pair_shares_system(self, lam):
        p = sutton_barto_pair(0.9, lam)
        s1 = assemble_system(p.mdp1, p.phi1, p.psi1, stationary_distribution(p.mdp1))
        s2 = assemble_system(p.mdp2, p.phi2, p.psi2, stationary_distribution(p.mdp2))
        for a, b in ((s1.A, s2.A), (s1.B, s2.B), (s1.b, s2.b)):
            np.testing.assert_allclose(a, b, atol=1e-12)
        # A is the identity for normalized aggregation bases
        np.testing.assert_allclose(s1.A, np.eye(2), atol=1e-12)

    def test_unnormalized_basis_rejected(self):
        mdp = dirichlet_mdp(0, 3)
        with pytest.raises(ValidationError):
            assemble_system(mdp, FeatureSet(np.eye(3)), ProjectionBasis(np.eye(3)), Measure.uniform(3))

    def test_state_count_mismatch(self):
        mdp = dirichlet_mdp(0, 3)
        mu = Measure.uniform(3)
        with pytest.raises(DimensionMismatch):
            assemble_system(mdp, FeatureSet(np.eye(4)), normalize_basis(np.ones((1, 3)), mu), mu)


class TestSolve:
    @given(mdps(max_states=6))
    def test_tabular_on_policy_recovers_value(self, mdp):
        mu = stationary_distribution(mdp)
        phi = FeatureSet.tabular(mdp.n_states)
        if not np.all(mu.weights > 1e-8):
            return
        w = solve_system(assemble_system(mdp, phi, normalize_basis(phi.table, mu), mu))
        np.testing.assert_allclose(w, exact_value(mdp), atol=1e-8)

    def test_singular_returns_report(self):
        # Collinear features make A - gamma B rank one
        mdp = dirichlet_mdp(2, 4)
        mu = stationary_distribution(mdp)
        phi = FeatureSet([[1, 2, 3, 4], [2, 4, 6, 8]])
        psi = normalize_basis([[1, 1, 0, 0], [0, 0, 1, 1]], mu)
        out = solve_system(assemble_system(mdp, phi, psi, mu))
        assert isinstance(out, SingularReport)
        assert out.rank == 1 and out.nullspace.shape == (2, 1)
        np.testing.assert_allclose(np.abs(out.nullspace[:, 0]), np.array([2, 1]) / np.sqrt(5), atol=1e-12)

    def test_tall_system_is_generalized(self):
        mdp = dirichlet_mdp(5, 5)
        mu = stationary_distribution(mdp)
        phi = FeatureSet(np.ones((1, 5)))
        psi = normalize_basis(np.eye(5)[:3], mu)
        system = assemble_system(mdp, phi, psi, mu)
        assert system.generalized and not system.is_singular
        w = solve_system(system)
        lsq, *_ = np.linalg.lstsq(system.matrix, system.b, rcond=None)
        np.testing.assert_allclose(w, lsq)


class TestObliqueProjection:
    @given(st.integers(0, 2**32 - 1))
    def test_idempotent_and_orthogonal(self, seed):
        rng = np.random.default_rng(seed)
        mu = Measure(rng.dirichlet(np.ones(6)))
        phi = FeatureSet(rng.normal(size=(2, 6)))
        psi = normalize_basis(rng.uniform(0.1, 1.0, size=(2, 6)), mu)
        v = rng.normal(size=6)
        pv = oblique_project(v, phi, psi, mu)
        np.testing.assert_allclose(oblique_project(pv, phi, psi, mu), pv, atol=1e-8 * max(1, np.abs(pv).max()))
        np.testing.assert_allclose((psi.table * mu.weights) @ (v - pv), 0, atol=1e-9 * max(1, np.abs(pv).max()))

    def test_degenerate_pairing(self):
        mu = Measure.uniform(4)
        phi = FeatureSet([[1, -1, 0, 0]])
        psi = normalize_basis([[0, 0, 1, 1]], mu)
        with pytest.raises(SingularSystem):
            oblique_project(np.ones(4), phi, psi, mu)


class TestRanks:
    def test_numerical_rank_threshold(self):
        M = np.diag([1.0, 1e-9, 1e-11])
        assert numerical_rank(M)[0] == 2

    def test_null_space_oracle(self, rng):
        M = rng.normal(size=(3, 5))
        ns = null_space(M)
        assert ns.shape == (5, 2)
        np.testing.assert_allclose(M @ ns, 0, atol=1e-12)
        np.testing.assert_allclose(ns.T @ ns, np.eye(2), atol=1e-12)

    @pytest.mark.parametrize(
        "psi_rows, kind",
        [
            ([[1, 1, 0, 0], [0, 0, 1, 1]], "bounded"),
            ([[1, 1, 1, 1]], "generalized finite-rank case"),
            ([[1, 0, 0, 0], [0, 1, 0, 0]], "degenerate pairing"),
        ],
    )
    def test_dimension_kinds(self, psi_rows, kind):
        mu = Measure.uniform(4)
        rows = [[0, 0, 1, 0], [0, 0, 0, 1]] if kind == "degenerate pairing" else [[1, 1, 0, 0], [0, 0, 1, 1]]
        phi = FeatureSet(rows)
        dims = adjoint_image_dim_check(phi, normalize_basis(psi_rows, mu), mu)
        assert dims.kind == kind

    def test_feature_rank_on_support(self):
        mu = Measure([0.5, 0.5, 0.0])
        assert feature_rank(FeatureSet([[1, 1, 0], [0, 0, 1]]), mu) == 1
