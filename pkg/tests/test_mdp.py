import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pbelab.ambiguity import R2, T1, T2
from pbelab.errors import DimensionMismatch, DomainError, NonConvergent, NonUnique, ValidationError
from pbelab.mdp import (
    FiniteMdp,
    Measure,
    apply_bellman,
    apply_p_lambda,
    apply_td_lambda,
    bellman_error,
    check_stochastic,
    exact_value,
    g_factor,
    mu_inner,
    mu_norm,
    p_lambda_matrix,
    r_lambda,
    resolvent,
    stationary_distribution,
)

from conftest import dirichlet_mdp, mdps


def series_p_lambda(mdp, terms=4000):
    # (1 - lam) sum_k (lam gamma)^k T^(k+1), summed term by term
    n = mdp.n_states
    T, c = mdp.transition, mdp.lam * mdp.gamma
    acc, power = np.zeros((n, n)), T.copy()
    for k in range(terms):
        acc += c**k * power
        power = power @ T
        if c**k < 1e-18:
            break
    return (1 - mdp.lam) * acc


def series_r_lambda(mdp, terms=4000):
    T, c = mdp.transition, mdp.lam * mdp.gamma
    acc, term = np.zeros(mdp.n_states), mdp.reward.copy()
    for k in range(terms):
        acc += term
        term = c * (T @ term)
        if np.abs(term).max() < 1e-18:
            break
    return acc


def eigen_stationary(T):
    vals, vecs = np.linalg.eig(T.T)
    v = np.real(vecs[:, np.argmin(np.abs(vals - 1))])
    return v / v.sum()


class TestValidation:
    @pytest.mark.parametrize(
        "T, bad_row",
        [
            ([[0.5, 0.5], [0.2, 0.7]], 1),
            ([[1.2, -0.2], [0.5, 0.5]], 0),
            ([[0.5, 0.5], [0.5, 0.5], [1, 0]], None),
        ],
    )
    def test_reports_first_bad_row(self, T, bad_row):
        with pytest.raises(ValidationError) as err:
            check_stochastic(np.array(T))
        if bad_row is not None:
            assert f"row {bad_row}" in str(err.value)

    @pytest.mark.parametrize("gamma", [1.0, -0.1, 1.5])
    def test_gamma_domain(self, gamma):
        with pytest.raises(DomainError):
            FiniteMdp(np.eye(2), np.zeros(2), gamma)

    def test_lambda_domain(self):
        with pytest.raises(DomainError):
            FiniteMdp(np.eye(2), np.zeros(2), 0.5, 1.0)

    def test_reward_shape(self):
        with pytest.raises(DimensionMismatch):
            FiniteMdp(np.eye(2), np.zeros(3), 0.5)

    def test_nonfinite_reward(self):
        with pytest.raises(ValidationError):
            FiniteMdp(np.eye(2), [0.0, np.nan], 0.5)

    def test_arrays_are_read_only(self):
        mdp = FiniteMdp(T1, np.zeros(2), 0.9)
        with pytest.raises(ValueError):
            mdp.transition[0, 0] = 1.0

    def test_measure_must_sum_to_one(self):
        with pytest.raises(ValidationError):
            Measure([0.5, 0.6])


class TestStationary:
    def test_two_state_chain(self):
        mu = stationary_distribution(FiniteMdp(T1, np.zeros(2), 0.9))
        np.testing.assert_allclose(mu.weights, [1 / 3, 2 / 3], atol=1e-12)

    def test_three_state_chain(self):
        mu = stationary_distribution(FiniteMdp(T2, R2, 0.9))
        np.testing.assert_allclose(mu.weights, [1 / 3, 1 / 3, 1 / 3], atol=1e-12)

    @given(mdps())
    def test_matches_eigenvector(self, mdp):
        mu = stationary_distribution(mdp)
        np.testing.assert_allclose(mu.weights, eigen_stationary(mdp.transition), atol=1e-10)
        np.testing.assert_allclose(mu.weights @ mdp.transition, mu.weights, atol=1e-11)

    def test_periodic_chain_converges(self):
        mu = stationary_distribution(FiniteMdp([[0, 1], [1, 0]], np.zeros(2), 0.5))
        np.testing.assert_allclose(mu.weights, [0.5, 0.5], atol=1e-12)

    def test_two_closed_classes_rejected(self):
        with pytest.raises(NonUnique):
            stationary_distribution(FiniteMdp(np.eye(3), np.zeros(3), 0.5))

    def test_iteration_budget(self):
        with pytest.raises(NonConvergent):
            stationary_distribution(dirichlet_mdp(0, 5), max_iter=1)

    def test_grid_widths_carried(self):
        mdp = FiniteMdp(T1, np.zeros(2), 0.9, grid=[0.5, 0.5])
        assert stationary_distribution(mdp).is_continuum


class TestOperators:
    @given(mdps())
    def test_p_lambda_series(self, mdp):
        np.testing.assert_allclose(p_lambda_matrix(mdp), series_p_lambda(mdp), atol=1e-9)

    @given(mdps())
    def test_r_lambda_series(self, mdp):
        np.testing.assert_allclose(r_lambda(mdp), series_r_lambda(mdp), atol=1e-9)

    @given(mdps())
    def test_p_lambda_row_stochastic_up_to_scale(self, mdp):
        # Row sums equal (1 - lam) / (1 - lam gamma)
        rows = p_lambda_matrix(mdp).sum(axis=1)
        np.testing.assert_allclose(rows, (1 - mdp.lam) / (1 - mdp.lam * mdp.gamma), atol=1e-12)

    @given(mdps(), st.integers(0, 2**32 - 1))
    def test_p_lambda_non_expansion(self, mdp, seed):
        v = np.random.default_rng(seed).normal(size=mdp.n_states)
        mu = stationary_distribution(mdp)
        assert mu_norm(apply_p_lambda(mdp, v), mu) <= mu_norm(v, mu) + 1e-12

    @pytest.mark.parametrize("lam", [0.0, 0.3, 0.7, 0.9])
    def test_td_lambda_shares_fixed_point(self, lam):
        for seed in range(10):
            mdp = dirichlet_mdp(seed, 6, 0.95, lam)
            v = exact_value(mdp)
            np.testing.assert_allclose(apply_td_lambda(mdp, v), v, atol=1e-9)

    def test_lambda_zero_is_one_step(self):
        mdp = dirichlet_mdp(3, 4)
        np.testing.assert_array_equal(p_lambda_matrix(mdp), mdp.transition)
        v = np.arange(4.0)
        np.testing.assert_allclose(apply_td_lambda(mdp, v), apply_bellman(mdp, v))

    def test_resolvent_inverse(self):
        mdp = dirichlet_mdp(1, 5, 0.9, 0.6)
        M = np.eye(5) - 0.54 * mdp.transition
        np.testing.assert_allclose(resolvent(mdp) @ M, np.eye(5), atol=1e-12)

    def test_vector_shape_checked(self):
        with pytest.raises(DimensionMismatch):
            apply_bellman(dirichlet_mdp(0, 3), np.zeros(4))


class TestScalars:
    @pytest.mark.parametrize(
        "gamma, lam, expected",
        [(0.9, 0.0, 0.9), (0.9, 0.5, 0.45 / 0.55), (0.0, 0.7, 0.0), (0.99, 0.9, 0.099 / 0.109)],
    )
    def test_g_factor(self, gamma, lam, expected):
        assert g_factor(gamma, lam) == pytest.approx(expected, rel=1e-14)

    def test_g_factor_domain(self):
        with pytest.raises(DomainError):
            g_factor(1.0, 0.0)

    @given(st.integers(0, 2**32 - 1))
    def test_inner_product_symmetric(self, seed):
        rng = np.random.default_rng(seed)
        mu = Measure(rng.dirichlet(np.ones(5)))
        f, g = rng.normal(size=(2, 5))
        assert mu_inner(f, g, mu) == pytest.approx(mu_inner(g, f, mu))
        assert mu_inner(f, f, mu) >= 0

    def test_bellman_error_pair(self):
        mdp1 = FiniteMdp(T1, np.zeros(2), 0.9)
        mdp2 = FiniteMdp(T2, R2, 0.9)
        e1 = bellman_error(mdp1, np.eye(2), np.zeros(2), stationary_distribution(mdp1))
        e2 = bellman_error(mdp2, [[1, 0, 0], [0, 1, 1]], np.zeros(2), stationary_distribution(mdp2))
        assert e1 == 0.0
        assert e2 == pytest.approx(2 / 3, abs=1e-12)
