import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pbelab.ambiguity import (
    R2,
    T1,
    T2,
    check_eqn4,
    chi_basis,
    construct_f,
    detect_ambiguity,
    environment_from_f,
    environment_residual,
    lift_table,
    reward_for_value,
    state_split_alias,
    sutton_barto_pair,
    witness_from_nullspace,
)
from pbelab.builders import aggregation_model, tent, uniform_grid
from pbelab.errors import (
    InvalidSplit,
    NotNullVector,
    RangeViolation,
    UnsupportedLambda,
    ValidationError,
    ZeroDirection,
)
from pbelab.flatness import sample_directions
from pbelab.mdp import FiniteMdp, Measure, apply_td_lambda, exact_value, stationary_distribution
from pbelab.projection import FeatureSet, assemble_system, normalize_basis

from conftest import dirichlet_mdp, mdps


def tent_instance(n=2001, gamma=0.99):
    x, h = uniform_grid(n)
    mu = Measure.uniform(n, h)
    mdp = FiniteMdp(np.full((n, n), 1.0 / n), np.zeros(n), gamma, 0.0, h)
    return mdp, FeatureSet(tent(x)), normalize_basis(np.ones((1, n)), mu), mu


def wide_instance(seed, n=6, gamma=0.8, lam=0.0):
    """One basis row, two features: always singular."""
    mdp = dirichlet_mdp(seed, n, gamma, lam)
    mu = stationary_distribution(mdp)
    rng = np.random.default_rng(seed + 1)
    phi = FeatureSet(rng.normal(size=(2, n)))
    psi = normalize_basis(rng.uniform(0.5, 1.0, size=(1, n)), mu)
    return mdp, phi, psi, mu


class TestRewardForValue:
    @given(mdps())
    def test_value_is_fixed_point(self, mdp):
        v = np.linspace(-1, 1, mdp.n_states)
        R = reward_for_value(mdp, v)
        np.testing.assert_allclose(apply_td_lambda(mdp.replace(reward=R), v), v, atol=1e-9)
        np.testing.assert_allclose(exact_value(mdp.replace(reward=R)), v, atol=1e-8)


class TestWitness:
    @given(st.integers(0, 10_000), st.floats(0.1, 5.0), st.sampled_from([0.0, 0.5]))
    def test_soundness(self, seed, xi, lam):
        mdp, phi, psi, mu = wide_instance(seed, lam=lam)
        ns = detect_ambiguity(assemble_system(mdp, phi, psi, mu))
        assert ns is not None
        v = ns[:, 0]
        wit = witness_from_nullspace(mdp, phi, psi, mu, v, xi)
        assert wit.w_gap == pytest.approx(xi * np.linalg.norm(v), abs=1e-10)
        assert wit.max_abc_discrepancy <= 1e-9
        for sol in (wit.base, wit.alternate):
            assert sol.bellman_residual(phi) <= 1e-9
        np.testing.assert_array_equal(wit.base.T, wit.alternate.T)

    def test_rejects_non_null_vector(self):
        mdp, phi, psi, mu = wide_instance(0)
        ns = detect_ambiguity(assemble_system(mdp, phi, psi, mu))[:, 0]
        other = np.array([ns[1], -ns[0]])
        with pytest.raises(NotNullVector):
            witness_from_nullspace(mdp, phi, psi, mu, other)

    def test_rejects_bad_xi(self):
        mdp, phi, psi, mu = wide_instance(0)
        ns = detect_ambiguity(assemble_system(mdp, phi, psi, mu))[:, 0]
        with pytest.raises(ValidationError):
            witness_from_nullspace(mdp, phi, psi, mu, ns, xi=0.0)

    def test_nonsingular_has_no_null_space(self):
        p = sutton_barto_pair()
        mu = stationary_distribution(p.mdp1)
        assert detect_ambiguity(assemble_system(p.mdp1, p.phi1, p.psi1, mu)) is None


@pytest.fixture(scope="module")
def tent_case():
    return tent_instance()


class TestConstructF:
    def test_tent_is_feasible(self, tent_case):
        mdp, phi, psi, mu = tent_case
        fc = construct_f(phi.table[0], psi, mu, 0.99)
        assert fc.feasible and fc.failed == ()
        assert fc.eqn4_residual <= 1e-8
        assert fc.f.max() <= fc.phi_max + 1e-12 and fc.f.min() >= fc.phi_min - 1e-12
        assert fc.c_bound_upper_ok

    def test_eqn4_direct(self, tent_case):
        _, phi, psi, mu = tent_case
        fc = construct_f(phi.table[0], psi, mu, 0.99)
        chi = psi.table * mu.weights
        lhs = chi @ phi.table[0]
        rhs = 0.99 * chi @ fc.f
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)
        assert np.abs(check_eqn4(fc.f, phi.table[0], psi, mu, 0.99)).max() <= 1e-12

    def test_round_trip_is_singular(self, tent_case):
        mdp, phi, psi, mu = tent_case
        fc = construct_f(phi.table[0], psi, mu, 0.99)
        env = environment_from_f(fc.f, phi.table[0], mdp)
        np.testing.assert_allclose(env.transition @ phi.table[0], fc.f, atol=1e-12)
        system = assemble_system(env, phi, psi, mu)
        assert system.is_singular
        assert abs(system.matrix @ np.array([1.0])).max() <= 1e-8
        assert environment_residual(env, fc.f, phi.table[0]) <= 1e-12

    def test_constant_basis_aggregation_infeasible(self):
        mdp, phi, psi, mu = aggregation_model(8, 3, np.random.default_rng(5))
        for c in sample_directions(3, n_random=64, seed=1):
            fc = construct_f(phi.values(c), psi, mu, 0.9)
            assert not fc.feasible
            assert "range" in fc.failed

    def test_zero_direction(self, tent_case):
        _, phi, psi, mu = tent_case
        with pytest.raises(ZeroDirection):
            construct_f(np.zeros(phi.n_states), psi, mu, 0.9)

    @pytest.mark.parametrize("G", [0.0, 1.0, 1.5])
    def test_g_domain(self, tent_case, G):
        _, phi, psi, mu = tent_case
        with pytest.raises(ValueError):
            construct_f(phi.table[0], psi, mu, G)

    def test_chi_gram_is_unweighted_integral(self):
        mu = Measure.uniform(4, np.full(4, 0.25))
        chi = chi_basis(normalize_basis(np.ones((1, 4)), mu), mu)
        # chi is the density 1 on [0, 1]; its squared integral is 1
        np.testing.assert_allclose(chi.gram(), [[1.0]])


class TestEnvironmentFromF:
    def test_requires_lambda_zero(self):
        mdp, phi, psi, mu = tent_instance(51)
        with pytest.raises(UnsupportedLambda):
            environment_from_f(phi.table[0], phi.table[0], mdp.replace(lam=0.5))

    def test_range_violation(self):
        mdp, phi, _, _ = tent_instance(51)
        with pytest.raises(RangeViolation):
            environment_from_f(phi.table[0] * 1.1, phi.table[0], mdp)

    def test_lowest_index_extremes(self):
        phi = np.array([0.0, 1.0, 1.0, 0.0])
        mdp = FiniteMdp(np.full((4, 4), 0.25), np.zeros(4), 0.5)
        env = environment_from_f(np.full(4, 0.25), phi, mdp)
        assert np.all(env.transition[:, 2] == 0) and np.all(env.transition[:, 3] == 0)
        np.testing.assert_allclose(env.transition[:, 1], 0.25)


class TestCounterexample:
    def test_presets(self):
        p = sutton_barto_pair()
        np.testing.assert_array_equal(p.mdp1.transition, T1)
        np.testing.assert_array_equal(p.mdp2.transition, T2)
        np.testing.assert_array_equal(p.mdp2.reward, R2)
        # the aliased reward stream averages out so the projected value is zero
        np.testing.assert_allclose(p.mdp2.transition @ R2, 0.0)

    def test_split_reproduces_second_chain(self):
        mdp1 = FiniteMdp(T1, np.zeros(2), 0.9)
        mdp2, phi2 = state_split_alias(mdp1, 1, 2, [0.5, 0.5], out_rows=[[1, 0], [0, 1]], copy_rewards=[1, -1])
        np.testing.assert_allclose(mdp2.transition, T2)
        np.testing.assert_allclose(mdp2.reward, R2)
        np.testing.assert_array_equal(phi2.table, [[1, 0, 0], [0, 1, 1]])

    @given(
        mdps(max_states=5),
        st.integers(0, 4),
        st.integers(2, 3),
        st.integers(0, 2**32 - 1),
    )
    def test_split_preserves_system(self, mdp, state, copies, seed):
        state = state % mdp.n_states
        rng = np.random.default_rng(seed)
        p = rng.dirichlet(np.ones(copies))
        # copy rows/rewards that differ but average back to the original
        out = np.repeat(mdp.transition[state : state + 1], copies, axis=0)
        shift = rng.dirichlet(np.ones(mdp.n_states)) - mdp.transition[state]
        out[0] += 0.5 * shift
        out[1] -= 0.5 * shift * p[0] / p[1]
        if np.any(out < 0) or np.any(out > 1):
            out = None
        r = np.full(copies, mdp.reward[state])
        r[0] += 1.0
        r[1] -= p[0] / p[1]
        phi = FeatureSet(rng.normal(size=(2, mdp.n_states)))
        new, phi_new = state_split_alias(mdp, state, copies, p, out, r, phi)
        mu, mu_new = stationary_distribution(mdp), stationary_distribution(new)
        np.testing.assert_allclose(mu_new.weights[state : state + copies], p * mu.weights[state], atol=1e-10)
        psi = normalize_basis(np.abs(phi.table) + 0.1, mu)
        psi_new = normalize_basis(lift_table(np.abs(phi.table) + 0.1, state, copies), mu_new)
        s, s_new = assemble_system(mdp, phi, psi, mu), assemble_system(new, phi_new, psi_new, mu_new)
        np.testing.assert_allclose(s.A, s_new.A, atol=1e-9)
        np.testing.assert_allclose(s.B, s_new.B, atol=1e-9)
        np.testing.assert_allclose(s.b, s_new.b, atol=1e-9)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(state=5, copies=2, split_probs=[0.5, 0.5]),
            dict(state=0, copies=1, split_probs=[1.0]),
            dict(state=0, copies=2, split_probs=[0.7, 0.7]),
            dict(state=0, copies=2, split_probs=[0.5, 0.5], copy_rewards=[1.0, 1.0]),
        ],
    )
    def test_invalid_split(self, kwargs):
        with pytest.raises(InvalidSplit):
            state_split_alias(FiniteMdp(T1, np.zeros(2), 0.9), **kwargs)
