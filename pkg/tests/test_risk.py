import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rae.errors import ConfigurationError, NumericalIntegrityError, ValidationError
from rae.game import Game, pure, uniform
from rae.risk import (
    RiskProfile,
    action_means,
    clamp_variance,
    expected_utility,
    player_covariance,
    player_variance,
    profile_stats,
    strategy_variance,
    total_utility,
    weighted_covariance,
)

IDENTITY = np.eye(2)


def loop_covariance(q, M):
    """Entry-by-entry covariance oracle written straight from the definition."""
    n, m = M.shape
    means = [sum(q[k] * M[i, k] for k in range(m)) for i in range(n)]
    C = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            C[i, j] = sum(q[k] * (M[i, k] - means[i]) * (M[j, k] - means[j]) for k in range(m))
    return C


def simplex(n):
    return arrays(float, n, elements=st.floats(0.0, 1.0)).filter(lambda v: v.sum() > 1e-3).map(lambda v: v / v.sum())


@st.composite
def instance(draw, max_n=5):
    n = draw(st.integers(1, max_n))
    m = draw(st.integers(1, max_n))
    M = draw(arrays(float, (n, m), elements=st.floats(-100, 100)))
    return M, draw(simplex(n)), draw(simplex(m))


class TestRiskProfile:
    @pytest.mark.parametrize("gamma,eps", [(-1, 0.001), (np.nan, 0.001), (1, -0.1), (1, 1.0)])
    def test_invalid(self, gamma, eps):
        with pytest.raises(ConfigurationError):
            RiskProfile(gamma, eps)

    def test_floor_feasibility(self):
        RiskProfile(1, 0.001).check(999)
        with pytest.raises(ConfigurationError):
            RiskProfile(1, 0.001).check(1000)
        RiskProfile(1, 0.9).check(1)


class TestExpectedUtility:
    def test_constant_matrix(self):
        M = np.full((3, 4), 7.5)
        assert expected_utility([0.2, 0.3, 0.5], [0.1, 0.2, 0.3, 0.4], M) == pytest.approx(7.5)

    def test_identity_uniform(self):
        assert expected_utility([0.5, 0.5], [0.5, 0.5], IDENTITY) == pytest.approx(0.5)

    def test_point_masses(self):
        M = np.arange(12.0).reshape(3, 4)
        for i in range(3):
            for j in range(4):
                assert expected_utility(pure(3, i), pure(4, j), M) == M[i, j]

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            expected_utility([0.5, 0.5], [1.0], IDENTITY)


class TestActionMeans:
    def test_column_selection(self):
        M = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(action_means(pure(3, 1), M), M[:, 1])

    def test_identity_uniform(self):
        np.testing.assert_allclose(action_means([0.5, 0.5], IDENTITY), [0.5, 0.5])

    def test_constant_matrix(self):
        np.testing.assert_allclose(action_means([0.3, 0.7], np.full((3, 2), -2.0)), [-2.0] * 3)


class TestWeightedCovariance:
    def test_point_mass_zero(self):
        M = np.random.default_rng(0).normal(size=(4, 4))
        np.testing.assert_array_equal(weighted_covariance(pure(4, 2), M).matrix, 0.0)

    def test_identity_uniform(self):
        np.testing.assert_allclose(weighted_covariance([0.5, 0.5], IDENTITY).matrix, [[0.25, -0.25], [-0.25, 0.25]])

    def test_rows_constant_across_opponent(self):
        M = np.repeat(np.array([[1.0], [4.0], [-3.0]]), 5, axis=1)
        np.testing.assert_allclose(weighted_covariance(uniform(5), M).matrix, 0.0, atol=1e-15)

    def test_read_only(self):
        C = weighted_covariance([0.5, 0.5], IDENTITY).matrix
        with pytest.raises(ValueError):
            C[0, 0] = 1.0

    @settings(max_examples=200, deadline=None)
    @given(instance())
    def test_matches_loop_oracle(self, inst):
        M, _, q = inst
        np.testing.assert_allclose(weighted_covariance(q, M).matrix, loop_covariance(q, M), atol=1e-8 * max(1, np.abs(M).max() ** 2))

    @settings(max_examples=200, deadline=None)
    @given(instance())
    def test_symmetric_psd(self, inst):
        M, _, q = inst
        C = weighted_covariance(q, M).matrix
        np.testing.assert_array_equal(C, C.T)
        scale = max(1.0, np.abs(M).max() ** 2)
        assert np.linalg.eigvalsh(C).min() >= -1e-8 * scale


class TestStrategyVariance:
    def test_zero_covariance(self):
        assert strategy_variance([0.3, 0.7], np.zeros((2, 2))) == 0.0

    def test_identity_pure(self):
        C = weighted_covariance([0.5, 0.5], IDENTITY)
        assert strategy_variance([1.0, 0.0], C) == pytest.approx(0.25)

    def test_identity_hedge(self):
        C = weighted_covariance([0.5, 0.5], IDENTITY)
        assert strategy_variance([0.5, 0.5], C) == pytest.approx(0.0, abs=1e-15)

    def test_equals_variance_of_realized_payoff(self):
        # sigma^T C sigma is the q-weighted variance of the sigma-mixed payoff column
        rng = np.random.default_rng(5)
        M = rng.normal(size=(4, 6))
        s, q = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(6))
        col = s @ M
        direct = q @ (col - q @ col) ** 2
        assert strategy_variance(s, weighted_covariance(q, M)) == pytest.approx(direct, rel=1e-12)

    def test_clamp(self):
        assert clamp_variance(-1e-12) == 0.0
        with pytest.raises(NumericalIntegrityError):
            clamp_variance(-1.0)

    def test_non_psd_input_raises(self):
        with pytest.raises(NumericalIntegrityError):
            strategy_variance([1.0, 0.0], -np.eye(2))


class TestTotalUtility:
    def test_gamma_zero_is_eu(self):
        M = np.random.default_rng(1).normal(size=(3, 3))
        s, q = uniform(3), [0.2, 0.5, 0.3]
        assert total_utility(s, q, M, RiskProfile(0.0)) == expected_utility(s, q, M)

    def test_identity_uniform(self):
        assert total_utility([0.5, 0.5], [0.5, 0.5], IDENTITY, RiskProfile(1.0)) == pytest.approx(0.5)

    def test_safe_profile_wins_above_crossing(self):
        # safe profile: a - gamma * v_small; risky profile: b - gamma * v_large
        a, v_small, b, v_large = 5.0, 0.32, 20.0, 47.6
        crossing = (b - a) / (v_large - v_small)
        for gamma in np.linspace(0, 2, 41):
            safe, risky = a - gamma * v_small, b - gamma * v_large
            assert (safe > risky) == (gamma > crossing)
        assert crossing == pytest.approx(0.3173, abs=1e-4)


class TestInvariants:
    @settings(max_examples=200, deadline=None)
    @given(instance(), st.floats(-50, 50), st.floats(0.01, 10))
    def test_shift_and_scale(self, inst, shift, scale):
        M, s, q = inst
        C = weighted_covariance(q, M).matrix
        np.testing.assert_allclose(weighted_covariance(q, M + shift).matrix, C, atol=1e-8 * max(1, np.abs(M).max() ** 2))
        np.testing.assert_allclose(weighted_covariance(q, scale * M).matrix, scale**2 * C,
                                   atol=1e-8 * max(1, (scale * np.abs(M).max()) ** 2))
        assert expected_utility(s, q, M + shift) == pytest.approx(expected_utility(s, q, M) + shift, abs=1e-8 * (1 + abs(shift) + np.abs(M).max()))

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 5), st.data())
    def test_symmetric_game_per_player_forms_agree(self, n, data):
        M = data.draw(arrays(float, (n, n), elements=st.floats(-100, 100)))
        s = data.draw(simplex(n))
        q = data.draw(simplex(n))
        g = Game.from_symmetric(M)
        asym = Game(M, M.copy())
        for game in (g, asym):
            np.testing.assert_array_equal(player_covariance(game, 1, q).matrix, weighted_covariance(q, M).matrix)
            assert player_variance(game, 1, s, q) == player_variance(game, 0, s, q)

    def test_asymmetric_player_two_uses_own_matrix(self):
        rng = np.random.default_rng(2)
        p1, p2 = rng.normal(size=(2, 3)), rng.normal(size=(3, 2))
        g = Game(p1, p2)
        s1, s2 = rng.dirichlet(np.ones(2)), rng.dirichlet(np.ones(3))
        (eu1, v1), (eu2, v2) = profile_stats(g, (s1, s2))
        assert eu1 == pytest.approx(s1 @ p1 @ s2)
        assert eu2 == pytest.approx(s2 @ p2 @ s1)
        assert v2 == pytest.approx(s2 @ loop_covariance(s1, p2) @ s2)
        assert v1 == pytest.approx(s1 @ loop_covariance(s2, p1) @ s1)
