import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rae.errors import ConfigurationError, ParseError, ValidationError
from rae.game import (
    Game,
    GameGenConfig,
    anti_coordination,
    dumps_game,
    game_from_dict,
    game_to_dict,
    generate_coordination_game,
    load_game,
    loads_game,
    make_risk_dilemma,
    pure,
    random_game,
    risky_actions,
    save_game,
    uniform,
    validate_strategy,
)
from rae.risk import RiskProfile, strategy_variance, total_utility, weighted_covariance


class TestValidateStrategy:
    def test_accepts_simplex_point(self):
        np.testing.assert_allclose(validate_strategy([0.25, 0.75]), [0.25, 0.75])

    @pytest.mark.parametrize("probs", [[0.5, 0.6], [-0.1, 1.1], [np.nan, 1.0], []])
    def test_rejects_invalid(self, probs):
        with pytest.raises(ValidationError):
            validate_strategy(probs)

    def test_floor_enforced(self):
        with pytest.raises(ValidationError):
            validate_strategy([0.0005, 0.9995], epsilon=0.001)
        validate_strategy([0.001, 0.999], epsilon=0.001)

    def test_length_checked(self):
        with pytest.raises(ValidationError):
            validate_strategy([0.5, 0.5], num_actions=3)

    def test_helpers(self):
        np.testing.assert_allclose(uniform(4), [0.25] * 4)
        np.testing.assert_allclose(pure(3, 2), [0, 0, 1])


class TestGame:
    def test_shapes_and_symmetry(self):
        g = Game.from_symmetric([[1, 2], [3, 4]])
        assert g.symmetric and g.num_actions == (2, 2)
        np.testing.assert_array_equal(g.payoff_p1, g.payoff_p2)

    def test_asymmetric_shapes(self):
        g = Game(np.zeros((2, 3)), np.zeros((3, 2)))
        assert g.num_actions == (2, 3)
        with pytest.raises(ValidationError):
            Game(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValidationError):
            Game.from_symmetric([[1, np.inf], [0, 0]])

    def test_symmetric_flag_requires_equal_payoffs(self):
        with pytest.raises(ValidationError):
            Game([[1, 0], [0, 1]], [[0, 1], [1, 0]], symmetric=True)

    def test_payoff_range(self):
        assert Game.from_symmetric([[5, 5], [20, -100]]).payoff_range() == 120


class TestGenerator:
    def test_diagonal_in_range(self):
        for seed in range(20):
            g = generate_coordination_game(GameGenConfig(3, seed))
            d = np.diag(g.payoff_p1)
            assert ((d >= 5) & (d <= 15)).all()

    def test_deterministic(self):
        a = generate_coordination_game(GameGenConfig(10, 7))
        b = generate_coordination_game(GameGenConfig(10, 7))
        np.testing.assert_array_equal(a.payoff_p1, b.payoff_p1)

    def test_symmetric_matrix(self):
        g = generate_coordination_game(GameGenConfig(30, 1))
        np.testing.assert_array_equal(g.payoff_p1, g.payoff_p1.T)
        assert g.symmetric

    def test_risk_gate_is_draw_above_14(self):
        cfg = GameGenConfig(3, 0)
        np.testing.assert_array_equal(risky_actions(cfg, [13.9, 14.0, 14.01, 15.0]), [False, False, True, True])

    def test_risky_fraction_monte_carlo(self):
        fracs = []
        for seed in range(1000):
            _, draws = generate_coordination_game(GameGenConfig(100, seed), return_draws=True)
            fracs.append(np.mean(draws > 14.0))
        assert abs(np.mean(fracs) - 0.10) <= 0.03

    def test_offdiagonal_ranges_follow_last_writer(self):
        # independent re-implementation of the sequential loop
        cfg = GameGenConfig(8, 3)
        rng = np.random.default_rng(3)
        P = np.zeros((8, 8))
        for i in range(8):
            p = rng.uniform(5, 15)
            P[i, i] = abs(p)
            lo, hi = (-10, 15) if (p - 5) / 10 > 0.9 else (0, 10)
            for j in range(8):
                if j != i:
                    P[i, j] = P[j, i] = rng.uniform(lo, hi)
        np.testing.assert_array_equal(generate_coordination_game(cfg).payoff_p1, P)

    @pytest.mark.parametrize("kw", [{"num_actions": 1}, {"num_actions": 5, "seed": -1},
                                    {"num_actions": 5, "risky_quantile": 1.0},
                                    {"num_actions": 5, "coordination_range": (15.0, 5.0)}])
    def test_invalid_config(self, kw):
        with pytest.raises(ConfigurationError):
            generate_coordination_game(GameGenConfig(**kw))


class TestRiskDilemma:
    def test_layout(self):
        np.testing.assert_array_equal(make_risk_dilemma(5, 20, -100).payoff_p1, [[5, 5], [20, -100]])
        np.testing.assert_array_equal(make_risk_dilemma(0, 1, -1).payoff_p1, [[0, 0], [1, -1]])

    def test_invalid_ordering(self):
        with pytest.raises(ConfigurationError):
            make_risk_dilemma(20, 5, -100)

    def test_total_utility_ordering_flips(self):
        # safe-leaning profile against a floored opponent versus overtaking
        # against a rarely-overtaking opponent; total utility must flip once
        g = make_risk_dilemma(5, 20, -4750)
        M = g.payoff_p1
        s1, s2 = np.array([0.99, 0.01]), np.array([0.01, 0.99])
        opp1, opp2 = s1, np.array([1 - 1e-4, 1e-4])

        def diff(gamma):
            p = RiskProfile(gamma, 0.01)
            return total_utility(s1, opp1, M, p) - total_utility(s2, opp2, M, p)

        assert diff(0.0) < 0
        assert diff(10.0) > 0
        lo, hi = 0.0, 10.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if diff(mid) < 0 else (lo, mid)
        grid = np.linspace(0, 10, 2001)
        signs = np.sign([diff(x) for x in grid])
        assert np.count_nonzero(np.diff(signs)) == 1
        # the crossing is where the EU gap equals gamma times the variance gap
        v1 = strategy_variance(s1, weighted_covariance(opp1, M))
        v2 = strategy_variance(s2, weighted_covariance(opp2, M))
        eu_gap = s2 @ M @ opp2 - s1 @ M @ opp1
        assert lo == pytest.approx(eu_gap / (v2 - v1), rel=1e-9)


class TestTransforms:
    def test_anti_coordination_negates_diagonal(self):
        g = generate_coordination_game(GameGenConfig(6, 2))
        a = anti_coordination(g)
        np.testing.assert_array_equal(np.diag(a.payoff_p1), -np.diag(g.payoff_p1))
        off = ~np.eye(6, dtype=bool)
        np.testing.assert_array_equal(a.payoff_p1[off], g.payoff_p1[off])

    def test_random_game_asymmetric_and_seeded(self):
        g = random_game(5, 3)
        assert not g.symmetric
        np.testing.assert_array_equal(g.payoff_p2, random_game(5, 3).payoff_p2)
        assert g.payoff_p1.min() >= -10 and g.payoff_p1.max() <= 15


class TestSerialization:
    def test_round_trip_100_actions(self, tmp_path):
        g = generate_coordination_game(GameGenConfig(100, 11))
        path = tmp_path / "g.json"
        save_game(g, path)
        h = load_game(path)
        np.testing.assert_array_equal(g.payoff_p1, h.payoff_p1)
        np.testing.assert_array_equal(g.payoff_p2, h.payoff_p2)
        assert h.symmetric

    def test_round_trip_asymmetric(self):
        g = random_game(4, 0)
        h = loads_game(dumps_game(g))
        np.testing.assert_array_equal(g.payoff_p2, h.payoff_p2)
        assert not h.symmetric

    def test_row_length_mismatch(self, tmp_path):
        d = game_to_dict(Game.from_symmetric([[1, 2], [3, 4]]))
        d["payoff_p1"][1] = [3]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(d))
        with pytest.raises(ValidationError):
            load_game(path)

    def test_nonfinite_entry(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"payoff_p1": [[1, NaN], [0, 0]], "symmetric": true}')
        with pytest.raises(ValidationError):
            load_game(path)

    def test_not_json(self):
        with pytest.raises(ParseError):
            loads_game("{not json")

    def test_missing_field(self):
        with pytest.raises((ParseError, ValidationError)):
            game_from_dict({"symmetric": True})

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_round_trip_property(self, n1, n2, seed):
        rng = np.random.default_rng(seed)
        g = Game(rng.normal(size=(n1, n2)) * 1e3, rng.normal(size=(n2, n1)))
        h = loads_game(dumps_game(g))
        np.testing.assert_array_equal(g.payoff_p1, h.payoff_p1)
        np.testing.assert_array_equal(g.payoff_p2, h.payoff_p2)
