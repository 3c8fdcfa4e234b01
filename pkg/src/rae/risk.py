"""Mean-variance utility of a mixed strategy against an opponent mixture.

The risk term is the variance (not the standard deviation) of a player's
conditional payoff when the opponent's action is drawn from its mixed
strategy. Variance keeps the objective quadratic in the player's own strategy,
which is what the best-response QP in :mod:`rae.qp` relies on.

For own actions ``j, k`` and opponent mixture ``q``::

    mean_j  = sum_b q_b M[j, b]
    C[j, k] = sum_b q_b (M[j, b] - mean_j) (M[k, b] - mean_k)

so ``sigma @ C @ sigma`` is the variance over the opponent's action of the
payoff ``sigma @ M[:, b]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalIntegrityError, ValidationError
from .game import Game, validate_strategy

NEGATIVE_CLAMP = 1e-8


@dataclass(frozen=True)
class RiskProfile:
    """Risk-aversion weight ``gamma`` and probability floor ``epsilon``."""

    gamma: float = 1.0
    epsilon: float = 0.001

    def __post_init__(self):
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ConfigurationError(f"gamma must be finite and >= 0, got {self.gamma}")
        if not np.isfinite(self.epsilon) or self.epsilon < 0 or self.epsilon >= 1:
            raise ConfigurationError(f"epsilon must lie in [0, 1), got {self.epsilon}")

    def check(self, num_actions: int) -> None:
        """Raise unless the floor leaves a feasible simplex for ``num_actions``."""
        if num_actions > 1 and self.epsilon * num_actions >= 1:
            raise ConfigurationError(
                f"epsilon={self.epsilon} infeasible for {num_actions} actions (epsilon*|A| must be < 1)"
            )


@dataclass(frozen=True, eq=False)
class WeightedCovariance:
    """Opponent-weighted payoff covariance over own actions."""

    matrix: np.ndarray
    opponent_strategy: np.ndarray

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def _matrix(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValidationError(f"payoff matrix must be 2-D, got shape {M.shape}")
    return M


def _check_opp(varsigma, M: np.ndarray) -> np.ndarray:
    q = validate_strategy(varsigma)
    if q.size != M.shape[1]:
        raise ValidationError(f"opponent strategy has {q.size} entries, payoff matrix has {M.shape[1]} columns")
    return q


def _check_own(sigma, n: int) -> np.ndarray:
    s = validate_strategy(sigma)
    if s.size != n:
        raise ValidationError(f"strategy has {s.size} entries, payoff matrix has {n} rows")
    return s


def expected_utility(sigma, varsigma, M) -> float:
    """``sigma @ M @ varsigma``."""
    M = _matrix(M)
    q = _check_opp(varsigma, M)
    s = _check_own(sigma, M.shape[0])
    return float(s @ M @ q)


def action_means(varsigma, M) -> np.ndarray:
    """Expected payoff of each own action against ``varsigma``."""
    M = _matrix(M)
    q = _check_opp(varsigma, M)
    return M @ q


def covariance_matrix(q: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Unchecked core of :func:`weighted_covariance` for hot loops."""
    D = M - (M @ q)[:, None]
    C = (D * q) @ D.T
    return 0.5 * (C + C.T)


def weighted_covariance(varsigma, M) -> WeightedCovariance:
    M = _matrix(M)
    q = _check_opp(varsigma, M)
    C = covariance_matrix(q, M)
    C.setflags(write=False)
    return WeightedCovariance(C, q)


def clamp_variance(v: float, scale: float = 1.0) -> float:
    """Zero out round-off negatives; raise on genuinely negative values.

    The clamp threshold is ``NEGATIVE_CLAMP * max(1, scale)`` so large payoff
    magnitudes do not trip it.
    """
    if v >= 0:
        return float(v)
    if v >= -NEGATIVE_CLAMP * max(1.0, scale):
        return 0.0
    raise NumericalIntegrityError(f"quadratic form is negative ({v:.3e}); covariance is not PSD")


def strategy_variance(sigma, cov) -> float:
    """``sigma @ C @ sigma`` for a :class:`WeightedCovariance` or a raw matrix."""
    C = cov.matrix if isinstance(cov, WeightedCovariance) else _matrix(cov)
    if C.shape[0] != C.shape[1]:
        raise ValidationError(f"covariance must be square, got {C.shape}")
    s = _check_own(sigma, C.shape[0])
    scale = float(np.abs(C).max()) if C.size else 0.0
    return clamp_variance(float(s @ C @ s), scale)


def total_utility(sigma, varsigma, M, profile: RiskProfile) -> float:
    """Expected utility minus ``gamma`` times the strategy variance."""
    eu = expected_utility(sigma, varsigma, M)
    if profile.gamma == 0:
        return eu
    return eu - profile.gamma * strategy_variance(sigma, weighted_covariance(varsigma, M))


# -- per-player forms for (possibly asymmetric) games ---------------------------


def player_expected_utility(game: Game, player: int, own, opponent) -> float:
    return expected_utility(own, opponent, game.payoff(player))


def player_covariance(game: Game, player: int, opponent) -> WeightedCovariance:
    return weighted_covariance(opponent, game.payoff(player))


def player_variance(game: Game, player: int, own, opponent) -> float:
    return strategy_variance(own, player_covariance(game, player, opponent))


def player_total_utility(game: Game, player: int, own, opponent, profile: RiskProfile) -> float:
    return total_utility(own, opponent, game.payoff(player), profile)


def profile_stats(game: Game, strategies) -> list[tuple[float, float]]:
    """``(eu, uvar)`` of each player's strategy against the other's."""
    out = []
    for player in (0, 1):
        own, opp = strategies[player], strategies[1 - player]
        out.append((player_expected_utility(game, player, own, opp), player_variance(game, player, own, opp)))
    return out
