"""Two-player normal-form games: representation, generators and JSON I/O.

Payoff matrices are stored from each player's own point of view: rows index
the player's own actions and columns the opponent's. For a symmetric game both
players share one matrix.

Random games are drawn with numpy's PCG64 generator
(``numpy.random.default_rng(seed)``), whose bit stream is fixed across
platforms, so a seed always reproduces the same game.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from os import PathLike
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ParseError, ValidationError

PROB_ATOL = 1e-9


def validate_strategy(probs, num_actions: int | None = None, epsilon: float = 0.0) -> np.ndarray:
    """Return ``probs`` as a float array after checking it is a valid mixed strategy.

    Raises:
        ValidationError: wrong length, negative entries, entries below the
            ``epsilon`` floor or a sum different from one.
    """
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValidationError(f"strategy must be a non-empty vector, got shape {p.shape}")
    if num_actions is not None and p.size != num_actions:
        raise ValidationError(f"strategy has {p.size} entries, expected {num_actions}")
    if not np.all(np.isfinite(p)):
        raise ValidationError("strategy has non-finite entries")
    if p.min() < epsilon - PROB_ATOL:
        raise ValidationError(f"strategy entry {p.min():.3g} below floor {epsilon}")
    if abs(p.sum() - 1.0) > PROB_ATOL:
        raise ValidationError(f"strategy sums to {p.sum():.12g}, expected 1")
    return p


def uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def pure(n: int, index: int) -> np.ndarray:
    e = np.zeros(n)
    e[index] = 1.0
    return e


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Game:
    """A finite two-player normal-form game.

    Attributes:
        payoff_p1: shape (n1, n2), player 1's utility for (own action, opponent action).
        payoff_p2: shape (n2, n1), player 2's utility for (own action, opponent action).
        symmetric: both players share the action set and ``payoff_p1``.
    """

    payoff_p1: np.ndarray
    payoff_p2: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        p1 = _frozen(self.payoff_p1)
        p2 = _frozen(self.payoff_p2)
        if p1.ndim != 2 or p2.ndim != 2 or p1.size == 0:
            raise ValidationError("payoff matrices must be non-empty 2-D arrays")
        if p2.shape != (p1.shape[1], p1.shape[0]):
            raise ValidationError(
                f"payoff_p2 shape {p2.shape} incompatible with payoff_p1 shape {p1.shape}"
            )
        if not (np.all(np.isfinite(p1)) and np.all(np.isfinite(p2))):
            raise ValidationError("payoff entries must be finite")
        if self.symmetric and (p1.shape[0] != p1.shape[1] or not np.array_equal(p1, p2)):
            raise ValidationError("symmetric game requires square payoff_p1 equal to payoff_p2")
        object.__setattr__(self, "payoff_p1", p1)
        object.__setattr__(self, "payoff_p2", p2)

    @classmethod
    def from_symmetric(cls, matrix) -> "Game":
        m = np.asarray(matrix, dtype=float)
        return cls(m, m, symmetric=True)

    @property
    def num_actions_p1(self) -> int:
        return self.payoff_p1.shape[0]

    @property
    def num_actions_p2(self) -> int:
        return self.payoff_p2.shape[0]

    @property
    def num_actions(self) -> tuple[int, int]:
        return self.payoff_p1.shape[0], self.payoff_p2.shape[0]

    def payoff(self, player: int) -> np.ndarray:
        """Own-perspective payoff matrix of ``player`` (0 or 1)."""
        if player not in (0, 1):
            raise ValidationError(f"player index must be 0 or 1, got {player}")
        return self.payoff_p1 if player == 0 else self.payoff_p2

    def payoff_range(self) -> float:
        lo = min(self.payoff_p1.min(), self.payoff_p2.min())
        hi = max(self.payoff_p1.max(), self.payoff_p2.max())
        return float(hi - lo)

    def __eq__(self, other):
        if not isinstance(other, Game):
            return NotImplemented
        return (
            self.symmetric == other.symmetric
            and np.array_equal(self.payoff_p1, other.payoff_p1)
            and np.array_equal(self.payoff_p2, other.payoff_p2)
        )

    __hash__ = None


@dataclass(frozen=True)
class GameGenConfig:
    """Parameters of the random coordination-game generator."""

    num_actions: int
    seed: int = 0
    coordination_range: tuple[float, float] = (5.0, 15.0)
    risky_offdiag_range: tuple[float, float] = (-10.0, 15.0)
    safe_offdiag_range: tuple[float, float] = (0.0, 10.0)
    risky_quantile: float = 0.9

    def validate(self) -> None:
        if not isinstance(self.num_actions, (int, np.integer)) or self.num_actions < 2:
            raise ConfigurationError(f"num_actions must be an integer >= 2, got {self.num_actions!r}")
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        for name in ("coordination_range", "risky_offdiag_range", "safe_offdiag_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ConfigurationError(f"{name} must satisfy lower < upper, got ({lo}, {hi})")
        if not 0.0 < self.risky_quantile < 1.0:
            raise ConfigurationError(f"risky_quantile must lie in (0, 1), got {self.risky_quantile}")


def risky_actions(cfg: GameGenConfig, diagonal_draws: Sequence[float]) -> np.ndarray:
    """Boolean mask of actions whose coordination draw passes the risk gate.

    The gate compares the CDF of the coordination distribution at the draw
    against ``risky_quantile``; for U(5, 15) at 0.9 this is ``draw > 14``.
    """
    lo, hi = cfg.coordination_range
    cdf = (np.asarray(diagonal_draws, dtype=float) - lo) / (hi - lo)
    return cdf > cfg.risky_quantile


def generate_coordination_game(cfg: GameGenConfig, return_draws: bool = False):
    """Sample a symmetric coordination game.

    For every action ``i`` in order: draw the coordination payoff, store its
    absolute value on the diagonal, then draw every off-diagonal pair
    ``(i, j) = (j, i)`` from the risky or the safe range depending on the gate.
    Later actions overwrite the pairs they share with earlier ones, exactly as
    the sequential loop does.

    Args:
        cfg: generator configuration.
        return_draws: also return the raw diagonal draws.

    Returns:
        The game, or ``(game, draws)`` when ``return_draws`` is set.
    """
    cfg.validate()
    n = int(cfg.num_actions)
    rng = np.random.default_rng(int(cfg.seed))
    P = np.zeros((n, n))
    draws = np.empty(n)
    for i in range(n):
        p_ii = rng.uniform(*cfg.coordination_range)
        draws[i] = p_ii
        P[i, i] = abs(p_ii)
        lo, hi = cfg.risky_offdiag_range if risky_actions(cfg, [p_ii])[0] else cfg.safe_offdiag_range
        for j in range(n):
            if j == i:
                continue
            p_ij = rng.uniform(lo, hi)
            P[i, j] = P[j, i] = p_ij
    game = Game.from_symmetric(P)
    return (game, draws) if return_draws else game


def make_risk_dilemma(safe_payoff: float, coord_payoff: float, crash_payoff: float) -> Game:
    """Two-action "stay in lane / overtake" game.

    Staying earns ``safe_payoff`` whatever the opponent does; overtaking earns
    ``coord_payoff`` against a staying opponent and ``crash_payoff`` when both
    overtake.
    """
    if not crash_payoff < safe_payoff < coord_payoff:
        raise ConfigurationError(
            "risk dilemma requires crash_payoff < safe_payoff < coord_payoff, "
            f"got ({safe_payoff}, {coord_payoff}, {crash_payoff})"
        )
    return Game.from_symmetric([[safe_payoff, safe_payoff], [coord_payoff, crash_payoff]])


def anti_coordination(game: Game) -> Game:
    """Copy of a symmetric game with its diagonal negated."""
    m = np.array(game.payoff_p1)
    np.fill_diagonal(m, -np.diag(m))
    return Game.from_symmetric(m)


def random_game(num_actions: int, seed: int, low: float = -10.0, high: float = 15.0) -> Game:
    """Unstructured game with independent uniform payoffs for both players."""
    rng = np.random.default_rng(seed)
    p1 = rng.uniform(low, high, size=(num_actions, num_actions))
    p2 = rng.uniform(low, high, size=(num_actions, num_actions))
    return Game(p1, p2, symmetric=False)


# -- serialization -----------------------------------------------------------


def game_to_dict(g: Game) -> dict:
    d = {"symmetric": bool(g.symmetric), "payoff_p1": g.payoff_p1.tolist()}
    if not g.symmetric:
        d["payoff_p2"] = g.payoff_p2.tolist()
    return d


def _matrix_field(data: dict, name: str) -> np.ndarray:
    rows = data.get(name)
    if not isinstance(rows, list) or not rows:
        raise ValidationError(f"field '{name}': expected a non-empty list of rows")
    width = None
    for r, row in enumerate(rows):
        if not isinstance(row, list):
            raise ValidationError(f"field '{name}[{r}]': expected a list of numbers")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ValidationError(
                f"field '{name}[{r}]': row length {len(row)} differs from first row length {width}"
            )
        for c, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ValidationError(f"field '{name}[{r}][{c}]': not a number ({v!r})")
            if not math.isfinite(v):
                raise ValidationError(f"field '{name}[{r}][{c}]': non-finite entry {v!r}")
    return np.array(rows, dtype=float)


def game_from_dict(data) -> Game:
    if not isinstance(data, dict):
        raise ValidationError("game document must be a JSON object")
    symmetric = data.get("symmetric")
    if not isinstance(symmetric, bool):
        raise ValidationError("field 'symmetric': expected true or false")
    p1 = _matrix_field(data, "payoff_p1")
    if symmetric:
        if "payoff_p2" in data:
            p2 = _matrix_field(data, "payoff_p2")
            if not np.array_equal(p1, p2):
                raise ValidationError("field 'payoff_p2': must equal payoff_p1 for a symmetric game")
        return Game(p1, p1, symmetric=True)
    if "payoff_p2" not in data:
        raise ValidationError("field 'payoff_p2': required when symmetric is false")
    return Game(p1, _matrix_field(data, "payoff_p2"), symmetric=False)


def dumps_game(g: Game) -> str:
    # repr-based float formatting round-trips IEEE doubles exactly.
    return json.dumps(game_to_dict(g), allow_nan=False) + "\n"


def loads_game(text: str) -> Game:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return game_from_dict(data)


def save_game(g: Game, path: str | PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_game(g))


def load_game(path: str | PathLike) -> Game:
    with open(path, encoding="utf-8") as fh:
        return loads_game(fh.read())
