"""Risk-averse equilibria for two-player games.

Modules:
    game: normal-form games, generators, JSON I/O.
    risk: expected utility, opponent-weighted covariance, mean-variance utility.
    qp: the mean-variance best response and its brute-force oracle.
    solvers: fictitious-play dynamics (RAE and baselines).
    envs: normal-form and stag-hunt environments.
    psro: population training with meta-solvers and oracles.
    experiments: desk-scale experiment runners.
    cli: command-line entry point.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    CapabilityError,
    ConfigurationError,
    NumericalIntegrityError,
    OracleError,
    ParseError,
    RAEError,
    SolverError,
    ValidationError,
)
from .game import Game, GameGenConfig, generate_coordination_game, load_game, make_risk_dilemma, save_game  # noqa: F401
from .qp import brute_force_best_response, check_min_variance, risk_averse_best_response  # noqa: F401
from .risk import (  # noqa: F401
    RiskProfile,
    action_means,
    expected_utility,
    strategy_variance,
    total_utility,
    weighted_covariance,
)
from .solvers import EquilibriumProfile, SolverId, SolverTrace, fp_nash, fp_qre, fp_thpe, sfp_rae  # noqa: F401
