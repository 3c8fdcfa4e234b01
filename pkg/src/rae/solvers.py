"""Fictitious-play dynamics on two-player normal-form games.

All solvers share one loop: starting from uniform beliefs, each player
responds to the opponent's time-average strategy, then both beliefs are
updated simultaneously. The response rule is what distinguishes them:

* ``sfp_rae``  - mean-variance QP best response (the RAE dynamics);
* ``fp_nash``  - exact argmax, lowest index on ties;
* ``fp_thpe``  - argmax with a fixed tremble on every other action;
* ``fp_qre``   - logit (softmax) response with temperature ``lambda_q``.

A baseline run is declared converged when both players' observed strategies
have moved by at most ``conv_tol`` for ``patience`` consecutive iterations and
the observed profile is a fixed point of the response rule (each observed
strategy is within ``conv_tol`` of the response to the other). The second
check stops argmax dynamics from halting inside a long run of a cycle.
SFP-RAE instead certifies the observed profile as a mutual best response.
Non-convergence is reported, not raised.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError
from .game import Game, pure, uniform
from .qp import DEFAULT_TOL, solve_mean_variance_qp
from .risk import RiskProfile, clamp_variance, covariance_matrix

PATIENCE = 5


class SolverId(str, enum.Enum):
    RAE = "RAE"
    NASH = "Nash"
    THPE = "THPE"
    QRE = "QRE"
    UNIFORM = "Uniform"
    SELFPLAY = "SelfPlay"


@dataclass
class SolverTrace:
    """Per-iteration record of one fictitious-play run.

    ``beliefs[t-1]`` is the pair of time averages after iteration ``t``;
    ``observed[t-1]`` the responses played at iteration ``t``; and
    ``distances[t-1]`` the Euclidean move of each player's observed strategy
    (against the initial uniform belief at ``t = 1``).
    """

    beliefs: list = field(default_factory=list)
    observed: list = field(default_factory=list)
    distances: list = field(default_factory=list)
    iterations_run: int = 0

    def rows(self, game: Game):
        """Yield ``(iteration, player, distance, entropy, eu, var)`` tuples."""
        for t, (obs, dist) in enumerate(zip(self.observed, self.distances), start=1):
            for player in (0, 1):
                own, opp = obs[player], obs[1 - player]
                M = game.payoff(player)
                nz = own[own > 0]
                entropy = float(-(nz * np.log(nz)).sum())
                C = covariance_matrix(opp, M)
                var = clamp_variance(float(own @ C @ own), float(np.abs(C).max()))
                yield t, player, float(dist[player]), entropy, float(own @ M @ opp), var

    def write_csv(self, game: Game, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "player", "distance", "entropy", "eu", "var"])
            for row in self.rows(game):
                w.writerow([row[0], row[1]] + [repr(v) for v in row[2:]])


@dataclass
class EquilibriumProfile:
    strategies: tuple
    solver_id: SolverId
    params: dict
    converged: bool
    final_distance: float

    @property
    def gamma(self):
        return self.params.get("gamma")

    @property
    def epsilon(self):
        return self.params.get("epsilon")


Responder = Callable[[int, np.ndarray], np.ndarray]


def fictitious_play(game: Game, respond: Responder, max_iters: int, conv_tol: float,
                    patience: int = PATIENCE, keep_trace: bool = True):
    """Run simultaneous fictitious play with the given response rule.

    Returns:
        ``(last_observed, beliefs, trace, converged)``.
    """
    if max_iters < 1:
        raise ConfigurationError(f"max_iters must be >= 1, got {max_iters}")
    n1, n2 = game.num_actions
    beliefs = [uniform(n1), uniform(n2)]
    prev = [beliefs[0].copy(), beliefs[1].copy()]
    trace = SolverTrace()
    streak = 0
    converged = False
    observed = prev
    # one-action games have nothing to iterate
    trivial = n1 == 1 and n2 == 1
    for t in range(1, max_iters + 1):
        if game.symmetric and np.array_equal(beliefs[0], beliefs[1]):
            s = respond(0, beliefs[1])
            observed = [s, s.copy()]
        else:
            observed = [respond(0, beliefs[1]), respond(1, beliefs[0])]
        dist = (float(np.linalg.norm(observed[0] - prev[0])), float(np.linalg.norm(observed[1] - prev[1])))
        for i in (0, 1):
            beliefs[i] = beliefs[i] + (observed[i] - beliefs[i]) / t
        if keep_trace:
            trace.beliefs.append((beliefs[0].copy(), beliefs[1].copy()))
            trace.observed.append((observed[0], observed[1]))
        trace.distances.append(dist)
        trace.iterations_run = t
        prev = observed
        streak = streak + 1 if max(dist) <= conv_tol else 0
        if trivial or (streak >= patience and _is_fixed_point(respond, observed, conv_tol)):
            converged = True
            break
    return observed, beliefs, trace, converged


def _is_fixed_point(respond: Responder, observed, tol: float) -> bool:
    return all(np.abs(respond(i, observed[1 - i]) - observed[i]).max() <= tol for i in (0, 1))


def _final_distance(trace: SolverTrace) -> float:
    return max(trace.distances[-1]) if trace.distances else 0.0


def rae_responder(game: Game, profile: RiskProfile, tol: float = DEFAULT_TOL) -> Responder:
    for player in (0, 1):
        profile.check(game.num_actions[player])

    def respond(player, opp_belief):
        M = game.payoff(player)
        res = solve_mean_variance_qp(M @ opp_belief, covariance_matrix(opp_belief, M),
                                     profile.gamma, profile.epsilon, tol)
        return res.strategy

    return respond


def _kkt_system(game: Game, profile: RiskProfile, free):
    """Residual function of the joint best-response KKT conditions on fixed free sets."""
    eps, gamma = profile.epsilon, profile.gamma
    sizes = game.num_actions

    def unpack(z):
        out, k = [], 0
        for i in (0, 1):
            s = np.full(sizes[i], eps)
            m = free[i].size
            s[free[i]] = z[k:k + m]
            out.append((s, z[k + m]))
            k += m + 1
        return out

    def residual(z):
        parts = unpack(z)
        res = []
        for i in (0, 1):
            s, nu = parts[i]
            q = parts[1 - i][0]
            M = game.payoff(i)
            u = M @ q
            D = M[free[i]] - u[free[i], None]
            Dall = M - u[:, None]
            grad = u[free[i]] - 2.0 * gamma * ((D * q) @ (Dall.T @ s))
            res.append(grad - nu)
            res.append([s.sum() - 1.0])
        return np.concatenate(res)

    return residual, unpack


def refine_equilibrium(game: Game, profile: RiskProfile, strategies, radius: float = 0.05,
                       gap_tol: float = 1e-9, qp_tol: float = DEFAULT_TOL):
    """Newton-solve the joint KKT system near ``strategies``.

    The free sets (entries above the floor) are read off ``strategies``. The
    solution is accepted only if it stays within ``radius`` (max-norm) of the
    starting point and certifies as a mutual best response within
    ``gap_tol``.

    Returns:
        ``(refined_strategies, gap)``, or ``None`` when refinement fails.
    """
    from scipy.optimize import root

    eps = profile.epsilon
    free = [np.flatnonzero(np.asarray(s) > eps + 1e-9) for s in strategies]
    if any(f.size == 0 for f in free):
        return None
    residual, unpack = _kkt_system(game, profile, free)
    z0 = []
    for i in (0, 1):
        s = np.asarray(strategies[i], dtype=float)
        M = game.payoff(i)
        q = np.asarray(strategies[1 - i], dtype=float)
        u = M @ q
        grad = u - 2.0 * profile.gamma * (covariance_matrix(q, M) @ s)
        z0.extend(s[free[i]])
        z0.append(grad[free[i]].mean())
    with np.errstate(all="ignore"):
        sol = root(residual, np.array(z0), method="hybr", options={"xtol": 1e-14})
    if not np.all(np.isfinite(sol.x)):
        return None
    refined = [p[0] for p in unpack(sol.x)]
    for i in (0, 1):
        s = refined[i]
        if s.min() < eps - 1e-10 or abs(s.sum() - 1.0) > 1e-9:
            return None
        s = np.maximum(s, eps)
        refined[i] = s / s.sum() if eps == 0 else s
        if np.abs(refined[i] - np.asarray(strategies[i])).max() > radius:
            return None
    try:
        gap = best_response_gap(game, refined, profile, qp_tol)
    except Exception:  # noqa: BLE001 - any QP failure just means "not certified"
        return None
    if gap > gap_tol:
        return None
    return (refined[0], refined[1]), gap


def sfp_rae(game: Game, profile: RiskProfile, max_iters: int = 100, conv_tol: float = 1e-3,
            qp_tol: float = DEFAULT_TOL, gap_tol: float = 1e-9, refine: bool = True,
            keep_trace: bool = True, early_stop: bool = True):
    """Stochastic fictitious play with mean-variance best responses.

    Beliefs start uniform and both players respond simultaneously. When the
    observed strategies have moved by at most ``conv_tol`` for ``PATIENCE``
    consecutive iterations, the current observed profile is certified as a
    risk-averse equilibrium: it must be a mutual best response within
    ``gap_tol``. With ``refine`` set, a Newton solve of the joint KKT system
    first moves the profile onto the nearby exact fixed point. Uncertified
    runs keep iterating and report ``converged=False`` at ``max_iters``.
    With ``early_stop`` off, all ``max_iters`` iterations run and
    certification is attempted once at the end.

    Returns:
        ``(EquilibriumProfile, SolverTrace)``; the profile holds the
        certified (or last observed) strategies, the trace the raw dynamics.
    """
    respond = rae_responder(game, profile, qp_tol)
    n1, n2 = game.num_actions
    beliefs = [uniform(n1), uniform(n2)]
    prev = [beliefs[0].copy(), beliefs[1].copy()]
    trace = SolverTrace()
    observed = prev
    streak = 0
    params = {"gamma": profile.gamma, "epsilon": profile.epsilon}
    for t in range(1, max_iters + 1):
        if game.symmetric and np.array_equal(beliefs[0], beliefs[1]):
            s = respond(0, beliefs[1])
            observed = [s, s.copy()]
        else:
            observed = [respond(0, beliefs[1]), respond(1, beliefs[0])]
        dist = (float(np.linalg.norm(observed[0] - prev[0])), float(np.linalg.norm(observed[1] - prev[1])))
        for i in (0, 1):
            beliefs[i] = beliefs[i] + (observed[i] - beliefs[i]) / t
        if keep_trace:
            trace.beliefs.append((beliefs[0].copy(), beliefs[1].copy()))
            trace.observed.append((observed[0], observed[1]))
        trace.distances.append(dist)
        trace.iterations_run = t
        prev = observed
        streak = streak + 1 if max(dist) <= conv_tol else 0
        due = _attempt_due(streak) if early_stop else (t == max_iters and streak >= PATIENCE)
        if (n1 == 1 and n2 == 1) or due:
            cert = _certify(game, profile, observed, qp_tol, gap_tol, refine)
            if cert is not None:
                strategies, gap, final = cert
                return EquilibriumProfile(strategies, SolverId.RAE, {**params, "gap": gap},
                                          True, final), trace
    prof = EquilibriumProfile((observed[0], observed[1]), SolverId.RAE, params, False, _final_distance(trace))
    return prof, trace


def _attempt_due(streak: int) -> bool:
    # certification is tried at streaks of PATIENCE, 2*PATIENCE, 4*PATIENCE, ...
    k, r = divmod(streak, PATIENCE)
    return r == 0 and k > 0 and (k & (k - 1)) == 0


def _certify(game, profile, observed, qp_tol, gap_tol, refine):
    strategies = (observed[0], observed[1])
    gap = best_response_gap(game, strategies, profile, qp_tol)
    if gap > gap_tol:
        if not refine:
            return None
        out = refine_equilibrium(game, profile, strategies, gap_tol=gap_tol, qp_tol=qp_tol)
        if out is None:
            return None
        strategies, gap = out
    respond = rae_responder(game, profile, qp_tol)
    final = max(float(np.linalg.norm(respond(i, strategies[1 - i]) - strategies[i])) for i in (0, 1))
    return strategies, gap, final


def _argmax_response(game: Game, tremble: float = 0.0) -> Responder:
    def respond(player, opp_belief):
        values = game.payoff(player) @ opp_belief
        n = values.size
        k = int(np.argmax(values))
        if tremble == 0.0:
            return pure(n, k)
        s = np.full(n, tremble)
        s[k] = 1.0 - (n - 1) * tremble
        return s

    return respond


def softmax(values: np.ndarray, temperature: float) -> np.ndarray:
    z = temperature * np.asarray(values, dtype=float)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _belief_profile(game, solver_id, params, max_iters, conv_tol, respond, keep_trace):
    # converged runs report the observed fixed point, others the time averages
    observed, beliefs, trace, converged = fictitious_play(game, respond, max_iters, conv_tol, keep_trace=keep_trace)
    out = observed if converged else beliefs
    prof = EquilibriumProfile((out[0], out[1]), solver_id, params, converged, _final_distance(trace))
    return prof, trace


def fp_nash(game: Game, max_iters: int = 100, conv_tol: float = 1e-8, keep_trace: bool = True):
    """Classical fictitious play; the time-average beliefs are the profile."""
    return _belief_profile(game, SolverId.NASH, {}, max_iters, conv_tol, _argmax_response(game), keep_trace)


def fp_thpe(game: Game, tremble: float = 0.001, max_iters: int = 100, conv_tol: float = 1e-8,
            keep_trace: bool = True):
    """Fictitious play with trembling-hand responses.

    Every non-argmax action receives exactly ``tremble``; the argmax gets
    the remaining ``1 - (n-1) * tremble``.
    """
    for n in game.num_actions:
        if tremble < 0 or (n > 1 and tremble * n >= 1):
            raise ConfigurationError(f"tremble={tremble} infeasible for {n} actions")
    return _belief_profile(game, SolverId.THPE, {"tremble": tremble}, max_iters, conv_tol,
                           _argmax_response(game, tremble), keep_trace)


def fp_qre(game: Game, temperature: float = 1.0, max_iters: int = 100, conv_tol: float = 1e-8,
           keep_trace: bool = True):
    """Fictitious play with logit responses ``softmax(temperature * M @ belief)``."""
    if not np.isfinite(temperature) or temperature < 0:
        raise ConfigurationError(f"temperature must be finite and >= 0, got {temperature}")

    def respond(player, opp_belief):
        return softmax(game.payoff(player) @ opp_belief, temperature)

    return _belief_profile(game, SolverId.QRE, {"temperature": temperature}, max_iters, conv_tol,
                           respond, keep_trace)


def uniform_profile(game: Game) -> EquilibriumProfile:
    n1, n2 = game.num_actions
    return EquilibriumProfile((uniform(n1), uniform(n2)), SolverId.UNIFORM, {}, True, 0.0)


def selfplay_profile(game: Game) -> EquilibriumProfile:
    """Point mass on each player's most recent (highest-index) action."""
    n1, n2 = game.num_actions
    return EquilibriumProfile((pure(n1, n1 - 1), pure(n2, n2 - 1)), SolverId.SELFPLAY, {}, True, 0.0)


def exploitability(game: Game, profile) -> float:
    """Largest gain any player can get by deviating to a best response (expected utility)."""
    strategies = getattr(profile, "strategies", profile)
    gains = []
    for player in (0, 1):
        own = np.asarray(strategies[player], dtype=float)
        opp = np.asarray(strategies[1 - player], dtype=float)
        values = game.payoff(player) @ opp
        gains.append(float(values.max() - own @ values))
    return max(0.0, max(gains))


def best_response_gap(game: Game, strategies, profile: RiskProfile, qp_tol: float = DEFAULT_TOL) -> float:
    """Largest mean-variance objective improvement available to either player.

    Zero (up to solver tolerance) exactly when the profile is a risk-averse
    equilibrium.
    """
    gaps = []
    for player in (0, 1):
        own = np.asarray(strategies[player], dtype=float)
        opp = np.asarray(strategies[1 - player], dtype=float)
        M = game.payoff(player)
        u = M @ opp
        C = covariance_matrix(opp, M)
        best = solve_mean_variance_qp(u, C, profile.gamma, profile.epsilon, qp_tol)
        current = float(u @ own - profile.gamma * (own @ C @ own))
        gaps.append(best.objective_value - current)
    return max(gaps)
