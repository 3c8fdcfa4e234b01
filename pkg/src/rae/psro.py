"""Population training with a pluggable meta-solver.

Each iteration estimates the missing entries of the empirical meta-game by
Monte Carlo rollouts, solves the meta-game for a meta-distribution, then asks
an oracle for a new policy that best responds to that distribution. Symmetric
environments share one population between both seats; asymmetric ones keep
one population per player.

Two oracles are available:

* ``ExactNfg``: on a normal-form environment, the pure action with the best
  mean-variance score against the meta-distribution lifted to the full
  action space;
* ``MeanVariancePG``: tabular softmax REINFORCE on the reward transform
  ``g - lam * g**2 + 2 * lam * g * y``, where ``y`` is the mean per-step
  reward of the current batch.

Only the RAE meta-solver is paired with a risk-averse oracle; every other
meta-solver trains risk-neutral oracles (``lam = 0``, ``gamma = 0``).
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .envs import EnvInterface, NfgEnv
from .errors import ConfigurationError, OracleError, ValidationError
from .game import Game, pure, uniform, validate_strategy
from .risk import RiskProfile, covariance_matrix
from .solvers import SolverId, fp_nash, fp_qre, fp_thpe, sfp_rae

DEFAULT_EVAL_EPISODES = 32
DEFAULT_META_ITERS = 100

# SeedSequence stream tags, so that every random draw has a fixed source.
_TAG_ENTRY, _TAG_ORACLE, _TAG_EVAL = 1, 2, 3


class PolicyKind(str, enum.Enum):
    NFG_PURE = "NfgPure"
    TABULAR = "Tabular"


@dataclass(frozen=True, eq=False)
class PolicyHandle:
    """A fixed policy: a pure normal-form action or a row-stochastic table."""

    kind: PolicyKind
    id: str
    action: int | None = None
    table: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == PolicyKind.NFG_PURE:
            if self.action is None or self.action < 0:
                raise ValidationError(f"policy {self.id}: pure policy needs a non-negative action")
        else:
            t = np.array(self.table, dtype=float)
            if t.ndim != 2 or not np.all(np.isfinite(t)) or (t < 0).any():
                raise ValidationError(f"policy {self.id}: table must be a finite non-negative matrix")
            if np.abs(t.sum(axis=1) - 1.0).max() > 1e-9:
                raise ValidationError(f"policy {self.id}: table rows must sum to 1")
            t.setflags(write=False)
            object.__setattr__(self, "table", t)
            cum = np.cumsum(t, axis=1)
            cum[:, -1] = 1.0
            object.__setattr__(self, "_cum", cum)

    @classmethod
    def pure_action(cls, action: int, id: str) -> "PolicyHandle":
        return cls(PolicyKind.NFG_PURE, id, action=int(action))

    @classmethod
    def tabular(cls, table, id: str) -> "PolicyHandle":
        return cls(PolicyKind.TABULAR, id, table=table)

    @classmethod
    def uniform_random(cls, num_states: int, num_actions: int, id: str = "init") -> "PolicyHandle":
        return cls.tabular(np.full((num_states, num_actions), 1.0 / num_actions), id)

    def act(self, obs: int, rng: np.random.Generator) -> int:
        if self.kind == PolicyKind.NFG_PURE:
            return self.action
        return int(np.searchsorted(self._cum[obs], rng.random(), side="right"))

    def act_batch(self, obs: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`act` given uniform draws ``u``."""
        if self.kind == PolicyKind.NFG_PURE:
            return np.full(obs.shape, self.action, dtype=np.int64)
        return _inverse_cdf(self._cum, obs, u)

    def action_distribution(self, obs: int, num_actions: int) -> np.ndarray:
        if self.kind == PolicyKind.NFG_PURE:
            return pure(num_actions, self.action)
        return np.asarray(self.table[obs], dtype=float)

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "id": self.id}
        if self.kind == PolicyKind.NFG_PURE:
            d["action"] = self.action
        else:
            d["table"] = self.table.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyHandle":
        kind = PolicyKind(d["kind"])
        if kind == PolicyKind.NFG_PURE:
            return cls.pure_action(d["action"], d["id"])
        return cls.tabular(np.asarray(d["table"], dtype=float), d["id"])


def save_policies(policies, path) -> None:
    with open(path, "w") as fh:
        json.dump([p.to_dict() for p in policies], fh)


def load_policies(path) -> list:
    with open(path) as fh:
        return [PolicyHandle.from_dict(d) for d in json.load(fh)]


@dataclass
class Population:
    """One player's policies and its view of the empirical meta-game.

    ``meta_payoffs[i, j]`` is this player's mean return with its policy ``i``
    against opponent policy ``j``; ``samples[(i, j)]`` keeps the raw
    per-episode returns behind the estimate.
    """

    policies: list = field(default_factory=list)
    meta_payoffs: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    payoff_sample_counts: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=int))
    meta_distribution: np.ndarray = field(default_factory=lambda: np.zeros(0))
    samples: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.policies)


class OracleKind(str, enum.Enum):
    EXACT_NFG = "ExactNfg"
    MEAN_VARIANCE_PG = "MeanVariancePG"


@dataclass(frozen=True)
class OracleConfig:
    """Oracle settings.

    Attributes:
        kind: which oracle to run.
        lam: variance aversion of the reward transform (PG oracle only).
        learning_rate: step size on the table logits.
        episodes: training episodes per oracle call.
        episode_cap: step cap per training episode.
        batch_episodes: episodes per gradient step; ``y`` is recomputed per batch.
        discount: return discount for the policy gradient.
    """

    kind: OracleKind = OracleKind.EXACT_NFG
    lam: float = 0.0
    learning_rate: float = 0.1
    episodes: int = 4000
    episode_cap: int = 64
    batch_episodes: int = 32
    discount: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "kind", OracleKind(self.kind))
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ConfigurationError(f"oracle lam must be >= 0, got {self.lam}")
        if not self.learning_rate > 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.episodes < 1 or self.episode_cap < 1 or self.batch_episodes < 1:
            raise ConfigurationError("episodes, episode_cap and batch_episodes must be >= 1")
        if not 0 < self.discount <= 1:
            raise ConfigurationError(f"discount must lie in (0, 1], got {self.discount}")


@dataclass(frozen=True)
class MetaSolver:
    """Meta-solver choice with its parameters."""

    kind: SolverId
    profile: RiskProfile | None = None
    tremble: float = 0.001
    temperature: float = 1.0
    iterations: int = DEFAULT_META_ITERS

    @classmethod
    def rae(cls, profile: RiskProfile, iterations: int = DEFAULT_META_ITERS) -> "MetaSolver":
        return cls(SolverId.RAE, profile=profile, iterations=iterations)

    @classmethod
    def named(cls, name: str, **kw) -> "MetaSolver":
        return cls(SolverId(name), **kw)

    @property
    def risk_averse(self) -> bool:
        return self.kind == SolverId.RAE

    def describe(self) -> dict:
        d = {"solver": self.kind.value}
        if self.kind == SolverId.RAE:
            d.update(gamma=self.profile.gamma, epsilon=self.profile.epsilon)
        elif self.kind == SolverId.THPE:
            d["tremble"] = self.tremble
        elif self.kind == SolverId.QRE:
            d["temperature"] = self.temperature
        return d


def solve_meta_game(meta_game: Game, solver: MetaSolver):
    """Meta-distribution for each player, plus whether the solver converged."""
    n1, n2 = meta_game.num_actions
    k = solver.kind
    if k == SolverId.RAE:
        if solver.profile is None:
            raise ConfigurationError("RAE meta-solver needs a RiskProfile")
        prof, _ = sfp_rae(meta_game, solver.profile, max_iters=solver.iterations, keep_trace=False)
    elif k == SolverId.NASH:
        prof, _ = fp_nash(meta_game, max_iters=solver.iterations, keep_trace=False)
    elif k == SolverId.THPE:
        prof, _ = fp_thpe(meta_game, solver.tremble, max_iters=solver.iterations, keep_trace=False)
    elif k == SolverId.QRE:
        prof, _ = fp_qre(meta_game, solver.temperature, max_iters=solver.iterations, keep_trace=False)
    elif k == SolverId.UNIFORM:
        return (uniform(n1), uniform(n2)), True
    elif k == SolverId.SELFPLAY:
        return (pure(n1, n1 - 1), pure(n2, n2 - 1)), True
    else:  # pragma: no cover - enum is closed
        raise ConfigurationError(f"unknown meta-solver {k}")
    return (np.asarray(prof.strategies[0]), np.asarray(prof.strategies[1])), prof.converged


# -- rollouts ---------------------------------------------------------------------

ROLLOUT_CHUNK = 256


def _inverse_cdf(cum: np.ndarray, obs: np.ndarray, u: np.ndarray) -> np.ndarray:
    rows = cum[obs]
    return np.minimum((rows <= u[:, None]).sum(axis=1), rows.shape[1] - 1)


@dataclass
class BatchRollout:
    """Outcome of one lock-step batch of episodes."""

    returns: np.ndarray
    events: dict
    states: np.ndarray | None = None
    actions: np.ndarray | None = None
    rewards: np.ndarray | None = None


def rollout_batch(env: EnvInterface, seat_policies, seat_choice, rng: np.random.Generator,
                  record: int | None = None, cap: int | None = None, visits: np.ndarray | None = None) -> BatchRollout:
    """Run ``len(seat_choice[0])`` episodes in lock-step.

    Args:
        env: the environment (its :meth:`batch` twin does the work).
        seat_policies: per seat, a list of policies (anything with ``act_batch``).
        seat_choice: per seat, an int array giving each episode's policy index.
        rng: source of reset layouts, respawns and action draws.
        record: seat whose observations, actions and rewards are kept.
        cap: optional step cap.
        visits: optional ``(2, size, size)`` grid visit counter (grid envs).
    """
    B = len(seat_choice[0])
    benv = env.batch(B)
    obs = benv.reset(rng)
    returns = np.zeros((B, 2))
    events: dict = {}
    traj_s, traj_a, traj_r = [], [], []
    groups = [[(k, np.flatnonzero(seat_choice[i] == k)) for k in np.unique(seat_choice[i])] for i in (0, 1)]
    steps = 0
    done = False
    while not done:
        u = rng.random((B, 2))
        acts = np.empty((B, 2), dtype=np.int64)
        for i in (0, 1):
            for k, rows in groups[i]:
                acts[rows, i] = seat_policies[i][k].act_batch(obs[rows, i], u[rows, i])
        if record is not None:
            traj_s.append(obs[:, record])
            traj_a.append(acts[:, record])
        obs, rewards, done, ev = benv.step(acts)
        returns += rewards
        if record is not None:
            traj_r.append(rewards[:, record])
        for key, val in ev.items():
            events[key] = events.get(key, 0) + val
        if visits is not None:
            for i in (0, 1):
                np.add.at(visits[i], (benv.players[:, i, 0], benv.players[:, i, 1]), 1)
        steps += 1
        if cap is not None and steps >= cap:
            break
    out = BatchRollout(returns, events)
    if record is not None:
        out.states = np.array(traj_s)
        out.actions = np.array(traj_a)
        out.rewards = np.array(traj_r)
    return out


def estimate_meta_entry(policy_a: PolicyHandle, policy_b: PolicyHandle, env: EnvInterface,
                        episodes: int, seed):
    """Monte Carlo estimate of both players' mean episode return.

    Returns:
        ``(means, samples)`` with ``means`` of shape ``(2,)`` and the raw
        per-episode returns ``samples`` of shape ``(episodes, 2)``.
    """
    if episodes < 1:
        raise ConfigurationError(f"episodes must be >= 1, got {episodes}")
    rng = np.random.default_rng(np.random.SeedSequence(_seed_words(seed)))
    chunks = []
    for start in range(0, episodes, ROLLOUT_CHUNK):
        B = min(ROLLOUT_CHUNK, episodes - start)
        zero = np.zeros(B, dtype=np.int64)
        chunks.append(rollout_batch(env, ([policy_a], [policy_b]), (zero, zero), rng).returns)
    samples = np.concatenate(chunks)
    return samples.mean(axis=0), samples


def _seed_words(seed) -> list:
    words = list(seed) if isinstance(seed, (tuple, list)) else [seed]
    return [int(w) for w in words]


# -- oracles ----------------------------------------------------------------------


def lifted_mixture(policies, meta_distribution, num_actions: int) -> np.ndarray:
    """Action distribution induced by a meta-distribution over one-state policies."""
    mix = np.zeros(num_actions)
    for p, w in zip(policies, meta_distribution):
        mix += w * p.action_distribution(0, num_actions)
    return mix / mix.sum()


def exact_nfg_oracle(meta_distribution, support, game: Game, profile: RiskProfile | None = None,
                     player: int = 0, id: str | None = None) -> PolicyHandle:
    """Best pure action against the lifted opponent meta-distribution.

    Args:
        meta_distribution: opponent meta-distribution over ``support``.
        support: the opponent's policies (pure or one-state tabular).
        game: the full game.
        profile: mean-variance weights; ``None`` means risk-neutral.
        player: which seat the new policy plays.

    The score of action ``a`` is ``u_a - gamma * C_aa`` (the total utility
    of the point mass ``e_a``); ties go to the lowest index.
    """
    M = game.payoff(player)
    n_own, n_opp = M.shape
    q = lifted_mixture(support, validate_strategy(meta_distribution, len(support)), n_opp)
    gamma = 0.0 if profile is None else profile.gamma
    scores = M @ q
    if gamma > 0:
        scores = scores - gamma * np.diag(covariance_matrix(q, M))
    a = int(np.argmax(scores))
    return PolicyHandle.pure_action(a, id if id is not None else f"a{a}")


def augment_reward(g, lam: float, y: float):
    """Mean-variance reward transform ``g - lam*g^2 + 2*lam*g*y``."""
    g = np.asarray(g, dtype=float)
    return g - lam * g * g + 2.0 * lam * g * y


def _softmax_rows(theta: np.ndarray) -> np.ndarray:
    z = theta - theta.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def mean_variance_pg_oracle(opponent_policies, opponent_meta_distribution, env: EnvInterface,
                            cfg: OracleConfig, seed, player: int = 0, lam: float | None = None,
                            id: str = "pg") -> PolicyHandle:
    """Train a tabular softmax policy by REINFORCE on the transformed reward.

    Opponents are drawn per episode from ``opponent_meta_distribution``.
    Each batch of ``cfg.batch_episodes`` episodes recomputes ``y`` as the mean
    per-step reward of the batch, transforms every reward, and takes one
    gradient step with a per-timestep mean baseline.

    Raises:
        OracleError: the logits or the gradient became non-finite.
    """
    lam = cfg.lam if lam is None else lam
    meta = validate_strategy(opponent_meta_distribution, len(opponent_policies))
    S, A = env.num_states, env.num_actions[player]
    rng = np.random.default_rng(np.random.SeedSequence(_seed_words(seed)))
    theta = np.zeros((S, A))
    B = cfg.batch_episodes
    n_batches = -(-cfg.episodes // B)
    learner_seat = np.zeros(B, dtype=np.int64)
    for b in range(n_batches):
        probs = _softmax_rows(theta)
        learner = _LivePolicy(probs)
        opp_choice = rng.choice(len(opponent_policies), size=B, p=meta)
        seats = ([learner], list(opponent_policies)) if player == 0 else (list(opponent_policies), [learner])
        choice = (learner_seat, opp_choice) if player == 0 else (opp_choice, learner_seat)
        ro = rollout_batch(env, seats, choice, rng, record=player, cap=cfg.episode_cap)
        g = ro.rewards  # (T, B)
        y = float(g.mean())
        g_hat = augment_reward(g, lam, y)
        G = np.zeros_like(g_hat)
        acc = np.zeros(B)
        for t in range(g_hat.shape[0] - 1, -1, -1):
            acc = g_hat[t] + cfg.discount * acc
            G[t] = acc
        adv = (G - G.mean(axis=1, keepdims=True)).ravel()
        s_all = ro.states.ravel()
        a_all = ro.actions.ravel()
        grad = np.zeros_like(theta)
        np.add.at(grad, (s_all, a_all), adv)
        np.add.at(grad, s_all, -adv[:, None] * probs[s_all])
        grad /= B
        if not np.all(np.isfinite(grad)):
            raise OracleError("non-finite policy gradient", iteration=b)
        theta += cfg.learning_rate * grad
        if not np.all(np.isfinite(theta)):
            raise OracleError("non-finite policy logits", iteration=b)
    return PolicyHandle.tabular(_softmax_rows(theta), id)


class _LivePolicy:
    """Sampling view of a probability table being trained."""

    def __init__(self, probs):
        self.cum = np.cumsum(probs, axis=1)
        self.cum[:, -1] = 1.0

    def act_batch(self, obs, u):
        return _inverse_cdf(self.cum, obs, u)


# -- evaluation -------------------------------------------------------------------


def cross_population_eval(pop_a: Population, pop_b: Population, env: EnvInterface, episodes: int, seed,
                          position_counts: bool = False) -> dict:
    """Roll out policies sampled from each population's meta-distribution.

    Population ``a`` takes seat 0 and ``b`` seat 1; one policy per seat is
    drawn for every episode. The summary holds the per-seat mean and
    variance of episode returns, per-episode event rates and raw event
    totals. With ``position_counts`` set on a grid environment, per-seat cell
    visit counts are included. Zero episodes give an empty summary.
    """
    if episodes <= 0:
        return {}
    rng = np.random.default_rng(np.random.SeedSequence(_seed_words(seed) + [_TAG_EVAL]))
    size = getattr(env, "size", None)
    visits = np.zeros((2, size, size), dtype=np.int64) if position_counts and size else None
    returns, totals = [], {}
    for start in range(0, episodes, ROLLOUT_CHUNK):
        B = min(ROLLOUT_CHUNK, episodes - start)
        ca = rng.choice(pop_a.size, size=B, p=pop_a.meta_distribution)
        cb = rng.choice(pop_b.size, size=B, p=pop_b.meta_distribution)
        ro = rollout_batch(env, (pop_a.policies, pop_b.policies), (ca, cb), rng, visits=visits)
        returns.append(ro.returns)
        for key, val in ro.events.items():
            totals[key] = totals.get(key, 0) + np.asarray(val).sum(axis=0)
    returns = np.concatenate(returns)
    out = {
        "episodes": episodes,
        "mean_return": returns.mean(axis=0).tolist(),
        "return_var": returns.var(axis=0).tolist(),
        "event_totals": {k: np.asarray(v).tolist() for k, v in totals.items()},
        "event_rates": {k: (np.asarray(v) / episodes).tolist() for k, v in totals.items()},
    }
    if visits is not None:
        out["position_counts"] = visits
    return out


# -- the main loop ----------------------------------------------------------------


def meta_game_checksum(populations) -> str:
    h = hashlib.sha256()
    for pop in populations:
        h.update(np.ascontiguousarray(pop.meta_payoffs, dtype="<f8").tobytes())
    return h.hexdigest()


def _grow(pop: Population, rows: int, cols: int) -> None:
    P = np.zeros((rows, cols))
    N = np.zeros((rows, cols), dtype=int)
    r, c = pop.meta_payoffs.shape
    P[:r, :c] = pop.meta_payoffs
    N[:r, :c] = pop.payoff_sample_counts
    pop.meta_payoffs, pop.payoff_sample_counts = P, N


def _fill_meta_game(pops, env, episodes, seed, shared: bool) -> None:
    """Estimate every meta-game entry not yet known; old entries are kept."""
    p0, p1 = pops
    _grow(p0, p0.size, p1.size)
    if not shared:
        _grow(p1, p1.size, p0.size)
    for i in range(p0.size):
        for j in range(p1.size):
            if p0.payoff_sample_counts[i, j] > 0:
                continue
            means, samples = estimate_meta_entry(p0.policies[i], p1.policies[j], env, episodes,
                                                 (seed, _TAG_ENTRY, i, j))
            p0.meta_payoffs[i, j] = means[0]
            p0.payoff_sample_counts[i, j] = episodes
            p0.samples[(i, j)] = samples[:, 0]
            if shared:
                if i != j and p0.payoff_sample_counts[j, i] == 0:
                    # the same rollouts give the mirrored entry
                    p0.meta_payoffs[j, i] = means[1]
                    p0.payoff_sample_counts[j, i] = episodes
                    p0.samples[(j, i)] = samples[:, 1]
            else:
                p1.meta_payoffs[j, i] = means[1]
                p1.payoff_sample_counts[j, i] = episodes
                p1.samples[(j, i)] = samples[:, 1]


def _initial_policy(env: EnvInterface, player: int) -> PolicyHandle:
    return PolicyHandle.uniform_random(env.num_states, env.num_actions[player], "init")


@dataclass
class PsroResult:
    populations: tuple
    log: list
    shared: bool

    def write_log(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.log:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def psro_run(env: EnvInterface, meta_solver: MetaSolver, oracle: OracleConfig, iterations: int,
             eval_episodes: int = DEFAULT_EVAL_EPISODES, seed: int = 0, shared: bool | None = None) -> PsroResult:
    """Grow populations for ``iterations`` rounds.

    Args:
        env: the environment; ``ExactNfg`` needs an :class:`NfgEnv`.
        meta_solver: how meta-distributions are computed.
        oracle: oracle settings. Its ``lam`` (and the RAE profile's gamma for
            the exact oracle) only applies with the RAE meta-solver.
        iterations: number of oracle rounds; final populations hold
            ``iterations + 1`` policies.
        eval_episodes: rollouts per meta-game entry.
        seed: master seed; the run is a pure function of its arguments.
        shared: single population for both seats; defaults to
            ``env.symmetric``. Asymmetric environments cannot share.

    Returns:
        :class:`PsroResult` whose ``populations`` holds one entry per seat
        (the same object twice when shared) and whose ``log`` has one record
        per iteration.
    """
    if iterations < 1:
        raise ConfigurationError(f"iterations must be >= 1, got {iterations}")
    if eval_episodes < 1:
        raise ConfigurationError(f"eval_episodes must be >= 1, got {eval_episodes}")
    shared = env.symmetric if shared is None else shared
    if shared and not env.symmetric:
        raise ConfigurationError("a shared population needs a symmetric environment")
    exact = oracle.kind == OracleKind.EXACT_NFG
    if exact and not isinstance(env, NfgEnv):
        raise ConfigurationError("the ExactNfg oracle needs a normal-form environment")
    risk_averse = meta_solver.risk_averse
    oracle_profile = meta_solver.profile if risk_averse else None
    oracle_lam = oracle.lam if risk_averse else 0.0

    if shared:
        pop = Population(policies=[_initial_policy(env, 0)])
        pops = (pop, pop)
    else:
        pops = (Population(policies=[_initial_policy(env, 0)]), Population(policies=[_initial_policy(env, 1)]))
    log = []
    for t in range(1, iterations + 1):
        _fill_meta_game(pops, env, eval_episodes, seed, shared)
        meta_game = _meta_game(pops, shared)
        dists, converged = solve_meta_game(meta_game, meta_solver)
        seats = (0,) if shared else (0, 1)
        for i in seats:
            pops[i].meta_distribution = dists[i]
        new = []
        for i in seats:
            opp = pops[1 - i]
            pid = f"p{i}-{t}" if not shared else f"pop-{t}"
            if exact:
                pol = exact_nfg_oracle(dists[1 - i], opp.policies, env.game, oracle_profile, player=i, id=pid)
            else:
                pol = mean_variance_pg_oracle(opp.policies, dists[1 - i], env, oracle, (seed, _TAG_ORACLE, t, i),
                                              player=i, lam=oracle_lam, id=pid)
            new.append(pol)
        for i, pol in zip(seats, new):
            pops[i].policies.append(pol)
        log.append({
            "iteration": t,
            "meta_solver": meta_solver.describe(),
            "meta_solver_converged": bool(converged),
            "population_sizes": [pops[0].size, pops[1].size],
            "meta_distribution": [dists[i].tolist() for i in seats],
            "new_policy_ids": [p.id for p in new],
            "new_policy_actions": [p.action for p in new] if exact else None,
            "meta_game_checksum": meta_game_checksum(pops if not shared else (pops[0],)),
        })
    # final meta-game and distribution over the complete populations
    _fill_meta_game(pops, env, eval_episodes, seed, shared)
    dists, converged = solve_meta_game(_meta_game(pops, shared), meta_solver)
    for i in ((0,) if shared else (0, 1)):
        pops[i].meta_distribution = dists[i]
    log.append({
        "iteration": iterations + 1,
        "final": True,
        "meta_solver": meta_solver.describe(),
        "meta_solver_converged": bool(converged),
        "population_sizes": [pops[0].size, pops[1].size],
        "meta_distribution": [dists[i].tolist() for i in ((0,) if shared else (0, 1))],
        "meta_game_checksum": meta_game_checksum(pops if not shared else (pops[0],)),
    })
    return PsroResult(pops, log, shared)


def _meta_game(pops, shared: bool) -> Game:
    if shared:
        return Game.from_symmetric(pops[0].meta_payoffs)
    return Game(pops[0].meta_payoffs, pops[1].meta_payoffs)
