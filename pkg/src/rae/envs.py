"""Two-player environments for population training.

Every environment exposes ``reset(seed)`` and ``step(actions)`` for a single
episode, plus ``batch(num_envs)`` returning a vectorized twin that steps many
episodes in lock-step (all episodes in a batch have the same length).
Observations are small integers indexing a policy table row.

Two implementations:

* :class:`NfgEnv` wraps a normal-form game as a one-step episode;
* :class:`StagHuntEnv` is a 5x5 grid with two players, one stag and two
  plants. Plants pay +2. Meeting the stag together pays +5 each; meeting it
  alone costs 2 (a "gore"). The stag steps toward the nearest player every
  turn.

Stag-hunt step order: players move (moving off the grid is a no-op), stag
contact is resolved, plants are collected, then the stag moves (unless it
just respawned) and contact is resolved again. When the stag moves onto a
cell holding both players, that counts as a joint capture. Because players
move before the stag, a player and the stag can never swap cells without
one of the two contact checks firing.

The single-episode :class:`StagHuntEnv` runs the batched code with one
episode, so both paths share every rule.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ValidationError
from .game import Game

LEFT, RIGHT, UP, DOWN = 0, 1, 2, 3
ACTION_NAMES = ("left", "right", "up", "down")
MOVES = np.array([(0, -1), (0, 1), (-1, 0), (1, 0)])

EMPTY, PLAYER, STAG, PLANT = 0, 1, 2, 3

PLANT_REWARD = 2.0
CAPTURE_REWARD = 5.0
GORE_COST = 2.0

OBS_ENCODING_VERSION = "stag-features-v1"
DEFAULT_MAX_STEPS = 64


class EnvInterface(ABC):
    """Contract shared by all environments."""

    num_players = 2

    @property
    @abstractmethod
    def num_actions(self) -> tuple[int, int]:
        """Action count of each player."""

    @property
    @abstractmethod
    def num_states(self) -> int:
        """Size of the observation index space (rows of a policy table)."""

    @property
    def symmetric(self) -> bool:
        return False

    @abstractmethod
    def reset(self, seed) -> tuple[int, int]:
        """Start an episode; returns each player's observation index."""

    @abstractmethod
    def step(self, actions):
        """Advance one step.

        Returns:
            ``(observations, rewards, done, events)`` where ``rewards`` is a
            pair of floats and ``events`` maps counter names to per-step counts.
        """

    @abstractmethod
    def batch(self, num_envs: int) -> "BatchEnv":
        """A vectorized copy running ``num_envs`` episodes in lock-step."""


class BatchEnv(ABC):
    """Lock-step vectorized episodes.

    ``reset(rng)`` returns observations of shape ``(B, 2)``;
    ``step(actions)`` takes ``(B, 2)`` actions and returns
    ``(obs, rewards, done, events)`` with ``rewards`` of shape ``(B, 2)``, a
    scalar ``done`` and ``events`` mapping names to per-episode arrays.
    """

    num_envs: int

    @abstractmethod
    def reset(self, rng: np.random.Generator) -> np.ndarray: ...

    @abstractmethod
    def step(self, actions: np.ndarray): ...


# -- normal-form games ------------------------------------------------------------


class NfgEnv(EnvInterface):
    """One-shot environment around a normal-form game."""

    def __init__(self, game: Game):
        self.game = game

    @property
    def num_actions(self):
        return self.game.num_actions

    @property
    def num_states(self):
        return 1

    @property
    def symmetric(self):
        return self.game.symmetric

    def reset(self, seed=None):
        return 0, 0

    def step(self, actions):
        a, b = (int(x) for x in actions)
        n1, n2 = self.game.num_actions
        if not (0 <= a < n1 and 0 <= b < n2):
            raise ValidationError(f"joint action {(a, b)} out of range for a {n1}x{n2} game")
        rewards = (float(self.game.payoff_p1[a, b]), float(self.game.payoff_p2[b, a]))
        return (0, 0), rewards, True, {}

    def batch(self, num_envs: int) -> "NfgBatch":
        return NfgBatch(self.game, num_envs)


class NfgBatch(BatchEnv):
    def __init__(self, game: Game, num_envs: int):
        self.game = game
        self.num_envs = num_envs

    def reset(self, rng=None):
        return np.zeros((self.num_envs, 2), dtype=np.int64)

    def step(self, actions):
        actions = np.asarray(actions, dtype=np.int64)
        a, b = actions[:, 0], actions[:, 1]
        n1, n2 = self.game.num_actions
        if (a < 0).any() or (a >= n1).any() or (b < 0).any() or (b >= n2).any():
            raise ValidationError(f"joint actions out of range for a {n1}x{n2} game")
        rewards = np.column_stack([self.game.payoff_p1[a, b], self.game.payoff_p2[b, a]])
        return self.reset(), rewards, True, {}


def nfg_env(game: Game) -> NfgEnv:
    return NfgEnv(game)


# -- stag hunt -------------------------------------------------------------------


@dataclass
class StagHuntState:
    """One stag-hunt layout; positions are ``(row, col)`` tuples."""

    players: list
    stag: tuple
    plants: list
    step: int = 0
    size: int = 5

    def grid(self) -> np.ndarray:
        """Cell codes; players drawn over the stag, the stag over plants."""
        g = np.zeros((self.size, self.size), dtype=int)
        for p in self.plants:
            g[p] = PLANT
        g[self.stag] = STAG
        for p in self.players:
            g[p] = PLAYER
        return g

    def copy(self) -> "StagHuntState":
        return StagHuntState(list(self.players), tuple(self.stag), list(self.plants), self.step, self.size)

    def to_dict(self) -> dict:
        return {"players": [list(p) for p in self.players], "stag": list(self.stag),
                "plants": [list(p) for p in self.plants], "step": self.step}


def manhattan(a, b) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


# The per-episode rules live in these compiled kernels so that the single
# and batched environments share one implementation.


@njit(cache=True)
def _sign(x):
    return (x > 0) - (x < 0)


@njit(cache=True)
def _dir(dr, dc):
    return (_sign(dr) + 1) * 3 + (_sign(dc) + 1)


@njit(cache=True)
def _nearest_player(stag, players):
    d0 = abs(players[0, 0] - stag[0]) + abs(players[0, 1] - stag[1])
    d1 = abs(players[1, 0] - stag[0]) + abs(players[1, 1] - stag[1])
    return 0 if d0 <= d1 else 1


@njit(cache=True)
def _move_stag(stag, players, size):
    t = _nearest_player(stag, players)
    tr, tc = players[t, 0], players[t, 1]
    cur = abs(stag[0] - tr) + abs(stag[1] - tc)
    for m in range(4):
        r = stag[0] + MOVES[m, 0]
        c = stag[1] + MOVES[m, 1]
        if 0 <= r < size and 0 <= c < size and abs(r - tr) + abs(c - tc) < cur:
            stag[0] = r
            stag[1] = c
            return


@njit(cache=True)
def _free_cell(occ, size, u):
    """The ``floor(u * free)``-th unoccupied cell in row-major order."""
    nfree = 0
    for cell in range(size * size):
        if not occ[cell]:
            nfree += 1
    k = min(int(u * nfree), nfree - 1)
    for cell in range(size * size):
        if not occ[cell]:
            if k == 0:
                return cell // size, cell % size
            k -= 1
    return -1, -1


@njit(cache=True)
def _occupancy(size, players, stag, plants, skip_stag, skip_plant):
    occ = np.zeros(size * size, dtype=np.bool_)
    for i in range(2):
        occ[players[i, 0] * size + players[i, 1]] = True
    if not skip_stag:
        occ[stag[0] * size + stag[1]] = True
    for k in range(2):
        if k != skip_plant:
            occ[plants[k, 0] * size + plants[k, 1]] = True
    return occ


@njit(cache=True)
def _contact(players, stag, plants, size, u, rew, plants_ev, gores, b):
    on0 = players[0, 0] == stag[0] and players[0, 1] == stag[1]
    on1 = players[1, 0] == stag[0] and players[1, 1] == stag[1]
    if not (on0 or on1):
        return 0, False
    captured = 0
    if on0 and on1:
        rew[b, 0] += CAPTURE_REWARD
        rew[b, 1] += CAPTURE_REWARD
        captured = 1
    elif on0:
        rew[b, 0] -= GORE_COST
        gores[b, 0] += 1
    else:
        rew[b, 1] -= GORE_COST
        gores[b, 1] += 1
    occ = _occupancy(size, players, stag, plants, True, -1)
    r, c = _free_cell(occ, size, u)
    stag[0] = r
    stag[1] = c
    return captured, True


@njit(cache=True)
def _step_kernel(players, stag, plants, actions, u, size, rew, plants_ev, captures, gores):
    for b in range(players.shape[0]):
        P = players[b]
        S = stag[b]
        L = plants[b]
        for i in range(2):
            r = P[i, 0] + MOVES[actions[b, i], 0]
            c = P[i, 1] + MOVES[actions[b, i], 1]
            if 0 <= r < size and 0 <= c < size:
                P[i, 0] = r
                P[i, 1] = c
        cap, respawned = _contact(P, S, L, size, u[b, 0], rew, plants_ev, gores, b)
        captures[b] += cap
        for k in range(2):
            hit = False
            for i in range(2):
                if P[i, 0] == L[k, 0] and P[i, 1] == L[k, 1]:
                    rew[b, i] += PLANT_REWARD
                    plants_ev[b, i] += 1
                    hit = True
            if hit:
                occ = _occupancy(size, P, S, L, False, k)
                r, c = _free_cell(occ, size, u[b, 1 + k])
                L[k, 0] = r
                L[k, 1] = c
        if not respawned:
            _move_stag(S, P, size)
            cap, _ = _contact(P, S, L, size, u[b, 3], rew, plants_ev, gores, b)
            captures[b] += cap


@njit(cache=True)
def _obs_kernel(players, stag, plants, out):
    for b in range(players.shape[0]):
        for i in range(2):
            mr, mc = players[b, i, 0], players[b, i, 1]
            d = abs(stag[b, 0] - mr) + abs(stag[b, 1] - mc)
            bucket = 0 if d <= 1 else (1 if d == 2 else 2)
            d0 = abs(plants[b, 0, 0] - mr) + abs(plants[b, 0, 1] - mc)
            d1 = abs(plants[b, 1, 0] - mr) + abs(plants[b, 1, 1] - mc)
            k = 0 if d0 <= d1 else 1
            sd = _dir(stag[b, 0] - mr, stag[b, 1] - mc)
            pd = _dir(plants[b, k, 0] - mr, plants[b, k, 1] - mc)
            md = _dir(players[b, 1 - i, 0] - mr, players[b, 1 - i, 1] - mc)
            out[b, i] = ((sd * 3 + bucket) * 9 + pd) * 9 + md


def stag_move(stag, players, size: int = 5) -> tuple:
    """Next stag cell: one step toward the nearest player.

    Ties between players go to the lower index; among moves that close the
    distance, priority is left, right, up, down. A stag already on its
    target stays.
    """
    s = np.array(stag, dtype=np.int64)
    _move_stag(s, np.array(players, dtype=np.int64), size)
    return int(s[0]), int(s[1])


class StagHuntBatch(BatchEnv):
    """Vectorized stag hunt; arrays hold ``(row, col)`` pairs.

    ``players`` has shape ``(B, 2, 2)``, ``stag`` ``(B, 2)`` and ``plants``
    ``(B, 2, 2)``. Each step draws four uniforms per episode from the
    generator (stag contact, two plants, second stag contact); a respawn
    takes the ``floor(u * free)``-th free cell in row-major order.
    """

    num_states = 9 * 3 * 9 * 9

    def __init__(self, num_envs: int, size: int = 5, max_steps: int = DEFAULT_MAX_STEPS):
        if size < 3:
            raise ValidationError(f"grid size must be >= 3, got {size}")
        self.num_envs = num_envs
        self.size = size
        self.max_steps = max_steps
        self.rng = np.random.default_rng(0)
        self.t = 0
        self.players = np.zeros((num_envs, 2, 2), dtype=np.int64)
        self.stag = np.zeros((num_envs, 2), dtype=np.int64)
        self.plants = np.zeros((num_envs, 2, 2), dtype=np.int64)

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.rng = rng
        B, n = self.num_envs, self.size
        cells = np.argsort(rng.random((B, n * n)), axis=1)[:, :5]
        pos = np.stack(np.divmod(cells, n), axis=-1).astype(np.int64)
        self.players = np.ascontiguousarray(pos[:, 0:2])
        self.stag = np.ascontiguousarray(pos[:, 2])
        self.plants = np.ascontiguousarray(pos[:, 3:5])
        self.t = 0
        return self.observations()

    def load(self, players, stag, plants, t: int = 0) -> np.ndarray:
        self.players = np.array(players, dtype=np.int64).reshape(self.num_envs, 2, 2)
        self.stag = np.array(stag, dtype=np.int64).reshape(self.num_envs, 2)
        self.plants = np.array(plants, dtype=np.int64).reshape(self.num_envs, 2, 2)
        self.t = t
        return self.observations()

    def observations(self) -> np.ndarray:
        """``((stag_dir*3 + bucket)*9 + plant_dir)*9 + partner_dir`` per player."""
        out = np.empty((self.num_envs, 2), dtype=np.int64)
        _obs_kernel(self.players, self.stag, self.plants, out)
        return out

    def step(self, actions):
        actions = np.ascontiguousarray(actions, dtype=np.int64).reshape(self.num_envs, 2)
        if (actions < 0).any() or (actions > 3).any():
            raise ValidationError("stag-hunt actions must be in 0..3")
        B = self.num_envs
        u = self.rng.random((B, 4))
        rewards = np.zeros((B, 2))
        events = {"plants": np.zeros((B, 2), dtype=np.int64), "captures": np.zeros(B, dtype=np.int64),
                  "gores": np.zeros((B, 2), dtype=np.int64)}
        _step_kernel(self.players, self.stag, self.plants, actions, u, self.size, rewards,
                     events["plants"], events["captures"], events["gores"])
        self.t += 1
        return self.observations(), rewards, self.t >= self.max_steps, events


class StagHuntEnv(EnvInterface):
    """5x5 stag-hunt grid world (single episode).

    Observation of player ``i`` (``stag-features-v1``): the sign of the row
    and column offset to the stag (9 values), the stag distance bucket
    (1, 2, 3+), the sign offset to the nearest plant (9 values; ties go to
    the lower plant index), and the sign offset to the partner (9 values):
    ``((stag_dir * 3 + stag_bucket) * 9 + plant_dir) * 9 + partner_dir``.
    """

    def __init__(self, size: int = 5, max_steps: int = DEFAULT_MAX_STEPS):
        self.size = size
        self.max_steps = max_steps
        self._core = StagHuntBatch(1, size, max_steps)
        self._ready = False

    @property
    def num_actions(self):
        return 4, 4

    @property
    def num_states(self):
        return StagHuntBatch.num_states

    @property
    def symmetric(self):
        return True

    def batch(self, num_envs: int) -> StagHuntBatch:
        return StagHuntBatch(num_envs, self.size, self.max_steps)

    @property
    def state(self) -> StagHuntState | None:
        if not self._ready:
            return None
        c = self._core
        as_t = lambda a: (int(a[0]), int(a[1]))  # noqa: E731
        return StagHuntState([as_t(c.players[0, 0]), as_t(c.players[0, 1])], as_t(c.stag[0]),
                             [as_t(c.plants[0, 0]), as_t(c.plants[0, 1])], c.t, self.size)

    def reset(self, seed=None):
        obs = self._core.reset(np.random.default_rng(seed))
        self._ready = True
        return int(obs[0, 0]), int(obs[0, 1])

    def set_state(self, state: StagHuntState, seed=None):
        """Install an explicit layout; ``seed`` drives later respawns."""
        self._core.rng = np.random.default_rng(seed)
        obs = self._core.load(state.players, state.stag, state.plants, state.step)
        self._ready = True
        return int(obs[0, 0]), int(obs[0, 1])

    def observations(self):
        obs = self._core.observations()
        return int(obs[0, 0]), int(obs[0, 1])

    def step(self, actions):
        if not self._ready:
            raise ValidationError("call reset() before step()")
        a = [int(x) for x in actions]
        if any(not 0 <= x < 4 for x in a):
            raise ValidationError(f"stag-hunt actions must be in 0..3, got {tuple(a)}")
        obs, rewards, done, ev = self._core.step(np.array([a]))
        events = {"plants": ev["plants"][0].tolist(), "captures": int(ev["captures"][0]),
                  "gores": ev["gores"][0].tolist()}
        return (int(obs[0, 0]), int(obs[0, 1])), (float(rewards[0, 0]), float(rewards[0, 1])), done, events


def stag_hunt_reset(seed, size: int = 5) -> StagHuntState:
    env = StagHuntEnv(size)
    env.reset(seed)
    return env.state


def stag_hunt_step(state: StagHuntState, actions, seed=None):
    """Functional single step: returns ``(new_state, rewards, events)``.

    ``seed`` drives the respawn positions.
    """
    env = StagHuntEnv(state.size)
    env.set_state(state, seed)
    _, rewards, _, events = env.step(actions)
    return env.state, rewards, events


def write_trace_jsonl(states, path) -> None:
    """Episode trace export: one JSON object per visited state."""
    with open(path, "w") as fh:
        for st in states:
            fh.write(json.dumps(st.to_dict()) + "\n")
