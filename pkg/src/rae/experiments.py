"""Desk-scale experiment runners.

Each runner takes an :class:`ExperimentConfig`, writes CSV/JSON outputs into
``cfg.output_dir`` and a ``manifest.json`` recording the config hash, seeds
and toolkit version. Outputs depend only on the config, so reruns are
byte-identical. Floats are written with ``repr`` to round-trip exactly.

Independent units of work (seeds, games) can fan out over a process pool
(``workers > 1``); results are merged in submission order by one writer.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import __version__
from .envs import StagHuntEnv, nfg_env
from .errors import ConfigurationError, ParseError
from .game import GameGenConfig, anti_coordination, generate_coordination_game, make_risk_dilemma, random_game
from .psro import (
    MetaSolver,
    OracleConfig,
    OracleKind,
    cross_population_eval,
    psro_run,
    save_policies,
)
from .risk import RiskProfile, profile_stats
from .solvers import SolverId, fp_nash, fp_qre, fp_thpe, sfp_rae, uniform_profile

EXPERIMENTS = ("frontier", "stag_hunt", "qre_failure", "sfp_robustness", "psro")

FRONTIER_HEADER = ["seed", "solver", "gamma", "eu", "uvar", "converged"]
ROBUSTNESS_HEADER = ["game_class", "seed", "iteration", "distance_p1", "distance_p2"]
QRE_HEADER = ["solver", "param", "eu", "uvar"]
STAG_HEADER = ["seed", "solver", "episodes", "plants", "captures", "gores", "plant_rate", "capture_rate",
               "gore_rate", "mean_return_p1", "mean_return_p2"]
CROSS_HEADER = ["seed", "population", "seat", "episodes", "plants", "gores", "captures", "mean_return",
                "return_var"]
VISITS_HEADER = ["seed", "solver", "player", "row", "col", "count"]
PSRO_HEADER = ["iteration", "seat", "policy", "probability"]

GAME_CLASSES = ("coordination", "anti_coordination", "random")


@dataclass
class ExperimentConfig:
    """All experiment parameters; unused fields are ignored by a runner.

    Values for keys that several experiments share (``seeds``, ``gamma``,
    ``num_actions``) take experiment-specific defaults from
    :func:`default_config`.
    """

    experiment: str = "frontier"
    output_dir: str = "out"
    seeds: tuple = tuple(range(20))
    workers: int = 1
    # normal-form games
    num_actions: int = 100
    epsilon: float = 0.001
    fp_iters: int = 100
    conv_tol: float = 1e-3
    gammas: tuple = (0.05, 0.1, 0.5, 1.0, 5.0)
    baselines: tuple = ("Nash", "THPE", "QRE", "Uniform")
    tremble: float = 0.001
    qre_temperature: float = 1.0
    # sfp robustness
    gamma: float = 1.0
    game_classes: tuple = GAME_CLASSES
    # qre failure
    dilemma: tuple = (5.0, 20.0, -100.0)
    qre_temperatures: tuple = (0.0, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0)
    rae_gammas: tuple = (1.0, 2.0, 5.0)
    # population training
    env: str = "stag_hunt"
    solvers: tuple = ("RAE", "Nash", "Uniform", "SelfPlay", "THPE", "QRE")
    meta_solver: str = "RAE"
    psro_iters: int = 6
    eval_episodes: int = 64
    test_episodes: int = 1000
    episode_cap: int = 64
    oracle: str = "MeanVariancePG"
    oracle_lam: float = 0.15
    oracle_lr: float = 2.0
    oracle_episodes: int = 20000
    oracle_batch: int = 32
    oracle_discount: float = 0.95
    meta_iters: int = 100
    save_policies: bool = False

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if len(self.seeds) == 0:
            raise ConfigurationError("at least one seed is required")
        if self.experiment == "frontier" and len(self.gammas) == 0:
            raise ConfigurationError("gamma grid must be non-empty for the frontier experiment")
        if self.workers < 1:
            raise ConfigurationError(f"workers must be >= 1, got {self.workers}")
        for name in self.game_classes:
            if name not in GAME_CLASSES:
                raise ConfigurationError(f"unknown game class {name!r}; expected one of {GAME_CLASSES}")
        for name in tuple(self.baselines) + tuple(self.solvers) + (self.meta_solver,):
            try:
                SolverId(name)
            except ValueError:
                raise ConfigurationError(f"unknown solver {name!r}") from None
        RiskProfile(self.gamma, self.epsilon)
        for g in self.gammas + self.rae_gammas:
            RiskProfile(g, self.epsilon)

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v, tuple) else v)
                for f, v in ((f, getattr(self, f.name)) for f in dataclasses.fields(self))}

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


_EXPERIMENT_DEFAULTS = {
    "frontier": {},
    "sfp_robustness": {},
    "qre_failure": {"seeds": (0,)},
    "stag_hunt": {"seeds": tuple(range(5))},
    "psro": {"seeds": (0,), "env": "nfg", "num_actions": 50, "oracle": "ExactNfg", "gamma": 0.5,
             "eval_episodes": 1},
}


def default_config(experiment: str, **overrides) -> ExperimentConfig:
    base = dict(_EXPERIMENT_DEFAULTS.get(experiment, {}))
    base.update(overrides)
    cfg = ExperimentConfig(experiment=experiment, **base)
    cfg.validate()
    return cfg


# -- key = value config files -------------------------------------------------------


def _coerce(name: str, raw: str, typ):
    raw = raw.strip()
    try:
        if typ in ("tuple", tuple):
            return tuple(_scalar(x.strip()) for x in raw.split(",") if x.strip())
        if typ in ("bool", bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if typ in ("int", int):
            return int(raw)
        if typ in ("float", float):
            return float(raw)
        return raw
    except ValueError:
        raise ParseError(f"key '{name}': cannot parse {raw!r} as {typ}") from None


def _scalar(tok: str):
    for conv in (int, float):
        try:
            return conv(tok)
        except ValueError:
            pass
    return tok


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, lists are comma-separated."""
    types = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = (s.strip() for s in body.split("=", 1))
        key = key.replace("-", "_")
        if key not in types:
            raise ParseError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _coerce(key, value, types[key])
        except ParseError as exc:
            raise ParseError(f"{source}:{lineno}: {exc}") from None
    return out


def load_config_file(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), str(path))


# -- output helpers ---------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


class CsvSink:
    """CSV writer with a fixed header that flushes after every block of rows."""

    def __init__(self, path, header):
        self.path = path
        self.header = list(header)
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(self.header)

    def write(self, rows) -> None:
        for row in rows:
            if len(row) != len(self.header):
                raise ValueError(f"row has {len(row)} fields, header has {len(self.header)}")
            self._w.writerow([_fmt(v) for v in row])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def write_manifest(cfg: ExperimentConfig, outputs) -> str:
    path = os.path.join(cfg.output_dir, "manifest.json")
    doc = {
        "experiment": cfg.experiment,
        "toolkit_version": __version__,
        "config_hash": cfg.config_hash(),
        "seeds": list(cfg.seeds),
        "config": {k: v for k, v in cfg.to_dict().items() if k not in ("output_dir", "workers")},
        "outputs": sorted(outputs),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _fan_out(fn: Callable, items, workers: int):
    """Ordered map, optionally over a process pool."""
    if workers <= 1:
        for item in items:
            yield fn(item)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(fn, items)


def _prepare(cfg: ExperimentConfig) -> None:
    cfg.validate()
    os.makedirs(cfg.output_dir, exist_ok=True)


# -- frontier ---------------------------------------------------------------------


def _baseline_profile(game, name: str, cfg: ExperimentConfig):
    if name == "Nash":
        return fp_nash(game, cfg.fp_iters, keep_trace=False)[0]
    if name == "THPE":
        return fp_thpe(game, cfg.tremble, cfg.fp_iters, keep_trace=False)[0]
    if name == "QRE":
        return fp_qre(game, cfg.qre_temperature, cfg.fp_iters, keep_trace=False)[0]
    if name == "Uniform":
        return uniform_profile(game)
    raise ConfigurationError(f"baseline {name!r} is not available for the frontier experiment")


def frontier_seed_rows(seed: int, cfg: ExperimentConfig) -> list:
    """Rows ``(seed, solver, gamma, eu, uvar, converged)`` for one generated game.

    EU and UVar are player 1's; generated games are symmetric.
    """
    game = generate_coordination_game(GameGenConfig(cfg.num_actions, seed))
    rows = []
    for name in cfg.baselines:
        prof = _baseline_profile(game, name, cfg)
        (eu, uvar), _ = profile_stats(game, prof.strategies)
        rows.append((seed, name, None, eu, uvar, prof.converged))
    for gamma in sorted(cfg.gammas):
        prof, _ = sfp_rae(game, RiskProfile(gamma, cfg.epsilon), cfg.fp_iters, cfg.conv_tol, keep_trace=False)
        (eu, uvar), _ = profile_stats(game, prof.strategies)
        rows.append((seed, "RAE", gamma, eu, uvar, prof.converged))
    return rows


def run_frontier(cfg: ExperimentConfig) -> str:
    """Mean/variance of every solver on generated coordination games; returns the CSV path."""
    _prepare(cfg)
    path = os.path.join(cfg.output_dir, "frontier.csv")
    sink = CsvSink(path, FRONTIER_HEADER)
    try:
        for rows in _fan_out(_FrontierTask(cfg), cfg.seeds, cfg.workers):
            sink.write(rows)
    finally:
        sink.close()
    write_manifest(cfg, ["frontier.csv"])
    return path


@dataclass
class _FrontierTask:
    cfg: ExperimentConfig

    def __call__(self, seed):
        return frontier_seed_rows(seed, self.cfg)


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def frontier_dominance(rows, payoff_ranges: dict, tolerance: float = 0.05) -> dict:
    """Evaluate the frontier claims on frontier rows.

    For every seed and baseline, look for a gamma whose RAE row has
    ``eu >= baseline_eu - tolerance * payoff_range`` and strictly lower
    ``uvar``. Also checks that RAE ``uvar`` is non-increasing in gamma.

    Returns:
        ``{"dominated": {baseline: fraction of seeds}, "monotone": {seed: bool}}``.
    """
    by_seed: dict = {}
    for r in rows:
        by_seed.setdefault(int(r["seed"]), []).append(r)
    dominated: dict = {}
    monotone = {}
    for seed, rs in sorted(by_seed.items()):
        rae = sorted(((float(r["gamma"]), float(r["eu"]), float(r["uvar"])) for r in rs if r["solver"] == "RAE"))
        uv = [x[2] for x in rae]
        monotone[seed] = all(b <= a for a, b in zip(uv, uv[1:]))
        slack = tolerance * payoff_ranges[seed]
        for r in rs:
            if r["solver"] == "RAE":
                continue
            eu, uvar = float(r["eu"]), float(r["uvar"])
            ok = any(reu >= eu - slack and ruv < uvar for _, reu, ruv in rae)
            dominated.setdefault(r["solver"], []).append(ok)
    return {"dominated": {k: float(np.mean(v)) for k, v in dominated.items()}, "monotone": monotone}


# -- sfp robustness -----------------------------------------------------------------


def robustness_game(game_class: str, num_actions: int, seed: int):
    if game_class == "coordination":
        return generate_coordination_game(GameGenConfig(num_actions, seed))
    if game_class == "anti_coordination":
        return anti_coordination(generate_coordination_game(GameGenConfig(num_actions, seed)))
    if game_class == "random":
        return random_game(num_actions, seed)
    raise ConfigurationError(f"unknown game class {game_class!r}")


@dataclass
class _RobustnessTask:
    cfg: ExperimentConfig

    def __call__(self, item):
        game_class, seed = item
        game = robustness_game(game_class, self.cfg.num_actions, seed)
        _, trace = sfp_rae(game, RiskProfile(self.cfg.gamma, self.cfg.epsilon), self.cfg.fp_iters,
                           self.cfg.conv_tol, keep_trace=False, early_stop=False)
        return [(game_class, seed, t, d[0], d[1]) for t, d in enumerate(trace.distances, start=1)]


def run_sfp_robustness(cfg: ExperimentConfig) -> str:
    """Per-iteration observed-strategy distances for three game classes."""
    _prepare(cfg)
    path = os.path.join(cfg.output_dir, "sfp_robustness.csv")
    sink = CsvSink(path, ROBUSTNESS_HEADER)
    items = [(c, s) for c in cfg.game_classes for s in cfg.seeds]
    try:
        for rows in _fan_out(_RobustnessTask(cfg), items, cfg.workers):
            sink.write(rows)
    finally:
        sink.close()
    write_manifest(cfg, ["sfp_robustness.csv"])
    return path


def median_final_distance(rows, game_class: str, iteration: int) -> float:
    vals = [max(float(r["distance_p1"]), float(r["distance_p2"])) for r in rows
            if r["game_class"] == game_class and int(r["iteration"]) == iteration]
    return float(np.median(vals)) if vals else float("nan")


# -- qre failure ------------------------------------------------------------------


def qre_failure_rows(cfg: ExperimentConfig) -> list:
    game = make_risk_dilemma(*cfg.dilemma)
    rows = []
    for lam in cfg.qre_temperatures:
        prof, _ = fp_qre(game, lam, cfg.fp_iters, keep_trace=False)
        (eu, uvar), _ = profile_stats(game, prof.strategies)
        rows.append(("QRE", lam, eu, uvar))
    for gamma in cfg.rae_gammas:
        prof, _ = sfp_rae(game, RiskProfile(gamma, cfg.epsilon), cfg.fp_iters, cfg.conv_tol, keep_trace=False)
        (eu, uvar), _ = profile_stats(game, prof.strategies)
        rows.append(("RAE", gamma, eu, uvar))
    return rows


def run_qre_failure(cfg: ExperimentConfig) -> str:
    """Variance of logit-QRE fixed points against RAE on the risk-dilemma game."""
    _prepare(cfg)
    path = os.path.join(cfg.output_dir, "qre_failure.csv")
    sink = CsvSink(path, QRE_HEADER)
    try:
        sink.write(qre_failure_rows(cfg))
    finally:
        sink.close()
    write_manifest(cfg, ["qre_failure.csv"])
    return path


# -- population training ------------------------------------------------------------


def meta_solver_for(name: str, cfg: ExperimentConfig, gamma: float | None = None) -> MetaSolver:
    sid = SolverId(name)
    if sid == SolverId.RAE:
        return MetaSolver.rae(RiskProfile(cfg.gamma if gamma is None else gamma, cfg.epsilon), cfg.meta_iters)
    return MetaSolver(sid, tremble=cfg.tremble, temperature=cfg.qre_temperature, iterations=cfg.meta_iters)


def oracle_for(cfg: ExperimentConfig) -> OracleConfig:
    return OracleConfig(kind=OracleKind(cfg.oracle), lam=cfg.oracle_lam, learning_rate=cfg.oracle_lr,
                        episodes=cfg.oracle_episodes, episode_cap=cfg.episode_cap,
                        batch_episodes=cfg.oracle_batch, discount=cfg.oracle_discount)


def _event_row(seed, solver, summary):
    tot = summary["event_totals"]
    n = summary["episodes"]
    plants, captures, gores = int(sum(tot["plants"])), int(tot["captures"]), int(sum(tot["gores"]))
    return (seed, solver, n, plants, captures, gores, plants / n, captures / n, gores / n,
            summary["mean_return"][0], summary["mean_return"][1])


@dataclass
class _StagTask:
    cfg: ExperimentConfig

    def __call__(self, seed):
        cfg = self.cfg
        env = StagHuntEnv(max_steps=cfg.episode_cap)
        oracle = oracle_for(cfg)
        pops, logs, intra, visits = {}, {}, {}, {}
        for name in cfg.solvers:
            res = psro_run(env, meta_solver_for(name, cfg, gamma=cfg.gamma), oracle, cfg.psro_iters,
                           cfg.eval_episodes, seed)
            pop = res.populations[0]
            pops[name], logs[name] = pop, res.log
            summary = cross_population_eval(pop, pop, env, cfg.test_episodes, (seed, 100), position_counts=True)
            intra[name] = _event_row(seed, name, summary)
            visits[name] = summary["position_counts"]
        cross = []
        if "RAE" in pops and "Nash" in pops:
            s = cross_population_eval(pops["RAE"], pops["Nash"], env, cfg.test_episodes, (seed, 200))
            tot = s["event_totals"]
            for seat, name in enumerate(("RAE", "Nash")):
                cross.append((seed, name, seat, s["episodes"], int(tot["plants"][seat]), int(tot["gores"][seat]),
                              int(tot["captures"]), s["mean_return"][seat], s["return_var"][seat]))
        return seed, intra, visits, cross, logs, pops


def run_stag_hunt(cfg: ExperimentConfig) -> dict:
    """Train populations under every meta-solver and tally stag-hunt events.

    Writes ``stag_hunt_intra.csv`` (each population against itself),
    ``stag_hunt_cross.csv`` (RAE population in seat 0 against the Nash
    population in seat 1), ``stag_hunt_visits.csv`` (cell visit counts),
    and one JSON-lines run log per seed and solver.
    """
    _prepare(cfg)
    paths = {k: os.path.join(cfg.output_dir, f"stag_hunt_{k}.csv") for k in ("intra", "cross", "visits")}
    sinks = {"intra": CsvSink(paths["intra"], STAG_HEADER), "cross": CsvSink(paths["cross"], CROSS_HEADER),
             "visits": CsvSink(paths["visits"], VISITS_HEADER)}
    outputs = [os.path.basename(p) for p in paths.values()]
    try:
        for seed, intra, visits, cross, logs, pops in _fan_out(_StagTask(cfg), cfg.seeds, cfg.workers):
            sinks["intra"].write([intra[n] for n in cfg.solvers])
            sinks["cross"].write(cross)
            vrows = []
            for name in cfg.solvers:
                grid = visits[name]
                for player in (0, 1):
                    for r in range(grid.shape[1]):
                        for c in range(grid.shape[2]):
                            vrows.append((seed, name, player, r, c, int(grid[player, r, c])))
            sinks["visits"].write(vrows)
            for name in cfg.solvers:
                fname = f"psro_log_seed{seed}_{name}.jsonl"
                _write_jsonl(os.path.join(cfg.output_dir, fname), logs[name])
                outputs.append(fname)
                if cfg.save_policies:
                    pname = f"policies_seed{seed}_{name}.json"
                    save_policies(pops[name].policies, os.path.join(cfg.output_dir, pname))
                    outputs.append(pname)
    finally:
        for s in sinks.values():
            s.close()
    write_manifest(cfg, outputs)
    return paths


def _write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def run_psro(cfg: ExperimentConfig) -> dict:
    """One population-training run per seed with a single meta-solver.

    ``env = nfg`` trains on a generated coordination game with
    ``num_actions`` actions; ``env = stag_hunt`` on the grid world.
    """
    _prepare(cfg)
    sink = CsvSink(os.path.join(cfg.output_dir, "psro_meta.csv"), ["seed"] + PSRO_HEADER)
    outputs = ["psro_meta.csv"]
    try:
        for seed in cfg.seeds:
            if cfg.env == "nfg":
                env = nfg_env(generate_coordination_game(GameGenConfig(cfg.num_actions, seed)))
            elif cfg.env == "stag_hunt":
                env = StagHuntEnv(max_steps=cfg.episode_cap)
            else:
                raise ConfigurationError(f"env must be 'nfg' or 'stag_hunt', got {cfg.env!r}")
            res = psro_run(env, meta_solver_for(cfg.meta_solver, cfg), oracle_for(cfg), cfg.psro_iters,
                           cfg.eval_episodes, seed)
            rows = []
            for rec in res.log:
                for seat, dist in enumerate(rec["meta_distribution"]):
                    pops = res.populations[seat]
                    for k, p in enumerate(dist):
                        rows.append((seed, rec["iteration"], seat, pops.policies[k].id, p))
            sink.write(rows)
            fname = f"psro_log_seed{seed}.jsonl"
            res.write_log(os.path.join(cfg.output_dir, fname))
            outputs.append(fname)
            if cfg.save_policies:
                for seat in ((0,) if res.shared else (0, 1)):
                    pname = f"policies_seed{seed}_seat{seat}.json"
                    save_policies(res.populations[seat].policies, os.path.join(cfg.output_dir, pname))
                    outputs.append(pname)
    finally:
        sink.close()
    write_manifest(cfg, outputs)
    return {"dir": cfg.output_dir, "outputs": outputs}


RUNNERS = {
    "frontier": run_frontier,
    "sfp_robustness": run_sfp_robustness,
    "qre_failure": run_qre_failure,
    "stag_hunt": run_stag_hunt,
    "psro": run_psro,
}
