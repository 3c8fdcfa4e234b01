"""Command-line entry point (``rae``).

Every subcommand exits 0 on success. On failure it prints one JSON object
``{"error": <type>, "message": <text>}`` to stderr and exits nonzero:

    1  internal or numerical failure
    2  invalid arguments or configuration
    3  unparseable input file
    4  file-system error

Experiment subcommands accept ``--config FILE`` in ``key = value`` format
(``#`` comments, comma-separated lists; keys are the fields of
:class:`rae.experiments.ExperimentConfig`). Command-line flags override the
file, which overrides the per-experiment defaults.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .errors import ConfigurationError, NumericalIntegrityError, ParseError, RAEError, SolverError, ValidationError
from .experiments import RUNNERS, default_config, load_config_file
from .game import (
    GameGenConfig,
    anti_coordination,
    dumps_game,
    generate_coordination_game,
    load_game,
    make_risk_dilemma,
    random_game,
)
from .risk import RiskProfile, profile_stats
from .solvers import SolverId, fp_nash, fp_qre, fp_thpe, selfplay_profile, sfp_rae, uniform_profile

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_PARSE, EXIT_IO = 0, 1, 2, 3, 4


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _experiment_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--out", dest="output_dir", help="output directory")
    p.add_argument("--seed", type=int, help="run a single seed")
    p.add_argument("--seeds", type=_int_list, help="comma-separated seed list")
    p.add_argument("--gamma", type=float, help="variance aversion")
    p.add_argument("--gammas", type=_float_list, help="comma-separated gamma grid (frontier)")
    p.add_argument("--epsilon", type=float, help="probability floor")
    p.add_argument("--iterations", type=int,
                   help="fictitious-play iterations, or population-training iterations for stag-hunt/psro")
    p.add_argument("--actions", dest="num_actions", type=int, help="actions per player in generated games")
    p.add_argument("--workers", type=int, help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rae", description="Risk-averse equilibrium toolkit.")
    parser.add_argument("--version", action="version", version=f"rae {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-game", help="generate a game as JSON")
    g.add_argument("--kind", choices=("coordination", "anti_coordination", "random", "risk_dilemma"),
                   default="coordination")
    g.add_argument("--actions", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--dilemma", type=_float_list, default=(5.0, 20.0, -100.0),
                   help="safe,coordination,crash payoffs for risk_dilemma")
    g.add_argument("--out", help="output file (default stdout)")

    s = sub.add_parser("solve", help="solve a game file")
    s.add_argument("game", help="game JSON file")
    s.add_argument("--solver", default="RAE", choices=[x.value for x in SolverId])
    s.add_argument("--gamma", type=float, default=1.0)
    s.add_argument("--epsilon", type=float, default=0.001)
    s.add_argument("--iterations", type=int, default=100)
    s.add_argument("--tremble", type=float, default=0.001)
    s.add_argument("--temperature", type=float, default=1.0)
    s.add_argument("--out", help="output file (default stdout)")

    for name in ("frontier", "stag-hunt", "sfp-robustness", "qre-failure", "psro"):
        _experiment_args(sub.add_parser(name, help=f"run the {name} experiment"))
    return parser


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_gen_game(args) -> int:
    if args.kind == "risk_dilemma":
        if len(args.dilemma) != 3:
            raise ConfigurationError("--dilemma needs three values")
        game = make_risk_dilemma(*args.dilemma)
    elif args.kind == "random":
        game = random_game(args.actions, args.seed)
    else:
        game = generate_coordination_game(GameGenConfig(args.actions, args.seed))
        if args.kind == "anti_coordination":
            game = anti_coordination(game)
    _emit(dumps_game(game), args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    game = load_game(args.game)
    sid = SolverId(args.solver)
    if sid == SolverId.RAE:
        prof, _ = sfp_rae(game, RiskProfile(args.gamma, args.epsilon), args.iterations, keep_trace=False)
    elif sid == SolverId.NASH:
        prof, _ = fp_nash(game, args.iterations, keep_trace=False)
    elif sid == SolverId.THPE:
        prof, _ = fp_thpe(game, args.tremble, args.iterations, keep_trace=False)
    elif sid == SolverId.QRE:
        prof, _ = fp_qre(game, args.temperature, args.iterations, keep_trace=False)
    elif sid == SolverId.UNIFORM:
        prof = uniform_profile(game)
    else:
        prof = selfplay_profile(game)
    stats = profile_stats(game, prof.strategies)
    doc = {
        "solver": prof.solver_id.value,
        "params": prof.params,
        "converged": prof.converged,
        "final_distance": prof.final_distance,
        "strategies": [np.asarray(s).tolist() for s in prof.strategies],
        "eu": [s[0] for s in stats],
        "uvar": [s[1] for s in stats],
    }
    _emit(json.dumps(doc, sort_keys=True), args.out)
    return EXIT_OK


_POPULATION_EXPERIMENTS = ("stag_hunt", "psro")


def config_from_args(experiment: str, args):
    overrides = load_config_file(args.config) if args.config else {}
    overrides.pop("experiment", None)
    if args.seed is not None and args.seeds is not None:
        raise ConfigurationError("use either --seed or --seeds")
    flags = {
        "output_dir": args.output_dir,
        "seeds": (args.seed,) if args.seed is not None else args.seeds,
        "gamma": args.gamma,
        "gammas": args.gammas,
        "epsilon": args.epsilon,
        "num_actions": args.num_actions,
        "workers": args.workers,
    }
    if args.iterations is not None:
        key = "psro_iters" if experiment in _POPULATION_EXPERIMENTS else "fp_iters"
        flags[key] = args.iterations
    overrides.update({k: v for k, v in flags.items() if v is not None})
    if "output_dir" not in overrides:
        overrides["output_dir"] = f"out/{experiment}"
    return default_config(experiment, **overrides)


def cmd_experiment(experiment: str, args) -> int:
    cfg = config_from_args(experiment, args)
    RUNNERS[experiment](cfg)
    print(json.dumps({"experiment": experiment, "output_dir": cfg.output_dir,
                      "config_hash": cfg.config_hash()}, sort_keys=True))
    return EXIT_OK


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "gen-game":
            return cmd_gen_game(args)
        if args.command == "solve":
            return cmd_solve(args)
        return cmd_experiment(args.command.replace("-", "_"), args)
    except _UsageError as exc:
        return _fail("UsageError", str(exc), EXIT_CONFIG)
    except ParseError as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_PARSE)
    except (ConfigurationError, ValidationError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_CONFIG)
    except (SolverError, NumericalIntegrityError, RAEError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_INTERNAL)
    except OSError as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_IO)


if __name__ == "__main__":
    sys.exit(main())
