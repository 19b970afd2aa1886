"""Command-line entry point: generate, run, evaluate, replay, ablate and plot."""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from .config import RunConfig, load_run_config
from .errors import CogNavError, ConfigError
from .evaluator import RunEvaluator
from .harness import CASSETTE_FILE, CONFIG_FILE, Runner, run_ablation
from .llm_backend import BACKEND_MODES
from .suite import SuiteFolder, SuiteItem, generate_suite
from .trace import TraceReader

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cognav", description="Cognitive-map navigation agent")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate scenes and episodes")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--episodes", type=int, default=100)
    gen.add_argument("--min-rooms", type=int, default=3)
    gen.add_argument("--max-rooms", type=int, default=6)
    gen.add_argument("--out", type=Path, required=True)

    def run_options(p: argparse.ArgumentParser) -> None:
        p.add_argument("--suite", type=Path, default=None, help="episode suite (default: episodes_path of --config)")
        p.add_argument("--out", type=Path, required=True)
        p.add_argument("--config", type=Path, default=None)
        p.add_argument("--backend", choices=[m for m in BACKEND_MODES if m != "replay"], default=None)
        p.add_argument("--planner-noise", type=float, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--fresh-memory-per-episode", action="store_true", default=None)

    run = sub.add_parser("run", help="run the agent over a suite")
    run_options(run)
    run.add_argument("--no-reflection", action="store_true", default=None)
    run.add_argument("--no-rationalization", action="store_true", default=None)
    run.add_argument("--no-cognitive-map", action="store_true", default=None)
    run.add_argument("--record", nargs="?", const="", default=None, type=str,
                     help=f"record backend calls (default <out>/{CASSETTE_FILE})")
    run.add_argument("--parallel", type=int, default=0)

    ev = sub.add_parser("evaluate", help="score the traces of a finished run")
    ev.add_argument("--suite", type=Path, required=True)
    ev.add_argument("--run-dir", type=Path, required=True)
    ev.add_argument("--euclidean", action="store_true")

    rep = sub.add_parser("replay", help="re-run a recorded run from its cassette")
    rep.add_argument("--suite", type=Path, default=None, help="episode suite (default: the recorded run's)")
    rep.add_argument("--from", dest="source", type=Path, required=True)
    rep.add_argument("--out", type=Path, required=True)

    abl = sub.add_parser("ablate", help="full agent plus the three ablations, one table")
    run_options(abl)

    plot = sub.add_parser("plot", help="plot one episode of a run")
    plot.add_argument("--suite", type=Path, required=True)
    plot.add_argument("--run-dir", type=Path, default=None)
    plot.add_argument("--episode", required=True)
    plot.add_argument("--out", type=Path, required=True)
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    overrides = {
        "backends": args.backend,
        "planner_noise": args.planner_noise,
        "seed": args.seed,
        "fresh_memory_per_episode": args.fresh_memory_per_episode,
    }
    for flag in ("no_reflection", "no_rationalization", "no_cognitive_map"):
        overrides[flag] = getattr(args, flag, None)
    return overrides


def _load_items(suite: Path) -> List[SuiteItem]:
    items = SuiteFolder(suite).load()
    if not items:
        raise ConfigError(f"Suite {suite} has no loadable episodes")
    return items


def _suite_items(args: argparse.Namespace, config: RunConfig) -> List[SuiteItem]:
    """Episodes from ``--suite``, else from the config's ``episodes_path``; the config keeps the one used."""
    suite = args.suite or (Path(config.episodes_path) if config.episodes_path else None)
    if suite is None:
        raise ConfigError("No episode suite: pass --suite or set episodes_path in the config")
    config.episodes_path = str(suite)
    return _load_items(suite)


def _cmd_generate(args: argparse.Namespace) -> int:
    written = generate_suite(args.seed, args.episodes, args.out, args.min_rooms, args.max_rooms)
    print(f"Generated {written} episodes in {args.out}")
    return 0 if written == args.episodes else 1


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, _overrides(args))
    items = _suite_items(args, config)
    record = None
    if args.record is not None:
        record = Path(args.record) if args.record else args.out / CASSETTE_FILE
    output = Runner(config, args.out, record=record, parallel=args.parallel).run(items)
    print((args.out / "summary.txt").read_text(encoding="utf-8") if output.summary else "No episodes scored")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    if not args.run_dir.is_dir():
        raise ConfigError(f"Run directory {args.run_dir} does not exist")
    evaluator = RunEvaluator(euclidean=args.euclidean)
    evaluator.evaluate_dir(args.suite, args.run_dir)
    table = evaluator.summary("cognav")
    print(table or "No episodes scored")
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    config = load_run_config(args.source / CONFIG_FILE)
    if not (args.source / CASSETTE_FILE).is_file():
        raise ConfigError(f"No {CASSETTE_FILE} in {args.source}")
    items = _suite_items(args, config)
    output = Runner(config, args.out, replay_from=args.source).run(items)
    print((args.out / "summary.txt").read_text(encoding="utf-8") if output.summary else "No episodes scored")
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, _overrides(args))
    print(run_ablation(_suite_items(args, config), config, args.out))
    return 0


def _cmd_plot(args: argparse.Namespace) -> int:
    from .viz import plot_episode

    items = {item.episode.id: item for item in _load_items(args.suite)}
    if args.episode not in items:
        raise ConfigError(f"Episode {args.episode} is not in suite {args.suite}")
    item = items[args.episode]
    traj = TraceReader(args.run_dir).load(args.episode) if args.run_dir is not None else None
    plot_episode(item.scene, item.episode, traj, args.out)
    return 0


COMMANDS = {
    "generate": _cmd_generate,
    "run": _cmd_run,
    "evaluate": _cmd_evaluate,
    "replay": _cmd_replay,
    "ablate": _cmd_ablate,
    "plot": _cmd_plot,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error(f"❌ {e}")
        return 2
    except CogNavError as e:
        logger.error(f"❌ {e}")
        return 1
    except OSError as e:
        logger.error(f"❌ {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
