"""Command-line entry point.

    tile-composer [--seed N] [--out DIR] [--threads N] <command> ...

Commands: train, generate, compose, evaluate, export, experiment.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from app import __version__
from app.config import configure_logging, settings
from app.exceptions import TileComposerError, TilesetError
from app.models.config import ExperimentConfig, load_train_config, validate_model
from app.models.level import Grid, load_level, save_level
from app.services.composer import compose, load_tree
from app.services.export import export_level
from app.services.fitness import POPULATION, build_fitness, reachability_fitness
from app.services.generator import generate, load_generator
from app.services.seeding import generator
from app.tasks.evolve import train
from app.tasks.experiments import run_experiment

logger = logging.getLogger(__name__)

FULL_SCALE = {"generations": 150, "population_size": 50, "seeds": list(range(10))}


def cmd_train(args: argparse.Namespace) -> int:
    overrides = {
        "generations": args.generations,
        "population_size": args.population_size,
        "master_seed": args.seed,
    }
    config = load_train_config(args.config, **overrides)
    result = train(config, threads=args.threads)
    result.save(args.out)
    logger.info("best fitness %.4f after %d generations", result.best_fitness, len(result.metrics))
    return 0


def _level_out(args: argparse.Namespace) -> Path:
    path = Path(args.output) if args.output else Path(args.out) / "level.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def cmd_generate(args: argparse.Namespace) -> int:
    spec = load_generator(Path(args.generator))
    level = generate(spec, args.size, generator(args.seed or 0))
    path = _level_out(args)
    save_level(level, path)
    logger.info("generated %s level to %s", "x".join(map(str, level.dims)), path)
    return 0


def cmd_compose(args: argparse.Namespace) -> int:
    tree = load_tree(Path(args.tree))
    level = compose(tree, args.size, seed=args.seed or 0, coalesce=False if args.no_coalesce else None)
    path = _level_out(args)
    save_level(level, path)
    logger.info("composed %s level to %s", "x".join(map(str, level.dims)), path)
    return 0


def _print_reachability(level: Grid, params: dict) -> None:
    tiles = {role: level.tileset.index(params.get(role, role)) for role in ("house", "road", "garden")}
    b = reachability_fitness(level, **tiles)
    print(
        f"  H={b.H} a={b.a:.6f} c_road={b.c_road} c_house_road={b.c_house_road} "
        f"d_road={b.d_road:.6f} d_house_road={b.d_house_road:.6f} b={b.b:.6f} fitness={b.fitness:.6f}"
    )


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = load_train_config(args.config)
    tileset = config.resolved_tileset()
    levels: List[Grid] = [load_level(Path(p)) for p in args.levels]
    for level in levels:
        if level.tileset.names != tileset.names:
            raise TilesetError(f"level tileset {list(level.tileset.names)} does not match {list(tileset.names)}")
    fitness = build_fitness(config.fitness, tileset)
    skipped = [c.name for c, _ in fitness.components if c.kind == POPULATION]
    if skipped:
        logger.warning("skipping population-wide terms %s", skipped)
    objective = fitness.without_population_terms()
    if objective is None:
        raise TileComposerError("nothing to evaluate without a population")
    for component, weight in objective.components:
        score = component.evaluate(levels)
        print(f"{component.name} (weight {weight:g}): {score:.6f}")
        if component.name == "reachability":
            term = next(t for t in config.fitness if t.name == "reachability")
            for level in levels:
                _print_reachability(level, term.params)
    print(f"total: {objective.combine(levels):.6f}")
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    level = load_level(Path(args.level))
    suffix = {"ppm": ".ppm", "png": ".png", "voxel": ".txt"}[args.format]
    path = Path(args.output) if args.output else Path(args.out) / (Path(args.level).stem + suffix)
    export_level(level, args.format, path, scale=args.scale)
    return 0


def cmd_experiment(args: argparse.Namespace) -> int:
    data = {"kind": args.kind}
    if args.full_scale:
        data.update(FULL_SCALE)
    for key in ("seeds", "window_sizes", "layouts", "layout_seed", "generations", "population_size"):
        value = getattr(args, key)
        if value is not None:
            data[key] = value
    cfg = validate_model(ExperimentConfig, data, source="experiment options")
    summary = run_experiment(cfg, Path(args.out), threads=args.threads)
    for label in summary.finals:
        print(f"{label}: mean final max fitness {summary.mean(label):.6f} over {len(summary.finals[label])} runs")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tile-composer", description="Evolve and compose tilemap generators")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--seed", type=int, default=None, help="master seed (default 0, or the config's)")
    parser.add_argument("--out", default=str(settings.output_dir), help="output directory")
    parser.add_argument("--threads", type=int, default=settings.threads, help="worker threads; never changes results")
    parser.add_argument("--log-level", default=settings.log_level)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="evolve a generator from a config file or preset name")
    p.add_argument("config")
    p.add_argument("--generations", type=int)
    p.add_argument("--population-size", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="generate one level with a trained generator")
    p.add_argument("generator")
    p.add_argument("--size", type=int, nargs="+", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("compose", help="compose a level from a tree document")
    p.add_argument("tree")
    p.add_argument("--size", type=int, nargs="+", required=True)
    p.add_argument("--no-coalesce", action="store_true", help="one child per abstract tile")
    p.add_argument("--output")
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("evaluate", help="score levels with a config's fitness terms")
    p.add_argument("levels", nargs="+")
    p.add_argument("--config", required=True, help="config file or preset name")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export", help="write a level as ppm, png or voxel lines")
    p.add_argument("level")
    p.add_argument("--format", choices=["ppm", "png", "voxel"], default="ppm")
    p.add_argument("--scale", type=int, default=1, help="png pixels per tile")
    p.add_argument("--output")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("experiment", help="run a desk-scale experiment")
    p.add_argument("kind", choices=["window_size", "compose_vs_flat"])
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--window-sizes", type=int, nargs="+")
    p.add_argument("--layouts", type=int)
    p.add_argument("--layout-seed", type=int)
    p.add_argument("--generations", type=int)
    p.add_argument("--population-size", type=int)
    p.add_argument("--full-scale", action="store_true", help="150 generations, population 50, 10 seeds")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except TileComposerError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return 2


if __name__ == "__main__":
    sys.exit(main())
