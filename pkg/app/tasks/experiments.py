"""Desk-scale experiment runners.

window_size: train the hierarchy preset on 10k x 10k levels scored after
k-window downsampling, one metrics CSV per (k, seed).

compose_vs_flat: for random 5x5 town layouts expanded to 25x25 targets,
train a flat 25x25 generator against the target and a town/house pair
whose composition is scored against the same target.
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from app.config import settings
from app.models.config import ExperimentConfig, RandomLayoutSpec, load_tileset_preset, load_train_config
from app.models.level import Grid, LevelDocument, Tileset
from app.services.composer import CompositionNode, compose
from app.services.fitness import hollow_cube_target
from app.services.generator import GeneratorSpec, constant_generator
from app.services.grid import overlap, remap
from app.services.seeding import generator
from app.tasks.evolve import GenerationMetrics, TrainResult, metrics_to_csv, train

logger = logging.getLogger(__name__)

HOUSE_SIZE = (5, 5)


@dataclass
class ExperimentSummary:
    kind: str
    # arm or window label -> final max fitness of every run
    finals: Dict[str, List[float]] = field(default_factory=dict)
    files: List[Path] = field(default_factory=list)

    def mean(self, label: str) -> float:
        return float(np.mean(self.finals[label]))

    def add(self, label: str, value: float) -> None:
        self.finals.setdefault(label, []).append(float(value))


def _scale(cfg: ExperimentConfig) -> Dict[str, int]:
    return {
        "generations": cfg.generations or settings.desk_generations,
        "population_size": cfg.population_size or settings.desk_population_size,
    }


def _write(path: Path, text: str, summary: ExperimentSummary) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    summary.files.append(path)


def _write_summary(path: Path, label_key: str, summary: ExperimentSummary) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow([label_key, "runs", "mean_final_max_fitness"])
        for label, values in summary.finals.items():
            writer.writerow([label, len(values), f"{np.mean(values):.10f}"])
    summary.files.append(path)


# Window-size study

def run_window_size_experiment(cfg: ExperimentConfig, out_dir: Path, threads: Optional[int] = None) -> ExperimentSummary:
    out_dir = Path(out_dir)
    summary = ExperimentSummary("window_size")
    scale = _scale(cfg)
    for k in cfg.window_sizes:
        for seed in cfg.seeds:
            logger.info("window study: k=%d seed=%d started", k, seed)
            config = load_train_config(
                "hierarchy",
                level_size=[10 * k, 10 * k],
                fitness_window=k,
                master_seed=seed,
                **scale,
            )
            result = train(config, threads=threads)
            _write(out_dir / f"k{k}_seed{seed}.csv", result.metrics_csv(), summary)
            summary.add(f"k{k}", result.best_fitness)
            logger.info("window study: k=%d seed=%d finished, final max %.4f", k, seed, result.best_fitness)
    _write_summary(out_dir / "summary.csv", "window", summary)
    return summary


# Composed versus flat

def random_layout(spec: RandomLayoutSpec, tileset: Tileset, index: int = 0) -> Grid:
    """Each cell drawn independently with probability proportional to its tile weight"""
    rng = generator(spec.seed, index)
    names = list(spec.weights)
    weights = np.asarray([spec.weights[n] for n in names], dtype=np.float64)
    choices = np.asarray([tileset.index(n) for n in names], dtype=np.int64)
    picks = rng.choice(len(names), size=tuple(spec.size), p=weights / weights.sum())
    return Grid(choices[picks], tileset)


def house_template(tileset: Tileset, size: Sequence[int] = HOUSE_SIZE) -> Grid:
    """Wall border around empty interior"""
    return hollow_cube_target(size, tileset.index("wall"), tileset.index("air"), None, tileset)


def expand_layout(layout: Grid, template: Grid, tileset: Tileset) -> Grid:
    """Stamp the template on house cells and uniform blocks on road and garden cells"""
    template = remap(template, tileset)
    bx, by = template.dims
    tiles = np.zeros((layout.dims[0] * bx, layout.dims[1] * by), dtype=np.int64)
    for x in range(layout.dims[0]):
        for y in range(layout.dims[1]):
            name = layout.tileset.names[layout[x, y]]
            block = (slice(x * bx, (x + 1) * bx), slice(y * by, (y + 1) * by))
            tiles[block] = template.tiles if name == "house" else tileset.index(name)
    return Grid(tiles, tileset)


def town_tree(town: GeneratorSpec, house: GeneratorSpec, coalesce: bool = False) -> CompositionNode:
    names = town.tileset.names
    mapping = {
        names.index("house"): CompositionNode(house, name="house"),
        names.index("road"): CompositionNode(constant_generator("road"), name="road"),
        names.index("garden"): CompositionNode(constant_generator("garden"), name="garden"),
    }
    return CompositionNode(town, subtile_size=HOUSE_SIZE, mapping=mapping, coalesce=coalesce, name="town")


def _overlap_term(target: Grid) -> List[dict]:
    return [{"name": "target_overlap", "weight": 1, "params": {"target": LevelDocument.from_grid(target).model_dump()}}]


def composed_curve(town: TrainResult, house: TrainResult, target: Grid, seed: int) -> List[GenerationMetrics]:
    """Per generation: overlap of the composed per-generation bests with the target"""
    rows = []
    for gen, (town_best, house_best) in enumerate(zip(town.history, house.history)):
        level = compose(town_tree(town_best, house_best), target.dims, seed=seed)
        score = overlap(remap(level, target.tileset), target)
        mean = (town.metrics[gen].mean_fitness + house.metrics[gen].mean_fitness) / 2.0
        rows.append(GenerationMetrics(gen, score, mean))
    return rows


def run_compose_vs_flat(cfg: ExperimentConfig, out_dir: Path, threads: Optional[int] = None) -> ExperimentSummary:
    out_dir = Path(out_dir)
    summary = ExperimentSummary("compose_vs_flat")
    scale = _scale(cfg)
    town_tiles = load_tileset_preset("town")
    flat_tiles = load_tileset_preset("flat")
    template = house_template(load_tileset_preset("house_plan"))
    layout_spec = RandomLayoutSpec(seed=cfg.layout_seed)

    for index in range(cfg.layouts):
        layout = random_layout(layout_spec, town_tiles, index)
        target = expand_layout(layout, template, flat_tiles)
        logger.info("layout %d: %s", index, layout.render())
        # Seeds are shared by both arms of a layout
        for seed in cfg.seeds:
            logger.info("compose vs flat: layout %d seed %d started", index, seed)
            flat = train(load_train_config("flat", fitness=_overlap_term(target), master_seed=seed, **scale), threads)
            town = train(load_train_config("composed_town", fitness=_overlap_term(layout), master_seed=seed, **scale), threads)
            house = train(load_train_config("composed_house", fitness=_overlap_term(template), master_seed=seed, **scale), threads)
            curve = composed_curve(town, house, target, seed)

            _write(out_dir / f"flat_layout{index}_seed{seed}.csv", flat.metrics_csv(), summary)
            _write(out_dir / f"composed_layout{index}_seed{seed}.csv", metrics_to_csv(curve), summary)
            summary.add("flat", flat.best_fitness)
            summary.add("composed", curve[-1].max_fitness)
            logger.info(
                "compose vs flat: layout %d seed %d finished, flat %.4f composed %.4f",
                index, seed, flat.best_fitness, curve[-1].max_fitness,
            )
    _write_summary(out_dir / "summary.csv", "arm", summary)
    return summary


def run_experiment(cfg: ExperimentConfig, out_dir: Path, threads: Optional[int] = None) -> ExperimentSummary:
    if cfg.kind == "window_size":
        return run_window_size_experiment(cfg, Path(out_dir) / "window_size", threads)
    return run_compose_vs_flat(cfg, Path(out_dir) / "compose_vs_flat", threads)
