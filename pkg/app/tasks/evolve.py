"""Training driver: generate levels per genome, score them, evolve.

Every individual carries a birth tag ``(generation, index)``; its levels
come from ``seed_stream(master_seed, *tag, level)``. Elites keep their tag,
so an unchanged genome is re-scored on the same levels and its objective
fitness cannot drop.
"""

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from app.config import settings
from app.models.config import TrainConfig
from app.models.level import Grid
from app.services.fitness import NoveltyConfig, WeightedFitness, build_fitness, novelty_scores
from app.services.generator import GeneratorSpec, generate_batch, input_size, save_generator
from app.services.grid import downsample_windows
from app.services.neat import Genome, InnovationRegistry, evolve_step, init_genome, ranked, speciate
from app.services.seeding import SeedLike, evaluation_sequence, generator

logger = logging.getLogger(__name__)

# Stream keys outside any generation index
INIT_STREAM = 2**32 - 1
EVOLVE_STREAM = 2**32 - 2

METRICS_HEADER = ("generation", "max_fitness", "mean_fitness")

Tag = Tuple[int, int]


@dataclass(frozen=True)
class GenerationMetrics:
    generation: int
    max_fitness: float
    mean_fitness: float
    species: int = 0


@dataclass
class TrainResult:
    best: GeneratorSpec
    best_fitness: float
    metrics: List[GenerationMetrics]
    config: TrainConfig
    history: List[GeneratorSpec] = field(default_factory=list)
    fitnesses: List[List[float]] = field(default_factory=list)
    decisions: Dict[str, Any] = field(default_factory=dict)

    def metrics_csv(self) -> str:
        return metrics_to_csv(self.metrics)

    def save(self, directory: Path) -> Path:
        """Write generator.json, metrics.csv and config.json into ``directory``"""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        save_generator(self.best, directory / "generator.json")
        (directory / "metrics.csv").write_text(self.metrics_csv())
        (directory / "config.json").write_text(
            self.config.model_dump_json(indent=2, exclude={"neat": {"population_size"}})
        )
        logger.info("saved training bundle to %s", directory)
        return directory


def metrics_to_csv(rows: Sequence[GenerationMetrics]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for row in rows:
        writer.writerow([row.generation, f"{row.max_fitness:.10f}", f"{row.mean_fitness:.10f}"])
    return buffer.getvalue()


def decision_metadata(config: TrainConfig) -> Dict[str, Any]:
    """Defaults in force for a run, echoed into every saved generator"""
    novelty = config.novelty_settings()
    return {
        "probability_fitness": "1 - sqrt(JSD), base-2 logs",
        "tile_decoding": "argmax, ties to lowest index",
        "random_inputs": "per cell per iteration, Uniform[-1, 1]",
        "perturbation": "additive Uniform[-p, p] on non-random inputs",
        "padding": -1.0,
        "sweep": "in place, x fastest",
        "novelty": {"k": novelty.k, "archive_adds": novelty.archive_adds, "distance": "hamming"},
        "neat": config.neat_params().model_dump(),
        "elite_seeding": "elites keep their birth stream",
    }


class Trainer:
    """Evaluates and evolves generators for one TrainConfig"""

    def __init__(self, config: TrainConfig, threads: Optional[int] = None, fitness: Optional[WeightedFitness] = None):
        self.config = config
        self.tileset = config.resolved_tileset()
        self.params = config.gen_params()
        self.neat = config.neat_params()
        self.size = tuple(config.level_size)
        self.ndim = len(self.size)
        self.fitness = fitness or build_fitness(config.fitness, self.tileset)
        self.objective = self.fitness.without_population_terms()
        self.novelty = NoveltyConfig.from_settings(config.novelty_settings()) if self.fitness.uses_novelty else None
        window_tile = config.window_default or config.default_tile or self.tileset.names[0]
        self.window_default = self.tileset.index(window_tile)
        self.threads = max(1, threads or settings.threads)
        self.n_inputs = input_size(self.params, len(self.tileset), self.ndim)
        self.n_outputs = len(self.tileset)

    def spec(self, genome: Genome) -> GeneratorSpec:
        return GeneratorSpec(genome, self.params, self.tileset, self.ndim)

    def levels(self, genome: Genome, seed: SeedLike) -> List[Grid]:
        """Generated levels as the fitness sees them (window-downsampled when k > 1)"""
        raw = generate_batch(self.spec(genome), self.size, self.config.n_levels_per_eval, seed)
        k = self.config.fitness_window
        if k == 1:
            return raw
        return [downsample_windows(level, k, self.window_default) for level in raw]

    def evaluate(self, genome: Genome, seed: SeedLike) -> Tuple[float, List[Grid]]:
        levels = self.levels(genome, seed)
        if self.objective is None:
            return 0.0, levels
        return self.objective.combine(levels), levels

    def _evaluate_all(self, population: Sequence[Genome], tags: Sequence[Tag]) -> List[List[Grid]]:
        master = self.config.master_seed

        def run(item):
            genome, (gen, index) = item
            return self.levels(genome, evaluation_sequence(master, gen, index))

        items = list(zip(population, tags))
        if self.threads == 1:
            return [run(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(run, items))

    def score(self, level_sets: Sequence[List[Grid]]) -> List[float]:
        contexts: List[Optional[Dict[str, float]]] = [None] * len(level_sets)
        if self.novelty is not None:
            contexts = [{"novelty": s} for s in novelty_scores(level_sets, self.novelty)]
        return [self.fitness.combine(levels, ctx) for levels, ctx in zip(level_sets, contexts)]

    def train(self) -> TrainResult:
        config = self.config
        init_rng = generator(config.master_seed, INIT_STREAM)
        registry = InnovationRegistry(self.n_inputs, self.n_outputs)
        population = [init_genome(self.n_inputs, self.n_outputs, init_rng) for _ in range(self.neat.population_size)]
        tags: List[Tag] = [(0, i) for i in range(len(population))]
        metrics: List[GenerationMetrics] = []
        history: List[GeneratorSpec] = []
        all_fitnesses: List[List[float]] = []
        decisions = decision_metadata(config)

        logger.info(
            "training %s level %s: %d generations, population %d, %d inputs",
            "x".join(map(str, self.size)), list(self.tileset.names), config.generations,
            len(population), self.n_inputs,
        )
        for gen in range(config.generations):
            fitnesses = self.score(self._evaluate_all(population, tags))
            order = ranked(fitnesses)
            n_species = len(speciate(population, self.neat))
            row = GenerationMetrics(
                generation=gen,
                max_fitness=fitnesses[order[0]],
                mean_fitness=min(sum(fitnesses) / len(fitnesses), fitnesses[order[0]]),
                species=n_species,
            )
            metrics.append(row)
            all_fitnesses.append(fitnesses)
            history.append(self._with_metadata(population[order[0]], decisions, gen, row.max_fitness))
            logger.info(
                "generation %d: max %.4f mean %.4f species %d",
                gen, row.max_fitness, row.mean_fitness, n_species,
            )
            if gen == config.generations - 1:
                break
            evolve_rng = generator(config.master_seed, EVOLVE_STREAM, gen)
            elites = [tags[i] for i in order[: min(self.neat.elitism, self.neat.population_size)]]
            population = evolve_step(population, fitnesses, self.neat, registry, evolve_rng)
            tags = elites + [(gen + 1, i) for i in range(len(elites), len(population))]

        return TrainResult(
            best=history[-1],
            best_fitness=metrics[-1].max_fitness,
            metrics=metrics,
            config=config,
            history=history,
            fitnesses=all_fitnesses,
            decisions=decisions,
        )

    def _with_metadata(self, genome: Genome, decisions: Dict[str, Any], gen: int, fitness: float) -> GeneratorSpec:
        metadata = {
            "decisions": decisions,
            "generation": gen,
            "fitness": fitness,
            "level_size": list(self.size),
            "master_seed": self.config.master_seed,
        }
        return GeneratorSpec(genome, self.params, self.tileset, self.ndim, metadata=metadata)


def evaluate_genome(genome: Genome, config: TrainConfig, seed: SeedLike) -> Tuple[float, List[Grid]]:
    """Objective fitness of ``genome`` averaged over its levels, plus the levels"""
    return Trainer(config).evaluate(genome, seed)


def train(config: TrainConfig, threads: Optional[int] = None) -> TrainResult:
    return Trainer(config, threads=threads).train()


def load_metrics(path: Path) -> List[GenerationMetrics]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        return [
            GenerationMetrics(int(r["generation"]), float(r["max_fitness"]), float(r["mean_fitness"]))
            for r in reader
        ]

