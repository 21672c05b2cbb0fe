"""Fitness functions, novelty and their weighted combination.

Every score lies in [0, 1] with 1 optimal.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from scipy.special import rel_entr

from app.exceptions import ArityError, ConfigError, ShapeError, SizeError, TileComposerError
from app.models.config import FitnessTerm, NoveltySettings
from app.models.level import Grid, LevelDocument, TileDistribution, Tileset, load_level
from app.services.grid import (
    axis_neighbor_counts,
    hamming,
    label_regions,
    overlap,
    remap,
    tile_distribution,
)

logger = logging.getLogger(__name__)


# Distribution fitnesses

def jensen_shannon(p: np.ndarray, q: np.ndarray) -> float:
    """Base-2 Jensen-Shannon divergence, in [0, 1]"""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    m = 0.5 * (p + q)
    jsd = 0.5 * (rel_entr(p, m).sum() + rel_entr(q, m).sum()) / math.log(2)
    return float(min(max(jsd, 0.0), 1.0))


def probability_fitness(g: Grid, target: TileDistribution) -> float:
    p = tile_distribution(g).as_array()
    q = target.as_array()
    if q.shape != p.shape:
        raise ShapeError(f"target has {q.shape[0]} tiles, level tileset has {p.shape[0]}")
    return 1.0 - math.sqrt(jensen_shannon(p, q))


def equal_distribution_fitness(g: Grid, classes: Sequence[int]) -> float:
    if len(classes) != 3 or len(set(classes)) != 3:
        raise ArityError(f"equal distribution needs three distinct tiles, got {list(classes)}")
    dist = tile_distribution(g)
    return sum(max(1.0 - 10.0 * (dist[t] - 1.0 / 3.0) ** 2, 0.0) for t in classes) / 3.0


# Reachability

@dataclass(frozen=True)
class ReachabilityBreakdown:
    H: int
    a: float
    c_road: int
    c_house_road: int
    d_road: float
    d_house_road: float
    b: float
    fitness: float


def _region_distance(count: int) -> float:
    return float(min(abs(1 - count), 10))


def reachability_fitness(g: Grid, house: int, road: int, garden: int) -> ReachabilityBreakdown:
    if len({house, road, garden}) != 3:
        raise ArityError("house, road and garden must be distinct tiles")
    for t in (house, road, garden):
        g.tileset.check_index(t)
    road_neighbors = axis_neighbor_counts(g, [road])
    houses = g.tiles == house
    H = int(np.count_nonzero(houses & (road_neighbors >= 1) & (road_neighbors <= 3)))
    _, c_road = label_regions(g, [road])
    _, c_house_road = label_regions(g, [house, road])
    a = min(H / 20.0, 1.0)
    d_road = _region_distance(c_road)
    d_house_road = _region_distance(c_house_road)
    b = 1.0 / ((d_house_road + 1.0) * (d_road + 1.0))
    return ReachabilityBreakdown(H, a, c_road, c_house_road, d_road, d_house_road, b, a * b)


# Targets

def target_overlap_fitness(g: Grid, target: Grid) -> float:
    return overlap(g, remap(target, g.tileset))


def hollow_cube_target(size: Sequence[int], wall: int, air: int, roof: Optional[int], tileset: Tileset) -> Grid:
    """Side walls around air, roof on the top layer (z = D - 1).

    In 2D there is no roof: a wall border around an air interior.
    """
    size = tuple(int(s) for s in size)
    if len(size) not in (2, 3) or any(s < 2 for s in size):
        raise SizeError(f"hollow cube needs extents >= 2, got {size}")
    wall = tileset.check_index(wall)
    tiles = np.full(size, tileset.check_index(air), dtype=np.int64)
    tiles[0, ...] = wall
    tiles[-1, ...] = wall
    tiles[:, 0, ...] = wall
    tiles[:, -1, ...] = wall
    if len(size) == 3:
        if roof is None:
            raise SizeError("a 3D hollow cube needs a roof tile")
        tiles[:, :, -1] = tileset.check_index(roof)
    return Grid(tiles, tileset)


def boundary_layout_target(size: Sequence[int], house: int, road: int, garden: int, tileset: Tileset) -> Grid:
    """House ring outside, road ring inside it, gardens in the middle"""
    size = tuple(int(s) for s in size)
    if len(size) != 2 or any(s < 5 for s in size):
        raise SizeError(f"boundary layout needs 2D extents >= 5, got {size}")
    x, y = np.indices(size)
    ring = np.minimum.reduce([x, y, size[0] - 1 - x, size[1] - 1 - y])
    tiles = np.select(
        [ring == 0, ring == 1],
        [tileset.check_index(house), tileset.check_index(road)],
        default=tileset.check_index(garden),
    )
    return Grid(tiles, tileset)


def garden_fitness(g: Grid, tree: int, flower: int, water: int, grass: int) -> float:
    counts = np.bincount(g.tiles.ravel(), minlength=len(g.tileset))
    fractions = counts / g.size
    has_plants = counts[tree] >= 1 and counts[flower] >= 1
    some_water = 0.0 < fractions[water] < 0.05
    grass_ok = 0.2 <= fractions[grass] <= 0.7
    trees = (g.tiles == tree).astype(np.int64)
    crowding = ndimage.convolve(trees, np.ones((3,) * g.ndim, dtype=np.int64), mode="constant")
    spaced = not (crowding[trees == 1] > 1).any()
    return (has_plants + some_water + grass_ok + spaced) / 4.0


# Novelty

def intra_novelty(levels: Sequence[Grid]) -> float:
    if len(levels) < 2:
        raise ArityError(f"intra-generator novelty needs at least 2 levels, got {len(levels)}")
    distances = [
        hamming(levels[i], levels[j]) for i in range(len(levels)) for j in range(i + 1, len(levels))
    ]
    return float(np.mean(distances))


@dataclass
class NoveltyConfig:
    k: int = 10
    archive: List[List[Grid]] = field(default_factory=list)
    archive_adds: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ArityError(f"novelty k must be >= 1, got {self.k}")

    @classmethod
    def from_settings(cls, settings: NoveltySettings) -> "NoveltyConfig":
        return cls(k=settings.k, archive_adds=settings.archive_adds)


def _stack(level_sets: Sequence[Sequence[Grid]]) -> np.ndarray:
    shapes = {lvl.dims for levels in level_sets for lvl in levels}
    if len(shapes) > 1:
        raise ShapeError(f"novelty needs equal level shapes, got {sorted(shapes)}")
    return np.stack([np.stack([lvl.tiles.ravel() for lvl in levels]) for levels in level_sets])


def individual_distances(a: Sequence[Sequence[Grid]], b: Sequence[Sequence[Grid]]) -> np.ndarray:
    """Mean hamming over aligned level pairs for every (a_i, b_j)"""
    left, right = _stack(a), _stack(b)
    n = min(left.shape[1], right.shape[1])
    return (left[:, None, :n, :] != right[None, :, :n, :]).mean(axis=(2, 3))


def novelty_scores(population_levels: Sequence[Sequence[Grid]], config: NoveltyConfig) -> List[float]:
    """Mean distance to the k nearest of population and archive, then grow the archive"""
    pool = list(population_levels) + list(config.archive)
    n = len(population_levels)
    if n == 0:
        return []
    distances = individual_distances(population_levels, pool)
    scores = []
    for i in range(n):
        others = np.delete(distances[i], i)
        if others.size == 0:
            scores.append(0.0)
            continue
        k = min(config.k, others.size)
        scores.append(float(np.sort(others)[:k].mean()))
    for i in sorted(range(n), key=lambda i: (-scores[i], i))[: config.archive_adds]:
        config.archive.append(list(population_levels[i]))
    return scores


# Weighted combination

LEVEL, LEVELS, POPULATION = "level", "levels", "population"


@dataclass(frozen=True)
class FitnessComponent:
    """A named scorer; ``kind`` says whether it sees one level, the level set, or population context"""

    name: str
    kind: str
    score: Optional[Callable] = None

    def evaluate(self, levels: Sequence[Grid], context: Optional[Dict[str, float]] = None) -> float:
        if self.kind == LEVEL:
            return float(np.mean([self.score(level) for level in levels]))
        if self.kind == LEVELS:
            return float(self.score(levels))
        if context is None or self.name not in context:
            raise ArityError(f"'{self.name}' needs a population-wide score in the context")
        return float(context[self.name])


@dataclass(frozen=True)
class WeightedFitness:
    components: Tuple[Tuple[FitnessComponent, float], ...]

    def __post_init__(self):
        if not self.components or not any(w > 0 for _, w in self.components):
            raise ArityError("weighted fitness needs at least one positive weight")
        if any(w < 0 for _, w in self.components):
            raise ArityError("weights must be non-negative")

    @property
    def uses_novelty(self) -> bool:
        return any(c.kind == POPULATION and w > 0 for c, w in self.components)

    def scores(self, levels: Sequence[Grid], context: Optional[Dict[str, float]] = None) -> Dict[str, float]:
        return {c.name: c.evaluate(levels, context) for c, _ in self.components}

    def combine(self, levels: Sequence[Grid], context: Optional[Dict[str, float]] = None) -> float:
        return weighted_mean(
            [c.evaluate(levels, context) for c, _ in self.components],
            [w for _, w in self.components],
        )

    def without_population_terms(self) -> Optional["WeightedFitness"]:
        kept = tuple((c, w) for c, w in self.components if c.kind != POPULATION)
        if not any(w > 0 for _, w in kept):
            return None
        return WeightedFitness(kept)


def weighted_mean(values: Sequence[float], weights: Sequence[float]) -> float:
    total = float(sum(weights))
    return float(sum(v * w for v, w in zip(values, weights)) / total)


def combine(w: WeightedFitness, levels: Sequence[Grid], context: Optional[Dict[str, float]] = None) -> float:
    return w.combine(levels, context)


# Building from configuration

def _tiles(params: dict, tileset: Tileset, defaults: Dict[str, str], term: str) -> Dict[str, int]:
    unknown = set(params) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown parameter(s) {sorted(unknown)} for fitness '{term}'", key=f"fitness.{term}")
    try:
        return {role: tileset.index(params.get(role, name)) for role, name in defaults.items()}
    except TileComposerError as e:
        raise ConfigError(f"fitness '{term}': {e}", key=f"fitness.{term}") from e


def _load_target(value, tileset: Tileset) -> Grid:
    if isinstance(value, Grid):
        return value
    if isinstance(value, dict):
        return remap(LevelDocument.model_validate(value).to_grid(), tileset)
    return remap(load_level(Path(value)), tileset)


def _by_dims(make: Callable[[Tuple[int, ...]], Grid]) -> Callable[[Grid], Grid]:
    cache: Dict[Tuple[int, ...], Grid] = {}

    def target_for(level: Grid) -> Grid:
        if level.dims not in cache:
            cache[level.dims] = make(level.dims)
        return cache[level.dims]

    return target_for


def build_component(term: FitnessTerm, tileset: Tileset) -> FitnessComponent:
    name, params = term.name, dict(term.params)
    if name == "probability":
        raw = params.pop("target", {"house": 0.4, "garden": 0.3, "road": 0.3})
        if params:
            raise ConfigError(f"unknown parameter(s) {sorted(params)} for fitness 'probability'", key="fitness.probability")
        probs = np.zeros(len(tileset))
        try:
            for tile, p in raw.items():
                probs[tileset.index(tile)] = float(p)
        except TileComposerError as e:
            raise ConfigError(f"fitness 'probability': {e}", key="fitness.probability") from e
        if abs(probs.sum() - 1.0) > 1e-9:
            raise ConfigError(f"probability target sums to {probs.sum()}, not 1", key="fitness.probability")
        target = TileDistribution(tuple(probs), tileset)
        return FitnessComponent(name, LEVEL, lambda g: probability_fitness(g, target))
    if name == "reachability":
        t = _tiles(params, tileset, {"house": "house", "road": "road", "garden": "garden"}, name)
        return FitnessComponent(name, LEVEL, lambda g: reachability_fitness(g, t["house"], t["road"], t["garden"]).fitness)
    if name == "equal_distribution":
        classes = params.pop("classes", ["house", "road", "garden"])
        if params:
            raise ConfigError(f"unknown parameter(s) {sorted(params)} for fitness 'equal_distribution'", key="fitness.equal_distribution")
        try:
            idx = [tileset.index(c) for c in classes]
        except TileComposerError as e:
            raise ConfigError(f"fitness 'equal_distribution': {e}", key="fitness.equal_distribution") from e
        return FitnessComponent(name, LEVEL, lambda g: equal_distribution_fitness(g, idx))
    if name == "target_overlap":
        if set(params) != {"target"}:
            raise ConfigError("fitness 'target_overlap' needs exactly a 'target' parameter", key="fitness.target_overlap")
        try:
            target = _load_target(params["target"], tileset)
        except TileComposerError as e:
            raise ConfigError(f"fitness 'target_overlap': {e}", key="fitness.target_overlap") from e
        return FitnessComponent(name, LEVEL, lambda g: target_overlap_fitness(g, target))
    if name == "house":
        roof_default = {"roof": "roof"} if "roof" in tileset.names or "roof" in params else {}
        t = _tiles(params, tileset, {"wall": "wall", "air": "air", **roof_default}, name)
        target_for = _by_dims(lambda dims: hollow_cube_target(dims, t["wall"], t["air"], t.get("roof"), tileset))
        return FitnessComponent(name, LEVEL, lambda g: target_overlap_fitness(g, target_for(g)))
    if name == "garden":
        t = _tiles(params, tileset, {"tree": "tree", "flower": "flower", "water": "water", "grass": "grass"}, name)
        return FitnessComponent(name, LEVEL, lambda g: garden_fitness(g, t["tree"], t["flower"], t["water"], t["grass"]))
    if name == "boundary_layout":
        t = _tiles(params, tileset, {"house": "house", "road": "road", "garden": "garden"}, name)
        target_for = _by_dims(lambda dims: boundary_layout_target(dims, t["house"], t["road"], t["garden"], tileset))
        return FitnessComponent(name, LEVEL, lambda g: target_overlap_fitness(g, target_for(g)))
    if name == "intra_novelty":
        if params:
            raise ConfigError("fitness 'intra_novelty' takes no parameters", key="fitness.intra_novelty")
        return FitnessComponent(name, LEVELS, intra_novelty)
    if name == "novelty":
        if params:
            raise ConfigError("fitness 'novelty' is configured by the top-level 'novelty' key", key="fitness.novelty")
        return FitnessComponent(name, POPULATION)
    raise ConfigError(f"unknown fitness '{name}'", key="fitness")


def build_fitness(terms: Sequence[FitnessTerm], tileset: Tileset) -> WeightedFitness:
    return WeightedFitness(tuple((build_component(term, tileset), term.weight) for term in terms))
