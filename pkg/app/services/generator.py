"""Network-driven level generation.

A level starts random or filled with a default tile; each iteration then
visits every cell x fastest and overwrites it with the argmax of the
network's outputs for the cell's surroundings. Writes happen in place, so
later cells in a pass already see earlier results.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from app.exceptions import BoundsError, DimensionError, FormatError, SpecError
from app.models.config import GenParams
from app.models.documents import GeneratorDocument
from app.models.level import Grid, Tileset
from app.services import kernels
from app.services.neat import Genome, Network, compile_network, genome_from_document, genome_to_document, init_genome
from app.services.seeding import SeedLike, generator as make_generator

logger = logging.getLogger(__name__)


def input_size(params: GenParams, n_tiles: int, ndim: int = 2) -> int:
    if n_tiles < 1:
        raise SpecError("a generator needs at least one tile")
    window = (2 * params.context_size + 1) ** ndim
    cells = window - 1 + (1 if params.input_center_tile else 0)
    return cells * (n_tiles if params.one_hot else 1) + params.num_random_vars


@dataclass(frozen=True)
class GeneratorSpec:
    genome: Genome
    params: GenParams
    tileset: Tileset
    ndim: int = 2
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.ndim not in (2, 3):
            raise SpecError(f"generators are 2D or 3D, got ndim={self.ndim}")
        expected = input_size(self.params, len(self.tileset), self.ndim)
        if self.genome.n_inputs != expected:
            raise SpecError(f"genome has {self.genome.n_inputs} inputs, parameters need {expected}")
        if self.genome.n_outputs != len(self.tileset):
            raise SpecError(f"genome has {self.genome.n_outputs} outputs for {len(self.tileset)} tiles")

    @cached_property
    def network(self) -> Network:
        return compile_network(self.genome)


def _check_size(spec: GeneratorSpec, size: Sequence[int]) -> Tuple[int, ...]:
    size = tuple(int(s) for s in size)
    if len(size) != spec.ndim:
        raise DimensionError(f"{spec.ndim}D generator asked for size {size}")
    if any(s <= 0 for s in size):
        raise DimensionError(f"level size must be positive, got {size}")
    return size


def encode_context(grid: Grid, pos: Sequence[int], params: GenParams, rng: np.random.Generator) -> np.ndarray:
    """Network input for the cell at ``pos``; mirrors the sweep kernel"""
    pos = tuple(int(p) for p in pos)
    if len(pos) != grid.ndim or any(not 0 <= p < d for p, d in zip(pos, grid.dims)):
        raise BoundsError(f"position {pos} outside grid {grid.dims}")
    n_tiles = len(grid.tileset)
    c = params.context_size

    def encode(tile: int) -> List[float]:
        if params.one_hot:
            if tile < 0:
                return [params.padding_value] * n_tiles
            return [1.0 if i == tile else 0.0 for i in range(n_tiles)]
        if tile < 0:
            return [params.padding_value]
        return [2.0 * tile / (n_tiles - 1) - 1.0 if n_tiles > 1 else 0.0]

    offsets_z = range(-c, c + 1) if grid.ndim == 3 else [0]
    values: List[float] = []
    for dz in offsets_z:
        for dy in range(-c, c + 1):
            for dx in range(-c, c + 1):
                if (dx, dy, dz) == (0, 0, 0):
                    continue
                q = (pos[0] + dx, pos[1] + dy) + ((pos[2] + dz,) if grid.ndim == 3 else ())
                inside = all(0 <= v < d for v, d in zip(q, grid.dims))
                values += encode(grid[q] if inside else -1)
    if params.input_center_tile:
        values += encode(grid[pos])
    encoded = np.asarray(values, dtype=np.float64)
    randoms = rng.uniform(-1.0, 1.0, size=params.num_random_vars)
    if params.perturb_size > 0:
        encoded = encoded + rng.uniform(-params.perturb_size, params.perturb_size, size=encoded.shape)
    return np.concatenate([encoded, randoms])


def initial_grid(spec: GeneratorSpec, size: Sequence[int], rng: np.random.Generator) -> Grid:
    size = _check_size(spec, size)
    if spec.params.start == "random":
        tiles = rng.integers(0, len(spec.tileset), size=size)
    else:
        tiles = np.full(size, spec.tileset.check_index(spec.params.default_tile), dtype=np.int64)
    return Grid(tiles, spec.tileset)


def sweep(spec: GeneratorSpec, grid: Grid, rng: np.random.Generator) -> Grid:
    """One generation pass over ``grid``; returns the updated copy"""
    params = spec.params
    n_tiles = len(spec.tileset)
    tiles = np.array(grid.tiles, dtype=np.int64).reshape(grid.dims + (1,) * (3 - grid.ndim)).copy()
    n_cells = grid.size
    n_encoded = spec.genome.n_inputs - params.num_random_vars
    rand = rng.uniform(-1.0, 1.0, size=(n_cells, params.num_random_vars))
    if params.perturb_size > 0:
        noise = rng.uniform(-params.perturb_size, params.perturb_size, size=(n_cells, n_encoded))
    else:
        noise = np.zeros((1, 1))
    net = spec.network
    kernels.sweep(
        tiles, spec.ndim, params.context_size, params.one_hot, n_tiles, params.input_center_tile,
        rand, noise, params.perturb_size > 0,
        net.n_inputs, net.n_slots, net.order, net.indptr, net.src, net.weights, net.out_slots,
    )
    return Grid(tiles.reshape(grid.dims), spec.tileset)


def generate(spec: GeneratorSpec, size: Sequence[int], rng: np.random.Generator) -> Grid:
    grid = initial_grid(spec, size, rng)
    for _ in range(spec.params.iterations):
        grid = sweep(spec, grid, rng)
    return grid


def generate_batch(spec: GeneratorSpec, size: Sequence[int], n: int, seed: SeedLike) -> List[Grid]:
    """``n`` levels, level ``i`` drawn from the stream ``seed / i``"""
    if n < 1:
        raise DimensionError(f"batch size must be >= 1, got {n}")
    return [generate(spec, size, make_generator(seed, i)) for i in range(n)]


def constant_generator(tile: str) -> GeneratorSpec:
    """Generator over a one-tile tileset: always fills with ``tile``"""
    params = GenParams(num_random_vars=0, input_center_tile=False, start="default", default_tile=0)
    tileset = Tileset.from_names([tile])
    genome = init_genome(input_size(params, 1, 2), 1, np.random.default_rng(0))
    return GeneratorSpec(genome, params, tileset, ndim=2, metadata={"constant": tile})


def generator_to_document(spec: GeneratorSpec) -> GeneratorDocument:
    return GeneratorDocument(
        genome=genome_to_document(spec.genome),
        params=spec.params,
        tileset=spec.tileset.to_entries(),
        ndim=spec.ndim,
        metadata=dict(spec.metadata),
    )


def generator_from_document(document: GeneratorDocument) -> GeneratorSpec:
    tileset = Tileset.from_entries([e.model_dump(exclude_none=True) for e in document.tileset])
    return GeneratorSpec(
        genome_from_document(document.genome),
        document.params,
        tileset,
        ndim=document.ndim,
        metadata=dict(document.metadata),
    )


def save_generator(spec: GeneratorSpec, path: Path) -> None:
    Path(path).write_text(generator_to_document(spec).model_dump_json(by_alias=True, indent=2))


def load_generator(path: Path) -> GeneratorSpec:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"generator file {path} does not exist")
    try:
        document = GeneratorDocument.model_validate_json(path.read_text())
    except ValidationError as e:
        raise FormatError(f"invalid generator file {path}: {e}") from e
    return generator_from_document(document)
