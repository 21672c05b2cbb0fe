"""Level representation: tilesets, grids and the level JSON document."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from app.exceptions import DimensionError, FormatError, TileError, TilesetError

RGB = Tuple[int, int, int]

# Render colour and voxel block for the tiles the presets use
KNOWN_TILES: Dict[str, Tuple[RGB, str]] = {
    "house": ((178, 34, 34), "bricks"),
    "road": ((128, 128, 128), "gravel"),
    "garden": ((34, 139, 34), "grass_block"),
    "wall": ((139, 90, 43), "oak_planks"),
    "air": ((255, 255, 255), "air"),
    "roof": ((90, 40, 20), "dark_oak_planks"),
    "grass": ((124, 252, 0), "grass_block"),
    "tree": ((0, 100, 0), "oak_log"),
    "flower": ((255, 105, 180), "poppy"),
    "water": ((30, 144, 255), "water"),
}

# Fallback palette for tiles without a known colour
PALETTE: List[RGB] = [
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
]


@dataclass(frozen=True)
class Tileset:
    names: Tuple[str, ...]
    colors: Tuple[RGB, ...]
    voxel_names: Tuple[str, ...]

    def __post_init__(self):
        if not self.names:
            raise TileError("tileset needs at least one tile")
        if len(set(self.names)) != len(self.names):
            raise TileError(f"duplicate tile names in {list(self.names)}")
        if len(self.colors) != len(self.names) or len(self.voxel_names) != len(self.names):
            raise TileError("colors and voxel_names must match names in length")
        for color in self.colors:
            if len(color) != 3 or any(not 0 <= c <= 255 for c in color):
                raise TileError(f"invalid RGB colour {color}")

    @classmethod
    def from_names(cls, names: Sequence[str]) -> "Tileset":
        colors, voxels = [], []
        for i, name in enumerate(names):
            color, voxel = KNOWN_TILES.get(name, (PALETTE[i % len(PALETTE)], name))
            colors.append(tuple(color))
            voxels.append(voxel)
        return cls(tuple(names), tuple(colors), tuple(voxels))

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise TileError(f"tile '{name}' not in tileset {list(self.names)}") from None

    def check_index(self, tile: int) -> int:
        if not 0 <= int(tile) < len(self.names):
            raise TileError(f"tile index {tile} outside [0, {len(self.names)})")
        return int(tile)

    def union(self, other: "Tileset") -> "Tileset":
        """Ordered union by name; colours of the first occurrence win"""
        names, colors, voxels = list(self.names), list(self.colors), list(self.voxel_names)
        for name, color, voxel in zip(other.names, other.colors, other.voxel_names):
            if name not in names:
                names.append(name)
                colors.append(color)
                voxels.append(voxel)
        return Tileset(tuple(names), tuple(colors), tuple(voxels))

    def to_entries(self) -> List[dict]:
        return [
            {"name": n, "color": list(c), "voxel": v}
            for n, c, v in zip(self.names, self.colors, self.voxel_names)
        ]

    @classmethod
    def from_entries(cls, entries: Sequence[dict]) -> "Tileset":
        names = [e["name"] for e in entries]
        base = cls.from_names(names)
        colors = tuple(tuple(e.get("color", c)) for e, c in zip(entries, base.colors))
        voxels = tuple(e.get("voxel", v) for e, v in zip(entries, base.voxel_names))
        return cls(tuple(names), colors, voxels)


@dataclass(frozen=True, eq=False)
class Grid:
    """Dense 2D/3D tilemap indexed ``tiles[x, y(, z)]``"""

    tiles: np.ndarray
    tileset: Tileset

    def __post_init__(self):
        tiles = np.array(self.tiles, dtype=np.int64, copy=True)
        if tiles.ndim not in (2, 3):
            raise DimensionError(f"grids are 2D or 3D, got {tiles.ndim} dimensions")
        if any(d <= 0 for d in tiles.shape):
            raise DimensionError(f"extents must be positive, got {tiles.shape}")
        if tiles.size and (tiles.min() < 0 or tiles.max() >= len(self.tileset)):
            raise TileError(f"tile values must lie in [0, {len(self.tileset)})")
        tiles.setflags(write=False)
        object.__setattr__(self, "tiles", tiles)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(int(d) for d in self.tiles.shape)

    @property
    def ndim(self) -> int:
        return self.tiles.ndim

    @property
    def size(self) -> int:
        return int(self.tiles.size)

    def __getitem__(self, pos) -> int:
        return int(self.tiles[tuple(pos)])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return self.tileset.names == other.tileset.names and np.array_equal(self.tiles, other.tiles)

    def __hash__(self):
        return hash((self.tileset.names, self.dims, self.tiles.tobytes()))

    def flat(self) -> np.ndarray:
        """Row-major cells, x fastest"""
        return self.tiles.flatten(order="F")

    def render(self) -> str:
        """Rows of first letters, top row y=0; 2D only. Handy in logs and tests."""
        rows = []
        for y in range(self.dims[1]):
            rows.append("".join(self.tileset.names[self.tiles[x, y]][0].upper() for x in range(self.dims[0])))
        return "/".join(rows)


@dataclass(frozen=True)
class CoalescedRect:
    origin: Tuple[int, ...]
    extent: Tuple[int, ...]
    tile: int

    def slices(self, scale: Optional[Sequence[int]] = None) -> Tuple[slice, ...]:
        scale = scale or (1,) * len(self.origin)
        return tuple(
            slice(o * s, (o + e) * s) for o, e, s in zip(self.origin, self.extent, scale)
        )


@dataclass(frozen=True)
class TileDistribution:
    probs: Tuple[float, ...]
    tileset: Optional[Tileset] = field(default=None, compare=False)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=np.float64)

    def __getitem__(self, tile: int) -> float:
        return self.probs[tile]


# Level JSON document
class LevelDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dims: List[int]
    tileset: List[str]
    tiles: List[int]
    colors: Optional[List[List[int]]] = None
    voxels: Optional[List[str]] = None

    @classmethod
    def from_grid(cls, grid: Grid) -> "LevelDocument":
        return cls(
            dims=list(grid.dims),
            tileset=list(grid.tileset.names),
            tiles=[int(t) for t in grid.flat()],
            colors=[list(c) for c in grid.tileset.colors],
            voxels=list(grid.tileset.voxel_names),
        )

    def to_grid(self) -> Grid:
        if len(self.tiles) != int(np.prod(self.dims)):
            raise FormatError(f"tiles has {len(self.tiles)} entries, dims {self.dims} need {int(np.prod(self.dims))}")
        # Stored colours and voxels each override the defaults on their own
        base = Tileset.from_names(self.tileset)
        colors = tuple(tuple(c) for c in self.colors) if self.colors is not None else base.colors
        voxels = tuple(self.voxels) if self.voxels is not None else base.voxel_names
        tileset = Tileset(base.names, colors, voxels)
        tiles = np.asarray(self.tiles, dtype=np.int64).reshape(self.dims, order="F")
        return Grid(tiles, tileset)


def save_level(grid: Grid, path: Path) -> None:
    Path(path).write_text(LevelDocument.from_grid(grid).model_dump_json(exclude_none=True))


def load_level(path: Path) -> Grid:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"level file {path} does not exist")
    try:
        return LevelDocument.model_validate_json(path.read_text()).to_grid()
    except ValidationError as e:
        raise FormatError(f"invalid level file {path}: {e}") from e


def require_same_tileset(a: Grid, b: Grid) -> None:
    if a.tileset.names != b.tileset.names:
        raise TilesetError(f"tilesets differ: {list(a.tileset.names)} vs {list(b.tileset.names)}")
