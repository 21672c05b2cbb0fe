"""Level file writers: plain PPM, PNG and voxel listings."""

import logging
from pathlib import Path
from typing import Iterator, Literal

import numpy as np
from PIL import Image

from app.exceptions import DimensionError, FormatError
from app.models.level import Grid

logger = logging.getLogger(__name__)

ExportFormat = Literal["ppm", "png", "voxel"]


def _require_2d(g: Grid, fmt: str) -> None:
    if g.ndim != 2:
        raise FormatError(f"{fmt} export needs a 2D level, got {g.ndim}D {g.dims}")


def color_image(g: Grid) -> np.ndarray:
    """RGB array laid out [y, x, channel]"""
    _require_2d(g, "image")
    palette = np.asarray(g.tileset.colors, dtype=np.uint8)
    return palette[g.tiles.T]


def to_ppm(g: Grid) -> str:
    _require_2d(g, "ppm")
    width, height = g.dims
    rgb = color_image(g)
    lines = ["P3", f"{width} {height}", "255"]
    for row in rgb:
        lines.append(" ".join(f"{r} {gr} {b}" for r, gr, b in row))
    return "\n".join(lines) + "\n"


def voxel_lines(g: Grid) -> Iterator[str]:
    """``x y z voxel`` for every cell, x fastest then y then z; 2D levels sit at z=0"""
    tiles = g.tiles if g.ndim == 3 else g.tiles[:, :, None]
    width, height, depth = tiles.shape
    names = g.tileset.voxel_names
    for z in range(depth):
        for y in range(height):
            for x in range(width):
                yield f"{x} {y} {z} {names[tiles[x, y, z]]}"


def to_png(g: Grid, path: Path, scale: int = 1) -> None:
    if scale < 1:
        raise DimensionError(f"png scale must be >= 1, got {scale}")
    image = Image.fromarray(color_image(g), mode="RGB")
    if scale > 1:
        image = image.resize((image.width * scale, image.height * scale), Image.NEAREST)
    image.save(path, format="PNG")


def export_level(g: Grid, fmt: ExportFormat, path: Path, scale: int = 1) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "ppm":
        path.write_text(to_ppm(g))
    elif fmt == "png":
        to_png(g, path, scale)
    elif fmt == "voxel":
        path.write_text("".join(line + "\n" for line in voxel_lines(g)))
    else:
        raise FormatError(f"unknown export format '{fmt}'")
    logger.info("exported %s level %s to %s", fmt, g.dims, path)
    return path
