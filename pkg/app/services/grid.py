"""Tilemap operations: construction, statistics, labelling, coalescing, distances."""

import logging
from typing import Iterable, List, Sequence, Tuple

import numpy as np
from scipy import ndimage

from app.exceptions import BoundsError, DimensionError, EmptyGridError, ShapeError, TileError
from app.models.level import CoalescedRect, Grid, TileDistribution, Tileset, require_same_tileset

logger = logging.getLogger(__name__)


def new_grid(dims: Sequence[int], fill: int, tileset: Tileset) -> Grid:
    dims = tuple(int(d) for d in dims)
    if len(dims) not in (2, 3):
        raise DimensionError(f"grids are 2D or 3D, got dims {dims}")
    if any(d <= 0 for d in dims):
        raise DimensionError(f"extents must be positive, got {dims}")
    tileset.check_index(fill)
    return Grid(np.full(dims, fill, dtype=np.int64), tileset)


def tile_distribution(g: Grid) -> TileDistribution:
    if g.size == 0:
        raise EmptyGridError("cannot take the tile distribution of an empty grid")
    counts = np.bincount(g.tiles.ravel(), minlength=len(g.tileset))
    return TileDistribution(tuple(float(c) / g.size for c in counts), g.tileset)


def _class_mask(g: Grid, tile_class: Iterable[int]) -> np.ndarray:
    tiles = [g.tileset.check_index(t) for t in tile_class]
    return np.isin(g.tiles, tiles)


def axis_structure(ndim: int) -> np.ndarray:
    """4-neighbourhood in 2D, 6-neighbourhood in 3D"""
    return ndimage.generate_binary_structure(ndim, 1)


def label_regions(g: Grid, tile_class: Iterable[int]) -> Tuple[np.ndarray, int]:
    """Label connected components of cells whose tile is in ``tile_class``.

    Labels are 1-based; cells outside the class are 0.
    """
    mask = _class_mask(g, tile_class)
    labels, count = ndimage.label(mask, structure=axis_structure(g.ndim))
    return labels, int(count)


def count_axis_neighbors(g: Grid, pos: Sequence[int], tile_class: Iterable[int]) -> int:
    pos = tuple(int(p) for p in pos)
    if len(pos) != g.ndim or any(not 0 <= p < d for p, d in zip(pos, g.dims)):
        raise BoundsError(f"position {pos} outside grid {g.dims}")
    wanted = {g.tileset.check_index(t) for t in tile_class}
    count = 0
    for axis in range(g.ndim):
        for step in (-1, 1):
            q = list(pos)
            q[axis] += step
            if 0 <= q[axis] < g.dims[axis] and int(g.tiles[tuple(q)]) in wanted:
                count += 1
    return count


def axis_neighbor_counts(g: Grid, tile_class: Iterable[int]) -> np.ndarray:
    """count_axis_neighbors for every cell at once"""
    mask = _class_mask(g, tile_class).astype(np.int64)
    padded = np.pad(mask, 1)
    counts = np.zeros(g.dims, dtype=np.int64)
    core = tuple(slice(1, 1 + d) for d in g.dims)
    for axis in range(g.ndim):
        for step in (-1, 1):
            shifted = list(core)
            shifted[axis] = slice(1 + step, 1 + step + g.dims[axis])
            counts += padded[tuple(shifted)]
    return counts


def coalesce(g: Grid) -> List[CoalescedRect]:
    """Greedy rectangle decomposition.

    Cells are visited x fastest, then y, then z. An unconsumed cell grows along
    axis 0, then 1, then 2 while the added slab is homogeneous and unconsumed.
    """
    tiles = g.tiles
    dims = g.dims
    consumed = np.zeros(dims, dtype=bool)
    rects: List[CoalescedRect] = []
    for pos in _row_major(dims):
        if consumed[pos]:
            continue
        tile = int(tiles[pos])
        extent = [1] * g.ndim
        for axis in range(g.ndim):
            while pos[axis] + extent[axis] < dims[axis]:
                slab = [slice(p, p + e) for p, e in zip(pos, extent)]
                edge = pos[axis] + extent[axis]
                slab[axis] = slice(edge, edge + 1)
                slab = tuple(slab)
                if consumed[slab].any() or not (tiles[slab] == tile).all():
                    break
                extent[axis] += 1
        block = tuple(slice(p, p + e) for p, e in zip(pos, extent))
        consumed[block] = True
        rects.append(CoalescedRect(tuple(pos), tuple(extent), tile))
    return rects


def _row_major(dims: Sequence[int]):
    # np.ndindex runs the last axis fastest, so walk reversed dims
    for rev in np.ndindex(*reversed(dims)):
        yield tuple(int(i) for i in reversed(rev))


def paint(rects: Iterable[CoalescedRect], dims: Sequence[int], tileset: Tileset) -> Grid:
    """Inverse of coalesce: rebuild a grid from rectangles"""
    tiles = np.full(tuple(dims), -1, dtype=np.int64)
    for rect in rects:
        tiles[rect.slices()] = rect.tile
    if (tiles < 0).any():
        raise ShapeError("rectangles do not cover the grid")
    return Grid(tiles, tileset)


def _check_shapes(a: Grid, b: Grid) -> None:
    if a.dims != b.dims:
        raise ShapeError(f"grid shapes differ: {a.dims} vs {b.dims}")
    require_same_tileset(a, b)


def hamming(a: Grid, b: Grid) -> float:
    _check_shapes(a, b)
    return float(np.count_nonzero(a.tiles != b.tiles)) / a.size


def overlap(a: Grid, b: Grid) -> float:
    _check_shapes(a, b)
    return float(np.count_nonzero(a.tiles == b.tiles)) / a.size


def downsample_windows(g: Grid, k: int, default: int) -> Grid:
    """Each uniform k-window becomes its tile; mixed windows become ``default``"""
    if k < 1:
        raise DimensionError(f"window size must be >= 1, got {k}")
    g.tileset.check_index(default)
    if any(d % k for d in g.dims):
        raise DimensionError(f"dims {g.dims} not divisible by window {k}")
    if k == 1:
        return g
    split = []
    for d in g.dims:
        split += [d // k, k]
    blocks = g.tiles.reshape(split)
    window_axes = tuple(range(1, 2 * g.ndim, 2))
    lo = blocks.min(axis=window_axes)
    hi = blocks.max(axis=window_axes)
    return Grid(np.where(lo == hi, lo, default), g.tileset)


def remap(g: Grid, tileset: Tileset) -> Grid:
    """Re-express ``g`` in another tileset by tile name"""
    if g.tileset.names == tileset.names:
        return g
    try:
        lookup = np.array([tileset.index(name) for name in g.tileset.names], dtype=np.int64)
    except TileError as e:
        raise TileError(f"cannot remap level: {e}") from e
    return Grid(lookup[g.tiles], tileset)
