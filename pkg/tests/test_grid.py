from collections import deque

import numpy as np
import pytest

from app.exceptions import BoundsError, DimensionError, ShapeError, TileError
from app.models.level import CoalescedRect, Grid, LevelDocument, Tileset, load_level, save_level
from app.services.grid import (
    coalesce,
    count_axis_neighbors,
    downsample_windows,
    hamming,
    label_regions,
    new_grid,
    overlap,
    paint,
    remap,
    tile_distribution,
)


def random_grid(rng, tileset, max_side=16, ndim=2):
    dims = tuple(int(d) for d in rng.integers(1, max_side + 1, size=ndim))
    n = int(rng.integers(2, len(tileset) + 1))
    return Grid(rng.integers(0, n, size=dims), tileset)


def flood_fill_components(tiles, wanted):
    """Independent BFS labelling: list of frozensets of cells"""
    mask = np.isin(tiles, list(wanted))
    seen = np.zeros_like(mask)
    components = []
    for start in zip(*np.nonzero(mask)):
        if seen[start]:
            continue
        seen[start] = True
        queue, cells = deque([start]), []
        while queue:
            cell = queue.popleft()
            cells.append(tuple(int(c) for c in cell))
            for axis in range(tiles.ndim):
                for step in (-1, 1):
                    q = list(cell)
                    q[axis] += step
                    q = tuple(q)
                    if 0 <= q[axis] < tiles.shape[axis] and mask[q] and not seen[q]:
                        seen[q] = True
                        queue.append(q)
        components.append(frozenset(cells))
    return components


class TestNewGrid:
    """Test grid construction"""

    def test_constant_fill(self, town_tiles):
        g = new_grid((2, 2), 2, town_tiles)
        assert g.render() == "GG/GG"

    def test_unit_voxel(self, town_tiles):
        g = new_grid((1, 1, 1), 0, town_tiles)
        assert g.dims == (1, 1, 1)
        assert g[0, 0, 0] == 0

    def test_cell_count(self, town_tiles):
        g = new_grid((3, 2), 1, town_tiles)
        assert g.size == 6
        assert (g.tiles == 1).all()

    def test_rejects_bad_extent(self, town_tiles):
        with pytest.raises(DimensionError):
            new_grid((0, 3), 0, town_tiles)

    def test_rejects_bad_fill(self, town_tiles):
        with pytest.raises(TileError):
            new_grid((2, 2), 3, town_tiles)

    def test_grid_is_read_only(self, town_tiles):
        g = new_grid((2, 2), 0, town_tiles)
        with pytest.raises(ValueError):
            g.tiles[0, 0] = 1


class TestDistribution:
    def test_target_shape(self, grid_of):
        dist = tile_distribution(grid_of("HHHHGGGRRR"))
        assert dist.probs == pytest.approx((0.4, 0.3, 0.3))

    def test_uniform(self, grid_of):
        assert tile_distribution(grid_of("RR/RR")).probs == (0.0, 1.0, 0.0)

    def test_mixed(self, grid_of):
        dist = tile_distribution(grid_of("HG/RH"))
        assert dist[0] == 0.5
        assert dist[1] == 0.25
        assert dist[2] == 0.25


class TestLabelRegions:
    def test_all_road_is_one_region(self, grid_of):
        _, count = label_regions(grid_of("RRR/RRR/RRR"), [1])
        assert count == 1

    def test_no_matching_cells(self, grid_of):
        labels, count = label_regions(grid_of("RRR/RRR"), [0])
        assert count == 0
        assert (labels == 0).all()

    def test_garden_line_splits_road(self, grid_of):
        _, count = label_regions(grid_of("RRGRR/RRGRR/RRGRR/RRGRR/RRGRR"), [1])
        assert count == 2

    def test_diagonal_cells_are_not_connected(self, grid_of):
        _, count = label_regions(grid_of("RG/GR"), [1])
        assert count == 2

    @pytest.mark.parametrize("ndim,max_side", [(2, 16), (3, 6)])
    def test_matches_flood_fill(self, ndim, max_side):
        rng = np.random.default_rng(ndim)
        tileset = Tileset.from_names(["a", "b", "c", "d"])
        for _ in range(250):
            g = random_grid(rng, tileset, max_side, ndim)
            wanted = {int(t) for t in rng.choice(4, size=int(rng.integers(1, 3)), replace=False)}
            labels, count = label_regions(g, wanted)
            expected = flood_fill_components(g.tiles, wanted)
            assert count == len(expected)
            found = set()
            for label in range(1, count + 1):
                found.add(frozenset(tuple(int(c) for c in cell) for cell in zip(*np.nonzero(labels == label))))
            assert found == set(expected)


class TestNeighbors:
    def test_center_of_ring(self, grid_of):
        assert count_axis_neighbors(grid_of("RRR/RHR/RRR"), (1, 1), [1]) == 4

    def test_corner(self, grid_of):
        assert count_axis_neighbors(grid_of("RR/RR"), (0, 0), [1]) == 2

    def test_empty_class(self, grid_of):
        assert count_axis_neighbors(grid_of("RR/RR"), (1, 1), []) == 0

    def test_out_of_bounds(self, grid_of):
        with pytest.raises(BoundsError):
            count_axis_neighbors(grid_of("RR/RR"), (2, 0), [1])

    def test_3d_has_six_neighbors(self, town_tiles):
        g = new_grid((3, 3, 3), 1, town_tiles)
        assert count_axis_neighbors(g, (1, 1, 1), [1]) == 6


class TestCoalesce:
    def test_uniform_block(self, grid_of):
        assert coalesce(grid_of("HH/HH")) == [CoalescedRect((0, 0), (2, 2), 0)]

    def test_checkerboard(self, grid_of):
        rects = coalesce(grid_of("HG/GH"))
        assert len(rects) == 4
        assert all(r.extent == (1, 1) for r in rects)

    def test_greedy_trace(self, grid_of):
        assert coalesce(grid_of("HHG/HHG")) == [
            CoalescedRect((0, 0), (2, 2), 0),
            CoalescedRect((2, 0), (1, 2), 2),
        ]

    @pytest.mark.parametrize("ndim,max_side", [(2, 16), (3, 6)])
    def test_partition_law(self, ndim, max_side):
        rng = np.random.default_rng(10 + ndim)
        tileset = Tileset.from_names(["a", "b", "c"])
        for _ in range(250):
            # Low-entropy grids so rectangles actually grow
            g = random_grid(rng, tileset, max_side, ndim)
            if rng.random() < 0.5:
                g = Grid(np.minimum(g.tiles, 1), tileset)
            rects = coalesce(g)
            cover = np.zeros(g.dims, dtype=np.int64)
            for r in rects:
                block = g.tiles[r.slices()]
                assert (block == r.tile).all()
                cover[r.slices()] += 1
            assert (cover == 1).all()
            assert paint(rects, g.dims, tileset) == g

    def test_paint_rejects_gaps(self, town_tiles):
        with pytest.raises(ShapeError):
            paint([CoalescedRect((0, 0), (1, 1), 0)], (2, 1), town_tiles)


class TestDistances:
    def test_hamming_examples(self, grid_of):
        a = grid_of("HH/HH")
        assert hamming(a, a) == 0.0
        assert hamming(a, grid_of("RR/RR")) == 1.0
        assert hamming(a, grid_of("HR/RH")) == 0.5

    def test_overlap_examples(self, grid_of):
        a = grid_of("HH/HH")
        assert overlap(a, a) == 1.0
        assert overlap(a, grid_of("GG/GG")) == 0.0
        assert overlap(a, grid_of("HG/GH")) == 0.5

    def test_shape_mismatch(self, grid_of):
        with pytest.raises(ShapeError):
            hamming(grid_of("HH/HH"), grid_of("HHH/HHH"))

    def test_metric_properties(self):
        rng = np.random.default_rng(7)
        tileset = Tileset.from_names(["a", "b", "c"])
        for _ in range(200):
            dims = (int(rng.integers(1, 8)), int(rng.integers(1, 8)))
            a, b, c = (Grid(rng.integers(0, 3, size=dims), tileset) for _ in range(3))
            assert hamming(a, b) == hamming(b, a)
            assert hamming(a, c) <= hamming(a, b) + hamming(b, c) + 1e-12
            assert (hamming(a, b) == 0) == (a == b)
            assert overlap(a, b) + hamming(a, b) == pytest.approx(1.0, abs=1e-12)


class TestDownsample:
    def test_identity(self, grid_of):
        g = grid_of("HG/RH")
        assert downsample_windows(g, 1, 2) == g

    def test_uniform_window(self, grid_of):
        assert downsample_windows(grid_of("HH/HH"), 2, 2).render() == "H"

    def test_mixed_window_takes_default(self, grid_of):
        assert downsample_windows(grid_of("HG/HH"), 2, 2).render() == "G"

    def test_non_divisible(self, grid_of):
        with pytest.raises(DimensionError):
            downsample_windows(grid_of("HHH/HHH"), 2, 2)

    def test_replication_roundtrip(self, town_tiles):
        rng = np.random.default_rng(3)
        for k in (2, 3):
            small = Grid(rng.integers(0, 3, size=(4, 5)), town_tiles)
            big = Grid(np.kron(small.tiles, np.ones((k, k), dtype=np.int64)), town_tiles)
            assert downsample_windows(big, k, 2) == small


def test_remap_by_name(town_tiles):
    g = Grid(np.array([[0, 1], [2, 0]]), town_tiles)
    other = Tileset.from_names(["garden", "house", "road", "wall"])
    moved = remap(g, other)
    assert [other.names[t] for t in moved.flat()] == [town_tiles.names[t] for t in g.flat()]


def test_remap_missing_tile(town_tiles):
    with pytest.raises(TileError):
        remap(new_grid((1, 1), 0, town_tiles), Tileset.from_names(["road"]))


class TestLevelDocument:
    def test_colors_without_voxels_are_kept(self):
        doc = LevelDocument(dims=[2, 1], tileset=["house", "road"], tiles=[0, 1], colors=[[1, 2, 3], [4, 5, 6]])
        tileset = doc.to_grid().tileset
        assert tileset.colors == ((1, 2, 3), (4, 5, 6))
        assert tileset.voxel_names == ("bricks", "gravel")

    def test_voxels_without_colors_are_kept(self):
        doc = LevelDocument(dims=[1, 1], tileset=["house"], tiles=[0], voxels=["stone"])
        tileset = doc.to_grid().tileset
        assert tileset.voxel_names == ("stone",)
        assert tileset.colors == ((178, 34, 34),)

    def test_color_count_must_match(self):
        doc = LevelDocument(dims=[1, 1], tileset=["house"], tiles=[0], colors=[[1, 2, 3], [4, 5, 6]])
        with pytest.raises(TileError):
            doc.to_grid()

    def test_file_keeps_tiles_and_palette(self, tmp_path, rng):
        tileset = Tileset(("a", "b"), ((10, 20, 30), (40, 50, 60)), ("stone", "dirt"))
        g = Grid(rng.integers(0, 2, size=(4, 3, 2)), tileset)
        save_level(g, tmp_path / "level.json")
        loaded = load_level(tmp_path / "level.json")
        assert loaded == g
        assert loaded.tileset == tileset
