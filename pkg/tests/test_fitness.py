import math

import numpy as np
import pytest

from app.exceptions import ArityError, ConfigError, ShapeError, SizeError
from app.models.config import FitnessTerm
from app.models.level import Grid, LevelDocument, TileDistribution, Tileset
from app.services.fitness import (
    LEVEL,
    FitnessComponent,
    NoveltyConfig,
    WeightedFitness,
    boundary_layout_target,
    build_fitness,
    combine,
    equal_distribution_fitness,
    garden_fitness,
    hollow_cube_target,
    intra_novelty,
    jensen_shannon,
    novelty_scores,
    probability_fitness,
    reachability_fitness,
    target_overlap_fitness,
)
from app.services.grid import new_grid, tile_distribution

TOWN_TARGET = (0.4, 0.3, 0.3)


@pytest.fixture
def town_target(town_tiles):
    return TileDistribution(TOWN_TARGET, town_tiles)


@pytest.fixture
def house_tiles():
    return Tileset.from_names(["wall", "air", "roof"])


@pytest.fixture
def garden_tiles():
    return Tileset.from_names(["grass", "tree", "flower", "water"])


def brute_jsd(p, q):
    """Direct base-2 evaluation with 0 log 0 = 0"""
    m = [(a + b) / 2 for a, b in zip(p, q)]
    kl = lambda x, y: sum(a * math.log2(a / b) for a, b in zip(x, y) if a > 0)
    return (kl(p, m) + kl(q, m)) / 2


def constant(score):
    return FitnessComponent(f"const{score}", LEVEL, lambda g: score)


class TestProbability:
    def test_matching_distribution(self, grid_of, town_target):
        assert probability_fitness(grid_of("HHHHRRRGGG"), town_target) == pytest.approx(1.0, abs=1e-9)

    def test_disjoint_support(self, grid_of, town_tiles):
        target = TileDistribution((1.0, 0.0, 0.0), town_tiles)
        assert probability_fitness(grid_of("GG/RR"), target) == pytest.approx(0.0, abs=1e-9)

    def test_all_garden(self, grid_of, town_target):
        g = grid_of("GGG/GGG")
        expected = 1 - math.sqrt(brute_jsd((0, 0, 1), TOWN_TARGET))
        assert expected == pytest.approx(0.2976, abs=1e-4)
        assert probability_fitness(g, town_target) == pytest.approx(expected, abs=1e-12)

    def test_jsd_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            p = rng.dirichlet(np.ones(4))
            q = rng.dirichlet(np.ones(4))
            assert jensen_shannon(p, q) == pytest.approx(brute_jsd(p, q), abs=1e-12)


class TestReachability:
    def test_all_garden(self, grid_of):
        b = reachability_fitness(grid_of("GGG/GGG/GGG"), 0, 1, 2)
        assert (b.H, b.a, b.c_road, b.c_house_road) == (0, 0.0, 0, 0)
        assert (b.d_road, b.d_house_road, b.b) == (1.0, 1.0, 0.25)
        assert b.fitness == 0.0

    def test_split_road(self, grid_of):
        b = reachability_fitness(grid_of("RRGRR/RRGRR/RRGRR/RRGRR/RRGRR"), 0, 1, 2)
        assert b.c_road == 2
        assert b.d_road == 1.0
        assert b.H == 0
        assert b.fitness == 0.0

    def test_ten_reachable_houses(self, grid_of):
        b = reachability_fitness(grid_of("HHHHHHHHHH/RRRRRRRRRR/GGGGGGGGGG"), 0, 1, 2)
        assert b.H == 10
        assert b.a == 0.5
        assert b.b == 1.0
        assert b.fitness == 0.5

    def test_house_with_four_roads_does_not_count(self, grid_of):
        b = reachability_fitness(grid_of("RRR/RHR/RRR"), 0, 1, 2)
        assert b.H == 0

    def test_breakdown_is_consistent(self):
        rng = np.random.default_rng(3)
        tiles = Tileset.from_names(["house", "road", "garden"])
        for _ in range(200):
            g = Grid(rng.integers(0, 3, size=(8, 8)), tiles)
            b = reachability_fitness(g, 0, 1, 2)
            assert b.a == min(b.H / 20, 1)
            assert b.d_road == min(abs(1 - b.c_road), 10)
            assert b.d_house_road == min(abs(1 - b.c_house_road), 10)
            assert b.b == pytest.approx(1 / ((b.d_house_road + 1) * (b.d_road + 1)))
            assert b.fitness == pytest.approx(b.a * b.b)

    def test_tiles_must_be_distinct(self, grid_of):
        with pytest.raises(ArityError):
            reachability_fitness(grid_of("RR"), 0, 0, 2)


class TestEqualDistribution:
    def test_equal_thirds(self, grid_of):
        assert equal_distribution_fitness(grid_of("HRG/HRG/HRG"), [0, 1, 2]) == pytest.approx(1.0)

    def test_all_house(self, grid_of):
        assert equal_distribution_fitness(grid_of("HHH/HHH"), [0, 1, 2]) == 0.0

    def test_town_mix(self, grid_of):
        assert equal_distribution_fitness(grid_of("HHHHRRRGGG"), [0, 1, 2]) == pytest.approx(0.9778, abs=1e-4)

    def test_label_permutation(self):
        rng = np.random.default_rng(4)
        tiles = Tileset.from_names(["house", "road", "garden"])
        perm = np.array([2, 0, 1])
        for _ in range(50):
            g = Grid(rng.integers(0, 3, size=(6, 6)), tiles)
            moved = Grid(perm[g.tiles], tiles)
            assert equal_distribution_fitness(g, [0, 1, 2]) == pytest.approx(
                equal_distribution_fitness(moved, [int(perm[0]), int(perm[1]), int(perm[2])])
            )


class TestTargets:
    def test_overlap_examples(self, town_tiles):
        target = Grid(np.zeros((5, 5), dtype=np.int64), town_tiles)
        assert target_overlap_fitness(target, target) == 1.0
        assert target_overlap_fitness(new_grid((5, 5), 1, town_tiles), target) == 0.0
        tiles = np.zeros((5, 5), dtype=np.int64)
        tiles[0, :] = 1
        assert target_overlap_fitness(Grid(tiles, town_tiles), target) == 0.8

    def test_overlap_shape_mismatch(self, town_tiles):
        with pytest.raises(ShapeError):
            target_overlap_fitness(new_grid((2, 2), 0, town_tiles), new_grid((3, 3), 0, town_tiles))

    def test_hollow_cube_counts(self, house_tiles):
        cube = hollow_cube_target((3, 3, 3), 0, 1, 2, house_tiles)
        counts = np.bincount(cube.tiles.ravel(), minlength=3)
        assert list(counts) == [16, 2, 9]
        assert (cube.tiles[:, :, 2] == 2).all()
        assert cube[1, 1, 0] == 1 and cube[1, 1, 1] == 1

    def test_small_cube_has_no_air(self, house_tiles):
        counts = np.bincount(hollow_cube_target((2, 2, 2), 0, 1, 2, house_tiles).tiles.ravel(), minlength=3)
        assert list(counts) == [4, 0, 4]

    def test_cube_by_classification(self, house_tiles):
        w, h, d = 4, 5, 6
        cube = hollow_cube_target((w, h, d), 0, 1, 2, house_tiles)
        for x in range(w):
            for y in range(h):
                for z in range(d):
                    if z == d - 1:
                        expected = 2
                    elif x in (0, w - 1) or y in (0, h - 1):
                        expected = 0
                    else:
                        expected = 1
                    assert cube[x, y, z] == expected

    def test_flat_house_template(self):
        tiles = Tileset.from_names(["wall", "air"])
        template = hollow_cube_target((5, 5), 0, 1, None, tiles)
        assert list(np.bincount(template.tiles.ravel())) == [16, 9]

    def test_cube_too_small(self, house_tiles):
        with pytest.raises(SizeError):
            hollow_cube_target((1, 3, 3), 0, 1, 2, house_tiles)

    @pytest.mark.parametrize("side,counts", [(5, [16, 8, 1]), (6, [20, 12, 4])])
    def test_boundary_rings(self, town_tiles, side, counts):
        layout = boundary_layout_target((side, side), 0, 1, 2, town_tiles)
        assert list(np.bincount(layout.tiles.ravel(), minlength=3)) == counts
        assert target_overlap_fitness(layout, layout) == 1.0

    def test_boundary_too_small(self, town_tiles):
        with pytest.raises(SizeError):
            boundary_layout_target((4, 6), 0, 1, 2, town_tiles)


class TestGarden:
    def _compliant(self):
        tiles = np.zeros((10, 10), dtype=np.int64)
        tiles[5:, :] = 2  # half flowers
        tiles[0, 0] = 1
        tiles[3, 3] = 1
        tiles[9, 9] = 3
        return tiles

    def test_all_criteria(self, garden_tiles):
        assert garden_fitness(Grid(self._compliant(), garden_tiles), 1, 2, 3, 0) == 1.0

    def test_all_grass(self, garden_tiles):
        assert garden_fitness(new_grid((10, 10), 0, garden_tiles), 1, 2, 3, 0) == 0.25

    def test_adjacent_trees(self, garden_tiles):
        tiles = self._compliant()
        tiles[1, 1] = 1
        assert garden_fitness(Grid(tiles, garden_tiles), 1, 2, 3, 0) == 0.75


class TestNovelty:
    def test_intra_identical(self, grid_of):
        g = grid_of("HR/GH")
        assert intra_novelty([g, g, g]) == 0.0

    def test_intra_opposite(self, grid_of):
        assert intra_novelty([grid_of("HH/HH"), grid_of("RR/RR")]) == 1.0

    def test_intra_mean_of_pairs(self, town_tiles):
        base = np.zeros(10, dtype=np.int64)
        a = base.copy()
        b = base.copy()
        b[:2] = 1
        c = base.copy()
        c[:2] = 2
        c[2:4] = 1
        levels = [Grid(x.reshape(10, 1), town_tiles) for x in (a, b, c)]
        d = base.copy()
        d[4:10] = 1
        assert intra_novelty(levels) == pytest.approx((0.2 + 0.4 + 0.4) / 3)
        assert intra_novelty([levels[0], Grid(d.reshape(10, 1), town_tiles)]) == pytest.approx(0.6)

    def test_intra_needs_two(self, grid_of):
        with pytest.raises(ArityError):
            intra_novelty([grid_of("HH")])

    def test_identical_population(self, grid_of):
        g = grid_of("HR/GH")
        assert novelty_scores([[g], [g], [g]], NoveltyConfig(k=2)) == [0.0, 0.0, 0.0]

    def test_pair_gets_mutual_distance(self, grid_of):
        a, b = grid_of("HH/HH"), grid_of("HH/RR")
        assert novelty_scores([[a], [b]], NoveltyConfig(k=1)) == [0.5, 0.5]

    def test_permutation_invariance(self):
        rng = np.random.default_rng(8)
        tiles = Tileset.from_names(["a", "b", "c"])
        population = [[Grid(rng.integers(0, 3, size=(4, 4)), tiles) for _ in range(3)] for _ in range(6)]
        order = [3, 0, 5, 1, 4, 2]
        scores = novelty_scores(population, NoveltyConfig(k=3, archive_adds=0))
        shuffled = novelty_scores([population[i] for i in order], NoveltyConfig(k=3, archive_adds=0))
        assert shuffled == pytest.approx([scores[i] for i in order])

    def test_large_k_is_mean_distance(self):
        rng = np.random.default_rng(9)
        tiles = Tileset.from_names(["a", "b"])
        population = [[Grid(rng.integers(0, 2, size=(5, 5)), tiles)] for _ in range(4)]
        scores = novelty_scores(population, NoveltyConfig(k=10, archive_adds=0))
        for i, levels in enumerate(population):
            others = [float((levels[0].tiles != p[0].tiles).mean()) for j, p in enumerate(population) if j != i]
            assert scores[i] == pytest.approx(np.mean(others))

    def test_archive_grows(self, grid_of):
        config = NoveltyConfig(k=1, archive_adds=1)
        novelty_scores([[grid_of("HH")], [grid_of("RR")]], config)
        assert len(config.archive) == 1


class TestCombine:
    def test_ratio_all_ones(self, grid_of):
        w = WeightedFitness(((constant(1.0), 1), (constant(1.0), 1), (constant(1.0), 8)))
        assert combine(w, [grid_of("HH")]) == pytest.approx(1.0)

    def test_ratio_objective_only(self, grid_of):
        w = WeightedFitness(((constant(0.0), 1), (constant(0.0), 1), (constant(1.0), 8)))
        assert combine(w, [grid_of("HH")]) == pytest.approx(0.8)

    def test_equal_weights(self, grid_of):
        w = WeightedFitness(((constant(0.4), 1), (constant(0.6), 1)))
        assert combine(w, [grid_of("HH")]) == pytest.approx(0.5)

    def test_weight_scale_invariance(self, grid_of):
        a = WeightedFitness(((constant(0.3), 2), (constant(0.9), 5)))
        b = WeightedFitness(((constant(0.3), 6), (constant(0.9), 15)))
        assert combine(a, [grid_of("HH")]) == pytest.approx(combine(b, [grid_of("HH")]))

    def test_needs_positive_weight(self):
        with pytest.raises(ArityError):
            WeightedFitness(((constant(1.0), 0),))

    def test_novelty_comes_from_context(self, grid_of):
        w = build_fitness([FitnessTerm(name="novelty", weight=1), FitnessTerm(name="probability", weight=1)],
                          Tileset.from_names(["house", "road", "garden"]))
        assert w.uses_novelty
        with pytest.raises(ArityError):
            w.combine([grid_of("HHHHRRRGGG")])
        assert w.combine([grid_of("HHHHRRRGGG")], {"novelty": 0.5}) == pytest.approx(0.75)


class TestBuildFitness:
    def test_town_terms(self, grid_of, town_tiles):
        w = build_fitness(
            [FitnessTerm(name="probability"), FitnessTerm(name="reachability")], town_tiles
        )
        level = grid_of("HHHHHHHHHH/RRRRRRRRRR/GGGGGGGGGG")
        p = probability_fitness(level, TileDistribution(TOWN_TARGET, town_tiles))
        assert w.combine([level]) == pytest.approx((p + 0.5) / 2)

    def test_target_overlap_inline(self, grid_of, town_tiles):
        level = grid_of("HRG/GRH")
        target = LevelDocument.from_grid(level).model_dump()
        w = build_fitness([FitnessTerm(name="target_overlap", params={"target": target})], town_tiles)
        assert w.combine([level]) == 1.0

    def test_house_term_3d(self, house_tiles):
        w = build_fitness([FitnessTerm(name="house")], house_tiles)
        cube = hollow_cube_target((4, 4, 4), 0, 1, 2, house_tiles)
        assert w.combine([cube]) == 1.0

    def test_unknown_tile_param(self, town_tiles):
        with pytest.raises(ConfigError):
            build_fitness([FitnessTerm(name="reachability", params={"house": "castle"})], town_tiles)

    def test_probability_target_must_sum_to_one(self, town_tiles):
        with pytest.raises(ConfigError):
            build_fitness([FitnessTerm(name="probability", params={"target": {"house": 0.9}})], town_tiles)


def test_fitness_bounds_fuzz():
    rng = np.random.default_rng(12)
    town = Tileset.from_names(["house", "road", "garden"])
    garden = Tileset.from_names(["grass", "tree", "flower", "water"])
    target = TileDistribution(TOWN_TARGET, town)
    for _ in range(2000):
        dims = (int(rng.integers(5, 12)), int(rng.integers(5, 12)))
        g = Grid(rng.integers(0, int(rng.integers(1, 4)), size=dims), town)
        values = [
            probability_fitness(g, target),
            reachability_fitness(g, 0, 1, 2).fitness,
            equal_distribution_fitness(g, [0, 1, 2]),
            target_overlap_fitness(g, boundary_layout_target(dims, 0, 1, 2, town)),
            garden_fitness(Grid(rng.integers(0, 4, size=dims), garden), 1, 2, 3, 0),
        ]
        assert all(0.0 <= v <= 1.0 for v in values)
    assert tile_distribution(g).as_array().sum() == pytest.approx(1.0)
