import numpy as np
import pytest

from app.models.level import Grid, Tileset


@pytest.fixture
def town_tiles():
    """house / road / garden in preset order"""
    return Tileset.from_names(["house", "road", "garden"])


@pytest.fixture
def grid_of(town_tiles):
    """Build a 2D town grid from rows like "HG/RH" (row y=0 first)"""
    letters = {"H": 0, "R": 1, "G": 2}

    def build(rows: str, tileset: Tileset = town_tiles, key=None) -> Grid:
        key = key or letters
        lines = rows.split("/")
        tiles = np.array([[key[c] for c in line] for line in lines], dtype=np.int64).T
        return Grid(tiles, tileset)

    return build


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
