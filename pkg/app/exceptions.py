"""Error types raised across the package.

Every error is a ``ValueError`` so callers that only care about bad input can
catch the builtin; the cli catches ``TileComposerError``.
"""

from typing import Optional


class TileComposerError(ValueError):
    """Base class for all package errors"""


class DimensionError(TileComposerError):
    """Zero/negative extents or extents not divisible as required"""


class TileError(TileComposerError):
    """Tile index or tile name outside the tileset"""


class TilesetError(TileComposerError):
    """Two levels or a level and a fitness spec disagree on the tileset"""


class ShapeError(TileComposerError):
    """Two grids that must share a shape do not"""


class BoundsError(TileComposerError):
    """Position outside the grid"""


class EmptyGridError(TileComposerError):
    pass


class SizeError(TileComposerError):
    """Requested size unusable for the operation"""


class ArityError(TileComposerError):
    """Wrong number of inputs, levels or classes"""


class SpecError(TileComposerError):
    """Genome arity does not match the generation parameters"""


class EvaluationError(TileComposerError):
    pass


class MappingError(TileComposerError):
    """A generator emitted a tile its node has no child for"""


class StructureError(TileComposerError):
    """Composition tree shape not supported"""


class FormatError(TileComposerError):
    """Unreadable or inconsistent document"""


class ConfigError(TileComposerError):
    """Invalid run configuration; ``key`` names the offending entry"""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key
