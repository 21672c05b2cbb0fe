from .level import (
    CoalescedRect,
    Grid,
    LevelDocument,
    TileDistribution,
    Tileset,
    load_level,
    save_level,
)
from .config import (
    ExperimentConfig,
    FitnessTerm,
    GenParams,
    NeatParams,
    NoveltySettings,
    RandomLayoutSpec,
    TrainConfig,
    load_train_config,
)
from .documents import GeneratorDocument, GenomeDocument, TreeDocument, TreeNodeDocument

__all__ = [
    "CoalescedRect",
    "Grid",
    "LevelDocument",
    "TileDistribution",
    "Tileset",
    "load_level",
    "save_level",
    "ExperimentConfig",
    "FitnessTerm",
    "GenParams",
    "NeatParams",
    "NoveltySettings",
    "RandomLayoutSpec",
    "TrainConfig",
    "load_train_config",
    "GeneratorDocument",
    "GenomeDocument",
    "TreeDocument",
    "TreeNodeDocument",
]
