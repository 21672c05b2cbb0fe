"""Run configuration schemas.

Keys match the preset JSON files. Every model forbids unknown keys so a typo fails loudly.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.config import settings
from app.exceptions import ConfigError, TileError
from app.models.level import Tileset

FitnessName = Literal[
    "probability",
    "reachability",
    "equal_distribution",
    "target_overlap",
    "house",
    "garden",
    "boundary_layout",
    "novelty",
    "intra_novelty",
]


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GenParams(StrictModel):
    context_size: int = Field(1, ge=1)
    one_hot: bool = False
    num_random_vars: int = Field(1, ge=0)
    perturb_size: float = Field(0.0, ge=0.0)
    iterations: int = Field(1, ge=1)
    input_center_tile: bool = True
    start: Literal["random", "default"] = "random"
    default_tile: int = Field(0, ge=0)
    padding_value: float = -1.0

    @field_validator("padding_value")
    @classmethod
    def _fixed_padding(cls, v: float) -> float:
        if v != -1.0:
            raise ValueError("padding_value is fixed at -1")
        return v


class NeatParams(StrictModel):
    population_size: int = Field(50, ge=2)
    weight_mutate_rate: float = Field(0.8, ge=0.0, le=1.0)
    weight_sigma: float = Field(0.5, ge=0.0)
    weight_reset_prob: float = Field(0.1, ge=0.0, le=1.0)
    add_connection_rate: float = Field(0.1, ge=0.0, le=1.0)
    add_node_rate: float = Field(0.05, ge=0.0, le=1.0)
    c1: float = Field(1.0, ge=0.0)
    c2: float = Field(1.0, ge=0.0)
    c3: float = Field(0.4, ge=0.0)
    compatibility_threshold: float = Field(3.0, gt=0.0)
    survival_fraction: float = Field(0.2, gt=0.0, le=1.0)
    elitism: int = Field(1, ge=0)
    crossover_rate: float = Field(0.75, ge=0.0, le=1.0)
    disable_inherit_prob: float = Field(0.75, ge=0.0, le=1.0)


class NoveltySettings(StrictModel):
    k: int = Field(10, ge=1)
    archive_adds: int = Field(1, ge=0)


class FitnessTerm(StrictModel):
    name: FitnessName
    weight: float = Field(1.0, ge=0.0)
    params: Dict[str, Any] = Field(default_factory=dict)


class TileEntry(StrictModel):
    name: str
    color: Optional[List[int]] = None
    voxel: Optional[str] = None


class TrainConfig(StrictModel):
    level_size: List[int]
    tileset: Union[str, List[TileEntry]]
    fitness: List[FitnessTerm] = Field(min_length=1)

    one_hot: bool = False
    generations: int = Field(50, ge=1)
    population_size: int = Field(50, ge=2)
    num_random_vars: int = Field(1, ge=0)
    perturb_size: float = Field(0.0, ge=0.0)
    iterations: int = Field(1, ge=1)
    input_center_tile: bool = True
    context_size: int = Field(1, ge=1)
    start: Literal["random", "default"] = "random"
    default_tile: Optional[str] = None
    novelty: Optional[NoveltySettings] = None
    n_levels_per_eval: int = Field(5, ge=1)
    fitness_window: int = Field(1, ge=1)
    window_default: Optional[str] = None
    neat: NeatParams = Field(default_factory=NeatParams)
    master_seed: int = Field(0, ge=0)

    @field_validator("level_size")
    @classmethod
    def _level_size(cls, v: List[int]) -> List[int]:
        if len(v) not in (2, 3) or any(d <= 0 for d in v):
            raise ValueError(f"level_size must be 2 or 3 positive extents, got {v}")
        return v

    @model_validator(mode="after")
    def _consistent(self) -> "TrainConfig":
        if self.start == "default" and self.default_tile is None:
            raise ValueError("default_tile is required when start is 'default'")
        if not any(term.weight > 0 for term in self.fitness):
            raise ValueError("fitness needs at least one positive weight")
        if any(t.name == "intra_novelty" for t in self.fitness) and self.n_levels_per_eval < 2:
            raise ValueError("intra_novelty needs n_levels_per_eval >= 2")
        if any(d % self.fitness_window for d in self.level_size):
            raise ValueError(f"level_size {self.level_size} not divisible by fitness_window {self.fitness_window}")
        if "population_size" in self.neat.model_fields_set and self.neat.population_size != self.population_size:
            raise ValueError("set population_size at the top level, not inside neat")
        return self

    def resolved_tileset(self) -> Tileset:
        if isinstance(self.tileset, str):
            return load_tileset_preset(self.tileset)
        return Tileset.from_entries([e.model_dump(exclude_none=True) for e in self.tileset])

    def neat_params(self) -> NeatParams:
        return self.neat.model_copy(update={"population_size": self.population_size})

    def gen_params(self) -> GenParams:
        tileset = self.resolved_tileset()
        default = 0
        if self.default_tile is not None:
            try:
                default = tileset.index(self.default_tile)
            except TileError as e:
                raise ConfigError(str(e), key="default_tile") from e
        return GenParams(
            context_size=self.context_size,
            one_hot=self.one_hot,
            num_random_vars=self.num_random_vars,
            perturb_size=self.perturb_size,
            iterations=self.iterations,
            input_center_tile=self.input_center_tile,
            start=self.start,
            default_tile=default,
        )

    def novelty_settings(self) -> NoveltySettings:
        return self.novelty or NoveltySettings()


class RandomLayoutSpec(StrictModel):
    size: List[int] = Field(default_factory=lambda: [5, 5])
    weights: Dict[str, float] = Field(default_factory=lambda: {"house": 1.0, "road": 1.0, "garden": 1.0})
    seed: int = Field(0, ge=0)

    @field_validator("weights")
    @classmethod
    def _weights(cls, v: Dict[str, float]) -> Dict[str, float]:
        if any(w < 0 for w in v.values()) or not any(w > 0 for w in v.values()):
            raise ValueError("layout weights must be non-negative and not all zero")
        return v


class ExperimentConfig(StrictModel):
    kind: Literal["window_size", "compose_vs_flat"]
    seeds: List[int] = Field(default_factory=lambda: list(range(settings.desk_seeds)), min_length=1)
    window_sizes: List[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5, 10])
    layouts: int = Field(20, ge=1)
    layout_seed: int = Field(0, ge=0)
    generations: Optional[int] = Field(None, ge=1)
    population_size: Optional[int] = Field(None, ge=2)

    @field_validator("window_sizes")
    @classmethod
    def _windows(cls, v: List[int]) -> List[int]:
        if not v or any(k < 1 for k in v):
            raise ValueError("window sizes must be >= 1")
        return v


def _first_key(error: ValidationError) -> Optional[str]:
    for item in error.errors():
        loc = [str(p) for p in item.get("loc", ())]
        if loc:
            return ".".join(loc)
    return None


def validate_model(model_cls, data: Dict[str, Any], source: str = "config"):
    """Validate ``data`` and turn pydantic errors into a ConfigError naming the key"""
    try:
        return model_cls.model_validate(data)
    except ValidationError as e:
        key = _first_key(e)
        detail = e.errors()[0]["msg"] if e.errors() else str(e)
        where = f" at '{key}'" if key else ""
        raise ConfigError(f"invalid {source}{where}: {detail}", key=key) from e


def _read_json(path: Path) -> Dict[str, Any]:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e


def preset_path(name: str) -> Path:
    return settings.presets_dir / f"{name}.json"


def load_train_config(source: Union[str, Path], **overrides: Any) -> TrainConfig:
    """Load a training config from a file path or a preset name"""
    path = Path(source)
    if not path.exists() and preset_path(str(source)).exists():
        path = preset_path(str(source))
    data = _read_json(path)
    data.update({k: v for k, v in overrides.items() if v is not None})
    config = validate_model(TrainConfig, data, source=str(path))
    # Tile names only resolve against the tileset, so check them here
    try:
        config.resolved_tileset()
    except (TileError, KeyError) as e:
        raise ConfigError(f"invalid tileset in {path}: {e}", key="tileset") from e
    config.gen_params()
    return config


def load_tileset_preset(name: str) -> Tileset:
    presets = _read_json(settings.presets_dir / "tilesets.json")
    if name not in presets:
        raise ConfigError(f"unknown tileset preset '{name}'", key="tileset")
    return Tileset.from_entries(presets[name])
