import logging
from pathlib import Path
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict

PACKAGE_DIR = Path(__file__).resolve().parent


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="TILE_COMPOSER_",
        case_sensitive=False,
        extra="ignore",
    )

    # App settings
    app_name: str = "Tile Composer"
    log_level: str = "INFO"

    # Execution
    threads: int = 1  # never changes results, only wall time

    # Files
    output_dir: Path = Path("output")
    presets_dir: Path = PACKAGE_DIR / "presets"

    # Experiment scale (desk defaults; --full-scale runs 150 / 50 / 10)
    desk_generations: int = 40
    desk_population_size: int = 24
    desk_seeds: int = 3


# Global settings instance
settings = Settings()

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: Optional[str] = None) -> None:
    """Install one stream handler on the package logger"""
    logger = logging.getLogger("app")
    logger.setLevel((level or settings.log_level).upper())
    if not any(getattr(h, "_tile_composer", False) for h in logger.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._tile_composer = True
        logger.addHandler(handler)
