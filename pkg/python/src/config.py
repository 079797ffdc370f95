"""
Process settings from the environment (loaded from .env by the entry points)
"""

import logging
import os
from dataclasses import dataclass
from pathlib import Path

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


@dataclass
class Settings:
    """Service and logging settings; never affects simulation output"""

    log_level: str = "WARNING"
    host: str = "127.0.0.1"
    port: int = 9876
    runs_dir: Path = Path("runs")

    @classmethod
    def from_env(cls) -> "Settings":
        """Create settings from PIPERATE_* environment variables"""
        level = os.getenv("PIPERATE_LOG_LEVEL", "WARNING").upper()
        if not isinstance(logging.getLevelName(level), int):
            raise ValueError(f"PIPERATE_LOG_LEVEL is not a logging level: {level}")
        try:
            port = int(os.getenv("PIPERATE_PORT", "9876"))
        except ValueError:
            raise ValueError("PIPERATE_PORT must be an integer")
        return cls(
            log_level=level,
            host=os.getenv("PIPERATE_HOST", "127.0.0.1"),
            port=port,
            runs_dir=Path(os.getenv("PIPERATE_RUNS_DIR", "runs")),
        )


def configure_logging(level: str, verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else level,
        format=LOG_FORMAT,
        force=True,
    )
