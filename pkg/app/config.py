import logging
import os
from typing import Dict, Optional

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel

from app.errors import FileAccessError


load_dotenv()


class Settings(BaseModel):
    """Process-wide settings read from the environment (.env supported)"""

    log_level: str = "INFO"
    data_dir: str = "data"
    max_workers: int = 1
    webhook_url: Optional[str] = None


def get_settings() -> Settings:
    return Settings(
        log_level=os.getenv("CONSENSUS_LOG_LEVEL", "INFO").upper(),
        data_dir=os.getenv("CONSENSUS_DATA_DIR", "data"),
        max_workers=int(os.getenv("CONSENSUS_MAX_WORKERS", "1")),
        webhook_url=os.getenv("WEBHOOK_URL") or None,
    )


def configure_logging(level: Optional[str] = None) -> None:
    """Install a single stream handler on the root logger"""
    level = (level or get_settings().log_level).upper()
    root = logging.getLogger()
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        root.addHandler(handler)
    root.setLevel(level)


def read_scenario_file(path: str) -> Dict[str, str]:
    """
    Parse a line-oriented key=value scenario file.
    Keys are lower-cased; dashes are accepted in place of underscores.
    """
    if not os.path.isfile(path):
        raise FileAccessError(f"Scenario file not found: {path}")
    values = dotenv_values(path)
    return {
        key.strip().lower().replace("-", "_"): value.strip()
        for key, value in values.items()
        if value is not None
    }
