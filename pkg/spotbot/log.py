"""Logging setup used by every spotbot command."""

import logging
from datetime import datetime
from pathlib import Path
from typing import Optional

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logging(level: str = "INFO", tool_name: str = "spotbot",
                  log_dir: Optional[Path] = None) -> logging.Logger:
    """
    Configure root logging with a timestamped log file and console output.

    Args:
        level: Logging level name (DEBUG, INFO, WARNING, ERROR)
        tool_name: Prefix for the log file name
        log_dir: Directory for log files, defaults to ./logs

    Returns:
        Logger for the calling tool
    """
    log_dir = Path(log_dir) if log_dir else Path.cwd() / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)

    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format=LOG_FORMAT,
        handlers=[
            logging.FileHandler(log_dir / f"{tool_name}_{datetime.now().strftime('%Y%m%d_%H%M%S')}.log"),
            logging.StreamHandler()
        ],
        force=True
    )
    return logging.getLogger(f"spotbot.{tool_name}")
