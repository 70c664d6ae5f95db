import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, Union

THREADS_ENV = "DEM_SOLVE_THREADS"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"

PathLike = Union[str, Path]


def setup_logging(level: str = "INFO") -> None:
    """Log to stderr; stdout is reserved for the JSON each command prints."""
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format=LOG_FORMAT,
        stream=sys.stderr,
    )


def load_config(path: PathLike) -> Dict[str, Any]:
    """
    Read a JSON experiment document.

    Raises:
        FileNotFoundError: If the path does not exist.
        json.JSONDecodeError: If the file is not valid JSON.
    """
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    return json.loads(p.read_text(encoding="utf-8"))


def ensure_dir(path: PathLike) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def worker_count() -> int:
    """Number of parallel workers allowed by DEM_SOLVE_THREADS (at least 1)."""
    raw = os.getenv(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        logging.getLogger(__name__).warning("Ignoring non-integer %s=%r", THREADS_ENV, raw)
        return 1
