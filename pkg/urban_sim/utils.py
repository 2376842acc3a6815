import logging
import os
import tempfile
from pathlib import Path
from typing import Optional, Union

_LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: Union[str, int] = "WARNING") -> None:
    """Installs one stderr handler on the urban_sim logger tree."""
    root = logging.getLogger("urban_sim")
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
        if not isinstance(level, int):
            level = logging.WARNING
    root.setLevel(level)
    if not any(getattr(h, "_urban_sim", False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(_LOG_FORMAT))
        handler._urban_sim = True  # type: ignore[attr-defined]
        root.addHandler(handler)


def _get_safe_path_component(name: Optional[str]) -> str:
    """Replaces characters unsafe for file/path names with underscores."""
    if not name:
        return ""
    return name.replace("/", "_").replace("\\", "_").replace(":", "_").replace("*", "_").replace("?", "_").replace("\"", "_").replace("<", "_").replace(">", "_").replace("|", "_").replace(" ", "_")


def _check_writable_dir(directory: Path) -> None:
    """Creates `directory` if needed and proves a file can be written into it.

    Raises OSError when it cannot.
    """
    directory.mkdir(parents=True, exist_ok=True)
    fd, scratch = tempfile.mkstemp(prefix=".urban_write_check_", dir=directory)
    os.close(fd)
    os.unlink(scratch)


def _atomic_write_text(path: Path, text: str) -> None:
    """Writes `text` to a temporary sibling and renames it over `path`."""
    tmp_path = path.with_name(path.name + ".tmp")
    with open(tmp_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    os.replace(tmp_path, path)
