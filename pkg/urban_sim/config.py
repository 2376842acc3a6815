import os
from pathlib import Path
from typing import Optional
from dotenv import load_dotenv

load_dotenv()


class UrbanSimSettings:
    """Runtime settings for urban-sim, populated from environment variables or passed explicitly.

    Nothing in here changes what a simulation computes; scenario files are the
    only input that affects traces and summaries.
    """

    def __init__(
        self,
        log_level: str = "WARNING",
        default_out_dir: Optional[Path] = None,
        sweep_workers: Optional[int] = None,
    ):
        """
        Initialize settings.

        Args:
            log_level: Logging level name for the urban_sim logger tree
            default_out_dir: Output directory used when `--out` is not given
            sweep_workers: Number of worker processes for `sweep`; None means CPU count
        """
        self.log_level = log_level.upper() if log_level else "WARNING"

        if default_out_dir is None:
            self.default_out_dir = Path(os.environ.get("URBAN_OUT_DIR", Path.cwd() / "urban_runs"))
        else:
            self.default_out_dir = Path(default_out_dir)

        if sweep_workers is not None and sweep_workers < 1:
            raise ValueError("sweep_workers must be at least 1")
        self.sweep_workers = sweep_workers

    @property
    def effective_sweep_workers(self) -> int:
        """Worker count for sweeps, falling back to the machine's CPU count."""
        return self.sweep_workers or os.cpu_count() or 1

    @classmethod
    def from_env(cls) -> 'UrbanSimSettings':
        """Create settings from environment variables."""
        workers = os.environ.get("URBAN_SWEEP_WORKERS")
        return cls(
            log_level=os.environ.get("URBAN_LOG_LEVEL", "WARNING"),
            default_out_dir=None,  # Will use default logic in __init__
            sweep_workers=int(workers) if workers else None,
        )


# Default settings instance, read once at import
default_settings = UrbanSimSettings.from_env()
