"""Run orchestration: one scenario in, `trace.csv` and `summary.json` out."""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

from .errors import OutputError
from .metrics import MetricsSummary
from .scenario import ScenarioConfig, effective_config
from .simulation import Simulation
from .trace import CsvTraceSink
from .utils import _atomic_write_text, _check_writable_dir

logger = logging.getLogger(__name__)

TRACE_FILENAME = "trace.csv"
SUMMARY_FILENAME = "summary.json"


@dataclass
class RunResult:
    exit_code: int
    message: str
    summary_path: Optional[Path] = None
    trace_path: Optional[Path] = None
    summary: Optional[MetricsSummary] = None

    @property
    def success(self) -> bool:
        return self.exit_code == 0


def build_summary_document(cfg: ScenarioConfig, summary: MetricsSummary) -> Dict[str, Any]:
    return {
        "metrics": summary.model_dump(mode="json"),
        "config": effective_config(cfg),
    }


def ensure_output_dir(out_dir: Path) -> None:
    """Raises OutputError unless `out_dir` exists (or can be created) and accepts new files."""
    try:
        _check_writable_dir(out_dir)
    except OSError as e:
        raise OutputError(f"Output directory '{out_dir}' is not writable: {e}") from e


def _execute(cfg: ScenarioConfig, out_dir: Path, summary_path: Path, trace_path: Optional[Path]) -> MetricsSummary:
    sink = None
    try:
        sink = CsvTraceSink(trace_path) if trace_path else None
        summary = Simulation(cfg, [sink] if sink else None).run()
        if sink:
            sink.commit()
        document = build_summary_document(cfg, summary)
        _atomic_write_text(summary_path, json.dumps(document, indent=2) + "\n")
    except OSError as e:
        if sink:
            sink.abort()
        raise OutputError(f"Failed writing results to '{out_dir}': {e}") from e
    return summary


def run_scenario(cfg: ScenarioConfig, out_dir: Union[str, Path], trace: bool = True) -> RunResult:
    """Executes one deterministic run and writes its result files.

    Returns a RunResult instead of raising for I/O problems: exit code 0 when
    the run completed (whatever the network did), 3 when the output could not
    be written. No summary file is left behind on failure.
    """
    out_dir = Path(out_dir)
    summary_path = out_dir / SUMMARY_FILENAME
    trace_path = out_dir / TRACE_FILENAME if trace else None
    try:
        ensure_output_dir(out_dir)
        summary = _execute(cfg, out_dir, summary_path, trace_path)
    except OutputError as e:
        logger.error("%s", e)
        return RunResult(e.exit_code, str(e))

    logger.info("Run complete: %s", summary_path)
    return RunResult(0, f"Results written to {out_dir}", summary_path, trace_path, summary)
