"""Structured event trace.

Every protocol action is emitted once as a TraceRecord and fanned out to the
registered sinks: the CSV file writer and the metrics collector.
"""

import csv
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, List, Optional, Protocol, Tuple

from .engine import Engine

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["time_s", "node", "event_type", "packet_id", "flow_id", "detail"]


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.9f}"
    if isinstance(value, (list, tuple)):
        return "-".join(format_value(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class TraceRecord:
    time: float
    node: int
    event_type: str
    packet_id: Optional[int]
    flow_id: Optional[int]
    fields: Tuple[Tuple[str, Any], ...] = ()

    def get(self, name: str, default: Any = None) -> Any:
        for key, value in self.fields:
            if key == name:
                return value
        return default

    @property
    def detail(self) -> str:
        return ";".join(f"{key}={format_value(value)}" for key, value in self.fields)

    def row(self) -> List[str]:
        return [
            f"{self.time:.9f}",
            str(self.node),
            self.event_type,
            format_value(self.packet_id),
            format_value(self.flow_id),
            self.detail,
        ]


class TraceSink(Protocol):
    def record(self, rec: TraceRecord) -> None:
        ...


class CsvTraceSink:
    """Streams rows to `<path>.tmp`; `commit` renames it into place."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.tmp_path = self.path.with_name(self.path.name + ".tmp")
        self._file = open(self.tmp_path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._file, lineterminator="\n")
        self._writer.writerow(TRACE_COLUMNS)
        self.rows = 0

    def record(self, rec: TraceRecord) -> None:
        self._writer.writerow(rec.row())
        self.rows += 1

    def commit(self) -> Path:
        self._file.close()
        os.replace(self.tmp_path, self.path)
        logger.info("Wrote %d trace rows to %s", self.rows, self.path)
        return self.path

    def abort(self) -> None:
        if not self._file.closed:
            self._file.close()
        try:
            os.unlink(self.tmp_path)
        except FileNotFoundError:
            pass


class Tracer:
    def __init__(self, engine: Engine, sinks: Optional[List[TraceSink]] = None):
        self.engine = engine
        self.sinks: List[TraceSink] = list(sinks or [])

    def add_sink(self, sink: TraceSink) -> None:
        self.sinks.append(sink)

    def emit(self, node: int, event_type: str, packet_id: Optional[int] = None,
             flow_id: Optional[int] = None, **fields: Any) -> TraceRecord:
        rec = TraceRecord(self.engine.now(), node, event_type, packet_id, flow_id, tuple(fields.items()))
        for sink in self.sinks:
            sink.record(rec)
        return rec
