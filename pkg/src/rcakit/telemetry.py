"""Raw telemetry loading and fault-scenario curation.

Telemetry arrives as delimited text, one file per modality, with a declared
column mapping. Loaders return records sorted by timestamp; malformed rows
are fatal in strict mode and reported-and-skipped in lenient mode.

Curation enforces temporal soundness: scenario windows must not overlap or
crowd each other, and must not span long telemetry silences. Window slicing
is closed on both ends and carries a pre-window baseline segment used to fit
the anomaly detectors.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

logger = logging.getLogger(__name__)

MS_PER_SECOND = 1000
MS_PER_MINUTE = 60 * MS_PER_SECOND

DEFAULT_MIN_GAP_S = 45.0
DEFAULT_MAX_SILENCE_MIN = 30.0
DEFAULT_BASELINE_MIN = 15.0


class TelemetryFormatError(ValueError):
    """Unreadable telemetry input: bad column mapping, or a malformed row in
    strict mode."""


class LogLevel(Enum):
    DEBUG = "DEBUG"
    INFO = "INFO"
    WARN = "WARN"
    ERROR = "ERROR"
    OTHER = "OTHER"

    @classmethod
    def parse(cls, raw: str) -> "LogLevel":
        token = raw.strip().upper()
        if token == "WARNING":
            token = "WARN"
        try:
            return cls(token)
        except ValueError:
            return cls.OTHER


@dataclass(frozen=True)
class LogRecord:
    timestamp: int  # epoch milliseconds
    entity: str
    level: LogLevel
    message: str

    def __post_init__(self) -> None:
        if self.timestamp <= 0:
            raise ValueError(f"log timestamp must be positive, got {self.timestamp}")
        if not self.entity:
            raise ValueError("log entity must be non-empty")


@dataclass(frozen=True)
class MetricRecord:
    timestamp: int
    entity: str
    metric_name: str
    value: float

    def __post_init__(self) -> None:
        if self.timestamp <= 0:
            raise ValueError(f"metric timestamp must be positive, got {self.timestamp}")
        if not self.entity:
            raise ValueError("metric entity must be non-empty")
        if not self.metric_name:
            raise ValueError("metric_name must be non-empty")
        if not math.isfinite(self.value):
            raise ValueError(f"metric value must be finite, got {self.value}")


@dataclass(frozen=True)
class TraceSpan:
    trace_id: str
    span_id: str
    caller: str
    callee: str
    start: int  # epoch milliseconds
    duration: float  # milliseconds
    status_code: int

    def __post_init__(self) -> None:
        if self.start <= 0:
            raise ValueError(f"span start must be positive, got {self.start}")
        if self.duration < 0:
            raise ValueError(f"span duration must be >= 0, got {self.duration}")
        if not self.caller or not self.callee:
            raise ValueError("span caller and callee must be non-empty")


@dataclass(frozen=True)
class FaultScenario:
    id: str
    window_start: int
    window_end: int
    gt_location: str
    gt_fault_type: str
    dataset_tag: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("scenario id must be non-empty")
        if self.window_start >= self.window_end:
            raise ValueError(
                f"scenario {self.id}: window_start must precede window_end"
            )


@dataclass(frozen=True)
class ParseIssue:
    path: str
    line_no: int
    message: str


@dataclass(frozen=True)
class TelemetrySource:
    """One delimited file plus its column mapping (canonical field -> header)."""

    path: Path
    columns: Mapping[str, str]
    delimiter: str = ","


@dataclass
class TelemetrySet:
    logs: list[LogRecord] = field(default_factory=list)
    metrics: list[MetricRecord] = field(default_factory=list)
    spans: list[TraceSpan] = field(default_factory=list)
    issues: list[ParseIssue] = field(default_factory=list)

    def all_timestamps(self) -> list[int]:
        """Merged, sorted, de-duplicated timestamps across all modalities."""
        merged = {r.timestamp for r in self.logs}
        merged.update(r.timestamp for r in self.metrics)
        merged.update(s.start for s in self.spans)
        return sorted(merged)


LOG_FIELDS = ("timestamp", "entity", "level", "message")
METRIC_FIELDS = ("timestamp", "entity", "metric_name", "value")
TRACE_FIELDS = ("trace_id", "span_id", "caller", "callee", "start", "duration", "status_code")
SCENARIO_FIELDS = ("id", "window_start", "window_end", "gt_location", "gt_fault_type", "dataset_tag")


def _parse_epoch_ms(raw: str, name: str) -> int:
    try:
        return int(raw)
    except ValueError as exc:
        raise ValueError(f"{name} is not an integer epoch-ms value: {raw!r}") from exc


def _read_delimited(
    source: TelemetrySource,
    fields: Sequence[str],
    builder: Callable[[Mapping[str, str]], object],
    strict: bool,
    issues: list[ParseIssue],
) -> list:
    mapping = dict(source.columns)
    missing_map = [f for f in fields if f not in mapping]
    if missing_map:
        raise TelemetryFormatError(
            f"{source.path}: column mapping missing required fields {missing_map}"
        )
    records = []
    with open(source.path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle, delimiter=source.delimiter)
        header = reader.fieldnames or []
        missing_cols = sorted({mapping[f] for f in fields} - set(header))
        if missing_cols:
            raise TelemetryFormatError(
                f"{source.path}: required columns {missing_cols} absent from header {header}"
            )
        for line_no, row in enumerate(reader, start=2):
            try:
                values = {f: (row[mapping[f]] or "") for f in fields}
                records.append(builder(values))
            except ValueError as exc:
                message = f"row {line_no}: {exc}"
                if strict:
                    raise TelemetryFormatError(f"{source.path}: {message}") from exc
                issues.append(ParseIssue(str(source.path), line_no, str(exc)))
                logger.warning("%s: %s (row skipped)", source.path, message)
    return records


def _build_log(values: Mapping[str, str]) -> LogRecord:
    return LogRecord(
        timestamp=_parse_epoch_ms(values["timestamp"], "timestamp"),
        entity=values["entity"].strip(),
        level=LogLevel.parse(values["level"]),
        message=values["message"],
    )


def _build_metric(values: Mapping[str, str]) -> MetricRecord:
    try:
        value = float(values["value"])
    except ValueError as exc:
        raise ValueError(f"value is not numeric: {values['value']!r}") from exc
    return MetricRecord(
        timestamp=_parse_epoch_ms(values["timestamp"], "timestamp"),
        entity=values["entity"].strip(),
        metric_name=values["metric_name"].strip(),
        value=value,
    )


def _build_span(values: Mapping[str, str]) -> TraceSpan:
    try:
        duration = float(values["duration"])
    except ValueError as exc:
        raise ValueError(f"duration is not numeric: {values['duration']!r}") from exc
    try:
        status_code = int(values["status_code"])
    except ValueError as exc:
        raise ValueError(f"status_code is not an integer: {values['status_code']!r}") from exc
    return TraceSpan(
        trace_id=values["trace_id"].strip(),
        span_id=values["span_id"].strip(),
        caller=values["caller"].strip(),
        callee=values["callee"].strip(),
        start=_parse_epoch_ms(values["start"], "start"),
        duration=duration,
        status_code=status_code,
    )


def load_telemetry(
    logs: TelemetrySource | None = None,
    metrics: TelemetrySource | None = None,
    traces: TelemetrySource | None = None,
    strict: bool = True,
) -> TelemetrySet:
    """Load all provided modalities, returning timestamp-sorted records.

    Strict mode raises :class:`TelemetryFormatError` on the first malformed
    row; lenient mode skips the row and records a :class:`ParseIssue`.
    A missing required column is fatal in both modes.
    """
    out = TelemetrySet()
    if logs is not None:
        out.logs = _read_delimited(logs, LOG_FIELDS, _build_log, strict, out.issues)
        out.logs.sort(key=lambda r: (r.timestamp, r.entity, r.message))
    if metrics is not None:
        out.metrics = _read_delimited(metrics, METRIC_FIELDS, _build_metric, strict, out.issues)
        out.metrics.sort(key=lambda r: (r.timestamp, r.entity, r.metric_name))
    if traces is not None:
        out.spans = _read_delimited(traces, TRACE_FIELDS, _build_span, strict, out.issues)
        out.spans.sort(key=lambda s: (s.start, s.trace_id, s.span_id))
    return out


def load_scenarios(
    path: Path,
    fault_categories: Iterable[str] | None = None,
    strict: bool = True,
) -> tuple[list[FaultScenario], list[ParseIssue]]:
    """Load ground-truth fault scenarios (one record per injected fault).

    When ``fault_categories`` is given, each scenario's fault type must be a
    member (case-insensitive); violations are fatal in strict mode.
    """
    declared = None
    if fault_categories is not None:
        declared = {c.casefold() for c in fault_categories}
    issues: list[ParseIssue] = []
    source = TelemetrySource(path=Path(path), columns={f: f for f in SCENARIO_FIELDS})

    def _build(values: Mapping[str, str]) -> FaultScenario:
        scenario = FaultScenario(
            id=values["id"].strip(),
            window_start=_parse_epoch_ms(values["window_start"], "window_start"),
            window_end=_parse_epoch_ms(values["window_end"], "window_end"),
            gt_location=values["gt_location"].strip(),
            gt_fault_type=values["gt_fault_type"].strip(),
            dataset_tag=values["dataset_tag"].strip(),
        )
        if declared is not None and scenario.gt_fault_type.casefold() not in declared:
            raise ValueError(
                f"scenario {scenario.id}: fault type {scenario.gt_fault_type!r} "
                "is not in the declared fault-category set"
            )
        return scenario

    scenarios = _read_delimited(source, SCENARIO_FIELDS, _build, strict, issues)
    scenarios.sort(key=lambda s: (s.window_start, s.id))
    return scenarios, issues


def _require_sorted(scenarios: Sequence[FaultScenario]) -> None:
    for prev, cur in zip(scenarios, scenarios[1:]):
        if cur.window_start < prev.window_start:
            raise ValueError("scenarios must be sorted by window_start")


def filter_overlapping_scenarios(
    scenarios: Sequence[FaultScenario],
    min_gap_s: float = DEFAULT_MIN_GAP_S,
) -> list[FaultScenario]:
    """Drop any scenario that intersects the previously kept one or follows
    it by less than ``min_gap_s`` seconds. The earlier window always wins."""
    _require_sorted(scenarios)
    min_gap_ms = min_gap_s * MS_PER_SECOND
    kept: list[FaultScenario] = []
    for scenario in scenarios:
        if kept and scenario.window_start - kept[-1].window_end < min_gap_ms:
            logger.info(
                "curation: dropping %s (gap to %s below %.0f s)",
                scenario.id, kept[-1].id, min_gap_s,
            )
            continue
        kept.append(scenario)
    return kept


def _silence_intervals(timestamps: Sequence[int], max_gap_ms: float) -> list[tuple[float, float]]:
    # Open intervals; the stretches before the first and after the last
    # record count as unbounded silences.
    intervals: list[tuple[float, float]] = [(-math.inf, float(timestamps[0]))]
    for a, b in zip(timestamps, timestamps[1:]):
        if b - a > max_gap_ms:
            intervals.append((float(a), float(b)))
    intervals.append((float(timestamps[-1]), math.inf))
    return intervals


def filter_gap_scenarios(
    scenarios: Sequence[FaultScenario],
    telemetry: TelemetrySet,
    max_gap_min: float = DEFAULT_MAX_SILENCE_MIN,
) -> list[FaultScenario]:
    """Remove scenarios whose window overlaps a telemetry silence longer than
    ``max_gap_min`` minutes (merged across all modalities)."""
    timestamps = telemetry.all_timestamps()
    if not timestamps:
        logger.warning("curation: telemetry is empty, removing all %d scenarios", len(scenarios))
        return []
    silences = _silence_intervals(timestamps, max_gap_min * MS_PER_MINUTE)
    kept = []
    for scenario in scenarios:
        hit = next(
            (
                (lo, hi)
                for lo, hi in silences
                if scenario.window_start < hi and scenario.window_end > lo
            ),
            None,
        )
        if hit is not None:
            logger.info("curation: dropping %s (overlaps telemetry silence %s)", scenario.id, hit)
            continue
        kept.append(scenario)
    return kept


@dataclass(frozen=True)
class ScenarioBundle:
    """Scenario-scoped telemetry: the closed fault window plus the pre-window
    baseline segment used for detector fitting."""

    scenario: FaultScenario
    logs: tuple[LogRecord, ...]
    metrics: tuple[MetricRecord, ...]
    spans: tuple[TraceSpan, ...]
    baseline_logs: tuple[LogRecord, ...]
    baseline_metrics: tuple[MetricRecord, ...]
    baseline_spans: tuple[TraceSpan, ...]
    baseline_free: bool

    @property
    def empty(self) -> bool:
        return not (self.logs or self.metrics or self.spans)


def slice_window(
    scenario: FaultScenario,
    telemetry: TelemetrySet,
    baseline_min: float = DEFAULT_BASELINE_MIN,
) -> ScenarioBundle:
    """Slice records into the closed window [window_start, window_end] plus a
    half-open baseline segment [window_start - baseline, window_start)."""
    ws, we = scenario.window_start, scenario.window_end
    bs = ws - int(baseline_min * MS_PER_MINUTE)

    def in_window(ts: int) -> bool:
        return ws <= ts <= we

    def in_baseline(ts: int) -> bool:
        return bs <= ts < ws

    logs = tuple(r for r in telemetry.logs if in_window(r.timestamp))
    metrics = tuple(r for r in telemetry.metrics if in_window(r.timestamp))
    spans = tuple(s for s in telemetry.spans if in_window(s.start))
    b_logs = tuple(r for r in telemetry.logs if in_baseline(r.timestamp))
    b_metrics = tuple(r for r in telemetry.metrics if in_baseline(r.timestamp))
    b_spans = tuple(s for s in telemetry.spans if in_baseline(s.start))
    baseline_free = not (b_logs or b_metrics or b_spans)
    bundle = ScenarioBundle(
        scenario=scenario,
        logs=logs,
        metrics=metrics,
        spans=spans,
        baseline_logs=b_logs,
        baseline_metrics=b_metrics,
        baseline_spans=b_spans,
        baseline_free=baseline_free,
    )
    if bundle.empty:
        logger.warning("scenario %s: window contains no telemetry records", scenario.id)
    if baseline_free:
        logger.info(
            "scenario %s: no baseline data, detector fitting falls back to in-window statistics",
            scenario.id,
        )
    return bundle
