"""Alert extraction, canonicalization, and unified rendering.

Three modality-specific detectors produce canonical :class:`Alert` events:

* log alerts from mined templates (ERROR-level and low-frequency templates
  are preserved; high-volume templates collapse to one representative per
  entity and template),
* trace alerts from a per-invocation-pair Isolation Forest over response
  time and status code,
* metric alerts from the 3-sigma rule fitted on a baseline segment.

Alerts render as pipe-separated lines, e.g.
``2025-09-01 12:05:00 | METRIC | dbservice1 | disk_io | up``,
and unify into either a single chronological sequence or per-element groups.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

import numpy as np
from sklearn.ensemble import IsolationForest

from .drain import DrainResult, drain_parse
from .telemetry import LogLevel, LogRecord, MetricRecord, TraceSpan

logger = logging.getLogger(__name__)

DEFAULT_RARE_THRESHOLD = 2
DEFAULT_N_TREES = 100
DEFAULT_SUBSAMPLE = 256
DEFAULT_SCORE_THRESHOLD = 0.5

Element = Union[str, tuple[str, str]]


class Modality(Enum):
    LOG = "LOG"
    METRIC = "METRIC"
    TRACE = "TRACE"


class AlertKind(Enum):
    ERROR = "ERROR"
    PD = "PD"
    METRIC_ANOM = "METRIC_ANOM"
    LOG_TEMPLATE = "LOG_TEMPLATE"


class Direction(Enum):
    UP = "UP"
    DOWN = "DOWN"
    NONE = "NONE"


class UnificationStrategy(Enum):
    TIME_BASED = "TIME_BASED"
    ELEMENT_BASED = "ELEMENT_BASED"


@dataclass(frozen=True)
class Alert:
    modality: Modality
    timestamp: int
    element: Element
    kind: AlertKind
    direction: Direction
    payload: str
    details: Mapping[str, object] = field(default_factory=dict)
    unmapped: bool = False

    def __post_init__(self) -> None:
        if self.kind is AlertKind.METRIC_ANOM:
            if self.direction not in (Direction.UP, Direction.DOWN):
                raise ValueError("metric anomaly alerts need direction UP or DOWN")
        elif self.direction is not Direction.NONE:
            raise ValueError(f"{self.kind.value} alerts must carry direction NONE")

    @property
    def element_label(self) -> str:
        if isinstance(self.element, tuple):
            return f"{self.element[0]} -> {self.element[1]}"
        return self.element


@dataclass(frozen=True)
class InvocationFeature:
    caller: str
    callee: str
    response_time: float  # milliseconds
    status_code: int
    timestamp: int

    def __post_init__(self) -> None:
        if self.response_time < 0:
            raise ValueError(f"response_time must be >= 0, got {self.response_time}")


def invocation_features(spans: Iterable[TraceSpan]) -> list[InvocationFeature]:
    return [
        InvocationFeature(
            caller=s.caller,
            callee=s.callee,
            response_time=s.duration,
            status_code=s.status_code,
            timestamp=s.start,
        )
        for s in spans
    ]


# ---------------------------------------------------------------------------
# Log alerts
# ---------------------------------------------------------------------------

def sample_log_alerts(
    logs: Sequence[LogRecord],
    parse: DrainResult,
    rare_threshold: int = DEFAULT_RARE_THRESHOLD,
) -> list[Alert]:
    """Select diagnostically valuable log events.

    Every ERROR-level record alerts. Records of low-frequency templates
    (frequency <= rare_threshold) alert. High-volume templates collapse to
    one representative alert per (entity, template): the first occurrence.
    """
    if len(logs) != len(parse.assignments):
        raise ValueError("parse assignments must be parallel to the log records")
    by_id = parse.by_id()
    seen: set[tuple[str, int]] = set()
    alerts: list[Alert] = []
    order = sorted(range(len(logs)), key=lambda i: (logs[i].timestamp, i))
    for i in order:
        record = logs[i]
        template = by_id[parse.assignments[i]]
        key = (record.entity, template.template_id)
        details = {
            "template_id": template.template_id,
            "frequency": template.frequency,
            "level": record.level.value,
        }
        if record.level is LogLevel.ERROR:
            alerts.append(
                Alert(
                    modality=Modality.LOG,
                    timestamp=record.timestamp,
                    element=record.entity,
                    kind=AlertKind.ERROR,
                    direction=Direction.NONE,
                    payload=record.message,
                    details=details,
                )
            )
            seen.add(key)
            continue
        rare = template.frequency <= rare_threshold
        if not rare and key in seen:
            continue
        seen.add(key)
        alerts.append(
            Alert(
                modality=Modality.LOG,
                timestamp=record.timestamp,
                element=record.entity,
                kind=AlertKind.LOG_TEMPLATE,
                direction=Direction.NONE,
                payload=record.message if rare else template.text,
                details=details,
            )
        )
    return alerts


def extract_log_alerts(
    logs: Sequence[LogRecord],
    depth: int = 4,
    sim_threshold: float = 0.4,
    rare_threshold: int = DEFAULT_RARE_THRESHOLD,
) -> list[Alert]:
    if not logs:
        return []
    parse = drain_parse([r.message for r in logs], depth=depth, sim_threshold=sim_threshold)
    return sample_log_alerts(logs, parse, rare_threshold=rare_threshold)


# ---------------------------------------------------------------------------
# Trace alerts
# ---------------------------------------------------------------------------

def iforest_trace_alerts(
    features: Sequence[InvocationFeature],
    n_trees: int = DEFAULT_N_TREES,
    subsample: int = DEFAULT_SUBSAMPLE,
    seed: int = 0,
    score_threshold: float = DEFAULT_SCORE_THRESHOLD,
) -> list[Alert]:
    """Flag anomalous invocations per (caller, callee) pair.

    A separate Isolation Forest is fitted for each invocation pair over
    (response time, status code). Features scoring above ``score_threshold``
    alert; a deviating status code yields an ERROR alert, otherwise the
    anomaly is attributed to response time and yields a PD alert.
    Deterministic for a fixed seed.
    """
    pairs: dict[tuple[str, str], list[InvocationFeature]] = {}
    for feat in features:
        pairs.setdefault((feat.caller, feat.callee), []).append(feat)

    alerts: list[Alert] = []
    for pair in sorted(pairs):
        group = sorted(pairs[pair], key=lambda f: (f.timestamp, f.response_time, f.status_code))
        if len(group) < 2:
            logger.info("iforest: skipping pair %s (fewer than 2 invocations)", pair)
            continue
        data = np.array([[f.response_time, float(f.status_code)] for f in group])
        if np.all(data == data[0]):
            logger.info("iforest: skipping pair %s (constant features)", pair)
            continue
        forest = IsolationForest(
            n_estimators=n_trees,
            max_samples=min(subsample, len(group)),
            random_state=seed,
        )
        forest.fit(data)
        # -score_samples is the anomaly score in (0, 1]; > 0.5 means the
        # point isolates faster than an average point.
        scores = -forest.score_samples(data)
        mode_status = min(
            Counter(f.status_code for f in group).most_common(),
            key=lambda item: (-item[1], item[0]),
        )[0]
        for feat, score in zip(group, scores):
            if score <= score_threshold:
                continue
            status_anomalous = feat.status_code != mode_status
            kind = AlertKind.ERROR if status_anomalous else AlertKind.PD
            payload = (
                f"status {feat.status_code}"
                if status_anomalous
                else f"response time {feat.response_time:g} ms"
            )
            alerts.append(
                Alert(
                    modality=Modality.TRACE,
                    timestamp=feat.timestamp,
                    element=pair,
                    kind=kind,
                    direction=Direction.NONE,
                    payload=payload,
                    details={
                        "score": float(score),
                        "response_time": float(feat.response_time),
                        "status_code": feat.status_code,
                    },
                )
            )
    alerts.sort(key=_canonical_key)
    return alerts


# ---------------------------------------------------------------------------
# Metric alerts
# ---------------------------------------------------------------------------

def group_metric_series(
    records: Iterable[MetricRecord],
) -> dict[tuple[str, str], list[MetricRecord]]:
    series: dict[tuple[str, str], list[MetricRecord]] = {}
    for record in records:
        series.setdefault((record.entity, record.metric_name), []).append(record)
    return series


def three_sigma_metric_alerts(
    series: Sequence[MetricRecord],
    baseline: Sequence[MetricRecord],
) -> list[Alert]:
    """Flag values of one (entity, metric) series outside the 3-sigma band of
    its baseline segment.

    Values above mu + 3*sigma alert with direction UP, values below
    mu - 3*sigma with direction DOWN. Baselines with fewer than two points or
    zero variance are skipped with a notice (sigma is the population standard
    deviation).
    """
    if not series:
        return []
    keys = {(r.entity, r.metric_name) for r in series}
    if len(keys) != 1:
        raise ValueError(f"series mixes multiple (entity, metric) keys: {sorted(keys)}")
    entity, metric_name = next(iter(keys))
    if len(baseline) < 2:
        logger.info("3-sigma: skipping %s/%s (baseline has < 2 points)", entity, metric_name)
        return []
    values = np.array([r.value for r in baseline])
    mu = float(values.mean())
    sigma = float(values.std())
    if sigma == 0.0:
        logger.info("3-sigma: skipping %s/%s (zero-variance baseline)", entity, metric_name)
        return []
    upper = mu + 3.0 * sigma
    lower = mu - 3.0 * sigma
    alerts = []
    for record in series:
        if record.value > upper:
            direction = Direction.UP
        elif record.value < lower:
            direction = Direction.DOWN
        else:
            continue
        alerts.append(
            Alert(
                modality=Modality.METRIC,
                timestamp=record.timestamp,
                element=entity,
                kind=AlertKind.METRIC_ANOM,
                direction=direction,
                payload=metric_name,
                details={"value": record.value, "mu": mu, "sigma": sigma},
            )
        )
    alerts.sort(key=_canonical_key)
    return alerts


def extract_metric_alerts(
    window: Iterable[MetricRecord],
    baseline: Iterable[MetricRecord],
    fallback_to_window: bool = False,
) -> list[Alert]:
    """Run the 3-sigma detector over every (entity, metric) series.

    With ``fallback_to_window`` the in-window series doubles as the baseline
    (used when a scenario has no pre-window data at all).
    """
    window_series = group_metric_series(window)
    baseline_series = group_metric_series(baseline)
    alerts: list[Alert] = []
    for key in sorted(window_series):
        base = window_series[key] if fallback_to_window else baseline_series.get(key, [])
        alerts.extend(three_sigma_metric_alerts(window_series[key], base))
    alerts.sort(key=_canonical_key)
    return alerts


# ---------------------------------------------------------------------------
# Unification and holdout
# ---------------------------------------------------------------------------

NO_ALERTS_TEXT = "No alerts were detected in this scenario window."


def _canonical_key(alert: Alert) -> tuple:
    return (alert.timestamp, alert.modality.value, alert.element_label, alert.payload)


def render_timestamp(timestamp_ms: int) -> str:
    moment = datetime.fromtimestamp(timestamp_ms / 1000.0, tz=timezone.utc)
    return moment.strftime("%Y-%m-%d %H:%M:%S")


def render_alert_line(alert: Alert) -> str:
    parts = [
        render_timestamp(alert.timestamp),
        alert.modality.value,
        alert.element_label,
        alert.payload,
    ]
    if alert.direction is not Direction.NONE:
        parts.append(alert.direction.value.lower())
    return " | ".join(parts)


@dataclass(frozen=True)
class UnifiedAlerts:
    text: str
    ordered: tuple[Alert, ...]

    @property
    def empty(self) -> bool:
        return not self.ordered


def unify_alerts(
    alerts: Sequence[Alert],
    strategy: UnificationStrategy = UnificationStrategy.TIME_BASED,
) -> UnifiedAlerts:
    """Render the alert set for the prompt.

    TIME_BASED produces one chronological list (ties broken by modality then
    element, both lexically). ELEMENT_BASED groups alerts under element
    headers; elements are ordered by their earliest alert and alerts stay
    chronological within each group.
    """
    if not alerts:
        logger.warning("unify_alerts: empty alert set (scenario flagged)")
        return UnifiedAlerts(text=NO_ALERTS_TEXT, ordered=())
    ordered = sorted(alerts, key=_canonical_key)
    if strategy is UnificationStrategy.TIME_BASED:
        text = "\n".join(f"- {render_alert_line(a)}" for a in ordered)
        return UnifiedAlerts(text=text, ordered=tuple(ordered))

    groups: dict[str, list[Alert]] = {}
    for alert in ordered:
        groups.setdefault(alert.element_label, []).append(alert)
    group_order = sorted(groups, key=lambda label: (_canonical_key(groups[label][0]), label))
    lines: list[str] = []
    flattened: list[Alert] = []
    for label in group_order:
        lines.append(f"### {label}")
        for alert in groups[label]:
            lines.append(f"- {render_alert_line(alert)}")
            flattened.append(alert)
        lines.append("")
    return UnifiedAlerts(text="\n".join(lines).rstrip("\n"), ordered=tuple(flattened))


def withhold_modality(alerts: Sequence[Alert], modality: Modality) -> list[Alert]:
    """Drop every alert of the withheld modality, preserving order."""
    return [a for a in alerts if a.modality is not modality]


# ---------------------------------------------------------------------------
# Alert index and persistence
# ---------------------------------------------------------------------------

@dataclass
class AlertIndex:
    by_entity: dict[str, list[Alert]]
    by_edge: dict[tuple[str, str], list[Alert]]

    @classmethod
    def from_alerts(cls, alerts: Iterable[Alert]) -> "AlertIndex":
        by_entity: dict[str, list[Alert]] = {}
        by_edge: dict[tuple[str, str], list[Alert]] = {}
        for alert in alerts:
            if isinstance(alert.element, tuple):
                by_edge.setdefault(alert.element, []).append(alert)
            else:
                by_entity.setdefault(alert.element, []).append(alert)
        return cls(by_entity=by_entity, by_edge=by_edge)

    def alerted_elements(self) -> set[Element]:
        elements: set[Element] = set(self.by_entity)
        elements.update(self.by_edge)
        return elements


def alert_to_dict(alert: Alert) -> dict:
    return {
        "modality": alert.modality.value,
        "timestamp": alert.timestamp,
        "element": list(alert.element) if isinstance(alert.element, tuple) else alert.element,
        "kind": alert.kind.value,
        "direction": alert.direction.value,
        "payload": alert.payload,
        "details": dict(alert.details),
        "unmapped": alert.unmapped,
    }


def alert_from_dict(data: Mapping) -> Alert:
    element = data["element"]
    if isinstance(element, list):
        element = (element[0], element[1])
    return Alert(
        modality=Modality(data["modality"]),
        timestamp=int(data["timestamp"]),
        element=element,
        kind=AlertKind(data["kind"]),
        direction=Direction(data["direction"]),
        payload=data["payload"],
        details=dict(data.get("details", {})),
        unmapped=bool(data.get("unmapped", False)),
    )


def dump_alerts_jsonl(path: Path, alerts: Iterable[Alert]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for alert in alerts:
            handle.write(json.dumps(alert_to_dict(alert), sort_keys=True))
            handle.write("\n")


def load_alerts_jsonl(path: Path) -> list[Alert]:
    alerts = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                alerts.append(alert_from_dict(json.loads(line)))
    return alerts
