"""Deterministic demo dataset: a small storefront system with six injected
faults, synthetic multi-modal telemetry, scripted endpoint replies for all
three workflows, and a scripted judge.

Everything is a pure function of the seed, so two generations (and two
pipeline runs over them) are byte-identical.
"""

from __future__ import annotations

import csv
import json
import random
from pathlib import Path

import yaml

BASE_MS = 1_756_728_000_000  # 2025-09-01 12:00:00 UTC
MINUTE = 60_000
WINDOW = 10 * MINUTE
GAP = 2 * MINUTE

ENTITY_TYPES = ["Service", "Service-Instance", "Database", "Cache", "Host"]
RELATIONSHIP_TYPES = ["instance-of", "has-instance", "hosted-on", "hosts", "control-flow", "data-flow"]

FAULT_CLASSES = {
    "Service-Instance": ["high memory usage", "session timeout", "file missing"],
    "Host": ["disk space consumption"],
}

NODES = [
    ("webservice", "Service"),
    ("dbservice", "Service"),
    ("cacheservice", "Service"),
    ("webservice1", "Service-Instance"),
    ("webservice2", "Service-Instance"),
    ("dbservice1", "Service-Instance"),
    ("dbservice2", "Service-Instance"),
    ("cacheservice1", "Service-Instance"),
    ("maindb", "Database"),
    ("rediscache", "Cache"),
    ("host1", "Host"),
    ("host2", "Host"),
]

INSTANCE_OF = [
    ("webservice1", "webservice"),
    ("webservice2", "webservice"),
    ("dbservice1", "dbservice"),
    ("dbservice2", "dbservice"),
    ("cacheservice1", "cacheservice"),
]

HOSTED_ON = [
    ("webservice1", "host1"),
    ("webservice2", "host2"),
    ("dbservice1", "host1"),
    ("dbservice2", "host2"),
    ("cacheservice1", "host2"),
    ("maindb", "host1"),
    ("rediscache", "host2"),
]

CONTROL_FLOW = [
    ("webservice", "dbservice"),
    ("webservice", "cacheservice"),
    ("cacheservice", "dbservice"),
    ("webservice1", "dbservice1"),
    ("webservice2", "dbservice2"),
    ("webservice1", "cacheservice1"),
    ("webservice2", "cacheservice1"),
    ("cacheservice1", "dbservice1"),
]

DATA_FLOW = [
    ("dbservice", "maindb"),
    ("cacheservice", "rediscache"),
]

TRACE_PAIRS = [
    ("webservice1", "dbservice1"),
    ("webservice2", "dbservice2"),
    ("webservice1", "cacheservice1"),
    ("webservice2", "cacheservice1"),
    ("cacheservice1", "dbservice1"),
]

# id, gt_location, gt_fault_type, affected trace pair, trace symptom kind
SCENARIOS = [
    ("s01", "dbservice1", "high memory usage", ("webservice1", "dbservice1"), "slow"),
    ("s02", "webservice2", "session timeout", ("webservice2", "dbservice2"), "status"),
    ("s03", "cacheservice1", "file missing", ("webservice1", "cacheservice1"), "slow"),
    ("s04", "host1", "disk space consumption", ("webservice1", "dbservice1"), "slow"),
    ("s05", "dbservice2", "high memory usage", ("webservice2", "dbservice2"), "slow"),
    ("s06", "webservice1", "session timeout", ("webservice1", "dbservice1"), "status"),
]

# Anomalous metric per scenario: (entity, metric, value, direction is implied)
METRIC_FAULTS = {
    "s01": ("dbservice1", "mem_usage_pct", 90.0),
    "s02": ("webservice2", "cpu_usage_pct", 85.0),
    "s03": ("cacheservice1", "cpu_usage_pct", 5.0),
    "s04": ("host1", "disk_usage_pct", 95.0),
    "s05": ("dbservice2", "mem_usage_pct", 90.0),
    "s06": ("webservice1", "cpu_usage_pct", 80.0),
}

ERROR_LINES = {
    "high memory usage": "memory allocation failed for worker 7",
    "session timeout": "session 4711 timed out after 30s",
    "file missing": "required file /var/data/cache.idx missing",
    "disk space consumption": "disk usage above threshold on /dev/sda1",
}


def scenario_window(index: int) -> tuple[int, int]:
    start = BASE_MS + index * (WINDOW + GAP)
    return start, start + WINDOW


def _kg_document() -> dict:
    edges = []
    for src, dst in INSTANCE_OF:
        edges.append({"src": src, "type": "instance-of", "dst": dst, "attributes": {}})
        edges.append({"src": dst, "type": "has-instance", "dst": src, "attributes": {}})
    for src, dst in HOSTED_ON:
        edges.append({"src": src, "type": "hosted-on", "dst": dst, "attributes": {}})
        edges.append({"src": dst, "type": "hosts", "dst": src, "attributes": {}})
    for src, dst in CONTROL_FLOW:
        edges.append({"src": src, "type": "control-flow", "dst": dst, "attributes": {}})
    for src, dst in DATA_FLOW:
        edges.append({"src": src, "type": "data-flow", "dst": dst, "attributes": {}})
    return {
        "schema": {
            "entity_types": ENTITY_TYPES,
            "relationship_types": RELATIONSHIP_TYPES,
            "fault_classes": FAULT_CLASSES,
        },
        "nodes": [{"name": n, "type": t, "attributes": {}} for n, t in NODES],
        "edges": edges,
    }


def _active_scenario(ts: int):
    for i, scenario in enumerate(SCENARIOS):
        ws, we = scenario_window(i)
        if ws <= ts <= we:
            return scenario
    return None


def _generate_metrics(rng: random.Random) -> list[dict]:
    instances = ["webservice1", "webservice2", "dbservice1", "dbservice2", "cacheservice1"]
    hosts = ["host1", "host2"]
    rows = []
    t0 = BASE_MS - 20 * MINUTE
    t_end = scenario_window(len(SCENARIOS) - 1)[1] + 5 * MINUTE
    ts = t0
    while ts <= t_end:
        active = _active_scenario(ts)
        for entity in instances + hosts:
            metrics = ("disk_usage_pct", "cpu_usage_pct") if entity in hosts else ("mem_usage_pct", "cpu_usage_pct")
            for metric in metrics:
                value = 40.0 + rng.uniform(-2.0, 2.0)
                if active is not None:
                    fault_entity, fault_metric, fault_value = METRIC_FAULTS[active[0]]
                    if entity == fault_entity and metric == fault_metric and (ts // 1000) % 90 < 30:
                        value = fault_value + rng.uniform(0.0, 2.0)
                rows.append(
                    {"ts": ts, "entity": entity, "name": metric, "value": round(value, 3)}
                )
        ts += 30_000
    return rows


def _generate_logs(rng: random.Random) -> list[dict]:
    # Only the web tier emits heartbeats: backend entities then carry log
    # alerts only when a fault actually touches them, which keeps the
    # alerted-element set (and hence path validity) sensitive to the
    # trace modality.
    entities = ["webservice1", "webservice2"]
    rows = []
    t0 = BASE_MS - 20 * MINUTE
    t_end = scenario_window(len(SCENARIOS) - 1)[1] + 5 * MINUTE
    seq = 0
    ts = t0
    while ts <= t_end:
        for offset, entity in enumerate(entities):
            rows.append(
                {"ts": ts + offset * 137, "entity": entity, "level": "INFO",
                 "message": f"heartbeat ok seq {seq}"}
            )
        seq += 1
        ts += MINUTE
    for i, (sid, location, fault_type, pair, _) in enumerate(SCENARIOS):
        ws, _ = scenario_window(i)
        log_entity = location if location not in ("host1", "host2") else pair[1]
        for offset in range(1, 9, 2):  # minutes 1, 3, 5, 7
            rows.append(
                {"ts": ws + offset * MINUTE, "entity": log_entity, "level": "ERROR",
                 "message": ERROR_LINES[fault_type]}
            )
        caller = pair[0]
        rows.append(
            {"ts": ws + 2 * MINUTE, "entity": caller, "level": "ERROR",
             "message": f"call to {pair[1]} failed with status 500"}
        )
    rows.sort(key=lambda r: (r["ts"], r["entity"]))
    return rows


def _generate_traces(rng: random.Random) -> list[dict]:
    rows = []
    t0 = BASE_MS - 20 * MINUTE
    t_end = scenario_window(len(SCENARIOS) - 1)[1] + 5 * MINUTE
    span_no = 0
    ts = t0
    while ts <= t_end:
        active = _active_scenario(ts)
        for caller, callee in TRACE_PAIRS:
            span_no += 1
            duration = round(50.0 + rng.uniform(-5.0, 5.0), 3)
            status = 200
            if active is not None and (caller, callee) == active[3]:
                if active[4] == "slow" and span_no % 3 == 0:
                    duration = round(500.0 + rng.uniform(-20.0, 20.0), 3)
                if active[4] == "status" and span_no % 4 == 0:
                    status = 500
            rows.append(
                {
                    "trace_id": f"t{span_no:06d}",
                    "span_id": f"sp{span_no:06d}",
                    "caller": caller,
                    "callee": callee,
                    "start": ts + (span_no % 13) * 7,
                    "duration": duration,
                    "status": status,
                }
            )
        ts += 30_000
    return rows


def _hypothesis_block(rank: int, fault_type: str, location: str, path: str, justification: str) -> str:
    return (
        f"{rank}. **Type**: {fault_type}\n"
        f"**Description**: Suspected {fault_type} at {location}.\n"
        f"**Location**: {location}\n"
        f"**Justification**: {justification}\n"
        f"**Propagation path**: `{path}`\n"
    )


def _final_answer(hypotheses: list[tuple[str, str, str, str]]) -> str:
    blocks = [
        _hypothesis_block(i + 1, ft, loc, path, just)
        for i, (ft, loc, path, just) in enumerate(hypotheses)
    ]
    return "Final Answer:\n\n" + "\n".join(blocks)


# Scripted final answers. Correct at rank 1 for s01/s02/s03/s05, rank 2 for
# s04, absent for s06 (whose rank-1 path is also an invalid walk).
FINAL_HYPOTHESES = {
    "s01": [
        ("high memory usage", "dbservice1",
         "webservice1 --(control-flow)--> dbservice1",
         "mem_usage_pct on dbservice1 breached its band while calls from webservice1 slowed down."),
        ("session timeout", "webservice1",
         "webservice1 --(control-flow)--> dbservice1",
         "webservice1 logged call failures, which could indicate its own sessions expiring."),
        ("file missing", "cacheservice1",
         "cacheservice1 --(control-flow)--> dbservice1",
         "cacheservice1 shares the database dependency and could corrupt shared state."),
    ],
    "s02": [
        ("session timeout", "webservice2",
         "webservice2 --(control-flow)--> dbservice2",
         "cpu_usage_pct rose on webservice2 and its downstream calls returned status 500."),
        ("high memory usage", "dbservice2",
         "webservice2 --(control-flow)--> dbservice2",
         "dbservice2 is the callee of the failing invocations."),
        ("file missing", "cacheservice1",
         "webservice2 --(control-flow)--> cacheservice1",
         "cacheservice1 serves webservice2 and may return stale entries."),
    ],
    "s03": [
        ("file missing", "cacheservice1",
         "webservice1 --(control-flow)--> cacheservice1",
         "cacheservice1 logged a missing index file and its cpu collapsed below the band."),
        ("high memory usage", "dbservice1",
         "cacheservice1 --(control-flow)--> dbservice1",
         "the database dependency could slow lookups."),
        ("session timeout", "webservice1",
         "webservice1 --(control-flow)--> cacheservice1",
         "webservice1 observed the failed calls."),
    ],
    "s04": [
        ("high memory usage", "dbservice1",
         "webservice1 --(control-flow)--> dbservice1",
         "dbservice1 sits on the slow call path and is a frequent suspect."),
        ("disk space consumption", "host1",
         "dbservice1 --(hosted-on)--> host1",
         "disk_usage_pct on host1 breached its band; dbservice1 and webservice1 both run there."),
        ("session timeout", "webservice1",
         "webservice1 --(control-flow)--> dbservice1",
         "webservice1 observed the slow calls."),
    ],
    "s05": [
        ("high memory usage", "dbservice2",
         "webservice2 --(control-flow)--> dbservice2",
         "mem_usage_pct on dbservice2 breached its band while its callers slowed down."),
        ("session timeout", "webservice2",
         "webservice2 --(control-flow)--> dbservice2",
         "webservice2 observed the slow calls."),
        ("file missing", "cacheservice1",
         "webservice2 --(control-flow)--> cacheservice1",
         "cacheservice1 also serves webservice2 traffic."),
    ],
    "s06": [
        ("high memory usage", "dbservice1",
         "host2 --(hosts)--> dbservice1",
         "dbservice1 received failing calls, so its memory may be exhausted."),
        ("file missing", "cacheservice1",
         "webservice1 --(control-flow)--> dbservice1",
         "cacheservice1 is a shared dependency of the web tier."),
        ("disk space consumption", "host2",
         "webservice2 --(hosted-on)--> host2",
         "host2 runs several instances and could be saturated."),
    ],
}


def _react_script(sid: str, location: str, pair: tuple[str, str]) -> list[dict]:
    return [
        {
            "tool": "get_node_attributes",
            "args": {"entity": location},
            "reasoning": f"The alerts point at {location}; inspect its attributes and attached alerts first.",
        },
        {
            "tool": "get_all_simple_paths",
            "args": {"source": pair[0], "target": pair[1]},
            "reasoning": "Enumerate propagation routes between the caller and callee of the degraded invocation pair.",
        },
        {"text": _final_answer(FINAL_HYPOTHESES[sid])},
    ]


def _straight_shot_script(sid: str) -> list[dict]:
    return [{"text": "<think>Weighing the alert timeline before answering.</think>\n" + _final_answer(FINAL_HYPOTHESES[sid])}]


def _plan_execute_script(sid: str, location: str, pair: tuple[str, str]) -> list[dict]:
    return [
        {"text": "1. Inspect the most alerted entity.\n2. Enumerate propagation paths for the degraded invocation pair.\n3. Rank the three most likely root causes."},
        {
            "tool": "get_node_attributes",
            "args": {"entity": location},
            "reasoning": f"Step 1 targets {location}, the entity with the densest alerts.",
        },
        {"text": f"Step result: {location} carries the strongest multi-modal alert evidence."},
        {"text": "NO CHANGE"},
        {
            "tool": "get_all_simple_paths",
            "args": {"source": pair[0], "target": pair[1]},
            "reasoning": "Step 2 maps the candidate propagation routes.",
        },
        {"text": "Step result: direct control-flow route confirmed between the pair."},
        {"text": "NO CHANGE"},
        {"text": _final_answer(FINAL_HYPOTHESES[sid])},
    ]


_JUDGE_CLEAN = {
    "failures_identified": [],
    "affected_top_hypothesis": [],
}

_JUDGE_ANCHORED = {
    "failures_identified": [
        {
            "type": "RF-13",
            "model_claim": "The agent committed to its first suspect without exploring alternatives.",
            "rationale": "Fewer than two alternative components were examined before the final ranking.",
            "severity": 3,
        }
    ],
    "affected_top_hypothesis": ["RF-13"],
}

_JUDGE_WEAK_EVIDENCE = {
    "failures_identified": [
        {
            "type": "RF-08",
            "model_claim": "Second hypothesis rests on a single generic failure log.",
            "rationale": "The cited evidence lacks discriminability for the specific fault type.",
            "severity": 2,
        },
        {
            "type": "RF-05",
            "model_claim": "Invoked a hosting relationship that the knowledge graph does not contain.",
            "rationale": "The causal mechanism relies on a nonexistent edge.",
            "severity": 3,
        },
    ],
    "affected_top_hypothesis": ["RF-05"],
}


def _judge_reply(payload: dict) -> str:
    return "Worked through the annotation workflow step by step.\n```json\n" + json.dumps(payload, indent=2) + "\n```"


def _judge_scripts() -> dict:
    scripts = {"scenarios": {}, "default": [_judge_reply(_JUDGE_CLEAN)]}
    scripts["scenarios"]["s04"] = [_judge_reply(_JUDGE_ANCHORED)]
    scripts["scenarios"]["s06"] = [_judge_reply(_JUDGE_WEAK_EVIDENCE)]
    scripts["scenarios"]["s02"] = [_judge_reply(_JUDGE_ANCHORED)]
    return scripts


def _write_csv(path: Path, rows: list[dict], header: list[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=header, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def build_demo_dataset(root: Path, seed: int = 7) -> Path:
    """Write the demo dataset under ``root`` and return the config path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)

    with open(root / "kg.json", "w", encoding="utf-8", newline="\n") as handle:
        json.dump(_kg_document(), handle, indent=2)
        handle.write("\n")

    metrics = _generate_metrics(rng)
    logs = _generate_logs(rng)
    traces = _generate_traces(rng)
    _write_csv(root / "metrics.csv", metrics, ["ts", "entity", "name", "value"])
    _write_csv(root / "logs.csv", logs, ["ts", "entity", "level", "message"])
    _write_csv(
        root / "traces.csv", traces,
        ["trace_id", "span_id", "caller", "callee", "start", "duration", "status"],
    )

    scenario_rows = []
    for i, (sid, location, fault_type, _, _) in enumerate(SCENARIOS):
        ws, we = scenario_window(i)
        scenario_rows.append(
            {
                "id": sid,
                "window_start": ws,
                "window_end": we,
                "gt_location": location,
                "gt_fault_type": fault_type,
                "dataset_tag": "demo",
            }
        )
    _write_csv(
        root / "scenarios.csv", scenario_rows,
        ["id", "window_start", "window_end", "gt_location", "gt_fault_type", "dataset_tag"],
    )

    agent_scripts = {
        "react": {"scenarios": {sid: _react_script(sid, loc, pair) for sid, loc, _, pair, _ in SCENARIOS}},
        "straight_shot": {"scenarios": {sid: _straight_shot_script(sid) for sid, *_ in SCENARIOS}},
        "plan_execute": {"scenarios": {sid: _plan_execute_script(sid, loc, pair) for sid, loc, _, pair, _ in SCENARIOS}},
    }
    for name, data in agent_scripts.items():
        with open(root / f"scripts_{name}.json", "w", encoding="utf-8", newline="\n") as handle:
            json.dump(data, handle, indent=2, sort_keys=True)
            handle.write("\n")
    with open(root / "scripts_judge.json", "w", encoding="utf-8", newline="\n") as handle:
        json.dump(_judge_scripts(), handle, indent=2, sort_keys=True)
        handle.write("\n")

    config = {
        "version": 1,
        "dataset": {
            "name": "demo",
            "scenarios": "scenarios.csv",
            "kg": "kg.json",
            "logs": {"path": "logs.csv", "columns": {"timestamp": "ts", "entity": "entity", "level": "level", "message": "message"}},
            "metrics": {"path": "metrics.csv", "columns": {"timestamp": "ts", "entity": "entity", "metric_name": "name", "value": "value"}},
            "traces": {"path": "traces.csv", "columns": {"trace_id": "trace_id", "span_id": "span_id", "caller": "caller", "callee": "callee", "start": "start", "duration": "duration", "status_code": "status"}},
        },
        "curation": {"min_gap_s": 45.0, "max_silence_min": 30.0, "baseline_min": 15.0},
        "alerts": {
            "unification": "TIME_BASED",
            "rare_threshold": 2,
            "drain": {"depth": 4, "sim_threshold": 0.4},
            "iforest": {"n_trees": 100, "subsample": 256, "score_threshold": 0.5},
        },
        "kg_render": "LIST",
        "workflow": "REACT",
        "endpoint_agent": {"backend": "scripted", "model": "scripted", "script": "scripts_react.json"},
        "endpoint_judge": {"backend": "scripted", "model": "scripted-judge", "script": "scripts_judge.json"},
        "run": {"seed": seed, "max_iterations": 50, "parallelism": 1},
        "judge": {"quota": 100, "seed": seed},
        "output_dir": "runs/react",
    }
    with open(root / "config.yaml", "w", encoding="utf-8", newline="\n") as handle:
        yaml.safe_dump(config, handle, sort_keys=False)
    return root / "config.yaml"
