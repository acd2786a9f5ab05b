"""End-to-end pipeline verbs: extract, build-kg, run, score, judge, report.

Store layout is one directory per run with per-scenario files, chosen for
resumability and diffability:

    <output_dir>/
      alerts/<scenario_id>.jsonl     canonical alert dumps
      extraction_report.json         per-modality counts and curation notes
      traces/<scenario_id>.json      trace + parsed hypotheses + raw final text
      manifest.json                  config hash, outcomes, artifact paths
      timings.json                   wall-clock sidecar (not covered by the
                                     byte-determinism contract)
      scores/report.json, table.tsv
      judge/annotations.jsonl, report.json, prevalence.tsv, risk.tsv
      report.md

With identical config, seeds, and scripted endpoints, two runs produce
byte-identical stores and reports (timings.json aside).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

from . import __version__
from .agent import (
    Hypothesis,
    RunOutcome,
    Workflow,
    build_prompt,
    hypothesis_from_dict,
    hypothesis_to_dict,
    parse_final_answer,
    run_plan_and_execute,
    run_react,
    run_straight_shot,
    trace_from_dict,
    trace_to_dict,
)
from .alerts import (
    Alert,
    AlertIndex,
    dump_alerts_jsonl,
    extract_log_alerts,
    extract_metric_alerts,
    iforest_trace_alerts,
    invocation_features,
    load_alerts_jsonl,
    unify_alerts,
    withhold_modality,
)
from .config import EndpointConfig, RunConfig, config_hash
from .endpoints import (
    EndpointError,
    GenerationSettings,
    HttpChatEndpoint,
    ScriptedEndpoint,
    load_script_file,
    script_for_scenario,
)
from .judge import (
    JudgeOutputError,
    annotation_to_dict,
    build_judge_prompt,
    parse_judge_output,
    prevalence,
    risk_stats,
    stratified_sample,
)
from .kgraph import (
    KGRenderStrategy,
    KnowledgeGraph,
    load_kg,
    parse_rendered,
    render_kg,
    schema_prompt_blocks,
)
from .metrics import (
    CorrectnessRecord,
    Measure,
    evaluate_hypotheses,
    holdout_delta,
    random_guessing_baseline,
    record_from_dict,
    record_to_dict,
    score_summary,
)
from .taxonomy import TAXONOMY
from .telemetry import (
    FaultScenario,
    TelemetrySet,
    TelemetrySource,
    filter_gap_scenarios,
    filter_overlapping_scenarios,
    load_scenarios,
    load_telemetry,
    slice_window,
)
from .toolbox import Toolbox

logger = logging.getLogger(__name__)


class HarnessError(RuntimeError):
    pass


@dataclasses.dataclass(frozen=True)
class RunPaths:
    root: Path

    @property
    def alerts_dir(self) -> Path:
        return self.root / "alerts"

    @property
    def traces_dir(self) -> Path:
        return self.root / "traces"

    @property
    def scores_dir(self) -> Path:
        return self.root / "scores"

    @property
    def judge_dir(self) -> Path:
        return self.root / "judge"

    @property
    def extraction_report(self) -> Path:
        return self.root / "extraction_report.json"

    @property
    def manifest(self) -> Path:
        return self.root / "manifest.json"

    @property
    def timings(self) -> Path:
        return self.root / "timings.json"

    @property
    def report_md(self) -> Path:
        return self.root / "report.md"


def run_paths(config: RunConfig) -> RunPaths:
    return RunPaths(root=config.resolve(config.output_dir))


def canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(text)


def scenario_seed(seed: int, scenario_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{scenario_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


# ---------------------------------------------------------------------------
# Dataset loading
# ---------------------------------------------------------------------------

def _telemetry_source(config: RunConfig, modality: str) -> TelemetrySource | None:
    source = getattr(config.dataset, modality)
    if source is None:
        return None
    return TelemetrySource(
        path=config.resolve(source.path),
        columns=source.columns,
        delimiter=source.delimiter,
    )


def load_dataset(config: RunConfig) -> tuple[TelemetrySet, list[FaultScenario], KnowledgeGraph]:
    graph = load_kg(config.resolve(config.dataset.kg))
    telemetry = load_telemetry(
        logs=_telemetry_source(config, "logs"),
        metrics=_telemetry_source(config, "metrics"),
        traces=_telemetry_source(config, "traces"),
        strict=config.strict_parse,
    )
    categories = graph.schema.all_fault_classes() or None
    scenarios, issues = load_scenarios(
        config.resolve(config.dataset.scenarios),
        fault_categories=categories,
        strict=config.strict_parse,
    )
    telemetry.issues.extend(issues)
    for scenario in scenarios:
        if not graph.has_entity(scenario.gt_location):
            raise HarnessError(
                f"scenario {scenario.id}: ground-truth location {scenario.gt_location!r} "
                "is not a knowledge-graph entity"
            )
        declared = graph.schema.fault_classes_for(graph.entity(scenario.gt_location).etype)
        if declared and scenario.gt_fault_type.casefold() not in {c.casefold() for c in declared}:
            raise HarnessError(
                f"scenario {scenario.id}: fault type {scenario.gt_fault_type!r} is not declared "
                f"for entity type {graph.entity(scenario.gt_location).etype!r}"
            )
    return telemetry, scenarios, graph


def curate_scenarios(
    config: RunConfig,
    scenarios: Sequence[FaultScenario],
    telemetry: TelemetrySet,
) -> list[FaultScenario]:
    curated = filter_overlapping_scenarios(scenarios, min_gap_s=config.curation.min_gap_s)
    curated = filter_gap_scenarios(curated, telemetry, max_gap_min=config.curation.max_silence_min)
    return curated


# ---------------------------------------------------------------------------
# extract
# ---------------------------------------------------------------------------

def _mark_unmapped(alerts: Sequence[Alert], graph: KnowledgeGraph) -> list[Alert]:
    marked = []
    for alert in alerts:
        if isinstance(alert.element, tuple):
            resolvable = (
                graph.has_entity(alert.element[0])
                and graph.has_entity(alert.element[1])
                and bool(graph.edges_between(alert.element[0], alert.element[1]))
            )
        else:
            resolvable = graph.has_entity(alert.element)
        if not resolvable:
            alert = dataclasses.replace(alert, unmapped=True)
        marked.append(alert)
    return marked


def cmd_extract(config: RunConfig) -> dict:
    """Curate scenarios and extract per-scenario alert files; returns the
    extraction report."""
    telemetry, scenarios, graph = load_dataset(config)
    curated = curate_scenarios(config, scenarios, telemetry)
    if not curated:
        raise HarnessError(
            "curation removed every scenario (overlap/gap rules); nothing to extract"
        )
    paths = run_paths(config)
    paths.alerts_dir.mkdir(parents=True, exist_ok=True)
    withheld = config.alerts.withhold_modality()
    report: dict = {
        "dataset": config.dataset.name,
        "curated_scenarios": [s.id for s in curated],
        "dropped_scenarios": sorted({s.id for s in scenarios} - {s.id for s in curated}),
        "withhold": withheld.value if withheld else None,
        "scenarios": {},
        "parse_issues": [dataclasses.asdict(i) for i in telemetry.issues],
    }
    for scenario in curated:
        bundle = slice_window(scenario, telemetry, baseline_min=config.curation.baseline_min)
        notes = []
        if bundle.empty:
            notes.append("empty window: extraction refused, no alerts produced")
            alerts: list[Alert] = []
        else:
            if bundle.baseline_free:
                notes.append("baseline-free: detectors fall back to in-window statistics")
            log_alerts = extract_log_alerts(
                list(bundle.logs),
                depth=config.alerts.drain.depth,
                sim_threshold=config.alerts.drain.sim_threshold,
                rare_threshold=config.alerts.rare_threshold,
            )
            features = invocation_features(list(bundle.baseline_spans) + list(bundle.spans))
            trace_alerts = [
                a
                for a in iforest_trace_alerts(
                    features,
                    n_trees=config.alerts.iforest.n_trees,
                    subsample=config.alerts.iforest.subsample,
                    seed=scenario_seed(config.run.seed, scenario.id),
                    score_threshold=config.alerts.iforest.score_threshold,
                )
                if scenario.window_start <= a.timestamp <= scenario.window_end
            ]
            metric_alerts = extract_metric_alerts(
                bundle.metrics,
                bundle.baseline_metrics,
                fallback_to_window=bundle.baseline_free,
            )
            alerts = sorted(
                log_alerts + trace_alerts + metric_alerts,
                key=lambda a: (a.timestamp, a.modality.value, a.element_label, a.payload),
            )
        alerts = _mark_unmapped(alerts, graph)
        if withheld is not None:
            alerts = withhold_modality(alerts, withheld)
        dump_alerts_jsonl(paths.alerts_dir / f"{scenario.id}.jsonl", alerts)
        counts = {"LOG": 0, "METRIC": 0, "TRACE": 0}
        for alert in alerts:
            counts[alert.modality.value] += 1
        report["scenarios"][scenario.id] = {
            "counts": counts,
            "unmapped": sum(1 for a in alerts if a.unmapped),
            "notes": notes,
        }
    write_text(paths.extraction_report, canonical_json(report))
    logger.info("extracted alerts for %d scenarios into %s", len(curated), paths.alerts_dir)
    return report


# ---------------------------------------------------------------------------
# build-kg
# ---------------------------------------------------------------------------

def cmd_build_kg(config: RunConfig) -> dict:
    """Validate the KG document, render both strategies, and verify the
    render/parse round-trip."""
    graph = load_kg(config.resolve(config.dataset.kg))
    list_text = render_kg(graph, KGRenderStrategy.LIST)
    json_text = render_kg(graph, KGRenderStrategy.JSON_OBJECT)
    for strategy, text in ((KGRenderStrategy.LIST, list_text), (KGRenderStrategy.JSON_OBJECT, json_text)):
        reparsed = parse_rendered(text, strategy, graph.schema)
        if reparsed != graph:
            raise HarnessError(f"KG round-trip failed for {strategy.value} rendering")
    paths = run_paths(config)
    write_text(paths.root / "kg_render" / "kg_list.txt", list_text + "\n")
    write_text(paths.root / "kg_render" / "kg_object.json", json_text + "\n")
    summary = {
        "entities": len(graph.entities),
        "relationships": len(graph.relationships),
        "entity_types": list(graph.schema.entity_types),
        "relationship_types": list(graph.schema.relationship_types),
        "round_trip": "ok",
    }
    logger.info("KG validated: %d entities, %d relationships", len(graph.entities), len(graph.relationships))
    return summary


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _make_endpoint(endpoint_config: EndpointConfig, scenario_id: str, script_data):
    if endpoint_config.backend == "scripted":
        if script_data is None:
            raise HarnessError("scripted endpoint configured without a script file")
        return ScriptedEndpoint(script_for_scenario(script_data, scenario_id))
    if endpoint_config.backend == "http":
        if not endpoint_config.base_url:
            raise HarnessError("http endpoint configured without a base_url")
        return HttpChatEndpoint(
            base_url=endpoint_config.base_url,
            model=endpoint_config.model,
            token_env=endpoint_config.token_env,
            timeout_s=endpoint_config.timeout_s,
        )
    raise HarnessError(f"unknown endpoint backend {endpoint_config.backend!r}")


def _generation_settings(endpoint_config: EndpointConfig) -> GenerationSettings:
    return GenerationSettings(
        temperature=endpoint_config.temperature,
        max_tokens=endpoint_config.max_tokens,
    )


def _run_one_scenario(
    config: RunConfig,
    scenario: FaultScenario,
    graph: KnowledgeGraph,
    script_data,
    paths: RunPaths,
) -> dict:
    workflow = config.workflow_enum()
    alerts = load_alerts_jsonl(paths.alerts_dir / f"{scenario.id}.jsonl")
    unified = unify_alerts(alerts, config.alerts.unification_strategy())
    entity_block, rel_block = schema_prompt_blocks(graph.schema)
    fault_types = graph.schema.all_fault_classes()
    fault_entity_types = graph.schema.fault_entity_types()
    kg_full = render_kg(graph, config.kg_render_strategy()) if workflow is Workflow.STRAIGHT_SHOT else None
    messages = build_prompt(
        workflow,
        entity_block,
        rel_block,
        unified.text,
        fault_types,
        fault_entity_types,
        kg_full_text=kg_full,
    )
    prompt_sha = hashlib.sha256(messages[0]["content"].encode("utf-8")).hexdigest()
    endpoint = _make_endpoint(config.endpoint_agent, scenario.id, script_data)
    settings = _generation_settings(config.endpoint_agent)
    toolbox = Toolbox(graph, AlertIndex.from_alerts(alerts))
    retries = config.endpoint_agent.retries
    if workflow is Workflow.STRAIGHT_SHOT:
        trace, raw_final = run_straight_shot(endpoint, messages, settings=settings, retries=retries)
    elif workflow is Workflow.REACT:
        trace, raw_final = run_react(
            endpoint, messages, toolbox,
            max_iterations=config.run.max_iterations, settings=settings, retries=retries,
        )
    else:
        trace, raw_final = run_plan_and_execute(
            endpoint, messages, toolbox,
            max_iterations=config.run.max_iterations, settings=settings, retries=retries,
        )
    hypotheses: list[Hypothesis] = []
    diagnostics: list[str] = []
    outcome = trace.outcome
    if outcome is RunOutcome.COMPLETED:
        parsed = parse_final_answer(raw_final, graph, fault_types)
        hypotheses = parsed.hypotheses
        diagnostics = parsed.diagnostics
        if parsed.failed:
            outcome = RunOutcome.PARSE_FAILURE
            trace.outcome = outcome
    record = {
        "scenario_id": scenario.id,
        "dataset_tag": scenario.dataset_tag,
        "workflow": workflow.value,
        "model": config.endpoint_agent.model,
        "prompt_sha256": prompt_sha,
        "outcome": outcome.value,
        "trace": trace_to_dict(trace),
        "raw_final": raw_final,
        "hypotheses": [hypothesis_to_dict(h) for h in hypotheses],
        "parse_diagnostics": diagnostics,
    }
    write_text(paths.traces_dir / f"{scenario.id}.json", canonical_json(record))
    return record


def cmd_run(config: RunConfig) -> dict:
    """Drive the configured workflow over every curated scenario; resumable
    by scenario id (existing trace files are not re-executed)."""
    paths = run_paths(config)
    if not paths.extraction_report.exists():
        raise HarnessError("run requires extracted alerts; run the extract verb first")
    with open(paths.extraction_report, encoding="utf-8") as handle:
        extraction = json.load(handle)
    curated_ids = list(extraction["curated_scenarios"])
    _, scenarios, graph = load_dataset(config)
    by_id = {s.id: s for s in scenarios}
    missing = [sid for sid in curated_ids if sid not in by_id]
    if missing:
        raise HarnessError(f"extraction report references unknown scenarios: {missing}")
    paths.traces_dir.mkdir(parents=True, exist_ok=True)
    script_data = None
    if config.endpoint_agent.backend == "scripted" and config.endpoint_agent.script:
        script_data = load_script_file(config.resolve(config.endpoint_agent.script))

    pending = [sid for sid in curated_ids if not (paths.traces_dir / f"{sid}.json").exists()]
    skipped = [sid for sid in curated_ids if sid not in pending]
    if skipped:
        logger.info("resume: %d scenarios already have traces, skipping", len(skipped))

    timings: dict[str, float] = {}
    aborted = False

    def execute(sid: str) -> str:
        start = time.monotonic()
        _run_one_scenario(config, by_id[sid], graph, script_data, paths)
        timings[sid] = round(time.monotonic() - start, 6)
        return sid

    workers = max(1, min(config.run.parallelism, config.endpoint_agent.concurrency))
    if workers == 1:
        consecutive_failures = 0
        for sid in pending:
            record_path = paths.traces_dir / f"{sid}.json"
            execute(sid)
            with open(record_path, encoding="utf-8") as handle:
                outcome = json.load(handle)["outcome"]
            if outcome == RunOutcome.ENDPOINT_ERROR.value:
                consecutive_failures += 1
                if consecutive_failures >= config.run.max_endpoint_failures:
                    logger.error(
                        "aborting run after %d consecutive endpoint failures", consecutive_failures
                    )
                    aborted = True
                    break
            else:
                consecutive_failures = 0
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(execute, pending))

    executed = {sid for sid in curated_ids if (paths.traces_dir / f"{sid}.json").exists()}
    entries = []
    tallies: dict[str, int] = {}
    for sid in sorted(executed):
        with open(paths.traces_dir / f"{sid}.json", encoding="utf-8") as handle:
            record = json.load(handle)
        tallies[record["outcome"]] = tallies.get(record["outcome"], 0) + 1
        entries.append(
            {
                "id": sid,
                "dataset_tag": record["dataset_tag"],
                "outcome": record["outcome"],
                "prompt_sha256": record["prompt_sha256"],
                "trace_path": f"traces/{sid}.json",
            }
        )
    manifest = {
        "config_hash": config_hash(config),
        "code_version": __version__,
        "seed": config.run.seed,
        "dataset": config.dataset.name,
        "workflow": config.workflow,
        "model": config.endpoint_agent.model,
        "scenarios": entries,
        "tallies": dict(sorted(tallies.items())),
        "complete": not aborted and len(executed) == len(curated_ids),
        "pending": sorted(set(curated_ids) - executed),
    }
    write_text(paths.manifest, canonical_json(manifest))
    write_text(paths.timings, canonical_json({"scenarios": timings}))
    if aborted:
        raise HarnessError(
            f"run aborted after repeated endpoint failures; manifest records partial state "
            f"({len(executed)}/{len(curated_ids)} scenarios)"
        )
    return manifest


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------

def _load_trace_record(paths: RunPaths, scenario_id: str) -> dict:
    with open(paths.traces_dir / f"{scenario_id}.json", encoding="utf-8") as handle:
        return json.load(handle)


def build_correctness_records(config: RunConfig) -> list[CorrectnessRecord]:
    paths = run_paths(config)
    if not paths.manifest.exists():
        raise HarnessError("scoring requires a completed run; run the run verb first")
    with open(paths.manifest, encoding="utf-8") as handle:
        manifest = json.load(handle)
    if not manifest["scenarios"]:
        raise HarnessError("trace store is empty; nothing to score")
    _, scenarios, graph = load_dataset(config)
    by_id = {s.id: s for s in scenarios}
    records = []
    for entry in manifest["scenarios"]:
        scenario = by_id[entry["id"]]
        trace_record = _load_trace_record(paths, scenario.id)
        hypotheses = [hypothesis_from_dict(h) for h in trace_record["hypotheses"]]
        alerts = load_alerts_jsonl(paths.alerts_dir / f"{scenario.id}.jsonl")
        alerted = AlertIndex.from_alerts(alerts).alerted_elements()
        records.append(
            evaluate_hypotheses(
                scenario.id,
                scenario.gt_location,
                scenario.gt_fault_type,
                hypotheses,
                graph,
                alerted,
                RunOutcome(trace_record["outcome"]),
            )
        )
    records.sort(key=lambda r: r.scenario_id)
    return records


def _format_cell(value: float) -> str:
    text = f"{value:.2f}"
    if text == "0.00" and value > 0:
        return f"{value:.3f}"
    return text


def cmd_score(config: RunConfig, baseline_run: Path | None = None) -> dict:
    """Score the trace store into the measure x (A@1, A@3, Avg@3) grid with
    random-guessing rows; optionally compare against a baseline run for the
    modality-holdout deltas."""
    records = build_correctness_records(config)
    _, scenarios, graph = load_dataset(config)
    scored_ids = {r.scenario_id for r in records}
    gt_locations = {s.gt_location for s in scenarios if s.id in scored_ids}
    declared_types = graph.schema.all_fault_classes()
    n_locations = len(gt_locations)
    n_types = len(declared_types) if declared_types else len(
        {s.gt_fault_type for s in scenarios if s.id in scored_ids}
    )
    grid = {}
    for measure in Measure:
        summary = score_summary(records, measure)
        grid[measure.value] = {
            "a_at_1": summary.a_at_1,
            "a_at_3": summary.a_at_3,
            "avg_at_3": summary.avg_at_3,
        }
    random_rows = {}
    for k in (1, 3):
        baseline = random_guessing_baseline(n_locations, n_types, k)
        random_rows[f"k{k}"] = {"LA": baseline.la, "TA": baseline.ta, "HA": baseline.ha}
    random_rows["avg3"] = {
        key: sum(getattr(random_guessing_baseline(n_locations, n_types, kk), key.lower())
                 for kk in (1, 2, 3)) / 3
        for key in ("LA", "TA", "HA")
    }
    tallies: dict[str, int] = {}
    for record in records:
        tallies[record.outcome.value] = tallies.get(record.outcome.value, 0) + 1
    report = {
        "n": len(records),
        "grid": grid,
        "random_baseline": {
            "n_locations": n_locations,
            "n_types": n_types,
            "rows": random_rows,
        },
        "outcome_tally": dict(sorted(tallies.items())),
        "records": [record_to_dict(r) for r in records],
    }

    if baseline_run is not None:
        baseline_report_path = Path(baseline_run) / "scores" / "report.json"
        if not baseline_report_path.exists():
            raise HarnessError(f"baseline run has no score report at {baseline_report_path}")
        with open(baseline_report_path, encoding="utf-8") as handle:
            baseline_records = [record_from_dict(r) for r in json.load(handle)["records"]]
        deltas = holdout_delta(baseline_records, records)
        report["holdout_vs_baseline"] = {
            m.value: {
                "delta_avg_at_3": d.delta,
                "p_value": d.p_value,
                "significant": d.significant,
                "no_difference": d.no_difference,
            }
            for m, d in deltas.items()
        }

    paths = run_paths(config)
    write_text(paths.scores_dir / "report.json", canonical_json(report))

    lines = ["measure\tA@1\tA@3\tAvg@3"]
    for measure in Measure:
        row = grid[measure.value]
        lines.append(
            f"{measure.value}\t{_format_cell(row['a_at_1'])}\t{_format_cell(row['a_at_3'])}\t"
            f"{_format_cell(row['avg_at_3'])}"
        )
    for key in ("LA", "TA", "HA"):
        lines.append(
            f"random-{key}\t{_format_cell(random_rows['k1'][key])}\t"
            f"{_format_cell(random_rows['k3'][key])}\t{_format_cell(random_rows['avg3'][key])}"
        )
    write_text(paths.scores_dir / "table.tsv", "\n".join(lines) + "\n")
    return report


# ---------------------------------------------------------------------------
# judge
# ---------------------------------------------------------------------------

def cmd_judge(config: RunConfig) -> dict:
    """Judge a stratified sample of traces and emit prevalence and risk
    tables."""
    paths = run_paths(config)
    if not paths.manifest.exists():
        raise HarnessError("judging requires a completed run; run the run verb first")
    with open(paths.manifest, encoding="utf-8") as handle:
        manifest = json.load(handle)
    _, scenarios, graph = load_dataset(config)
    by_id = {s.id: s for s in scenarios}
    cells = {
        entry["id"]: (entry["dataset_tag"], manifest["model"], manifest["workflow"])
        for entry in manifest["scenarios"]
    }
    sampled = stratified_sample(cells, config.judge.quota, config.judge.seed)
    script_data = None
    if config.endpoint_judge.backend == "scripted" and config.endpoint_judge.script:
        script_data = load_script_file(config.resolve(config.endpoint_judge.script))
    settings = _generation_settings(config.endpoint_judge)

    annotations = []
    retries_log: dict[str, int] = {}
    failed: list[str] = []
    for sid in sampled:
        trace_record = _load_trace_record(paths, sid)
        trace = trace_from_dict(trace_record["trace"])
        if not trace.steps:
            logger.warning("judge: trace %s has no steps, skipped", sid)
            failed.append(sid)
            continue
        scenario = by_id[sid]
        structured = json.dumps(trace_record["hypotheses"], sort_keys=True)
        system_msg, user_msg = build_judge_prompt(
            trace, scenario.gt_location, scenario.gt_fault_type, structured
        )
        messages = [
            {"role": "system", "content": system_msg},
            {"role": "user", "content": user_msg},
        ]
        endpoint = _make_endpoint(config.endpoint_judge, sid, script_data)
        annotation = None
        attempts = 0
        for attempt in range(config.judge.retries + 1):
            attempts = attempt
            try:
                reply = endpoint.complete(messages, settings=settings)
                annotation = parse_judge_output(reply.text, trace_id=sid)
                break
            except JudgeOutputError as exc:
                logger.warning("judge output invalid for %s (attempt %d): %s", sid, attempt + 1, exc)
            except EndpointError as exc:
                logger.warning("judge endpoint failed for %s: %s", sid, exc)
                break
        retries_log[sid] = attempts
        if annotation is None:
            failed.append(sid)
            logger.warning("judge: trace %s marked judge-failed, excluded", sid)
            continue
        annotations.append(annotation)

    paths.judge_dir.mkdir(parents=True, exist_ok=True)
    with open(paths.judge_dir / "annotations.jsonl", "w", encoding="utf-8", newline="\n") as handle:
        for annotation in sorted(annotations, key=lambda a: a.trace_id):
            handle.write(json.dumps(annotation_to_dict(annotation), sort_keys=True))
            handle.write("\n")

    labels = {sid: cells[sid] for sid in cells}
    prevalence_table = prevalence(annotations, labels)
    lines = ["dataset\tmodel\tworkflow\t" + "\t".join(rf.id for rf in TAXONOMY)]
    for cell in sorted(prevalence_table):
        row = prevalence_table[cell]
        lines.append(
            "\t".join(cell) + "\t" + "\t".join(f"{row[rf.id]:.3f}" for rf in TAXONOMY)
        )
    write_text(paths.judge_dir / "prevalence.tsv", "\n".join(lines) + "\n")

    records = {r.scenario_id: r for r in build_correctness_records(config)}
    joined = [(a, records[a.trace_id]) for a in annotations if a.trace_id in records]
    risk_lines = [
        "rf\tmeasure\tn_present\tn_absent\tp1\tp0\trd\trd_lo\trd_hi\trr\tnote"
    ]
    flagged = sorted({f.type for a in annotations for f in a.failures_identified})
    for rf_id in flagged:
        for measure in Measure:
            stats = risk_stats(joined, rf_id, measure)
            if not stats.defined:
                risk_lines.append(
                    f"{rf_id}\t{measure.value}\t{stats.n_present}\t{stats.n_absent}"
                    f"\t-\t-\t-\t-\t-\t-\t{stats.note}"
                )
                continue
            rr_text = f"{stats.rr:.4f}" if stats.rr is not None else "undefined"
            risk_lines.append(
                f"{rf_id}\t{measure.value}\t{stats.n_present}\t{stats.n_absent}"
                f"\t{stats.p1:.4f}\t{stats.p0:.4f}\t{stats.rd:.4f}"
                f"\t{stats.rd_ci[0]:.4f}\t{stats.rd_ci[1]:.4f}\t{rr_text}\t{stats.note}"
            )
    write_text(paths.judge_dir / "risk.tsv", "\n".join(risk_lines) + "\n")

    judge_report = {
        "sampled": sampled,
        "judged": len(annotations),
        "judge_failed": sorted(failed),
        "retries": dict(sorted(retries_log.items())),
        "quota": config.judge.quota,
        "seed": config.judge.seed,
    }
    write_text(paths.judge_dir / "report.json", canonical_json(judge_report))
    return judge_report


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def cmd_report(config: RunConfig) -> str:
    """Render a combined human-readable report from the stores (a pure
    function of the store contents)."""
    paths = run_paths(config)
    sections = ["# Run report", ""]
    if paths.manifest.exists():
        with open(paths.manifest, encoding="utf-8") as handle:
            manifest = json.load(handle)
        sections += [
            f"- dataset: {manifest['dataset']}",
            f"- workflow: {manifest['workflow']}",
            f"- model: {manifest['model']}",
            f"- config hash: {manifest['config_hash']}",
            f"- scenarios: {len(manifest['scenarios'])} (complete: {manifest['complete']})",
            f"- outcome tally: {json.dumps(manifest['tallies'], sort_keys=True)}",
            "",
        ]
    score_path = paths.scores_dir / "table.tsv"
    if score_path.exists():
        sections += ["## Accuracy", "", "```"]
        sections.append(score_path.read_text(encoding="utf-8").rstrip("\n"))
        sections += ["```", ""]
    score_report_path = paths.scores_dir / "report.json"
    if score_report_path.exists():
        with open(score_report_path, encoding="utf-8") as handle:
            score_report = json.load(handle)
        if "holdout_vs_baseline" in score_report:
            sections += ["## Holdout deltas (this run minus baseline)", ""]
            for measure, delta in sorted(score_report["holdout_vs_baseline"].items()):
                flag = "significant" if delta["significant"] else "not significant"
                sections.append(
                    f"- {measure}: delta Avg@3 = {delta['delta_avg_at_3']:+.4f} "
                    f"(p = {delta['p_value']:.4f}, {flag})"
                )
            sections.append("")
    prevalence_path = paths.judge_dir / "prevalence.tsv"
    if prevalence_path.exists():
        sections += ["## Reasoning-failure prevalence", "", "```"]
        sections.append(prevalence_path.read_text(encoding="utf-8").rstrip("\n"))
        sections += ["```", ""]
    risk_path = paths.judge_dir / "risk.tsv"
    if risk_path.exists():
        sections += ["## Reasoning-failure risk (RD / RR, Wilson 95% CI)", "", "```"]
        sections.append(risk_path.read_text(encoding="utf-8").rstrip("\n"))
        sections += ["```", ""]
    text = "\n".join(sections).rstrip("\n") + "\n"
    write_text(paths.report_md, text)
    return text
