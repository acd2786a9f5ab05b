"""Trace judging: prompt assembly, output parsing, and failure analytics.

A separate judge model annotates inference traces against the
reasoning-failure taxonomy through a fixed prompt: the full taxonomy with
signals, annotation rules, and severity scales; a step-by-step annotation
workflow; a fixed output schema; and the rendered chat history between
begin/end markers together with the ground-truth line.

Downstream analytics are presence-based: per-group failure prevalence,
risk difference / relative risk of correctness given a failure (with Wilson
intervals, Newcombe combination for the difference), and Cohen's kappa for
annotator reliability. Severity is stored but takes no part in the math.
"""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass
from statistics import NormalDist
from typing import Mapping, Sequence

from .agent import (
    Action,
    FinalAnswer,
    InferenceTrace,
    Observation,
    PlanStep,
    Replan,
    Thought,
)
from .metrics import CorrectnessRecord, Measure
from .taxonomy import DIVERGENCE_GATE, RF_BY_ID, TAXONOMY, VALID_RF_IDS, ReasoningFailure
from .toolbox import render_tool_call

logger = logging.getLogger(__name__)

BEGIN_HISTORY = "<begin chat history>"
END_HISTORY = "<end chat history>"

JUDGE_SYSTEM_MESSAGE = (
    "You are a rigorous assistant with excellent critical thinking skills. Your task is to "
    "qualitatively analyze the reasoning of an LLM agent in a root cause analysis task and "
    "identify any reasoning failures according to a given taxonomy. Work through the annotation "
    "workflow step by step. Only mark failures you are reasonably confident in."
)

_FENCED_JSON_RE = re.compile(r"```json\s*(.*?)```", re.DOTALL)


class JudgeOutputError(ValueError):
    def __init__(self, message: str, kind: str) -> None:
        super().__init__(message)
        self.kind = kind


@dataclass(frozen=True)
class IdentifiedFailure:
    type: str
    model_claim: str
    rationale: str
    severity: int


@dataclass(frozen=True)
class JudgeAnnotation:
    trace_id: str
    failures_identified: tuple[IdentifiedFailure, ...]
    affected_top_hypothesis: tuple[str, ...]

    def rf_ids(self) -> set[str]:
        return {f.type for f in self.failures_identified}

    def has(self, rf_id: str) -> bool:
        return rf_id in self.rf_ids()


def validate_annotation(annotation: JudgeAnnotation) -> None:
    for failure in annotation.failures_identified:
        if failure.type not in VALID_RF_IDS:
            raise JudgeOutputError(f"unknown reasoning-failure id {failure.type!r}", kind="unknown_rf")
        rf = RF_BY_ID[failure.type]
        if not rf.severity_in_range(failure.severity):
            raise JudgeOutputError(
                f"{failure.type}: severity {failure.severity} outside declared range "
                f"{rf.severity_min}-{rf.severity_max}",
                kind="severity_range",
            )
    identified = {f.type for f in annotation.failures_identified}
    stray = [rf for rf in annotation.affected_top_hypothesis if rf not in identified]
    if stray:
        raise JudgeOutputError(
            f"affected_top_hypothesis lists ids not in failures_identified: {stray}",
            kind="affected_subset",
        )


# ---------------------------------------------------------------------------
# Prompt assembly
# ---------------------------------------------------------------------------

def _taxonomy_section(rf: ReasoningFailure) -> str:
    scale = "\n".join(f"  - {line}" for line in rf.severity_scale)
    return (
        f"### {rf.id} — {rf.name}\n\n"
        f"Scope: {rf.scope_label}\n"
        f"Definition: {rf.definition}\n"
        f"Example: {rf.example}\n"
        f"Signals: {rf.signals}\n"
        f"Annotation rule: {rf.annotation_rule}\n"
        f"Severity: {rf.severity_min}-{rf.severity_max}\n"
        f"{scale}\n"
    )


_ANNOTATION_GUIDE = """\
### ANNOTATION GUIDE -- practical rules
1. Multilabel: assign all RFs that apply.
2. RF-00 precedence: if the structured final response (JSON) is None or nan, do NOT mark RF-00. Otherwise, compare the unstructured final answer with the structured final response; if divergent, mark RF-00 and use the unstructured final answer as the basis for the rest of the annotation.
3. Tool message rule: if the chat contains a real Tool Message corresponding to the claimed tool call, treat the associated evidence as real. If the model claimed a call but no Tool Message exists and the model used the assumed output as fact, consider RF-10. Consider a Tool Message "real" if there is an explicit tool header like "==== Tool Message ====" (allowing a variable number of '=').
4. Document evidence: for every RF, paste the triggering model sentence(s) and the matched alert(s) or NO MATCH FOUND.
5. Severity per RF (1-5): give a severity for each RF assigned.
6. Ground-truth is context only: do not mark RFs solely because the model disagrees with the ground truth; only flag when the model claims or presents evidence incorrectly relative to the accessible context.
"""

_ANNOTATION_WORKFLOW = """\
### ANNOTATION WORKFLOW (step-by-step)

Step 1 — Global gate
1. Compare the final structured output response vs the final unstructured answer; mark RF-00 if divergent and record severity.

Step 2 — Per-hypothesis loop (for each hypothesis in the final answer, process top-1 first)
2. RF-01: quick-scan up to 3 times for each cited piece of evidence; if no match, mark RF-01 for that hypothesis and stop per-hypothesis checks for this hypothesis.
3. RF-02: if metric alerts are used, verify semantics; if inverted or misread, mark RF-02.
4. RF-03: examine provenance; if the model blames the observer despite propagation language, mark RF-03.
5. RF-04: compare timestamps; if the cause occurs after the effect, mark RF-04.
6. RF-05: evaluate the causal mechanism against the KG and alerts; if it relies on non-existent KG edges or is otherwise unsupported, mark RF-05.
7. RF-06: if the model claims an instance-level root cause location, verify unique per-instance multi-modal evidence; if absent, mark RF-06.
8. RF-07: assess whether the chosen evidence selection contradicts simple triage heuristics and whether it changed the conclusions; if so, mark RF-07 (severity scaled by impact).
9. RF-08: apply the sufficiency checklist (temporal, frequency, mechanism, discriminability, provenance, granularity); if required items fail for the claim type, mark RF-08.

Step 3 — Full-history checks (scan all "AI Message" and "Tool Message" instances prior to the Final Answer/Response)
10. MANDATORY: perform a full history scan and search for evidence for RF-09 through RF-12. Produce a compact "Full History Summary" of the agent's behaviour. Provide exact verbatim quotes to support RF-09 through RF-12.
11. RF-09: scan the chronological history for later Tool Messages or alerts that contradict earlier claims; if no revision, mark RF-09.
12. RF-10: detect simulated tool outputs used as facts without a Tool Message; mark RF-10.
13. RF-11: measure the speculative-text percentage; if above 30% and it blocked checks, mark RF-11.
14. RF-12: detect repeated planning text that stalled progress; mark RF-12.

Step 4 — Cross-cutting checks (scan the entire chat history)
15. MANDATORY: perform an entire chat history scan and search for evidence for RF-13 through RF-16.
16. RF-13: did the agent ever enumerate 2 or more plausible alternatives? If not, mark RF-13.
17. RF-14: detect formal fallacies anywhere; mark RF-14.
18. RF-15: find explicit contradictions elsewhere; mark RF-15.
19. RF-16: recompute numeric claims or aggregations across the chat; if mismatches materially affect reasoning, mark RF-16.

Step 5 — Finalize
20. Assign all applicable RFs and record per-RF severity (1-5). For the per-hypothesis RFs, make sure the severity accurately reflects the number of occurrences across hypotheses.
21. Out of the RFs identified, list the RFs that directly affected/impacted the #1 hypothesis.
22. Output a json object (using ```json and ``` as delimiters) with the Failures Identified Output Schema.
"""

_OUTPUT_SCHEMA = """\
### FAILURES IDENTIFIED OUTPUT SCHEMA

```json
{
  "failures_identified": [
    {
      "type": "The RF identifier, e.g. 'RF-01'",
      "model_claim": "Model claim or behaviour in the chat history that supports the RF",
      "rationale": "A description of the issue and a justification/rationale that the RF applies",
      "severity": "Severity of the RF."
    }
  ],
  "affected_top_hypothesis": "List of RFs that directly affected the #1 hypothesis, e.g., ['RF-01', 'RF-13']"
}
```
"""


def render_trace_history(trace: InferenceTrace) -> str:
    """Render a trace as the chat history the judge reads, with explicit
    AI/Tool message headers."""
    blocks: list[str] = []
    for step in trace.steps:
        if isinstance(step, Thought):
            blocks.append(f"=== AI Message ===\n{step.text}")
        elif isinstance(step, Action):
            blocks.append(f"=== AI Message ===\nTool call: {render_tool_call(step.call)}")
        elif isinstance(step, Observation):
            blocks.append(f"==== Tool Message ====\n{step.result.rendered}")
        elif isinstance(step, PlanStep):
            blocks.append(f"=== AI Message ===\nPlan step {step.index}: {step.text}")
        elif isinstance(step, Replan):
            blocks.append(f"=== AI Message ===\nRevised plan:\n{step.text}")
        elif isinstance(step, FinalAnswer):
            blocks.append(f"=== AI Message ===\n{step.text}")
    return "\n\n".join(blocks)


def build_judge_prompt(
    trace: InferenceTrace,
    gt_location: str,
    gt_fault_type: str,
    structured_answer: str,
    taxonomy: Sequence[ReasoningFailure] = TAXONOMY,
) -> tuple[str, str]:
    """Assemble the (system, user) judge messages for one trace.

    Deterministic bytes for a fixed trace. An empty trace is refused.
    """
    if not trace.steps:
        raise ValueError("refusing to build a judge prompt for an empty trace")
    sections = ["## REASONING FAILURE TAXONOMY", ""]
    sections.extend(_taxonomy_section(rf) for rf in taxonomy)
    sections.append(
        f"### {DIVERGENCE_GATE.id} — {DIVERGENCE_GATE.name} (global gate)\n\n"
        f"Annotation rule: {DIVERGENCE_GATE.annotation_rule}\n"
    )
    sections.append("## TASK")
    sections.append(
        "Your task is to label the given reasoning by an LLM agent below according to the failure taxonomy.\n"
    )
    sections.append(_ANNOTATION_GUIDE)
    sections.append(_ANNOTATION_WORKFLOW)
    sections.append(_OUTPUT_SCHEMA)
    sections.append(
        "Below is the original root cause analysis task and the associated \"final response\" "
        f"(the LLM's structured output), all enclosed in {BEGIN_HISTORY} and {END_HISTORY}.\n"
        f"The ground-truth root cause for this scenario was: {gt_location} (location) and "
        f"{gt_fault_type} (type).\n\n"
        "Work through the annotation workflow step by step.\n\n"
        f"{BEGIN_HISTORY}\n\n"
        f"{render_trace_history(trace)}\n\n"
        "Final response (structured output):\n"
        f"{structured_answer}\n\n"
        f"{END_HISTORY}"
    )
    return JUDGE_SYSTEM_MESSAGE, "\n".join(sections)


# ---------------------------------------------------------------------------
# Output parsing
# ---------------------------------------------------------------------------

def parse_judge_output(raw_text: str, trace_id: str = "") -> JudgeAnnotation:
    """Parse and validate one fenced JSON judge reply.

    Distinct validation errors: missing fenced block, invalid JSON, schema
    shape, unknown RF id, severity out of range, affected-subset violation.
    """
    match = _FENCED_JSON_RE.search(raw_text)
    if not match:
        raise JudgeOutputError("no fenced ```json block in judge output", kind="missing_block")
    try:
        data = json.loads(match.group(1))
    except json.JSONDecodeError as exc:
        raise JudgeOutputError(f"fenced block is not valid JSON: {exc}", kind="invalid_json") from exc
    if not isinstance(data, dict) or "failures_identified" not in data:
        raise JudgeOutputError("judge output lacks 'failures_identified'", kind="schema")
    failures = []
    for item in data["failures_identified"]:
        if not isinstance(item, Mapping) or "type" not in item:
            raise JudgeOutputError(f"malformed failure entry: {item!r}", kind="schema")
        try:
            severity = int(item.get("severity", 0))
        except (TypeError, ValueError) as exc:
            raise JudgeOutputError(
                f"severity is not an integer: {item.get('severity')!r}", kind="severity_range"
            ) from exc
        failures.append(
            IdentifiedFailure(
                type=str(item["type"]),
                model_claim=str(item.get("model_claim", "")),
                rationale=str(item.get("rationale", "")),
                severity=severity,
            )
        )
    affected_raw = data.get("affected_top_hypothesis", [])
    if isinstance(affected_raw, str):
        affected = tuple(x for x in re.findall(r"RF-\d{2}", affected_raw))
    else:
        affected = tuple(str(x) for x in affected_raw)
    annotation = JudgeAnnotation(
        trace_id=trace_id,
        failures_identified=tuple(failures),
        affected_top_hypothesis=affected,
    )
    validate_annotation(annotation)
    return annotation


def render_annotation(annotation: JudgeAnnotation) -> str:
    """Inverse of :func:`parse_judge_output` (fenced JSON block)."""
    payload = {
        "failures_identified": [
            {
                "type": f.type,
                "model_claim": f.model_claim,
                "rationale": f.rationale,
                "severity": f.severity,
            }
            for f in annotation.failures_identified
        ],
        "affected_top_hypothesis": list(annotation.affected_top_hypothesis),
    }
    return "```json\n" + json.dumps(payload, indent=2, sort_keys=True) + "\n```"


def annotation_to_dict(annotation: JudgeAnnotation) -> dict:
    return {
        "trace_id": annotation.trace_id,
        "failures_identified": [
            {"type": f.type, "model_claim": f.model_claim, "rationale": f.rationale, "severity": f.severity}
            for f in annotation.failures_identified
        ],
        "affected_top_hypothesis": list(annotation.affected_top_hypothesis),
    }


def annotation_from_dict(data: Mapping) -> JudgeAnnotation:
    return JudgeAnnotation(
        trace_id=data["trace_id"],
        failures_identified=tuple(
            IdentifiedFailure(
                type=f["type"],
                model_claim=f.get("model_claim", ""),
                rationale=f.get("rationale", ""),
                severity=int(f["severity"]),
            )
            for f in data["failures_identified"]
        ),
        affected_top_hypothesis=tuple(data.get("affected_top_hypothesis", [])),
    )


# ---------------------------------------------------------------------------
# Sampling and analytics
# ---------------------------------------------------------------------------

GroupKey = tuple[str, str, str]  # (dataset, model, workflow)


def stratified_sample(
    cells: Mapping[str, GroupKey],
    quota: int,
    seed: int | str,
) -> list[str]:
    """Up to ``quota`` trace ids per (dataset, model, workflow) cell, sampled
    uniformly without replacement; deterministic per seed and independent of
    input ordering."""
    by_cell: dict[GroupKey, list[str]] = {}
    for trace_id, cell in cells.items():
        by_cell.setdefault(cell, []).append(trace_id)
    sampled: list[str] = []
    for cell in sorted(by_cell):
        members = sorted(by_cell[cell])
        if len(members) <= quota:
            sampled.extend(members)
            continue
        rng = random.Random(f"{seed}:{cell}")
        sampled.extend(sorted(rng.sample(members, quota)))
    return sampled


def prevalence(
    annotations: Sequence[JudgeAnnotation],
    labels: Mapping[str, GroupKey],
) -> dict[GroupKey, dict[str, float]]:
    """Per group and reasoning failure: the fraction of traces in which the
    failure appears at least once (presence semantics)."""
    groups: dict[GroupKey, list[JudgeAnnotation]] = {}
    for annotation in annotations:
        if annotation.trace_id not in labels:
            logger.warning("prevalence: trace %s has no group label, skipped", annotation.trace_id)
            continue
        groups.setdefault(labels[annotation.trace_id], []).append(annotation)
    table: dict[GroupKey, dict[str, float]] = {}
    for cell in sorted(groups):
        members = groups[cell]
        if not members:
            logger.warning("prevalence: group %s is empty, omitted", cell)
            continue
        table[cell] = {
            rf.id: sum(1 for a in members if a.has(rf.id)) / len(members) for rf in TAXONOMY
        }
    return table


def wilson_ci(successes: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 <= successes <= n:
        raise ValueError(f"successes must lie in 0..{n}, got {successes}")
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    phat = successes / n
    denom = 1 + z * z / n
    center = phat + z * z / (2 * n)
    half = z * ((phat * (1 - phat) / n + z * z / (4 * n * n)) ** 0.5)
    # The closed form hits exactly 0 and 1 at the boundaries; pin them so
    # float noise cannot leak through.
    lower = 0.0 if successes == 0 else max(0.0, (center - half) / denom)
    upper = 1.0 if successes == n else min(1.0, (center + half) / denom)
    return lower, upper


@dataclass(frozen=True)
class RiskStats:
    rf_id: str
    measure: Measure
    n_present: int
    n_absent: int
    p1: float | None
    p0: float | None
    rd: float | None
    rr: float | None
    p1_ci: tuple[float, float] | None
    p0_ci: tuple[float, float] | None
    rd_ci: tuple[float, float] | None
    defined: bool
    note: str = ""


def any_rank_correct(record: CorrectnessRecord, measure: Measure) -> bool:
    return any(record.flags(measure))


def risk_stats(
    joined: Sequence[tuple[JudgeAnnotation, CorrectnessRecord]],
    rf_id: str,
    measure: Measure,
    confidence: float = 0.95,
) -> RiskStats:
    """Correctness risk given a reasoning failure.

    p1 = P(correct | RF present), p0 = P(correct | RF absent), with
    correctness meaning the measure is right at any rank and presence
    meaning the failure was flagged anywhere in the sample. The RD interval
    combines the two Wilson intervals (Newcombe score method); RR is
    undefined when p0 = 0.
    """
    if rf_id not in VALID_RF_IDS:
        raise ValueError(f"unknown reasoning-failure id {rf_id!r}")
    present = [r for a, r in joined if a.has(rf_id)]
    absent = [r for a, r in joined if not a.has(rf_id)]
    if not present or not absent:
        note = "empty present stratum" if not present else "empty absent stratum"
        return RiskStats(
            rf_id=rf_id, measure=measure,
            n_present=len(present), n_absent=len(absent),
            p1=None, p0=None, rd=None, rr=None,
            p1_ci=None, p0_ci=None, rd_ci=None,
            defined=False, note=note,
        )
    s1 = sum(1 for r in present if any_rank_correct(r, measure))
    s0 = sum(1 for r in absent if any_rank_correct(r, measure))
    n1, n0 = len(present), len(absent)
    p1, p0 = s1 / n1, s0 / n0
    rd = p1 - p0
    rr = p1 / p0 if p0 > 0 else None
    l1, u1 = wilson_ci(s1, n1, confidence)
    l0, u0 = wilson_ci(s0, n0, confidence)
    rd_lower = rd - ((p1 - l1) ** 2 + (u0 - p0) ** 2) ** 0.5
    rd_upper = rd + ((u1 - p1) ** 2 + (p0 - l0) ** 2) ** 0.5
    note = "" if rr is not None else "RR undefined (p0 = 0)"
    return RiskStats(
        rf_id=rf_id, measure=measure,
        n_present=n1, n_absent=n0,
        p1=p1, p0=p0, rd=rd, rr=rr,
        p1_ci=(l1, u1), p0_ci=(l0, u0), rd_ci=(rd_lower, rd_upper),
        defined=True, note=note,
    )


def cohens_kappa(a: Sequence[int], b: Sequence[int]) -> float | None:
    """Cohen's kappa over two binary label vectors (marginal-product chance
    agreement). Identical vectors give 1.0; degenerate marginals with
    imperfect agreement are undefined (None)."""
    if len(a) != len(b):
        raise ValueError("label vectors must have equal length")
    if not a:
        raise ValueError("label vectors must be non-empty")
    n = len(a)
    p_o = sum(1 for x, y in zip(a, b) if bool(x) == bool(y)) / n
    pa = sum(1 for x in a if x) / n
    pb = sum(1 for y in b if y) / n
    p_e = pa * pb + (1 - pa) * (1 - pb)
    if p_e == 1.0:
        if p_o == 1.0:
            return 1.0
        logger.warning("cohens_kappa: degenerate marginals (chance agreement = 1), undefined")
        return None
    return (p_o - p_e) / (1 - p_e)
