"""Agent workflows: prompt assembly, the three diagnostic loops, and final
answer parsing.

Three workflows drive the endpoint: a single-pass baseline, a reactive
thought-action-observation loop with tool feedback, and a plan-then-execute
loop with per-step plan revision. Each run yields an :class:`InferenceTrace`
(ordered thoughts, actions, observations, plan steps, final answer) plus the
raw final text, from which up to three ranked hypotheses are parsed.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence, Union

from .endpoints import EndpointError, GenerationSettings, ModelEndpoint, ModelReply
from .kgraph import KnowledgeGraph, PathStep, PropagationPath
from .toolbox import Toolbox, ToolCall, ToolResult, tool_call_from_dict, tool_call_to_dict, tool_schemas

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITERATIONS = 50
DEFAULT_RETRIES = 3

FINAL_ANSWER_PREFIX = "Final Answer:"

_THINK_RE = re.compile(r"<think>(.*?)</think>", re.DOTALL)
_PLAN_LINE_RE = re.compile(r"^\s*(\d+)[.):]\s+(.*\S)\s*$")


class Workflow(Enum):
    STRAIGHT_SHOT = "STRAIGHT_SHOT"
    REACT = "REACT"
    PLAN_EXECUTE = "PLAN_EXECUTE"


class RunOutcome(Enum):
    COMPLETED = "COMPLETED"
    RECURSION_LIMIT = "RECURSION_LIMIT"
    REPLAN_ERROR = "REPLAN_ERROR"
    PARSE_FAILURE = "PARSE_FAILURE"
    ENDPOINT_ERROR = "ENDPOINT_ERROR"


# ---------------------------------------------------------------------------
# Trace step records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Thought:
    text: str


@dataclass(frozen=True)
class Action:
    call: ToolCall


@dataclass(frozen=True)
class Observation:
    result: ToolResult


@dataclass(frozen=True)
class PlanStep:
    index: int
    text: str


@dataclass(frozen=True)
class Replan:
    text: str


@dataclass(frozen=True)
class FinalAnswer:
    text: str


TraceStep = Union[Thought, Action, Observation, PlanStep, Replan, FinalAnswer]


@dataclass
class InferenceTrace:
    workflow: Workflow
    steps: list[TraceStep] = field(default_factory=list)
    outcome: RunOutcome | None = None
    iterations: int = 0
    retries: int = 0

    def final_answer(self) -> str | None:
        for step in self.steps:
            if isinstance(step, FinalAnswer):
                return step.text
        return None

    def validate(self) -> None:
        finals = [s for s in self.steps if isinstance(s, FinalAnswer)]
        if len(finals) > 1:
            raise ValueError("a trace may contain at most one FinalAnswer")
        if self.outcome is RunOutcome.COMPLETED and not finals:
            raise ValueError("COMPLETED traces must contain a FinalAnswer")
        if self.workflow is Workflow.REACT:
            for i, step in enumerate(self.steps):
                if isinstance(step, Action):
                    follower = self.steps[i + 1] if i + 1 < len(self.steps) else None
                    if not isinstance(follower, Observation):
                        raise ValueError(f"Action at step {i} is not followed by an Observation")
                if isinstance(step, Observation):
                    prior = self.steps[i - 1] if i > 0 else None
                    if not isinstance(prior, Action):
                        raise ValueError(f"Observation at step {i} is not preceded by an Action")


def trace_to_dict(trace: InferenceTrace) -> dict:
    steps = []
    for step in trace.steps:
        if isinstance(step, Thought):
            steps.append({"kind": "thought", "text": step.text})
        elif isinstance(step, Action):
            steps.append({"kind": "action", **tool_call_to_dict(step.call)})
        elif isinstance(step, Observation):
            steps.append(
                {
                    "kind": "observation",
                    "ok": step.result.ok,
                    "rendered": step.result.rendered,
                    "error_kind": step.result.error_kind.value if step.result.error_kind else None,
                }
            )
        elif isinstance(step, PlanStep):
            steps.append({"kind": "plan_step", "index": step.index, "text": step.text})
        elif isinstance(step, Replan):
            steps.append({"kind": "replan", "text": step.text})
        elif isinstance(step, FinalAnswer):
            steps.append({"kind": "final_answer", "text": step.text})
    return {
        "workflow": trace.workflow.value,
        "outcome": trace.outcome.value if trace.outcome else None,
        "iterations": trace.iterations,
        "retries": trace.retries,
        "steps": steps,
    }


def trace_from_dict(data: Mapping) -> InferenceTrace:
    from .toolbox import ToolErrorKind

    steps: list[TraceStep] = []
    for item in data.get("steps", []):
        kind = item["kind"]
        if kind == "thought":
            steps.append(Thought(item["text"]))
        elif kind == "action":
            steps.append(Action(tool_call_from_dict(item)))
        elif kind == "observation":
            error_kind = ToolErrorKind(item["error_kind"]) if item.get("error_kind") else None
            steps.append(Observation(ToolResult(ok=item["ok"], rendered=item["rendered"], error_kind=error_kind)))
        elif kind == "plan_step":
            steps.append(PlanStep(index=item["index"], text=item["text"]))
        elif kind == "replan":
            steps.append(Replan(item["text"]))
        elif kind == "final_answer":
            steps.append(FinalAnswer(item["text"]))
        else:
            raise ValueError(f"unknown trace step kind {kind!r}")
    return InferenceTrace(
        workflow=Workflow(data["workflow"]),
        steps=steps,
        outcome=RunOutcome(data["outcome"]) if data.get("outcome") else None,
        iterations=int(data.get("iterations", 0)),
        retries=int(data.get("retries", 0)),
    )


@dataclass(frozen=True)
class Hypothesis:
    rank: int
    location: str
    fault_type: str
    path: PropagationPath | None
    justification: str

    def __post_init__(self) -> None:
        if not 1 <= self.rank <= 3:
            raise ValueError(f"hypothesis rank must lie in 1..3, got {self.rank}")


def hypothesis_to_dict(hyp: Hypothesis) -> dict:
    return {
        "rank": hyp.rank,
        "location": hyp.location,
        "fault_type": hyp.fault_type,
        "path": [[s.src, s.rtype, s.dst] for s in hyp.path.steps] if hyp.path else None,
        "justification": hyp.justification,
    }


def hypothesis_from_dict(data: Mapping) -> Hypothesis:
    path = None
    if data.get("path"):
        path = PropagationPath(tuple(PathStep(s[0], s[1], s[2]) for s in data["path"]))
    return Hypothesis(
        rank=int(data["rank"]),
        location=data["location"],
        fault_type=data["fault_type"],
        path=path,
        justification=data.get("justification", ""),
    )


# ---------------------------------------------------------------------------
# Prompt assembly
# ---------------------------------------------------------------------------

_PREAMBLE = """\
You are a helpful assistant that is an expert in root cause analysis for complex cloud-based software systems.

Consider a cloud-based software system composed of multiple interconnected components (both software and hardware). This system can be represented by an explicit, directed, unweighted, and typed knowledge graph, where nodes represent system components and edges indicate relationships between them. The schema of the knowledge graph is as follows.

### Knowledge graph schema
#### Entities
{entity_schema}
#### Relationships
{relationship_schema}

Errors or issues originating in one component may propagate to others due to dependencies, communication links, or shared resources. These errors often manifest as observable symptoms (e.g., anomalies or alerts) in different system components.

### Task
You will be given a set of symptoms (e.g., log, trace and/or metric alerts) due to a fault that occurred in the system.
Your task is to use the system knowledge graph and the detected symptoms to hypothesize the three most likely root cause faults that could be the underlying cause of the observed symptoms.
Each root cause fault is localized to a single system component, included as a node in the knowledge graph. You must identify this node as the root cause location.
"""

_REACT_INSTRUCTIONS = """\
### Instructions
You should think step-by-step in order to fulfill the objective. The step-by-step workflow should follow a "Thought/Action/Observation" loop that can repeat multiple times if needed. Here is how you should go about it:
1. Thought: reflect internally on the current task, the available information, and what to do next.
2. Action: if further information is needed, choose one appropriate tool to call. Any and all "Thoughts" must be included in the 'reasoning' field in the tool input.
3. Observation: the tool will return a result, which will be provided to you.
Repeat this loop as needed until you have enough information to answer the original task.
"""

_PLAN_INSTRUCTIONS = """\
### Instructions
Work in two phases: plan, then execute.
First, produce a high-level numbered investigation plan from the scenario context, one step per line formatted as '1. ...'. Do not call tools while planning.
You will then be asked to execute the plan one step at a time; during execution you may call tools. After each step you may revise the remaining plan based on what you observed.
"""

_STRAIGHT_SHOT_INSTRUCTIONS = """\
### Instructions
All system knowledge and alerts are provided below. Reason in a single pass, without tools, and then give your answer.
"""

_ANSWER_FORMAT = """\
When ready, output your final answer starting with the prefix 'Final Answer:'.
Your 'Final Answer' should consist of three likely root cause faults.
For each root cause fault, provide:
- **Type**: the type of root cause fault. Please restrict your analysis to the following types of root cause faults: {fault_types}.
- **Description**: an explanation of what the root cause fault looks like in the system.
- **Location**: the single exact node at which the root cause fault occurs. This node should have the following entity type: {fault_entity_types}.
- **Justification**: a step-by-step reasoning based on the given alerts and information from the knowledge graph that explains how the symptoms could occur due to the root cause.
- **Propagation path**: the specific propagation path in the knowledge graph that would make the root cause possible, formatted as `node1 --(edge_label1)--> node2 --(edge_label2)--> node3`.

You should rank the three root cause faults in order of most likely to least likely.
"""

_ALERT_BLOCK = """\
### Observed symptoms
The following symptoms/alerts were detected by an anomaly detector:
{alerts}
Think step by step and ensure your reasoning is traceable through the knowledge graph.
"""


def build_prompt(
    workflow: Workflow,
    entity_schema_text: str,
    relationship_schema_text: str,
    alerts_text: str,
    fault_types: Sequence[str],
    fault_entity_types: Sequence[str],
    kg_full_text: str | None = None,
) -> list[dict]:
    """Assemble the initial message list for a workflow.

    The prompt is deterministic for a fixed configuration. The alert block is
    mandatory; the single-pass workflow additionally embeds the full
    knowledge-graph rendering.
    """
    if not alerts_text or not alerts_text.strip():
        raise ValueError("refusing to build a prompt without an alert block")
    if workflow is Workflow.STRAIGHT_SHOT and not kg_full_text:
        raise ValueError("the single-pass workflow requires the full KG rendering")

    sections = [
        _PREAMBLE.format(
            entity_schema=entity_schema_text,
            relationship_schema=relationship_schema_text,
        )
    ]
    if workflow is Workflow.REACT:
        sections.append(_REACT_INSTRUCTIONS)
    elif workflow is Workflow.PLAN_EXECUTE:
        sections.append(_PLAN_INSTRUCTIONS)
    else:
        sections.append(_STRAIGHT_SHOT_INSTRUCTIONS)
    sections.append(
        _ANSWER_FORMAT.format(
            fault_types=", ".join(fault_types),
            fault_entity_types=", ".join(fault_entity_types),
        )
    )
    if workflow is Workflow.STRAIGHT_SHOT:
        sections.append(f"### System knowledge graph\n{kg_full_text}\n")
    sections.append(_ALERT_BLOCK.format(alerts=alerts_text))
    return [{"role": "user", "content": "\n".join(sections)}]


# ---------------------------------------------------------------------------
# Workflow runners
# ---------------------------------------------------------------------------

def _split_think(text: str) -> tuple[list[str], str]:
    thinks = [m.strip() for m in _THINK_RE.findall(text) if m.strip()]
    visible = _THINK_RE.sub("", text).strip()
    return thinks, visible


def _call_endpoint(
    endpoint: ModelEndpoint,
    messages: Sequence[Mapping],
    tools: Sequence[Mapping] | None,
    settings: GenerationSettings | None,
    retries: int,
    trace: InferenceTrace,
) -> ModelReply:
    last_error: EndpointError | None = None
    for attempt in range(max(1, retries)):
        try:
            reply = endpoint.complete(messages, tools=tools, settings=settings)
            trace.iterations += 1
            return reply
        except EndpointError as exc:
            last_error = exc
            if not exc.transient:
                break
            if attempt + 1 < max(1, retries):
                trace.retries += 1
                logger.warning("endpoint transient failure (attempt %d): %s", attempt + 1, exc)
    assert last_error is not None
    raise last_error


def _assistant_tool_message(reply: ModelReply, call_id: str) -> dict:
    call = reply.tool_call
    assert call is not None
    arguments = dict(call.args)
    arguments["reasoning"] = call.reasoning
    return {
        "role": "assistant",
        "content": reply.text,
        "tool_calls": [
            {
                "id": call_id,
                "type": "function",
                "function": {"name": call.tool_name, "arguments": json.dumps(arguments, sort_keys=True)},
            }
        ],
    }


_CONTINUE_NUDGE = (
    "Continue. Either call a tool to gather more information, or give your "
    "final answer starting with 'Final Answer:'."
)


def run_straight_shot(
    endpoint: ModelEndpoint,
    messages: Sequence[Mapping],
    settings: GenerationSettings | None = None,
    retries: int = DEFAULT_RETRIES,
) -> tuple[InferenceTrace, str]:
    """Single endpoint call; think-text becomes Thought steps and the visible
    text is the final answer."""
    trace = InferenceTrace(workflow=Workflow.STRAIGHT_SHOT)
    try:
        reply = _call_endpoint(endpoint, messages, None, settings, retries, trace)
    except EndpointError as exc:
        logger.warning("single-pass run failed: %s", exc)
        trace.outcome = RunOutcome.ENDPOINT_ERROR
        return trace, ""
    thinks, visible = _split_think(reply.text)
    for think in thinks:
        trace.steps.append(Thought(think))
    trace.steps.append(FinalAnswer(visible))
    trace.outcome = RunOutcome.COMPLETED
    trace.validate()
    return trace, visible


def run_react(
    endpoint: ModelEndpoint,
    messages: Sequence[Mapping],
    toolbox: Toolbox,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    settings: GenerationSettings | None = None,
    retries: int = DEFAULT_RETRIES,
) -> tuple[InferenceTrace, str]:
    """Thought-action-observation loop.

    One endpoint round-trip or one tool dispatch counts as one iteration;
    exceeding ``max_iterations`` ends the run with RECURSION_LIMIT and the
    partial trace preserved. Malformed or failing tool calls come back as
    error observations and the loop continues.
    """
    trace = InferenceTrace(workflow=Workflow.REACT)
    msgs = list(messages)
    tools = tool_schemas()
    raw_final = ""
    call_counter = 0
    while True:
        if trace.iterations >= max_iterations:
            trace.outcome = RunOutcome.RECURSION_LIMIT
            break
        try:
            reply = _call_endpoint(endpoint, msgs, tools, settings, retries, trace)
        except EndpointError as exc:
            logger.warning("reactive run failed: %s", exc)
            trace.outcome = RunOutcome.ENDPOINT_ERROR
            break
        thinks, visible = _split_think(reply.text)
        for think in thinks:
            trace.steps.append(Thought(think))
        if reply.tool_call is not None:
            if visible:
                trace.steps.append(Thought(visible))
            if trace.iterations >= max_iterations:
                # No budget left to dispatch; drop the dangling call so the
                # action/observation alternation stays intact.
                trace.outcome = RunOutcome.RECURSION_LIMIT
                break
            call_counter += 1
            result = toolbox.dispatch(reply.tool_call)
            trace.iterations += 1
            trace.steps.append(Action(reply.tool_call))
            trace.steps.append(Observation(result))
            msgs.append(_assistant_tool_message(reply, f"call_{call_counter}"))
            msgs.append(
                {
                    "role": "tool",
                    "tool_call_id": f"call_{call_counter}",
                    "content": result.rendered,
                }
            )
            continue
        if FINAL_ANSWER_PREFIX in visible:
            trace.steps.append(FinalAnswer(visible))
            trace.outcome = RunOutcome.COMPLETED
            raw_final = visible
            break
        if visible:
            trace.steps.append(Thought(visible))
        msgs.append({"role": "assistant", "content": visible})
        msgs.append({"role": "user", "content": _CONTINUE_NUDGE})
    trace.validate()
    return trace, raw_final


def parse_numbered_plan(text: str) -> list[str]:
    steps = []
    for line in text.splitlines():
        match = _PLAN_LINE_RE.match(line)
        if match:
            steps.append(match.group(2))
    return steps


_REPLAN_REQUEST = (
    "Given the result of this step, revise the remaining plan if needed. "
    "Reply either 'NO CHANGE' or an updated numbered plan for the remaining steps."
)

_FINALIZE_REQUEST = (
    "All plan steps are complete. Provide your final answer now, starting with 'Final Answer:'."
)


def run_plan_and_execute(
    endpoint: ModelEndpoint,
    messages: Sequence[Mapping],
    toolbox: Toolbox,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    settings: GenerationSettings | None = None,
    retries: int = DEFAULT_RETRIES,
) -> tuple[InferenceTrace, str]:
    """Plan first, then execute steps sequentially with tool access.

    The initial numbered plan is stored as PlanStep records. After each step
    the model may revise the remaining plan (recorded as Replan); an
    unparseable or empty plan ends the run with REPLAN_ERROR. Endpoint calls
    and tool dispatches share the same iteration budget as the reactive loop.
    """
    trace = InferenceTrace(workflow=Workflow.PLAN_EXECUTE)
    msgs = list(messages)
    tools = tool_schemas()
    raw_final = ""
    call_counter = 0

    def over_budget() -> bool:
        return trace.iterations >= max_iterations

    def call(current_msgs, use_tools=True):
        return _call_endpoint(endpoint, current_msgs, tools if use_tools else None, settings, retries, trace)

    try:
        plan_reply = call(msgs, use_tools=False)
    except EndpointError as exc:
        logger.warning("planning call failed: %s", exc)
        trace.outcome = RunOutcome.ENDPOINT_ERROR
        return trace, raw_final
    thinks, plan_text = _split_think(plan_reply.text)
    for think in thinks:
        trace.steps.append(Thought(think))
    plan = parse_numbered_plan(plan_text)
    if not plan:
        logger.warning("degenerate plan (no numbered steps); aborting run")
        trace.outcome = RunOutcome.REPLAN_ERROR
        trace.validate()
        return trace, raw_final
    for i, step_text in enumerate(plan, start=1):
        trace.steps.append(PlanStep(index=i, text=step_text))
    msgs.append({"role": "assistant", "content": plan_text})

    pending = list(plan)
    step_no = 0
    while pending:
        step_no += 1
        step_text = pending.pop(0)
        msgs.append(
            {
                "role": "user",
                "content": (
                    f"Execute step {step_no}: {step_text}\n"
                    "Use tools if needed. When the step is done, reply with the step result."
                ),
            }
        )
        # Execute one step: tool round-trips until the model replies with text.
        while True:
            if over_budget():
                trace.outcome = RunOutcome.RECURSION_LIMIT
                trace.validate()
                return trace, raw_final
            try:
                reply = call(msgs)
            except EndpointError as exc:
                logger.warning("step execution failed: %s", exc)
                trace.outcome = RunOutcome.ENDPOINT_ERROR
                trace.validate()
                return trace, raw_final
            thinks, visible = _split_think(reply.text)
            for think in thinks:
                trace.steps.append(Thought(think))
            if reply.tool_call is not None:
                if visible:
                    trace.steps.append(Thought(visible))
                if over_budget():
                    trace.outcome = RunOutcome.RECURSION_LIMIT
                    trace.validate()
                    return trace, raw_final
                call_counter += 1
                result = toolbox.dispatch(reply.tool_call)
                trace.iterations += 1
                trace.steps.append(Action(reply.tool_call))
                trace.steps.append(Observation(result))
                msgs.append(_assistant_tool_message(reply, f"call_{call_counter}"))
                msgs.append(
                    {"role": "tool", "tool_call_id": f"call_{call_counter}", "content": result.rendered}
                )
                continue
            if FINAL_ANSWER_PREFIX in visible:
                trace.steps.append(FinalAnswer(visible))
                trace.outcome = RunOutcome.COMPLETED
                trace.validate()
                return trace, visible
            trace.steps.append(Thought(visible))
            msgs.append({"role": "assistant", "content": visible})
            break
        if pending:
            msgs.append({"role": "user", "content": _REPLAN_REQUEST})
            if over_budget():
                trace.outcome = RunOutcome.RECURSION_LIMIT
                trace.validate()
                return trace, raw_final
            try:
                reply = call(msgs, use_tools=False)
            except EndpointError as exc:
                logger.warning("replanning call failed: %s", exc)
                trace.outcome = RunOutcome.ENDPOINT_ERROR
                trace.validate()
                return trace, raw_final
            thinks, visible = _split_think(reply.text)
            for think in thinks:
                trace.steps.append(Thought(think))
            msgs.append({"role": "assistant", "content": visible})
            if reply.tool_call is not None or not visible:
                logger.warning("revised plan unusable (tool call or empty text)")
                trace.outcome = RunOutcome.REPLAN_ERROR
                trace.validate()
                return trace, raw_final
            if "NO CHANGE" in visible.upper():
                continue
            revised = parse_numbered_plan(visible)
            if not revised:
                logger.warning("revised plan unparseable; aborting run")
                trace.outcome = RunOutcome.REPLAN_ERROR
                trace.validate()
                return trace, raw_final
            trace.steps.append(Replan(visible))
            pending = revised

    # Plan exhausted without a final answer: ask for it (tools still allowed).
    msgs.append({"role": "user", "content": _FINALIZE_REQUEST})
    while True:
        if over_budget():
            trace.outcome = RunOutcome.RECURSION_LIMIT
            break
        try:
            reply = call(msgs)
        except EndpointError as exc:
            logger.warning("finalize call failed: %s", exc)
            trace.outcome = RunOutcome.ENDPOINT_ERROR
            break
        thinks, visible = _split_think(reply.text)
        for think in thinks:
            trace.steps.append(Thought(think))
        if reply.tool_call is not None:
            if visible:
                trace.steps.append(Thought(visible))
            if over_budget():
                trace.outcome = RunOutcome.RECURSION_LIMIT
                break
            call_counter += 1
            result = toolbox.dispatch(reply.tool_call)
            trace.iterations += 1
            trace.steps.append(Action(reply.tool_call))
            trace.steps.append(Observation(result))
            msgs.append(_assistant_tool_message(reply, f"call_{call_counter}"))
            msgs.append(
                {"role": "tool", "tool_call_id": f"call_{call_counter}", "content": result.rendered}
            )
            continue
        if FINAL_ANSWER_PREFIX in visible:
            trace.steps.append(FinalAnswer(visible))
            trace.outcome = RunOutcome.COMPLETED
            raw_final = visible
            break
        trace.steps.append(Thought(visible))
        msgs.append({"role": "assistant", "content": visible})
        msgs.append({"role": "user", "content": _FINALIZE_REQUEST})
    trace.validate()
    return trace, raw_final


# ---------------------------------------------------------------------------
# Final answer parsing
# ---------------------------------------------------------------------------

_FIELD_RE = re.compile(
    r"(?m)^[ \t>*-]*(?:\d+[.)]\s*)?(?:\*\*)?(Type|Description|Location|Justification|Propagation path)(?:\*\*)?\s*:\s*",
    re.IGNORECASE,
)
_ARROW_SPLIT_RE = re.compile(r"\s*--\(([^)]*)\)-->\s*")


@dataclass
class ParsedAnswer:
    hypotheses: list[Hypothesis]
    diagnostics: list[str]

    @property
    def failed(self) -> bool:
        return not self.hypotheses


def _clean_value(raw: str) -> str:
    return raw.strip().strip("`").strip("*").strip()


def parse_propagation_path(raw: str) -> PropagationPath | None:
    """Parse the ``node1 --(edge_label1)--> node2`` arrow syntax."""
    text = raw.strip().strip("`").strip()
    if not text:
        return None
    first_line = next((line for line in text.splitlines() if "--(" in line), None)
    if first_line is None:
        return None
    parts = _ARROW_SPLIT_RE.split(first_line.strip().strip("`"))
    if len(parts) < 3 or len(parts) % 2 == 0:
        return None
    nodes = [_clean_value(parts[i]) for i in range(0, len(parts), 2)]
    labels = [parts[i].strip() for i in range(1, len(parts), 2)]
    if any(not n for n in nodes):
        return None
    steps = tuple(PathStep(nodes[i], labels[i], nodes[i + 1]) for i in range(len(labels)))
    return PropagationPath(steps)


def parse_final_answer(
    raw_text: str,
    graph: KnowledgeGraph,
    fault_types: Sequence[str],
) -> ParsedAnswer:
    """Extract up to three ranked hypotheses from the final answer text.

    Unknown locations and fault types are retained verbatim and flagged in
    the diagnostics; they score as incorrect rather than failing the run.
    """
    diagnostics: list[str] = []
    idx = raw_text.find(FINAL_ANSWER_PREFIX)
    if idx < 0:
        return ParsedAnswer(hypotheses=[], diagnostics=["no 'Final Answer:' block found"])
    body = raw_text[idx + len(FINAL_ANSWER_PREFIX):]

    matches = list(_FIELD_RE.finditer(body))
    raw_hyps: list[dict[str, str]] = []
    current: dict[str, str] = {}
    for i, match in enumerate(matches):
        label = match.group(1).lower()
        end = matches[i + 1].start() if i + 1 < len(matches) else len(body)
        value = body[match.end():end].strip()
        if label == "type" and current:
            raw_hyps.append(current)
            current = {}
        if label not in current:
            current[label] = value
    if current:
        raw_hyps.append(current)

    known_types = {t.casefold() for t in fault_types}
    hypotheses: list[Hypothesis] = []
    for i, fields in enumerate(raw_hyps[:3], start=1):
        location = _clean_value(fields.get("location", "").splitlines()[0] if fields.get("location") else "")
        fault_type = _clean_value(fields.get("type", "").splitlines()[0] if fields.get("type") else "")
        if not location and not fault_type:
            diagnostics.append(f"hypothesis {i}: no location or type recovered, dropped")
            continue
        path = parse_propagation_path(fields.get("propagation path", ""))
        if path is None and "propagation path" in fields:
            diagnostics.append(f"hypothesis {i}: propagation path missing or unparseable")
        elif "propagation path" not in fields:
            diagnostics.append(f"hypothesis {i}: no propagation path given")
        if location and not graph.has_entity(location):
            diagnostics.append(f"hypothesis {i}: location {location!r} is not a KG entity")
        if fault_type and fault_type.casefold() not in known_types:
            diagnostics.append(f"hypothesis {i}: fault type {fault_type!r} is not a declared fault class")
        hypotheses.append(
            Hypothesis(
                rank=len(hypotheses) + 1,
                location=location,
                fault_type=fault_type,
                path=path,
                justification=fields.get("justification", "").strip(),
            )
        )
    if len(raw_hyps) > 3:
        diagnostics.append(f"expected 3 hypotheses, found {len(raw_hyps)}; extras dropped")
    elif len(hypotheses) < 3:
        diagnostics.append(f"expected 3 hypotheses, found {len(hypotheses)}")
    return ParsedAnswer(hypotheses=hypotheses, diagnostics=diagnostics)
