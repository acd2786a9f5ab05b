"""The sixteen-item reasoning-failure taxonomy plus the RF-00 divergence gate.

Each failure mode carries the rubric text the judge prompt needs: a
definition, an exemplar, detection signals, an annotation rule, and a
severity scale. Scope and category follow the taxonomy table; severities
run 1-5 except RF-11, RF-12, and RF-13, which start at 3.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class FailureScope(Enum):
    PER_HYPOTHESIS = "PER_HYPOTHESIS"
    FULL_TRACE = "FULL_TRACE"
    CROSS_CUTTING = "CROSS_CUTTING"


class FailureCategory(Enum):
    GENERAL = "GENERAL"
    RCA_SPECIFIC = "RCA_SPECIFIC"
    PROCEDURAL = "PROCEDURAL"


@dataclass(frozen=True)
class ReasoningFailure:
    id: str
    name: str
    description: str
    scope: FailureScope
    category: FailureCategory
    severity_min: int
    severity_max: int
    scope_label: str
    definition: str
    example: str
    signals: str
    annotation_rule: str
    severity_scale: tuple[str, ...]

    def severity_in_range(self, severity: int) -> bool:
        return self.severity_min <= severity <= self.severity_max


_PER_HYP_SCALE = (
    "1 = single occurrence in 1 hypothesis",
    "2 = multiple occurrences in 1 hypothesis",
    "3 = single occurrence in 2 hypotheses",
    "4 = multiple occurrences in 2 hypotheses",
    "5 = present in all 3+ hypotheses",
)

_PER_HYP_COARSE_SCALE = (
    "1 = present for 1 hypothesis",
    "3 = present for 2 hypotheses",
    "5 = present in all 3 hypotheses",
)


TAXONOMY: tuple[ReasoningFailure, ...] = (
    ReasoningFailure(
        id="RF-01",
        name="Fabricated evidence",
        description="Asserts existence of alerts, metrics, logs, or traces not found in the provided evidence.",
        scope=FailureScope.PER_HYPOTHESIS,
        category=FailureCategory.GENERAL,
        severity_min=1,
        severity_max=5,
        scope_label="per-hypothesis (evidence existence)",
        definition=(
            "Model asserts the existence of a specific alert/metric/log/trace that cannot be found "
            "in the provided alerts/metrics/logs/traces after up to 3 quick scans."
        ),
        example=(
            'Claims "2025-09-01 12:05 | METRIC | dbservice1 | disk_io | up" or "The disk_io metric '
            'was up for dbservice", but no such record (or any reasonably equivalent entry for that '
            "alert) exists in the provided alerts."
        ),
        signals=(
            "Model quotes an alert absent in the alert set; model uses confident language about a "
            "concrete alert that cannot be located."
        ),
        annotation_rule=(
            "Perform up to 3 quick scans (exact or close fuzzy match on component + metric/endpoint "
            "+ time) for each piece of evidence mentioned. If no match found, mark RF-01 and paste "
            "model claim + NO MATCH FOUND."
        ),
        severity_scale=_PER_HYP_SCALE,
    ),
    ReasoningFailure(
        id="RF-02",
        name="Metric interpretation error",
        description="Misreads metric semantics (e.g., inverts directionality or confuses counters and gauges).",
        scope=FailureScope.PER_HYPOTHESIS,
        category=FailureCategory.RCA_SPECIFIC,
        severity_min=1,
        severity_max=5,
        scope_label="per-hypothesis (evidence interpretation)",
        definition=(
            "Misunderstands or misinterprets metric semantics (up means above the +3-sigma bound, "
            "down means below the -3-sigma bound), confuses counters and gauges, or inverts meaning."
        ),
        example=(
            '"docker_memory_rss_pct is down, indicating high memory usage." (direction inverted: '
            'down for this metric means the memory measure decreased); "mem_usage is down, '
            'indicating a memory leak" (a memory leak would typically correlate with increased usage).'
        ),
        signals=(
            "Interpretation directly contradicts the standard metric meaning or contradicts the "
            "up/down 3-sigma semantics for the metric."
        ),
        annotation_rule=(
            "If the alert exists but the interpretation contradicts metric semantics, label RF-02 "
            "and paste the model claim(s) plus the alert(s) it referenced."
        ),
        severity_scale=_PER_HYP_SCALE,
    ),
    ReasoningFailure(
        id="RF-03",
        name="Confused provenance",
        description="Attributes causation to the component observing a symptom rather than its true source.",
        scope=FailureScope.PER_HYPOTHESIS,
        category=FailureCategory.RCA_SPECIFIC,
        severity_min=1,
        severity_max=5,
        scope_label="per-hypothesis (provenance)",
        definition=(
            "Model treats the component that observed or logged a symptom as the origin/root cause "
            "rather than tracing upstream/downstream sources."
        ),
        example=(
            'A webservice log contains "an error occurred in a downstream service"; the model '
            'concludes "webservice is root cause" instead of investigating downstream services.'
        ),
        signals=(
            "Log text contains explicit downstream/propagation language; model names the observer "
            "as the cause."
        ),
        annotation_rule=(
            "If evidence indicates an observed downstream symptom and the model blames the "
            "observer, mark RF-03."
        ),
        severity_scale=_PER_HYP_SCALE,
    ),
    ReasoningFailure(
        id="RF-04",
        name="Temporal misordering",
        description="Infers causal direction that violates chronological order of observed events.",
        scope=FailureScope.PER_HYPOTHESIS,
        category=FailureCategory.GENERAL,
        severity_min=1,
        severity_max=5,
        scope_label="per-hypothesis (timestamps)",
        definition=(
            "Model assigns causation to an event occurring after the observed effect or otherwise "
            "violates alert timestamp ordering."
        ),
        example=(
            "A log says a background save started at 12:20, but multiple memory/IO anomalies began "
            "at 12:15; the model claims the save caused the earlier anomalies."
        ),
        signals="Claimed cause timestamp is later than the earliest effect timestamp.",
        annotation_rule=(
            "Extract model-cited timestamps and compare to alerts; if the causal claim violates the "
            "real timeline, mark RF-04. If ordering is implied and contradicts alert order, still "
            "mark RF-04."
        ),
        severity_scale=_PER_HYP_SCALE,
    ),
    ReasoningFailure(
        id="RF-05",
        name="Spurious causal attribution",
        description="Claims causal relationships unsupported by alerts or knowledge graph structure.",
        scope=FailureScope.PER_HYPOTHESIS,
        category=FailureCategory.GENERAL,
        severity_min=1,
        severity_max=5,
        scope_label="per-hypothesis (mechanism/causal chain)",
        definition=(
            "Model asserts X causes Y without adequate support, or uses a causal mechanism that "
            "depends on knowledge-graph relationships that do not exist. Plausible speculation "
            "consistent with the KG and alerts is acceptable and should not be penalized; "
            "close-enough KG relationships that do not detract from the point, or that align with "
            "trace alerts, should also not be penalized."
        ),
        example=(
            "Claims node-6 disk writes cause shippingservice-0 latency because node-6 "
            "--(hosts)--> shippingservice-0, but that hosting relationship is nonexistent in the KG."
        ),
        signals=(
            'Use of causal language ("caused", "because of", "therefore") with no plausible KG or '
            "alert support, or explicit citation of nonexistent KG edges."
        ),
        annotation_rule=(
            "Check the KG and alerts for the mechanism; if the mechanism is unsupported or relies "
            "on absent KG links, mark RF-05."
        ),
        severity_scale=_PER_HYP_SCALE,
    ),
    ReasoningFailure(
        id="RF-06",
        name="Unjustified instance specificity",
        description="Asserts instance-level fault without discriminating instance-specific evidence.",
        scope=FailureScope.PER_HYPOTHESIS,
        category=FailureCategory.RCA_SPECIFIC,
        severity_min=1,
        severity_max=5,
        scope_label="per-hypothesis (granularity)",
        definition=(
            "Model asserts an instance-level root-cause location when the evidence supports only a "
            "service- or node-level effect, unless unique per-instance multi-modal evidence exists."
        ),
        example="Service-wide alerts, but the model blames the loginservice2 instance without unique evidence.",
        signals=(
            "No unique instance differentiator (multi-modal alerts, unique timestamps, volume, frequency)."
        ),
        annotation_rule=(
            "If the instance claim lacks per-instance unique evidence, mark RF-06. Only relevant "
            "where the root-cause location can be more than only instance-level."
        ),
        severity_scale=_PER_HYP_COARSE_SCALE,
    ),
    ReasoningFailure(
        id="RF-07",
        name="Arbitrary evidence selection",
        description="Chooses evidence subsets inconsistent with systematic triage heuristics.",
        scope=FailureScope.PER_HYPOTHESIS,
        category=FailureCategory.RCA_SPECIFIC,
        severity_min=1,
        severity_max=5,
        scope_label="per-hypothesis (evidence selection)",
        definition=(
            "Model focuses on a seemingly arbitrary alert subset inconsistent with simple triage "
            "heuristics (first-seen, highest-frequency, highest-volume, multi-modal over "
            "single-modal) without rationale, and the selection plausibly alters the diagnostic "
            "trajectory or conclusions."
        ),
        example=(
            "Investigates loginservice2 though loginservice1 has identical metric/trace alerts "
            "earlier in time; or investigates mobservice1 while dbservice2 has more metric alerts."
        ),
        signals=(
            "Chosen evidence is seemingly arbitrary and does not follow logical selection "
            "procedures: earliest, most frequent, highest volume, multi-modal."
        ),
        annotation_rule=(
            "If the chosen evidence subset is plausibly arbitrary or contradicts simple triage "
            "heuristics and the choice affected the top hypothesis or multiple hypotheses, mark "
            "RF-07 (higher severity). If it did not materially change the outcome, mark with low severity."
        ),
        severity_scale=_PER_HYP_COARSE_SCALE,
    ),
    ReasoningFailure(
        id="RF-08",
        name="Evidential insufficiency",
        description="Relies on weak or non-specific evidence insufficient to support the diagnostic claim.",
        scope=FailureScope.PER_HYPOTHESIS,
        category=FailureCategory.GENERAL,
        severity_min=1,
        severity_max=5,
        scope_label="per-hypothesis (evidence sufficiency)",
        definition=(
            "Evidence exists but its temporal precision, frequency, mechanism link, "
            "discriminability, provenance clarity, or granularity is insufficient to support the "
            "specific claim. This is an inferential-sufficiency error, not a hallucination."
        ),
        example=(
            "A single generic latency alert is used to assert a specific disk-failure diagnosis on "
            "one instance."
        ),
        signals=(
            "Checklist failures: temporal precedence; frequency; mechanism; discriminability; "
            "provenance clarity; granularity alignment."
        ),
        annotation_rule=(
            "After the prior per-hypothesis checks, apply the sufficiency checklist; if required "
            "items fail for the claim type, mark RF-08 and provide the model claim(s), matched "
            "alert(s), and which checklist items failed."
        ),
        severity_scale=_PER_HYP_SCALE,
    ),
    ReasoningFailure(
        id="RF-09",
        name="Failure to update belief",
        description="Does not revise or retract claims contradicted by later evidence or tool outputs.",
        scope=FailureScope.FULL_TRACE,
        category=FailureCategory.PROCEDURAL,
        severity_min=1,
        severity_max=5,
        scope_label="full-history",
        definition=(
            "Model does not revise or retract a previous claim after later evidence or a Tool "
            "Message contradicts it. This is specifically a failure to update in light of new "
            "evidence (distinct from anchoring, which is a failure to explore alternatives)."
        ),
        example=(
            "Claims a cache eviction; a later Tool Message shows the cache is normal; the final "
            "answer still claims eviction. Speculates webservice2 is hosted on host4 so host4 "
            "failures affect it; a later Tool Message shows hosting on host2; the final answer "
            "still relies on host4."
        ),
        signals="Later Tool Messages or alerts contradict earlier claims, and the claims persist.",
        annotation_rule=(
            "Extract the original claim and the contradicting evidence; if the model fails to "
            "revise, mark RF-09. Severity is high if the final answer relies on the unchanged, "
            "contradicted claim."
        ),
        severity_scale=(
            "1 = single untrue claim impacts 1 hypothesis",
            "2 = multiple impact 1 hypothesis",
            "3 = single impacts 2 hypotheses",
            "4 = multiple impact 2 hypotheses",
            "5 = untrue claim(s) impact all 3 hypotheses",
        ),
    ),
    ReasoningFailure(
        id="RF-10",
        name="Simulation or role confusion",
        description="Treats simulated or assumed tool outputs as factual evidence.",
        scope=FailureScope.FULL_TRACE,
        category=FailureCategory.PROCEDURAL,
        severity_min=1,
        severity_max=5,
        scope_label="full-history",
        definition=(
            'Model explicitly states it cannot call tools and "assumes" or "simulates" tool '
            "outputs, then treats the simulated outputs as factual in final conclusions. Consider "
            'a Tool Message real if there is an explicit tool header like "==== Tool Message ====" '
            "(allowing a variable number of '=')."
        ),
        example=(
            '"I cannot call the tools; I will assume the log shows ERROR: connection refused"; the '
            "final answer treats the assumed log as observed."
        ),
        signals=(
            'Phrases like "I cannot call", "I can\'t call", "I\'ll assume", "I will pretend", '
            '"simulate the response", "assume the tool returns", followed by conclusive claims, '
            "with no Tool Message corresponding to the assumed call."
        ),
        annotation_rule=(
            "Consider all text prior to the final answer and search for signal phrases and Tool "
            "Messages. If simulated outputs are used as factual evidence without a Tool Message, "
            "mark RF-10. If simulated exploration was not used as final evidence or Tool Messages "
            "were later present, mark RF-10 with lower severity."
        ),
        severity_scale=(
            "1 = simulated output noted, but not used for final claims",
            "2 = simulated output used for a secondary claim only",
            "3 = simulated output(s) used as evidence for 1 hypothesis",
            "4 = simulated output(s) across 2 hypotheses",
            "5 = simulated output(s) are the core evidence for 3+ hypotheses",
        ),
    ),
    ReasoningFailure(
        id="RF-11",
        name="Excessive speculation",
        description="Engages in prolonged speculative or circular reasoning that obstructs analysis.",
        scope=FailureScope.FULL_TRACE,
        category=FailureCategory.PROCEDURAL,
        severity_min=3,
        severity_max=5,
        scope_label="full-history",
        definition=(
            "A considerable portion of the chat is spent being confused or speculating about the "
            "system architecture, knowledge graph, alert semantics, available tools, or what steps "
            "to take, instead of performing tool calls to confirm or refute KG characteristics or "
            "check evidence; especially when tools were available but unused."
        ),
        example="KG-schema theorizing while no Tool Messages are present to confirm or refute KG characteristics.",
        signals=(
            'High density of hedging or rambling language (including "wait"); paragraphs without '
            "alert/metric/log/trace citations; circular thoughts; little or no Tool Message usage."
        ),
        annotation_rule=(
            "Consider all text prior to the final answer and search for hedging or speculative "
            "language. If high and it blocked or replaced necessary data checks, or prevented a "
            "conclusive final answer, mark RF-11."
        ),
        severity_scale=(
            "3 = heavy speculation/rambling, blocked some important checks",
            "4 = very heavy speculation/rambling, significantly blocked analysis and tests",
            "5 = entire session dominated by speculation/rambling, no meaningful evidence work, final answer driven by speculation",
        ),
    ),
    ReasoningFailure(
        id="RF-12",
        name="Repetition or failure to resume",
        description="Repeats planning or reasoning across turns without substantive progress.",
        scope=FailureScope.FULL_TRACE,
        category=FailureCategory.PROCEDURAL,
        severity_min=3,
        severity_max=5,
        scope_label="full-history",
        definition=(
            "Model repeats the same planning, intro text, or deliberation across consecutive "
            "replies and fails to resume earlier progress, typically after truncation."
        ),
        example=(
            'Consecutive replies (marked by "=== AI Message ===") begin with similar "First I will '
            'check..." paragraphs and add little new content, or repeat the same deliberation '
            'about the semantics of an up/down metric alert.'
        ),
        signals="High n-gram overlap across AI messages; repeated planning text.",
        annotation_rule="If repetition caused stalled progress or omitted checks, mark RF-12.",
        severity_scale=(
            "3 = repetition across multiple turns omitted some checks",
            "4 = repetition stalled significant parts of the analysis",
            "5 = repetition prevented completion and changed the final answer",
        ),
    ),
    ReasoningFailure(
        id="RF-13",
        name="Anchoring bias",
        description="Fixates prematurely on one hypothesis and neglects exploration of alternatives.",
        scope=FailureScope.CROSS_CUTTING,
        category=FailureCategory.GENERAL,
        severity_min=3,
        severity_max=5,
        scope_label="cross-cutting (search behaviour)",
        definition=(
            "Model fixates early on a single hypothesis and fails to enumerate or explore other "
            "plausible alternatives (component or fault type)."
        ),
        example=(
            'Model immediately focuses on "high memory usage" as the cause and never lists other '
            "plausible causes (network, disk) despite relevant alerts; or plans to explore host "
            "relationships for three services, calls the tool for one, and never follows through "
            "for the others."
        ),
        signals=(
            "Fewer than 2 reasonable alternatives (component or fault type) listed across the "
            "chat; no follow-through on planned exploration without good rationale."
        ),
        annotation_rule=(
            "If the model provides fewer than 2 reasonable alternative hypotheses and goes "
            "straight to a definitive cause, mark RF-13. Only consider RF-13 if there was an "
            "opportunity to explore (tools, reasoning fields, think tags)."
        ),
        severity_scale=(
            "3 = some diversity in planned exploration and some follow-through",
            "4 = some diversity in planned exploration but no follow-through",
            "5 = anchoring dominated the analysis and impacted all hypotheses",
        ),
    ),
    ReasoningFailure(
        id="RF-14",
        name="Invalid inference pattern",
        description="Applies formal or informal logical fallacies in diagnostic reasoning.",
        scope=FailureScope.CROSS_CUTTING,
        category=FailureCategory.GENERAL,
        severity_min=1,
        severity_max=5,
        scope_label="cross-cutting (invalid inference)",
        definition=(
            "Model applies invalid inference patterns in deriving diagnostic claims. Look for: "
            "affirming the consequent, denying the antecedent, post hoc, composition/division, "
            "ecological fallacy, hasty generalization."
        ),
        example=(
            "Model sees one trace with a 500 for endpoint /login on a single instance and "
            'concludes "the whole service is down" (hasty generalization).'
        ),
        signals=(
            "Clear leap from limited premises to a broad or systemic conclusion without an "
            "intermediate mechanism or checks."
        ),
        annotation_rule="Identify the fallacy, quote the premise(s) and conclusion, mark RF-14.",
        severity_scale=(
            "1 = single minor fallacy with negligible impact",
            "2 = multiple minor fallacies with negligible impact",
            "3 = fallacy(s) used to support 1 hypothesis",
            "4 = fallacy(s) used to support 2 hypotheses",
            "5 = fallacies pervasive across all 3+ hypotheses",
        ),
    ),
    ReasoningFailure(
        id="RF-15",
        name="Internal contradiction",
        description="Produces mutually inconsistent statements within the inference history.",
        scope=FailureScope.CROSS_CUTTING,
        category=FailureCategory.GENERAL,
        severity_min=1,
        severity_max=5,
        scope_label="cross-cutting",
        definition=(
            "Model makes mutually incompatible statements in the chat history. Different from "
            "RF-09: RF-15 is explicit contradiction rather than failure to revise."
        ),
        example='"No trace 500 errors", then "multiple 500 trace errors".',
        signals=(
            "Pairwise contradictory sentences; the contradiction can concern a metric, timestamp, "
            "evidence existence, component relationships, and so on."
        ),
        annotation_rule="Quote the contradictions, mark RF-15.",
        severity_scale=(
            "1 = single contradiction with negligible impact",
            "2 = multiple contradictions with negligible impact",
            "3 = contradiction(s) impact 1 hypothesis",
            "4 = contradiction(s) impact 2 hypotheses",
            "5 = contradiction(s) impact 3+ hypotheses",
        ),
    ),
    ReasoningFailure(
        id="RF-16",
        name="Arithmetic or aggregation error",
        description="Performs numeric miscalculations or aggregations affecting interpretation.",
        scope=FailureScope.CROSS_CUTTING,
        category=FailureCategory.PROCEDURAL,
        severity_min=1,
        severity_max=5,
        scope_label="cross-cutting",
        definition="Numeric miscalculations or wrong aggregations that change interpretation.",
        example='Reports "error rate increased 200%" when the correct figure is 20%.',
        signals="Numeric expressions in the text; recomputation disagrees with the reported number.",
        annotation_rule=(
            "Recompute numeric or aggregation claims; if inconsistent and materially affecting "
            "conclusions, mark RF-16 and include the corrected value. Severity is generally low "
            "unless the numeric error changed the final diagnosis."
        ),
        severity_scale=(
            "1 = single small numeric mismatch with negligible impact",
            "2 = multiple minor numeric mismatches with negligible impact",
            "3 = numeric/aggregation error(s) that impact 1 hypothesis",
            "4 = numeric/aggregation error(s) that impact 2 hypotheses",
            "5 = numeric/aggregation error(s) that impact 3+ hypotheses",
        ),
    ),
)

# RF-00 is the divergence gate applied before the taxonomy proper: the
# structured final response is compared with the unstructured final answer.
DIVERGENCE_GATE = ReasoningFailure(
    id="RF-00",
    name="Structured/unstructured divergence",
    description="The structured final response diverges from the unstructured final answer.",
    scope=FailureScope.FULL_TRACE,
    category=FailureCategory.PROCEDURAL,
    severity_min=1,
    severity_max=5,
    scope_label="global gate",
    definition=(
        "The structured final response (JSON) and the unstructured final answer text disagree on "
        "locations, fault types, ranking, or paths."
    ),
    example="The text ranks dbservice1 first while the structured output ranks webservice1 first.",
    signals="Any material mismatch between the structured output and the final answer text.",
    annotation_rule=(
        "If the structured final response is None or nan, do NOT mark RF-00. Otherwise compare it "
        "with the unstructured final answer; if divergent, mark RF-00 and use the unstructured "
        "final answer as the basis for the rest of the annotation."
    ),
    severity_scale=(
        "1 = cosmetic divergence (formatting only)",
        "3 = divergence in one hypothesis field",
        "5 = divergence in ranking or multiple hypotheses",
    ),
)

RF_BY_ID: dict[str, ReasoningFailure] = {rf.id: rf for rf in TAXONOMY}
RF_BY_ID[DIVERGENCE_GATE.id] = DIVERGENCE_GATE

VALID_RF_IDS: frozenset[str] = frozenset(RF_BY_ID)
