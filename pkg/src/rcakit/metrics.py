"""Scoring of ranked hypotheses against ground truth.

Four measures: location accuracy (LA), fault-type accuracy (TA), propagation
path validity (PA), and full-hypothesis accuracy (HA, location and type must
both match at the same rank). A@k checks presence within the top-k
hypotheses; Avg@K is the mean of A@1..A@K. Scenarios whose run ended in an
execution error score zero on every measure but stay in the denominator.

Also provides the closed-form random-guessing baseline, per-sample scores,
a paired Wilcoxon signed-rank test (exact by enumeration for small n), and
the modality-holdout delta computation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from statistics import NormalDist
from typing import Iterable, Mapping, Sequence

from .agent import Hypothesis, RunOutcome
from .kgraph import GraphElement, KnowledgeGraph, is_valid_walk

logger = logging.getLogger(__name__)

K = 3
WILCOXON_EXACT_LIMIT = 25


class Measure(Enum):
    LA = "LA"
    TA = "TA"
    PA = "PA"
    HA = "HA"


@dataclass(frozen=True)
class CorrectnessRecord:
    scenario_id: str
    location_match: tuple[bool, bool, bool]
    type_match: tuple[bool, bool, bool]
    hypothesis_match: tuple[bool, bool, bool]
    path_valid: tuple[bool, bool, bool]
    outcome: RunOutcome

    def __post_init__(self) -> None:
        for i in range(K):
            if self.hypothesis_match[i] and not (self.location_match[i] and self.type_match[i]):
                raise ValueError(
                    f"hypothesis match at rank {i + 1} requires location and type matches"
                )

    def flags(self, measure: Measure) -> tuple[bool, bool, bool]:
        return {
            Measure.LA: self.location_match,
            Measure.TA: self.type_match,
            Measure.PA: self.path_valid,
            Measure.HA: self.hypothesis_match,
        }[measure]


def evaluate_hypotheses(
    scenario_id: str,
    gt_location: str,
    gt_fault_type: str,
    hypotheses: Sequence[Hypothesis],
    graph: KnowledgeGraph,
    alerted_elements: Iterable[GraphElement],
    outcome: RunOutcome,
) -> CorrectnessRecord:
    """Build the per-rank correctness flags for one scenario run.

    Location matching is exact string equality on trimmed canonical names;
    fault-type matching is case-insensitive. Execution errors zero out all
    flags.
    """
    loc = [False] * K
    typ = [False] * K
    hyp = [False] * K
    path = [False] * K
    if outcome is RunOutcome.COMPLETED:
        alerted = set(alerted_elements)
        by_rank = {h.rank: h for h in hypotheses}
        for i in range(K):
            h = by_rank.get(i + 1)
            if h is None:
                continue
            loc[i] = h.location.strip() == gt_location.strip()
            typ[i] = h.fault_type.strip().casefold() == gt_fault_type.strip().casefold()
            hyp[i] = loc[i] and typ[i]
            path[i] = h.path is not None and is_valid_walk(graph, h.path, alerted).valid
    return CorrectnessRecord(
        scenario_id=scenario_id,
        location_match=tuple(loc),
        type_match=tuple(typ),
        hypothesis_match=tuple(hyp),
        path_valid=tuple(path),
        outcome=outcome,
    )


def accuracy_at_k(records: Sequence[CorrectnessRecord], measure: Measure, k: int) -> float:
    """Fraction of scenarios correct (for the measure) within the top-k ranks."""
    if not records:
        raise ValueError("cannot score an empty record set")
    if not 1 <= k <= K:
        raise ValueError(f"k must lie in 1..{K}, got {k}")
    hits = sum(1 for r in records if any(r.flags(measure)[:k]))
    return hits / len(records)


def avg_at_K(records: Sequence[CorrectnessRecord], measure: Measure, K_max: int = K) -> float:
    """Mean of A@1..A@K."""
    return sum(accuracy_at_k(records, measure, k) for k in range(1, K_max + 1)) / K_max


def per_sample_score(record: CorrectnessRecord, measure: Measure) -> float:
    """Single-scenario mean of A@1..A@3: 1.00, 0.67, 0.33, or 0.00 depending
    on the first rank at which the measure is correct."""
    flags = record.flags(measure)
    total = sum(1 for k in range(1, K + 1) if any(flags[:k]))
    return round(total / K, 2)


@dataclass(frozen=True)
class ScoreSummary:
    measure: Measure
    a_at_1: float
    a_at_3: float
    avg_at_3: float
    n: int


def score_summary(records: Sequence[CorrectnessRecord], measure: Measure) -> ScoreSummary:
    return ScoreSummary(
        measure=measure,
        a_at_1=accuracy_at_k(records, measure, 1),
        a_at_3=accuracy_at_k(records, measure, K),
        avg_at_3=avg_at_K(records, measure),
        n=len(records),
    )


@dataclass(frozen=True)
class RandomBaseline:
    la: float
    ta: float
    ha: float


def random_guessing_baseline(n_locations: int, n_types: int, k: int) -> RandomBaseline:
    """Closed-form accuracy of uniform guessing over the hypothesis space:
    LA@k = k/n_locations, TA@k = k/n_types, HA@k = k/(n_locations * n_types)."""
    if n_types < 1 or n_locations < 1:
        raise ValueError("location and type counts must be positive")
    if n_locations < k:
        raise ValueError(f"need at least k={k} locations, got {n_locations}")
    return RandomBaseline(
        la=k / n_locations,
        ta=k / n_types,
        ha=k / (n_locations * n_types),
    )


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank test
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # min(W+, W-) over the non-zero differences
    p_value: float
    n: int  # pairs remaining after dropping zero differences
    method: str  # "exact" | "normal" | "degenerate"
    no_difference: bool = False


def _midranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        rank = (i + j + 2) / 2  # average of 1-based positions i+1..j+1
        for idx in order[i : j + 1]:
            ranks[idx] = rank
        i = j + 1
    return ranks


def _exact_two_sided_p(scaled_ranks: Sequence[int], observed: int) -> float:
    # Null distribution of (2 * W+) by convolution over sign assignments;
    # equivalent to enumerating all 2^n sign vectors.
    total = sum(scaled_ranks)
    counts = [0] * (total + 1)
    counts[0] = 1
    for s in scaled_ranks:
        nxt = list(counts)
        for w in range(total - s + 1):
            if counts[w]:
                nxt[w + s] += counts[w]
        counts = nxt
    denom = 2 ** len(scaled_ranks)
    lo = min(observed, total - observed)
    hi = total - lo
    p = (sum(counts[: lo + 1]) + sum(counts[hi:])) / denom
    return min(1.0, p)


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float]) -> WilcoxonResult:
    """Two-sided paired Wilcoxon signed-rank test on differences a - b.

    Zero differences are dropped and ties receive mid-ranks. The null
    distribution is computed exactly by enumeration for n <= 25 and by the
    normal approximation with tie correction above that. All differences
    zero makes the test undefined and is reported as "no difference".
    """
    if len(a) != len(b):
        raise ValueError("paired samples must have equal length")
    diffs = [x - y for x, y in zip(a, b) if x - y != 0.0]
    n = len(diffs)
    if n == 0:
        logger.info("wilcoxon: all paired differences are zero (no difference)")
        return WilcoxonResult(statistic=0.0, p_value=1.0, n=0, method="degenerate", no_difference=True)
    ranks = _midranks([abs(d) for d in diffs])
    w_plus = sum(r for r, d in zip(ranks, diffs) if d > 0)
    w_minus = sum(r for r, d in zip(ranks, diffs) if d < 0)
    statistic = min(w_plus, w_minus)
    if n <= WILCOXON_EXACT_LIMIT:
        scaled = [int(round(2 * r)) for r in ranks]
        p = _exact_two_sided_p(scaled, int(round(2 * w_plus)))
        return WilcoxonResult(statistic=statistic, p_value=p, n=n, method="exact")
    mean = n * (n + 1) / 4
    tie_groups: dict[float, int] = {}
    for d in diffs:
        tie_groups[abs(d)] = tie_groups.get(abs(d), 0) + 1
    tie_term = sum(t**3 - t for t in tie_groups.values()) / 48
    var = n * (n + 1) * (2 * n + 1) / 24 - tie_term
    if var <= 0:
        return WilcoxonResult(statistic=statistic, p_value=1.0, n=n, method="degenerate", no_difference=True)
    z = (w_plus - mean) / math.sqrt(var)
    p = min(1.0, 2 * (1 - NormalDist().cdf(abs(z))))
    return WilcoxonResult(statistic=statistic, p_value=p, n=n, method="normal")


# ---------------------------------------------------------------------------
# Modality-holdout deltas
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HoldoutDelta:
    measure: Measure
    delta: float  # holdout Avg@3 minus full Avg@3
    p_value: float
    significant: bool
    no_difference: bool


def holdout_delta(
    full_records: Sequence[CorrectnessRecord],
    holdout_records: Sequence[CorrectnessRecord],
    alpha: float = 0.05,
) -> dict[Measure, HoldoutDelta]:
    """Per-measure change in Avg@3 between a full run and a holdout run over
    the same scenarios, with Wilcoxon significance on per-sample scores."""
    full_ids = {r.scenario_id for r in full_records}
    holdout_ids = {r.scenario_id for r in holdout_records}
    if full_ids != holdout_ids:
        raise ValueError(
            f"scenario-id mismatch between runs: only-full={sorted(full_ids - holdout_ids)}, "
            f"only-holdout={sorted(holdout_ids - full_ids)}"
        )
    full_sorted = sorted(full_records, key=lambda r: r.scenario_id)
    holdout_sorted = sorted(holdout_records, key=lambda r: r.scenario_id)
    out = {}
    for measure in Measure:
        delta = avg_at_K(holdout_sorted, measure) - avg_at_K(full_sorted, measure)
        holdout_scores = [per_sample_score(r, measure) for r in holdout_sorted]
        full_scores = [per_sample_score(r, measure) for r in full_sorted]
        test = wilcoxon_signed_rank(holdout_scores, full_scores)
        out[measure] = HoldoutDelta(
            measure=measure,
            delta=delta,
            p_value=test.p_value,
            significant=(not test.no_difference) and test.p_value < alpha,
            no_difference=test.no_difference,
        )
    return out


def record_to_dict(record: CorrectnessRecord) -> dict:
    return {
        "scenario_id": record.scenario_id,
        "location_match": list(record.location_match),
        "type_match": list(record.type_match),
        "hypothesis_match": list(record.hypothesis_match),
        "path_valid": list(record.path_valid),
        "outcome": record.outcome.value,
    }


def record_from_dict(data: Mapping) -> CorrectnessRecord:
    return CorrectnessRecord(
        scenario_id=data["scenario_id"],
        location_match=tuple(data["location_match"]),
        type_match=tuple(data["type_match"]),
        hypothesis_match=tuple(data["hypothesis_match"]),
        path_valid=tuple(data["path_valid"]),
        outcome=RunOutcome(data["outcome"]),
    )
