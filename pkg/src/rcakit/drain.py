"""Log template mining with a fixed-depth parse tree.

Messages are tokenized on whitespace and routed through a shallow tree keyed
first by token count and then by the leading tokens (tokens containing
digits are treated as parameters at routing time). Each leaf holds template
clusters; a message joins the most similar cluster whose token-position
similarity meets the threshold, otherwise it founds a new one. Positions
that disagree within a cluster become wildcard slots.

The procedure is deterministic for a fixed input order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

WILDCARD = "<*>"

DEFAULT_DEPTH = 4
DEFAULT_SIM_THRESHOLD = 0.4
DEFAULT_MAX_CHILDREN = 100


@dataclass(frozen=True)
class LogTemplate:
    template_id: int
    token_pattern: tuple[str, ...]
    frequency: int

    @property
    def text(self) -> str:
        return " ".join(self.token_pattern)


@dataclass
class DrainResult:
    templates: tuple[LogTemplate, ...]
    assignments: tuple[int, ...]

    def by_id(self) -> dict[int, LogTemplate]:
        return {t.template_id: t for t in self.templates}


@dataclass
class _Cluster:
    template_id: int
    tokens: list[str]
    count: int = 0


@dataclass
class _Node:
    children: dict[str, "_Node"] = field(default_factory=dict)
    clusters: list[_Cluster] = field(default_factory=list)


def _has_digit(token: str) -> bool:
    return any(ch.isdigit() for ch in token)


def _similarity(template: Sequence[str], tokens: Sequence[str]) -> float:
    # Wildcard positions do not count as matches; they only stop counting
    # as mismatches once the cluster has generalized that slot.
    if not tokens:
        return 1.0
    same = sum(1 for t, w in zip(template, tokens) if t == w and t != WILDCARD)
    return same / len(tokens)


class DrainParser:
    def __init__(
        self,
        depth: int = DEFAULT_DEPTH,
        sim_threshold: float = DEFAULT_SIM_THRESHOLD,
        max_children: int = DEFAULT_MAX_CHILDREN,
    ) -> None:
        if depth < 3:
            raise ValueError(f"depth must be >= 3, got {depth}")
        if not 0.0 < sim_threshold < 1.0:
            raise ValueError(f"sim_threshold must lie in (0, 1), got {sim_threshold}")
        self.internal_levels = depth - 2
        self.sim_threshold = sim_threshold
        self.max_children = max_children
        self._root: dict[int, _Node] = {}
        self._clusters: list[_Cluster] = []

    def _route(self, tokens: Sequence[str]) -> _Node:
        node = self._root.setdefault(len(tokens), _Node())
        for token in tokens[: self.internal_levels]:
            key = WILDCARD if _has_digit(token) else token
            child = node.children.get(key)
            if child is None:
                if key != WILDCARD and len(node.children) >= self.max_children:
                    key = WILDCARD
                    child = node.children.get(key)
                if child is None:
                    child = _Node()
                    node.children[key] = child
            node = child
        return node

    def _match(self, leaf: _Node, tokens: Sequence[str]) -> _Cluster | None:
        best: _Cluster | None = None
        best_sim = -1.0
        for cluster in leaf.clusters:
            sim = _similarity(cluster.tokens, tokens)
            if sim >= self.sim_threshold and sim > best_sim:
                best = cluster
                best_sim = sim
        return best

    def add(self, message: str) -> int:
        """Assign ``message`` to a template cluster, creating one if needed.
        Returns the template id."""
        tokens = message.split()
        leaf = self._route(tokens)
        cluster = self._match(leaf, tokens)
        if cluster is None:
            cluster = _Cluster(template_id=len(self._clusters), tokens=list(tokens))
            self._clusters.append(cluster)
            leaf.clusters.append(cluster)
        else:
            cluster.tokens = [
                t if t == w else WILDCARD for t, w in zip(cluster.tokens, tokens)
            ]
        cluster.count += 1
        return cluster.template_id

    def result(self, assignments: Sequence[int]) -> DrainResult:
        templates = tuple(
            LogTemplate(
                template_id=c.template_id,
                token_pattern=tuple(c.tokens),
                frequency=c.count,
            )
            for c in self._clusters
        )
        return DrainResult(templates=templates, assignments=tuple(assignments))


def drain_parse(
    messages: Sequence[str],
    depth: int = DEFAULT_DEPTH,
    sim_threshold: float = DEFAULT_SIM_THRESHOLD,
    max_children: int = DEFAULT_MAX_CHILDREN,
) -> DrainResult:
    """Mine log templates from ``messages``.

    Every message is assigned exactly one template; the assignment list is
    parallel to the input. An empty input yields an empty result.
    """
    parser = DrainParser(depth=depth, sim_threshold=sim_threshold, max_children=max_children)
    assignments = [parser.add(m) for m in messages]
    return parser.result(assignments)
