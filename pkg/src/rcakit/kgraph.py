"""Typed system knowledge graph: the agent's only world model.

Entities and directed relationships carry declared types; each entity type
is associated with a (possibly empty) set of fault classes. The graph is
immutable after load, renders deterministically as either a bullet list or
a single JSON object, and supports the traversal queries the agent tools
expose: r-hop neighborhoods, simple-path enumeration, and walk validation
against the alerted elements.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

DEFAULT_ENTITY_TYPES = (
    "Service",
    "Service-Instance",
    "Database",
    "Cache",
    "Coordination-Manager",
    "Host",
)
DEFAULT_RELATIONSHIP_TYPES = (
    "instance-of",
    "has-instance",
    "hosted-on",
    "hosts",
    "control-flow",
    "data-flow",
)

DEFAULT_MAX_PATH_LEN = 8

GraphElement = Union[str, tuple[str, str]]


class KGFormatError(ValueError):
    """Structural problem in a knowledge-graph document."""


class UnknownEntityError(KeyError):
    """A query referenced an entity the graph does not contain (signals
    invalid tool input, not a harness failure)."""


class KGRenderStrategy(Enum):
    LIST = "LIST"
    JSON_OBJECT = "JSON_OBJECT"


@dataclass(frozen=True)
class EntitySchema:
    entity_types: tuple[str, ...] = DEFAULT_ENTITY_TYPES
    relationship_types: tuple[str, ...] = DEFAULT_RELATIONSHIP_TYPES
    fault_classes: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(set(self.entity_types)) != len(self.entity_types):
            raise KGFormatError("entity type names must be unique")
        if len(set(self.relationship_types)) != len(self.relationship_types):
            raise KGFormatError("relationship type names must be unique")
        unknown = set(self.fault_classes) - set(self.entity_types)
        if unknown:
            raise KGFormatError(f"fault classes declared for unknown entity types: {sorted(unknown)}")

    def fault_classes_for(self, entity_type: str) -> tuple[str, ...]:
        return tuple(self.fault_classes.get(entity_type, ()))

    def all_fault_classes(self) -> tuple[str, ...]:
        labels: list[str] = []
        for etype in self.entity_types:
            for label in self.fault_classes.get(etype, ()):
                if label not in labels:
                    labels.append(label)
        return tuple(labels)

    def fault_entity_types(self) -> tuple[str, ...]:
        return tuple(t for t in self.entity_types if self.fault_classes.get(t))


@dataclass(frozen=True)
class Entity:
    name: str
    etype: str
    attributes: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Relationship:
    src: str
    rtype: str
    dst: str
    attributes: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class PathStep:
    src: str
    rtype: str
    dst: str


@dataclass(frozen=True)
class PropagationPath:
    steps: tuple[PathStep, ...]

    def __post_init__(self) -> None:
        for i, (a, b) in enumerate(zip(self.steps, self.steps[1:])):
            if a.dst != b.src:
                raise ValueError(f"propagation path breaks at step {i + 1}: {a.dst!r} != {b.src!r}")

    def nodes(self) -> tuple[str, ...]:
        if not self.steps:
            return ()
        return (self.steps[0].src,) + tuple(s.dst for s in self.steps)

    def render(self) -> str:
        if not self.steps:
            return ""
        out = self.steps[0].src
        for step in self.steps:
            out += f" --({step.rtype})--> {step.dst}"
        return out


@dataclass(frozen=True)
class KnowledgeGraph:
    schema: EntitySchema
    entities: Mapping[str, Entity]
    relationships: tuple[Relationship, ...]
    _out: Mapping[str, tuple[Relationship, ...]] = field(compare=False, default_factory=dict)
    _in: Mapping[str, tuple[Relationship, ...]] = field(compare=False, default_factory=dict)
    _edge_keys: frozenset[tuple[str, str, str]] = field(compare=False, default_factory=frozenset)

    @classmethod
    def build(
        cls,
        schema: EntitySchema,
        entities: Sequence[Entity],
        relationships: Sequence[Relationship],
    ) -> "KnowledgeGraph":
        by_name: dict[str, Entity] = {}
        for entity in entities:
            if entity.name in by_name:
                raise KGFormatError(f"duplicate entity name: {entity.name!r}")
            if entity.etype not in schema.entity_types:
                raise KGFormatError(f"entity {entity.name!r} has undeclared type {entity.etype!r}")
            by_name[entity.name] = entity
        out: dict[str, list[Relationship]] = {name: [] for name in by_name}
        incoming: dict[str, list[Relationship]] = {name: [] for name in by_name}
        edge_keys = set()
        for rel in relationships:
            if rel.src not in by_name or rel.dst not in by_name:
                raise KGFormatError(
                    f"edge {rel.src!r} --({rel.rtype})--> {rel.dst!r} references an unknown entity"
                )
            if rel.rtype not in schema.relationship_types:
                raise KGFormatError(
                    f"edge {rel.src!r} --({rel.rtype})--> {rel.dst!r} has undeclared type"
                )
            out[rel.src].append(rel)
            incoming[rel.dst].append(rel)
            edge_keys.add((rel.src, rel.rtype, rel.dst))
        return cls(
            schema=schema,
            entities=by_name,
            relationships=tuple(relationships),
            _out={k: tuple(v) for k, v in out.items()},
            _in={k: tuple(v) for k, v in incoming.items()},
            _edge_keys=frozenset(edge_keys),
        )

    def has_entity(self, name: str) -> bool:
        return name in self.entities

    def entity(self, name: str) -> Entity:
        try:
            return self.entities[name]
        except KeyError:
            raise UnknownEntityError(name) from None

    def has_edge(self, src: str, rtype: str, dst: str) -> bool:
        return (src, rtype, dst) in self._edge_keys

    def out_edges(self, name: str) -> tuple[Relationship, ...]:
        return self._out.get(name, ())

    def in_edges(self, name: str) -> tuple[Relationship, ...]:
        return self._in.get(name, ())

    def edges_between(self, a: str, b: str) -> tuple[Relationship, ...]:
        """All edges connecting ``a`` and ``b`` in either direction."""
        forward = tuple(r for r in self.out_edges(a) if r.dst == b)
        backward = tuple(r for r in self.out_edges(b) if r.dst == a)
        return forward + backward

    def neighbors_undirected(self, name: str) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for rel in self.out_edges(name):
            seen.setdefault(rel.dst)
        for rel in self.in_edges(name):
            seen.setdefault(rel.src)
        return tuple(sorted(seen))

    def entities_of_type(self, etype: str) -> tuple[str, ...]:
        return tuple(e.name for e in self.entities.values() if e.etype == etype)


# ---------------------------------------------------------------------------
# Loading and rendering
# ---------------------------------------------------------------------------

def _schema_from_dict(data: Mapping) -> EntitySchema:
    fault_classes = {
        etype: tuple(labels) for etype, labels in data.get("fault_classes", {}).items()
    }
    return EntitySchema(
        entity_types=tuple(data.get("entity_types", DEFAULT_ENTITY_TYPES)),
        relationship_types=tuple(data.get("relationship_types", DEFAULT_RELATIONSHIP_TYPES)),
        fault_classes=fault_classes,
    )


def load_kg(path: Path, schema: EntitySchema | None = None) -> KnowledgeGraph:
    """Load a knowledge-graph document (JSON with schema/nodes/edges sections).

    A ``schema`` argument overrides the document's own schema section.
    Dangling edge endpoints, undeclared types, and duplicate entity names
    are fatal.
    """
    with open(path, encoding="utf-8") as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise KGFormatError(f"{path}: not valid JSON: {exc}") from exc
    for section in ("nodes", "edges"):
        if section not in data:
            raise KGFormatError(f"{path}: missing {section!r} section")
    if schema is None:
        schema = _schema_from_dict(data.get("schema", {}))
    entities = [
        Entity(name=n["name"], etype=n["type"], attributes=dict(n.get("attributes", {})))
        for n in data["nodes"]
    ]
    relationships = [
        Relationship(src=e["src"], rtype=e["type"], dst=e["dst"], attributes=dict(e.get("attributes", {})))
        for e in data["edges"]
    ]
    return KnowledgeGraph.build(schema, entities, relationships)


def _attrs_text(attributes: Mapping[str, str]) -> str:
    return "; ".join(f"{k}={attributes[k]}" for k in sorted(attributes))


def render_kg(graph: KnowledgeGraph, strategy: KGRenderStrategy = KGRenderStrategy.LIST) -> str:
    """Deterministic text rendering; both strategies carry exactly the same
    node and edge information."""
    if strategy is KGRenderStrategy.LIST:
        lines = ["## Entities"]
        for entity in graph.entities.values():
            line = f"- {entity.name} | {entity.etype}"
            if entity.attributes:
                line += f" | {_attrs_text(entity.attributes)}"
            lines.append(line)
        lines.append("## Relationships")
        for rel in graph.relationships:
            line = f"- {rel.src} --({rel.rtype})--> {rel.dst}"
            if rel.attributes:
                line += f" | {_attrs_text(rel.attributes)}"
            lines.append(line)
        return "\n".join(lines)
    payload = {
        "nodes": [
            {"name": e.name, "type": e.etype, "attributes": dict(sorted(e.attributes.items()))}
            for e in graph.entities.values()
        ],
        "edges": [
            {"src": r.src, "type": r.rtype, "dst": r.dst, "attributes": dict(sorted(r.attributes.items()))}
            for r in graph.relationships
        ],
    }
    return json.dumps(payload, indent=2)


def parse_rendered(text: str, strategy: KGRenderStrategy, schema: EntitySchema) -> KnowledgeGraph:
    """Inverse of :func:`render_kg` (the schema is carried separately)."""
    if strategy is KGRenderStrategy.JSON_OBJECT:
        data = json.loads(text)
        entities = [
            Entity(name=n["name"], etype=n["type"], attributes=dict(n.get("attributes", {})))
            for n in data["nodes"]
        ]
        relationships = [
            Relationship(src=e["src"], rtype=e["type"], dst=e["dst"], attributes=dict(e.get("attributes", {})))
            for e in data["edges"]
        ]
        return KnowledgeGraph.build(schema, entities, relationships)

    entities = []
    relationships = []
    section = None
    for raw_line in text.splitlines():
        line = raw_line.strip()
        if line == "## Entities":
            section = "entities"
            continue
        if line == "## Relationships":
            section = "edges"
            continue
        if not line.startswith("- "):
            continue
        body = line[2:]
        parts = [p.strip() for p in body.split(" | ")]
        attributes = {}
        if section == "entities":
            if len(parts) < 2:
                raise KGFormatError(f"unparseable entity line: {raw_line!r}")
            if len(parts) > 2 and parts[2]:
                attributes = dict(kv.split("=", 1) for kv in parts[2].split("; "))
            entities.append(Entity(name=parts[0], etype=parts[1], attributes=attributes))
        elif section == "edges":
            head = parts[0]
            src, _, rest = head.partition(" --(")
            rtype, _, dst = rest.partition(")--> ")
            if not src or not rtype or not dst:
                raise KGFormatError(f"unparseable edge line: {raw_line!r}")
            if len(parts) > 1 and parts[1]:
                attributes = dict(kv.split("=", 1) for kv in parts[1].split("; "))
            relationships.append(
                Relationship(src=src.strip(), rtype=rtype, dst=dst.strip(), attributes=attributes)
            )
    return KnowledgeGraph.build(schema, entities, relationships)


def schema_prompt_blocks(schema: EntitySchema) -> tuple[str, str]:
    """Prompt blocks for the schema: (entity types with fault classes,
    relationship types), both as bullet lists."""
    lines = []
    for etype in schema.entity_types:
        classes = schema.fault_classes_for(etype)
        suffix = f" (fault classes: {', '.join(classes)})" if classes else ""
        lines.append(f"- {etype}{suffix}")
    entity_block = "\n".join(lines)
    rel_block = "\n".join(f"- {rtype}" for rtype in schema.relationship_types)
    return entity_block, rel_block


# ---------------------------------------------------------------------------
# Traversal queries
# ---------------------------------------------------------------------------

def r_hop_neighborhood(graph: KnowledgeGraph, entity: str, r: int) -> KnowledgeGraph:
    """Subgraph of all nodes within ``r`` undirected hops of ``entity``
    (seed included) plus every induced edge."""
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    if not graph.has_entity(entity):
        raise UnknownEntityError(entity)
    frontier = {entity}
    reached = {entity}
    for _ in range(r):
        nxt = set()
        for name in frontier:
            nxt.update(graph.neighbors_undirected(name))
        frontier = nxt - reached
        reached |= nxt
        if not frontier:
            break
    entities = [e for e in graph.entities.values() if e.name in reached]
    relationships = [
        rel for rel in graph.relationships if rel.src in reached and rel.dst in reached
    ]
    return KnowledgeGraph.build(graph.schema, entities, relationships)


def all_simple_paths(
    graph: KnowledgeGraph,
    src: str,
    dst: str,
    max_len: int = DEFAULT_MAX_PATH_LEN,
) -> list[PropagationPath]:
    """Every directed simple path (no repeated node) from ``src`` to ``dst``
    with at most ``max_len`` edges, ordered lexicographically by node
    sequence (edge types break remaining ties)."""
    for endpoint in (src, dst):
        if not graph.has_entity(endpoint):
            raise UnknownEntityError(endpoint)
    if src == dst:
        return []
    results: list[PropagationPath] = []
    stack: list[PathStep] = []
    visited = {src}

    def walk(node: str) -> None:
        if len(stack) >= max_len:
            return
        for rel in sorted(graph.out_edges(node), key=lambda r: (r.dst, r.rtype)):
            if rel.dst in visited:
                continue
            stack.append(PathStep(rel.src, rel.rtype, rel.dst))
            if rel.dst == dst:
                results.append(PropagationPath(tuple(stack)))
            else:
                visited.add(rel.dst)
                walk(rel.dst)
                visited.discard(rel.dst)
            stack.pop()

    walk(src)
    results.sort(key=lambda p: (p.nodes(), tuple(s.rtype for s in p.steps)))
    return results


@dataclass(frozen=True)
class WalkCheck:
    valid: bool
    violation: str | None = None
    step_index: int | None = None


def is_valid_walk(
    graph: KnowledgeGraph,
    path: PropagationPath | Sequence[PathStep],
    alerted_elements: Iterable[GraphElement],
) -> WalkCheck:
    """Check that every step is a graph edge, steps chain, and the walk
    terminates at an alerted entity or an alerted relationship endpoint pair.
    Returns the first violation on failure."""
    steps = tuple(path.steps if isinstance(path, PropagationPath) else path)
    alerted = set(alerted_elements)
    if not steps:
        return WalkCheck(valid=False, violation="empty path")
    for i, step in enumerate(steps):
        if i > 0 and steps[i - 1].dst != step.src:
            return WalkCheck(
                valid=False,
                violation=f"step {i + 1} does not chain: expected source {steps[i - 1].dst!r}, got {step.src!r}",
                step_index=i,
            )
        if not graph.has_edge(step.src, step.rtype, step.dst):
            return WalkCheck(
                valid=False,
                violation=f"step {i + 1} is not a graph edge: {step.src} --({step.rtype})--> {step.dst}",
                step_index=i,
            )
    last = steps[-1]
    if last.dst in alerted or (last.src, last.dst) in alerted:
        return WalkCheck(valid=True)
    return WalkCheck(
        valid=False,
        violation=f"terminal element {last.dst!r} is not alerted",
        step_index=len(steps) - 1,
    )
