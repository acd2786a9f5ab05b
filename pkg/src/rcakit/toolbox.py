"""The six deterministic agent tools and their dispatcher.

Tools are semantically minimalist and read-only over an immutable graph.
Every call must carry a non-empty ``reasoning`` argument; calls and results
are appended to a per-scenario log in call order. Unknown entities or types
come back as observations the agent can recover from, never as harness
failures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .alerts import Alert, AlertIndex, render_alert_line
from .kgraph import (
    DEFAULT_MAX_PATH_LEN,
    KGRenderStrategy,
    KnowledgeGraph,
    all_simple_paths,
    r_hop_neighborhood,
    render_kg,
)

DEFAULT_MAX_ITEMS = 100

CHECK_NODE_EXISTENCE = "check_node_existence"
GET_NODE_ATTRIBUTES = "get_node_attributes"
GET_ALL_INSTANCES_OF_ENTITY_TYPE = "get_all_instances_of_entity_type"
GET_EDGE_ATTRIBUTES = "get_edge_attributes"
GET_NODE_NEIGHBORHOOD = "get_node_neighborhood"
GET_ALL_SIMPLE_PATHS = "get_all_simple_paths"

TOOL_NAMES = (
    CHECK_NODE_EXISTENCE,
    GET_NODE_ATTRIBUTES,
    GET_ALL_INSTANCES_OF_ENTITY_TYPE,
    GET_EDGE_ATTRIBUTES,
    GET_NODE_NEIGHBORHOOD,
    GET_ALL_SIMPLE_PATHS,
)

_TOOL_DESCRIPTIONS = {
    CHECK_NODE_EXISTENCE: "Check if a named entity exists in the system.",
    GET_NODE_ATTRIBUTES: "Retrieve attributes and alert data of a given entity.",
    GET_ALL_INSTANCES_OF_ENTITY_TYPE: "Enumerate all instances of a specified entity type.",
    GET_EDGE_ATTRIBUTES: "Inspect properties of edges between two entities.",
    GET_NODE_NEIGHBORHOOD: "Retrieve the r-hop neighborhood of a given entity.",
    GET_ALL_SIMPLE_PATHS: "Enumerate all simple paths between two entities.",
}

_TOOL_PARAMS: dict[str, dict[str, dict]] = {
    CHECK_NODE_EXISTENCE: {"entity": {"type": "string", "description": "Entity name to check."}},
    GET_NODE_ATTRIBUTES: {"entity": {"type": "string", "description": "Entity name to inspect."}},
    GET_ALL_INSTANCES_OF_ENTITY_TYPE: {
        "entity_type": {"type": "string", "description": "Entity type to enumerate."}
    },
    GET_EDGE_ATTRIBUTES: {
        "source": {"type": "string", "description": "First endpoint entity name."},
        "target": {"type": "string", "description": "Second endpoint entity name."},
    },
    GET_NODE_NEIGHBORHOOD: {
        "entity": {"type": "string", "description": "Seed entity name."},
        "radius": {"type": "integer", "description": "Number of hops r (at least 1)."},
    },
    GET_ALL_SIMPLE_PATHS: {
        "source": {"type": "string", "description": "Path source entity name."},
        "target": {"type": "string", "description": "Path target entity name."},
    },
}

_REASONING_PARAM = {
    "type": "string",
    "description": "Justification for invoking this tool at this point in the analysis.",
}


class ToolErrorKind(Enum):
    UNKNOWN_ENTITY = "UNKNOWN_ENTITY"
    UNKNOWN_TYPE = "UNKNOWN_TYPE"
    BAD_ARGS = "BAD_ARGS"
    MISSING_REASONING = "MISSING_REASONING"


@dataclass(frozen=True)
class ToolCall:
    tool_name: str
    args: Mapping[str, object]
    reasoning: str


@dataclass(frozen=True)
class ToolResult:
    ok: bool
    rendered: str
    error_kind: ToolErrorKind | None = None

    def __post_init__(self) -> None:
        if self.ok == (self.error_kind is not None):
            raise ValueError("exactly one of ok / error_kind must be set")


def tool_schemas() -> list[dict]:
    """Machine-readable declarations for all six tools, in stable order,
    each with the required ``reasoning`` parameter."""
    schemas = []
    for name in TOOL_NAMES:
        properties = dict(_TOOL_PARAMS[name])
        properties["reasoning"] = dict(_REASONING_PARAM)
        schemas.append(
            {
                "type": "function",
                "function": {
                    "name": name,
                    "description": _TOOL_DESCRIPTIONS[name],
                    "parameters": {
                        "type": "object",
                        "properties": properties,
                        "required": list(properties),
                    },
                },
            }
        )
    return schemas


def _truncate(items: Sequence[str], max_items: int) -> list[str]:
    if len(items) <= max_items:
        return list(items)
    omitted = len(items) - max_items
    return list(items[:max_items]) + [f"... ({omitted} more omitted)"]


class Toolbox:
    """Dispatches tool calls against one scenario's graph and alert index.

    Dispatch never mutates the graph; for identical inputs the rendered
    observation text is identical. Every call lands in :attr:`call_log`.
    """

    def __init__(
        self,
        graph: KnowledgeGraph,
        alert_index: AlertIndex | None = None,
        max_items: int = DEFAULT_MAX_ITEMS,
        max_path_len: int = DEFAULT_MAX_PATH_LEN,
    ) -> None:
        self.graph = graph
        self.alert_index = alert_index or AlertIndex(by_entity={}, by_edge={})
        self.max_items = max_items
        self.max_path_len = max_path_len
        self.call_log: list[tuple[ToolCall, ToolResult]] = []

    def dispatch(self, call: ToolCall) -> ToolResult:
        result = self._execute(call)
        self.call_log.append((call, result))
        return result

    def _execute(self, call: ToolCall) -> ToolResult:
        if not call.reasoning or not call.reasoning.strip():
            return ToolResult(
                ok=False,
                rendered="tool call rejected: the required 'reasoning' parameter is empty",
                error_kind=ToolErrorKind.MISSING_REASONING,
            )
        if call.tool_name not in TOOL_NAMES:
            return ToolResult(
                ok=False,
                rendered=f"unknown tool {call.tool_name!r}; available tools: {', '.join(TOOL_NAMES)}",
                error_kind=ToolErrorKind.BAD_ARGS,
            )
        expected = set(_TOOL_PARAMS[call.tool_name])
        provided = set(call.args)
        if provided != expected:
            return ToolResult(
                ok=False,
                rendered=(
                    f"bad arguments for {call.tool_name}: expected {sorted(expected)}, "
                    f"got {sorted(provided)}"
                ),
                error_kind=ToolErrorKind.BAD_ARGS,
            )
        handler = {
            CHECK_NODE_EXISTENCE: self._check_node_existence,
            GET_NODE_ATTRIBUTES: self._get_node_attributes,
            GET_ALL_INSTANCES_OF_ENTITY_TYPE: self._get_all_instances,
            GET_EDGE_ATTRIBUTES: self._get_edge_attributes,
            GET_NODE_NEIGHBORHOOD: self._get_node_neighborhood,
            GET_ALL_SIMPLE_PATHS: self._get_all_simple_paths,
        }[call.tool_name]
        return handler(call.args)

    # -- handlers -----------------------------------------------------------

    def _check_node_existence(self, args: Mapping) -> ToolResult:
        entity = str(args["entity"])
        exists = self.graph.has_entity(entity)
        return ToolResult(ok=True, rendered=f"exists: {str(exists).lower()}")

    def _alert_lines(self, alerts: Sequence[Alert]) -> list[str]:
        return _truncate([f"- {render_alert_line(a)}" for a in alerts], self.max_items)

    def _get_node_attributes(self, args: Mapping) -> ToolResult:
        name = str(args["entity"])
        if not self.graph.has_entity(name):
            return ToolResult(
                ok=False,
                rendered=f"unknown entity: {name!r} is not a node of the knowledge graph",
                error_kind=ToolErrorKind.UNKNOWN_ENTITY,
            )
        entity = self.graph.entity(name)
        lines = [f"entity: {entity.name}", f"type: {entity.etype}", "attributes:"]
        if entity.attributes:
            lines.extend(
                _truncate(
                    [f"- {k} = {entity.attributes[k]}" for k in sorted(entity.attributes)],
                    self.max_items,
                )
            )
        else:
            lines.append("- (none)")
        lines.append("alerts:")
        alerts = self.alert_index.by_entity.get(name, [])
        lines.extend(self._alert_lines(alerts) if alerts else ["- (none)"])
        return ToolResult(ok=True, rendered="\n".join(lines))

    def _get_all_instances(self, args: Mapping) -> ToolResult:
        etype = str(args["entity_type"])
        if etype not in self.graph.schema.entity_types:
            return ToolResult(
                ok=False,
                rendered=(
                    f"unknown entity type: {etype!r}; declared types: "
                    f"{', '.join(self.graph.schema.entity_types)}"
                ),
                error_kind=ToolErrorKind.UNKNOWN_TYPE,
            )
        names = self.graph.entities_of_type(etype)
        lines = [f"instances of {etype} ({len(names)}):"]
        lines.extend(_truncate([f"- {n}" for n in names], self.max_items) or ["- (none)"])
        return ToolResult(ok=True, rendered="\n".join(lines))

    def _get_edge_attributes(self, args: Mapping) -> ToolResult:
        source, target = str(args["source"]), str(args["target"])
        for name in (source, target):
            if not self.graph.has_entity(name):
                return ToolResult(
                    ok=False,
                    rendered=f"unknown entity: {name!r} is not a node of the knowledge graph",
                    error_kind=ToolErrorKind.UNKNOWN_ENTITY,
                )
        edges = self.graph.edges_between(source, target)
        if not edges:
            lines = [f"no edges between {source} and {target}"]
        else:
            lines = [f"edges between {source} and {target} ({len(edges)}):"]
            for rel in edges:
                line = f"- {rel.src} --({rel.rtype})--> {rel.dst}"
                if rel.attributes:
                    attrs = "; ".join(f"{k}={rel.attributes[k]}" for k in sorted(rel.attributes))
                    line += f" | {attrs}"
                lines.append(line)
        alerts = list(self.alert_index.by_edge.get((source, target), []))
        alerts += self.alert_index.by_edge.get((target, source), [])
        lines.append("alerts:")
        lines.extend(self._alert_lines(alerts) if alerts else ["- (none)"])
        return ToolResult(ok=True, rendered="\n".join(lines))

    def _get_node_neighborhood(self, args: Mapping) -> ToolResult:
        entity = str(args["entity"])
        try:
            radius = int(args["radius"])
        except (TypeError, ValueError):
            return ToolResult(
                ok=False,
                rendered=f"bad arguments: radius must be an integer, got {args['radius']!r}",
                error_kind=ToolErrorKind.BAD_ARGS,
            )
        if radius < 1:
            return ToolResult(
                ok=False,
                rendered=f"bad arguments: radius must be >= 1, got {radius}",
                error_kind=ToolErrorKind.BAD_ARGS,
            )
        if not self.graph.has_entity(entity):
            return ToolResult(
                ok=False,
                rendered=f"unknown entity: {entity!r} is not a node of the knowledge graph",
                error_kind=ToolErrorKind.UNKNOWN_ENTITY,
            )
        subgraph = r_hop_neighborhood(self.graph, entity, radius)
        header = f"{radius}-hop neighborhood of {entity}:"
        return ToolResult(ok=True, rendered=f"{header}\n{render_kg(subgraph, KGRenderStrategy.LIST)}")

    def _get_all_simple_paths(self, args: Mapping) -> ToolResult:
        source, target = str(args["source"]), str(args["target"])
        for name in (source, target):
            if not self.graph.has_entity(name):
                return ToolResult(
                    ok=False,
                    rendered=f"unknown entity: {name!r} is not a node of the knowledge graph",
                    error_kind=ToolErrorKind.UNKNOWN_ENTITY,
                )
        paths = all_simple_paths(self.graph, source, target, max_len=self.max_path_len)
        if not paths:
            return ToolResult(ok=True, rendered=f"no simple paths from {source} to {target}")
        lines = [f"simple paths from {source} to {target} ({len(paths)}):"]
        lines.extend(_truncate([f"- {p.render()}" for p in paths], self.max_items))
        return ToolResult(ok=True, rendered="\n".join(lines))


def tool_call_to_dict(call: ToolCall) -> dict:
    return {
        "tool": call.tool_name,
        "args": dict(call.args),
        "reasoning": call.reasoning,
    }


def tool_call_from_dict(data: Mapping) -> ToolCall:
    return ToolCall(
        tool_name=data["tool"],
        args=dict(data.get("args", {})),
        reasoning=data.get("reasoning", ""),
    )


def render_tool_call(call: ToolCall) -> str:
    args = json.dumps(dict(call.args), sort_keys=True)
    return f"{call.tool_name}({args}) | reasoning: {call.reasoning}"
