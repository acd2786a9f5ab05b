"""Run configuration: one versioned YAML file, CLI flags override keys.

The config pins everything a run depends on: dataset paths with column
mappings, curation thresholds, detector parameters, unification and KG
rendering strategies, workflow, endpoint settings for agent and judge,
seeds, and parallelism. Its canonical hash goes into the run manifest.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import yaml

from .agent import Workflow
from .alerts import Modality, UnificationStrategy
from .kgraph import KGRenderStrategy

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class TelemetrySourceConfig:
    path: str
    columns: dict[str, str]
    delimiter: str = ","


@dataclass
class DatasetConfig:
    name: str
    scenarios: str
    kg: str
    logs: TelemetrySourceConfig | None = None
    metrics: TelemetrySourceConfig | None = None
    traces: TelemetrySourceConfig | None = None


@dataclass
class CurationConfig:
    min_gap_s: float = 45.0
    max_silence_min: float = 30.0
    baseline_min: float = 15.0


@dataclass
class DrainSettings:
    depth: int = 4
    sim_threshold: float = 0.4


@dataclass
class IForestSettings:
    n_trees: int = 100
    subsample: int = 256
    score_threshold: float = 0.5


@dataclass
class AlertsConfig:
    unification: str = "TIME_BASED"
    rare_threshold: int = 2
    withhold: str | None = None
    drain: DrainSettings = field(default_factory=DrainSettings)
    iforest: IForestSettings = field(default_factory=IForestSettings)

    def unification_strategy(self) -> UnificationStrategy:
        return UnificationStrategy(self.unification)

    def withhold_modality(self) -> Modality | None:
        return Modality(self.withhold) if self.withhold else None


@dataclass
class EndpointConfig:
    backend: str = "scripted"  # "scripted" | "http"
    model: str = "scripted"
    script: str | None = None
    base_url: str | None = None
    token_env: str = "RCAKIT_API_TOKEN"
    timeout_s: float = 60.0
    retries: int = 3
    concurrency: int = 4
    temperature: float | None = None
    max_tokens: int | None = None


@dataclass
class RunSettings:
    seed: int = 7
    max_iterations: int = 50
    parallelism: int = 1
    max_endpoint_failures: int = 3
    k: int = 3


@dataclass
class JudgeSettings:
    quota: int = 100
    seed: int = 7
    retries: int = 2


@dataclass
class RunConfig:
    dataset: DatasetConfig
    output_dir: str
    version: int = CONFIG_VERSION
    curation: CurationConfig = field(default_factory=CurationConfig)
    alerts: AlertsConfig = field(default_factory=AlertsConfig)
    kg_render: str = "LIST"
    workflow: str = "REACT"
    endpoint_agent: EndpointConfig = field(default_factory=EndpointConfig)
    endpoint_judge: EndpointConfig = field(default_factory=EndpointConfig)
    run: RunSettings = field(default_factory=RunSettings)
    judge: JudgeSettings = field(default_factory=JudgeSettings)
    strict_parse: bool = True
    base_dir: str = "."  # resolved against the config file location

    def __post_init__(self) -> None:
        if self.run.k != 3:
            raise ConfigError("the harness produces ranked lists of exactly 3 hypotheses (k = 3)")
        # Fail fast on bad enum strings.
        self.workflow_enum()
        self.kg_render_strategy()
        self.alerts.unification_strategy()
        self.alerts.withhold_modality()

    def workflow_enum(self) -> Workflow:
        try:
            return Workflow(self.workflow)
        except ValueError as exc:
            raise ConfigError(f"unknown workflow {self.workflow!r}") from exc

    def kg_render_strategy(self) -> KGRenderStrategy:
        try:
            return KGRenderStrategy(self.kg_render)
        except ValueError as exc:
            raise ConfigError(f"unknown KG render strategy {self.kg_render!r}") from exc

    def resolve(self, relative: str) -> Path:
        path = Path(relative)
        return path if path.is_absolute() else Path(self.base_dir) / path


def _dataclass_from_dict(cls, data: Mapping):
    if data is None:
        return cls()
    kwargs = {}
    for name, value in data.items():
        if name not in cls.__dataclass_fields__:
            raise ConfigError(f"{cls.__name__}: unknown config key {name!r}")
        kwargs[name] = value
    return cls(**kwargs)


def _build_dataset(data: Mapping) -> DatasetConfig:
    if data is None:
        raise ConfigError("config is missing the 'dataset' section")
    sources = {}
    for modality in ("logs", "metrics", "traces"):
        raw = data.get(modality)
        sources[modality] = _dataclass_from_dict(TelemetrySourceConfig, raw) if raw else None
    return DatasetConfig(
        name=data.get("name", "dataset"),
        scenarios=data["scenarios"],
        kg=data["kg"],
        logs=sources["logs"],
        metrics=sources["metrics"],
        traces=sources["traces"],
    )


def _build_alerts(data: Mapping | None) -> AlertsConfig:
    if data is None:
        return AlertsConfig()
    data = dict(data)
    drain = _dataclass_from_dict(DrainSettings, data.pop("drain", None))
    iforest = _dataclass_from_dict(IForestSettings, data.pop("iforest", None))
    cfg = _dataclass_from_dict(AlertsConfig, data)
    cfg.drain = drain
    cfg.iforest = iforest
    return cfg


def _apply_override(data: dict, dotted_key: str, raw_value: str) -> None:
    keys = dotted_key.split(".")
    node = data
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override through non-mapping key {key!r}")
    try:
        value = yaml.safe_load(raw_value)
    except yaml.YAMLError:
        value = raw_value
    node[keys[-1]] = value


def load_config(path: Path, overrides: Mapping[str, str] | None = None) -> RunConfig:
    """Load the run config; ``overrides`` maps dotted keys to YAML values,
    e.g. ``{"run.seed": "9", "alerts.withhold": "TRACE"}``."""
    path = Path(path)
    with open(path, encoding="utf-8") as handle:
        data = yaml.safe_load(handle) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    for dotted, value in (overrides or {}).items():
        _apply_override(data, dotted, value)
    version = data.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version} (expected {CONFIG_VERSION})")
    return RunConfig(
        dataset=_build_dataset(data.get("dataset")),
        output_dir=data.get("output_dir", "runs/default"),
        version=version,
        curation=_dataclass_from_dict(CurationConfig, data.get("curation")),
        alerts=_build_alerts(data.get("alerts")),
        kg_render=data.get("kg_render", "LIST"),
        workflow=data.get("workflow", "REACT"),
        endpoint_agent=_dataclass_from_dict(EndpointConfig, data.get("endpoint_agent")),
        endpoint_judge=_dataclass_from_dict(EndpointConfig, data.get("endpoint_judge")),
        run=_dataclass_from_dict(RunSettings, data.get("run")),
        judge=_dataclass_from_dict(JudgeSettings, data.get("judge")),
        strict_parse=data.get("strict_parse", True),
        base_dir=str(path.parent),
    )


def config_hash(config: RunConfig) -> str:
    payload = asdict(config)
    payload.pop("base_dir", None)  # location-independent hash
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
