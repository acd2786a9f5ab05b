"""Evaluation harness for LLM-driven root cause analysis over microservice telemetry.

The pipeline turns raw logs, metrics, and traces into canonical alerts,
exposes a typed system knowledge graph through deterministic tools, drives
a chat-model endpoint through three diagnostic workflows, and scores both
the final hypotheses and the reasoning traces.
"""

__version__ = "0.1.0"
