"""Scenario orchestration: configs, engines, traces and summaries."""

from .config import CONFIG_VERSION, SCENARIOS, ScenarioConfig, default_config, parse_config
from .scenarios import run_scenario
from .trace import SCHEMA_VERSION, TraceWriter, export_csv, read_trace, summarize

__all__ = [
    "CONFIG_VERSION",
    "SCENARIOS",
    "ScenarioConfig",
    "default_config",
    "parse_config",
    "run_scenario",
    "SCHEMA_VERSION",
    "TraceWriter",
    "export_csv",
    "read_trace",
    "summarize",
]
