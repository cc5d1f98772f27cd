"""Scenario-driven travel-counter dialogue engine for two-spot Kyoto tours."""

from .catalog import Catalog, SearchQuery, Spot, distance, feasible, load_catalog
from .config import Config
from .orchestrator import MetricsReport, Orchestrator, TurnResponse, compute_metrics
from .scenario import (
    DialogueAct,
    ScenarioEngine,
    ScenarioState,
    SessionRecord,
    TourPlan,
    initial_state,
    transition_table,
)

__version__ = "0.1.0"

__all__ = [
    "Catalog",
    "Config",
    "DialogueAct",
    "MetricsReport",
    "Orchestrator",
    "ScenarioEngine",
    "ScenarioState",
    "SearchQuery",
    "SessionRecord",
    "Spot",
    "TourPlan",
    "TurnResponse",
    "compute_metrics",
    "distance",
    "feasible",
    "initial_state",
    "load_catalog",
    "transition_table",
    "__version__",
]
