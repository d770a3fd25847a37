"""Synthetic attacker populations played against a sensor."""
from __future__ import annotations

from .generate import Corpus, Plan, build_plan, created_map, drive, generate, read_labels
from .replicas import REPLICAS, build as build_replica
from .scenario import PersonaSpec, Scenario, ScenarioError
from .scripts import SCRIPTS

__all__ = [
    "Corpus", "Plan", "build_plan", "created_map", "drive", "generate", "read_labels", "REPLICAS",
    "build_replica", "PersonaSpec", "Scenario", "ScenarioError", "SCRIPTS",
]

from .replay import ReplayError, plan_from_log, replay  # noqa: E402

__all__ += ["ReplayError", "plan_from_log", "replay"]
