"""Hierarchical co-safe LTL specifications, task trees, and grid planning.

The package splits into formula machinery (ltl, automata), hierarchical
specifications (hierarchy), task trees (tasktree), the language front end
(pipeline), the grid world and planner (gridworld, planner), and the
benchmark harness (evaluation, figures, fixtures, cli).
"""

from .errors import CapacityError, DomainError
from .gridworld import Scenario
from .hierarchy import HierSpec
from .ltl import parse, to_text
from .pipeline import run_pipeline
from .planner import plan
from .tasktree import ApiCall, TaskNode, TaskTree, construct

__version__ = "0.1.0"

__all__ = [
    "ApiCall",
    "CapacityError",
    "DomainError",
    "HierSpec",
    "Scenario",
    "TaskNode",
    "TaskTree",
    "construct",
    "parse",
    "plan",
    "run_pipeline",
    "to_text",
    "__version__",
]
