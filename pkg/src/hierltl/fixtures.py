"""Loaders for the data files bundled with the package.

Bundled content: the dishwasher task tree and its two-level golden
specification, a recorded pipeline transcript for offline replay, ten base
task trees with disjoint object sets for derivative generation, and twenty
small desk scenarios paired with trees for the evaluation harness.
"""

from __future__ import annotations

import json
from importlib import resources

from .errors import DomainError
from .evaluation import EvalCase
from .gridworld import Scenario
from .hierarchy import HierSpec
from .tasktree import TaskTree


def _root():
    return resources.files("hierltl") / "fixtures"


def load_json(relative: str) -> dict:
    path = _root() / relative
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DomainError(f"no bundled fixture {relative}") from None


def dishwasher_tree() -> TaskTree:
    return TaskTree.from_json(load_json("trees/dishwasher.json")["tree"])


def dishwasher_instruction() -> str:
    tree = dishwasher_tree()
    return tree.nodes[tree.root].instruction


def golden_spec() -> HierSpec:
    """The hand-written two-level dishwasher specification."""
    return HierSpec.from_json(load_json("golden_eq2.json"))


def pipeline_fixture() -> dict:
    """Recorded provider exchanges for the dishwasher instruction."""
    return load_json("dishwasher_pipeline.json")


def base_tasks() -> list[tuple[str, TaskTree]]:
    """(name, tree) per bundled base task, sorted by name."""
    out = []
    for entry in sorted(_root().joinpath("trees").iterdir(),
                        key=lambda p: p.name):
        if not entry.name.startswith("base_"):
            continue
        data = json.loads(entry.read_text(encoding="utf-8"))
        out.append((data["name"], TaskTree.from_json(data["tree"])))
    return out


def desk_cases() -> list[EvalCase]:
    """The bundled scenario-plus-tree evaluation cases, sorted by name."""
    cases = []
    for entry in sorted(_root().joinpath("scenarios").iterdir(),
                        key=lambda p: p.name):
        if not entry.name.endswith(".json"):
            continue
        data = json.loads(entry.read_text(encoding="utf-8"))
        cases.append(EvalCase(
            name=data["name"],
            tree=TaskTree.from_json(data["tree"]),
            scenario=Scenario.from_json(data["scenario"]),
            category=data.get("category", "desk"),
        ))
    return cases
