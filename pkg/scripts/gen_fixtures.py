#!/usr/bin/env python3
"""Regenerate the JSON data bundled under src/hierltl/fixtures/.

Deterministic: running it twice produces byte-identical files.  The desk
scenarios are verified solvable with the optimal planner before being
written, so the bundled suite is plannable by construction.
"""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

from hierltl import hierarchy, ltl, pipeline, planner, tasktree
from hierltl.gridworld import Scenario
from hierltl.hierarchy import HierSpec, SpecNode
from hierltl.tasktree import ApiCall, TaskNode, TaskTree

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "hierltl" / "fixtures"


def write(relative: str, data: dict) -> None:
    path = FIXTURES / relative
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {path.relative_to(FIXTURES.parent)}")


def leaf(nid: str, instruction: str, *calls: tuple[str, tuple[str, ...]]) -> TaskNode:
    return TaskNode(node_id=nid, instruction=instruction,
                    actions=tuple(ApiCall(v, a) for v, a in calls))


def carry_leaf(nid: str, obj: str, loc: str, instruction: str) -> TaskNode:
    return leaf(nid, instruction,
                ("Pickup", (obj,)), ("Move", (obj, loc)))


def dishwasher_tree() -> TaskTree:
    nodes = {
        "task_1": TaskNode(
            "task_1",
            "Place items into the dishwasher. Put the plate, mug, and "
            "utensils into the lower rack in any order. After that, put "
            "the saucer and then the cup into the upper rack.",
            children=("task_1_1", "task_1_2"),
            relations=(("task_1_1", "task_1_2"),)),
        "task_1_1": TaskNode(
            "task_1_1",
            "Put the plate, mug, and utensils into the lower rack in any order.",
            children=("task_1_1_1", "task_1_1_2", "task_1_1_3")),
        "task_1_2": TaskNode(
            "task_1_2",
            "Put the saucer and then the cup into the upper rack.",
            children=("task_1_2_1", "task_1_2_2"),
            relations=(("task_1_2_1", "task_1_2_2"),)),
        "task_1_1_1": carry_leaf("task_1_1_1", "plate", "lower_rack",
                                 "Put the plate into the lower rack."),
        "task_1_1_2": carry_leaf("task_1_1_2", "mug", "lower_rack",
                                 "Put the mug into the lower rack."),
        "task_1_1_3": carry_leaf("task_1_1_3", "utensils", "lower_rack",
                                 "Put the utensils into the lower rack."),
        "task_1_2_1": carry_leaf("task_1_2_1", "saucer", "upper_rack",
                                 "Put the saucer into the upper rack."),
        "task_1_2_2": carry_leaf("task_1_2_2", "cup", "upper_rack",
                                 "Put the cup into the upper rack."),
    }
    return TaskTree("task_1", nodes)


def gen_dishwasher() -> TaskTree:
    tree = dishwasher_tree()
    assert not tasktree.validate_tree(tree)
    write("trees/dishwasher.json", {
        "format_version": 1,
        "name": "dishwasher",
        "objects": sorted(tree.objects()),
        "tree": tree.to_json(),
    })
    return tree


def gen_golden() -> None:
    spec = HierSpec([
        [SpecNode("phi_1_1", ltl.parse("F(phi_2_1 & F phi_2_2)"))],
        [SpecNode("phi_2_1",
                  ltl.parse("F plates_lower & F mugs_lower & F utensils_lower")),
         SpecNode("phi_2_2", ltl.parse("F(saucers_upper & F cups_upper)"))],
    ])
    assert not hierarchy.validate(spec)
    write("golden_eq2.json", spec.to_json())


def gen_pipeline_fixture(tree: TaskTree) -> None:
    provider = pipeline.RecordingProvider(pipeline.ScriptedProvider(tree))
    instruction = tree.nodes[tree.root].instruction
    result = pipeline.run_pipeline(instruction, provider)
    assert result.transcript.call_count == 17, result.transcript.call_count
    assert not result.transcript.warnings, result.transcript.warnings
    write("dishwasher_pipeline.json", provider.fixture())


BASES = [
    ("breakfast", "Clear the breakfast table: bowl first, then the spoon.",
     [("bowl", "sink", "Put the bowl into the sink."),
      ("spoon", "sink", "Put the spoon into the sink.")],
     [(1, 2)]),
    ("groceries", "Put away the groceries in any order.",
     [("milk", "fridge", "Put the milk into the fridge."),
      ("cheese", "fridge", "Put the cheese into the fridge."),
      ("bread", "pantry", "Put the bread into the pantry.")],
     []),
    ("coffee", "Set up the coffee station, kettle before the tin.",
     [("kettle", "counter", "Put the kettle on the counter."),
      ("coffee_tin", "counter", "Put the coffee tin on the counter.")],
     [(1, 2)]),
    ("mail", "Sort today's mail onto the desk.",
     [("letter", "desk", "Put the letter on the desk."),
      ("parcel", "desk", "Put the parcel on the desk.")],
     []),
    ("laundry", "Collect the laundry; shirt before the towel.",
     [("shirt", "basket", "Put the shirt into the basket."),
      ("towel", "basket", "Put the towel into the basket."),
      ("sock", "basket", "Put the sock into the basket.")],
     [(1, 2)]),
    ("toys", "Tidy the toys away.",
     [("ball", "toybox", "Put the ball into the toybox."),
      ("doll", "toybox", "Put the doll into the toybox.")],
     []),
    ("books", "Shelve the books, novel before the atlas.",
     [("novel", "shelf", "Put the novel on the shelf."),
      ("atlas", "shelf", "Put the atlas on the shelf.")],
     [(1, 2)]),
    ("recycling", "Take out the recycling.",
     [("bottle", "bin", "Put the bottle into the bin."),
      ("can", "bin", "Put the can into the bin.")],
     []),
    ("tools", "Stow the tools, hammer before the wrench.",
     [("hammer", "toolbox", "Put the hammer into the toolbox."),
      ("wrench", "toolbox", "Put the wrench into the toolbox.")],
     [(1, 2)]),
    ("garden", "Pack up the gardening gear.",
     [("pot", "shed", "Put the pot into the shed."),
      ("trowel", "shed", "Put the trowel into the shed.")],
     []),
]


def base_tree(name: str, instruction: str, chores: list, rels: list) -> TaskTree:
    children = tuple(f"task_1_{k}" for k in range(1, len(chores) + 1))
    nodes = {
        "task_1": TaskNode("task_1", instruction, children=children,
                           relations=tuple((f"task_1_{a}", f"task_1_{b}")
                                           for a, b in rels)),
    }
    for k, (obj, loc, text) in enumerate(chores, start=1):
        nodes[f"task_1_{k}"] = carry_leaf(f"task_1_{k}", obj, loc, text)
    return TaskTree("task_1", nodes)


def gen_bases() -> None:
    seen: set[str] = set()
    for i, (name, instruction, chores, rels) in enumerate(BASES, start=1):
        tree = base_tree(name, instruction, chores, rels)
        assert not tasktree.validate_tree(tree)
        objs = tree.objects() - {loc for _, loc, _ in chores}
        overlap = seen & objs
        assert not overlap, f"object reuse across bases: {overlap}"
        seen |= objs
        write(f"trees/base_{i:02d}.json", {
            "format_version": 1,
            "name": name,
            "objects": sorted(objs),
            "tree": tree.to_json(),
        })


_POOL = [
    ("notebook", "tray"), ("stapler", "drawer"), ("pen", "cup_holder"),
    ("folder", "cabinet"), ("marker", "tray"), ("charger", "drawer"),
    ("tape", "cabinet"), ("scissors", "drawer"),
]


def gen_desk() -> None:
    rng = random.Random(20240917)
    written = 0
    attempt = 0
    while written < 20:
        attempt += 1
        if attempt > 400:
            raise RuntimeError("could not assemble 20 solvable desk cases")
        size = rng.choice([4, 5, 5, 6])
        n_robots = rng.choice([1, 2])
        cells = [(x, y) for x in range(size) for y in range(size)]
        rng.shuffle(cells)
        spots = iter(cells)
        blocked = [next(spots) for _ in range(rng.choice([0, 1, 2]))]
        robots = [(f"r{k + 1}", next(spots)) for k in range(n_robots)]
        (o1, l1), (o2, l2) = rng.sample(_POOL, 2)
        if l1 == l2:
            continue
        objects = [(o1, next(spots)), (o2, next(spots))]
        locations = {l1: [next(spots)], l2: [next(spots)]}
        related = rng.random() < 0.5
        nodes = {
            "task_1": TaskNode(
                "task_1",
                f"Tidy the desk: stow the {o1} and the {o2}."
                + (f" Stow the {o1} first." if related else ""),
                children=("task_1_1", "task_1_2"),
                relations=((("task_1_1", "task_1_2"),) if related else ())),
            "task_1_1": carry_leaf("task_1_1", o1, l1,
                                   f"Put the {o1} into the {l1}."),
            "task_1_2": carry_leaf("task_1_2", o2, l2,
                                   f"Put the {o2} into the {l2}."),
        }
        tree = TaskTree("task_1", nodes)
        scenario = Scenario(size, size, blocked=blocked, robots=robots,
                            objects=objects, locations=locations)
        spec = tasktree.construct(tree)
        try:
            result = planner.plan(scenario, spec, "travel", timeout_s=30.0)
        except (planner.Infeasible, planner.PlanTimeout):
            continue
        written += 1
        write(f"scenarios/desk_{written:02d}.json", {
            "format_version": 1,
            "name": f"desk_{written:02d}",
            "category": "desk",
            "scenario": scenario.to_json(),
            "tree": tree.to_json(),
            "reference": {"travel_cost": result.travel_cost,
                          "completion_time": result.completion_time},
        })


def main() -> int:
    tree = gen_dishwasher()
    gen_golden()
    gen_pipeline_fixture(tree)
    gen_bases()
    gen_desk()
    return 0


if __name__ == "__main__":
    sys.exit(main())
