"""Derivative-task generation and the batch evaluation harness.

gen_derivative composes bundled base tasks into larger trees: each pick of
n_base object-disjoint bases is re-rooted under a fresh task_1 with seeded
random precedence among the bases (acyclic by construction, since edges
follow a random permutation).  evaluate runs conversion and planning over a
case list and aggregates travel cost and completion time over the successful
cases only.
"""

from __future__ import annotations

import csv
import io
import json
import random
import statistics
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Mapping, Sequence

from . import hierarchy, planner, tasktree
from .errors import CapacityError, DomainError
from .gridworld import Scenario
from .tasktree import TaskNode, TaskTree

MAX_BASES = 4


def _reprefix(node_id: str, old_root: str, new_root: str) -> str:
    if node_id == old_root:
        return new_root
    if not node_id.startswith(old_root + "_"):
        raise DomainError(f"node {node_id} does not extend root {old_root}")
    return new_root + node_id[len(old_root):]


def _reroot(tree: TaskTree, new_root: str) -> dict[str, TaskNode]:
    nodes = {}
    for nid in tree.walk():
        node = tree.nodes[nid]
        fresh = _reprefix(nid, tree.root, new_root)
        nodes[fresh] = TaskNode(
            node_id=fresh,
            instruction=node.instruction,
            children=tuple(_reprefix(c, tree.root, new_root)
                           for c in node.children),
            relations=tuple((_reprefix(a, tree.root, new_root),
                             _reprefix(b, tree.root, new_root))
                            for a, b in node.relations),
            actions=node.actions,
        )
    return nodes


def gen_derivative(bases: Sequence[TaskTree], n_base: int, count: int,
                   seed: int, *, edge_prob: float = 0.4) -> list[TaskTree]:
    """Build count random composite trees from object-disjoint base tasks.

    The same (bases, n_base, count, seed) always yields the same trees.
    """
    if not 1 <= n_base <= MAX_BASES:
        raise DomainError(f"n_base must be between 1 and {MAX_BASES}")
    if count < 1:
        raise DomainError("count must be positive")
    if len(bases) < n_base:
        raise DomainError(
            f"need at least {n_base} base tasks, have {len(bases)}")
    objects = [b.objects() for b in bases]
    valid = [combo for combo in combinations(range(len(bases)), n_base)
             if _pairwise_disjoint([objects[i] for i in combo])]
    if not valid:
        raise DomainError(
            f"insufficient disjoint bases for n_base={n_base}")
    rng = random.Random(seed)
    out = []
    for _ in range(count):
        combo = valid[rng.randrange(len(valid))]
        picked = [bases[i] for i in combo]
        children = [f"task_1_{j + 1}" for j in range(n_base)]
        nodes: dict[str, TaskNode] = {}
        for j, base in enumerate(picked):
            nodes.update(_reroot(base, children[j]))
        sigma = list(range(n_base))
        rng.shuffle(sigma)
        relations = []
        for i in range(n_base):
            for j in range(i + 1, n_base):
                if rng.random() < edge_prob:
                    relations.append((children[sigma[i]],
                                      children[sigma[j]]))
        instruction = "Complete every part: " + " ".join(
            base.nodes[base.root].instruction for base in picked)
        nodes["task_1"] = TaskNode(
            node_id="task_1",
            instruction=instruction,
            children=tuple(children),
            relations=tuple(relations),
        )
        out.append(TaskTree("task_1", nodes))
    return out


def _pairwise_disjoint(sets: Sequence[frozenset]) -> bool:
    seen: set = set()
    for s in sets:
        if seen & s:
            return False
        seen |= s
    return True


# ---------------------------------------------------------------------------
# Batch evaluation


@dataclass(frozen=True)
class EvalCase:
    name: str
    tree: TaskTree
    scenario: Scenario
    category: str = "all"


@dataclass(frozen=True)
class CaseResult:
    name: str
    converted: bool
    planned: bool
    travel_cost: float | None
    completion_time: int | None
    detail: str = ""
    category: str = "all"

    def to_json(self) -> dict:
        return {"name": self.name, "category": self.category,
                "converted": self.converted,
                "planned": self.planned, "travel_cost": self.travel_cost,
                "completion_time": self.completion_time,
                "detail": self.detail}


def with_robots(scenario: Scenario, count: int,
                rng: random.Random) -> Scenario:
    """Same world, count robots at random distinct unblocked cells."""
    free = sorted(
        (x, y)
        for x in range(scenario.width) for y in range(scenario.height)
        if scenario.passable((x, y)))
    if count < 1 or count > len(free):
        raise DomainError(
            f"cannot place {count} robots on {len(free)} free cells")
    cells = rng.sample(free, count)
    return Scenario(
        scenario.width, scenario.height,
        blocked=scenario.blocked, cell_size=scenario.cell_size,
        robots=[(f"r{i + 1}", cells[i]) for i in range(count)],
        objects=scenario.objects,
        locations=scenario.locations, skills=scenario.skills)


def _stats(values: Sequence[float]) -> dict | None:
    if not values:
        return None
    return {"mean": statistics.mean(values),
            "std": statistics.pstdev(values),
            "count": len(values)}


@dataclass
class EvalReport:
    objective: str
    results: list[CaseResult] = field(default_factory=list)

    @property
    def conversion_rate(self) -> float:
        if not self.results:
            return 0.0
        return sum(r.converted for r in self.results) / len(self.results)

    @property
    def planning_rate(self) -> float:
        if not self.results:
            return 0.0
        return sum(r.planned for r in self.results) / len(self.results)

    def travel_stats(self) -> dict | None:
        return _stats([r.travel_cost for r in self.results if r.planned])

    def completion_stats(self) -> dict | None:
        return _stats([float(r.completion_time)
                       for r in self.results if r.planned])

    def categories(self) -> list[str]:
        seen: dict[str, None] = {}
        for r in self.results:
            seen.setdefault(r.category)
        return list(seen)

    def category_row(self, category: str) -> dict:
        rows = [r for r in self.results if r.category == category]
        planned = [r for r in rows if r.planned]
        return {
            "category": category,
            "cases": len(rows),
            "conversion_rate": (sum(r.converted for r in rows) / len(rows)
                                if rows else 0.0),
            "planning_rate": (len(planned) / len(rows) if rows else 0.0),
            "travel_cost": _stats([r.travel_cost for r in planned]),
            "completion_time": _stats([float(r.completion_time)
                                       for r in planned]),
        }

    def to_json(self) -> dict:
        return {
            "format_version": 1,
            "objective": self.objective,
            "cases": [r.to_json() for r in self.results],
            "categories": [self.category_row(c) for c in self.categories()],
            "conversion_rate": self.conversion_rate,
            "planning_rate": self.planning_rate,
            "travel_cost": self.travel_stats(),
            "completion_time": self.completion_stats(),
        }

    def to_text(self) -> str:
        def fmt(stats: dict | None) -> str:
            if stats is None:
                return "-"
            return f"{stats['mean']:.2f}+/-{stats['std']:.2f}"

        rows = [("category", "cases", "conv%", "plan%",
                 "travel_m", "steps")]
        for c in self.categories():
            row = self.category_row(c)
            rows.append((c, str(row["cases"]),
                         f"{row['conversion_rate']:.0%}",
                         f"{row['planning_rate']:.0%}",
                         fmt(row["travel_cost"]),
                         fmt(row["completion_time"])))
        lines = _aligned(rows)
        lines.append("")
        rows = [("case", "category", "converted", "planned",
                 "travel_m", "steps")]
        for r in self.results:
            rows.append((
                r.name, r.category,
                "yes" if r.converted else "no",
                "yes" if r.planned else "no",
                f"{r.travel_cost:.2f}" if r.travel_cost is not None else "-",
                str(r.completion_time) if r.completion_time is not None
                else "-",
            ))
        lines.extend(_aligned(rows))
        lines.append("")
        lines.append(f"conversion rate: {self.conversion_rate:.2%}")
        lines.append(f"planning rate:   {self.planning_rate:.2%}")
        for label, stats in (("travel cost", self.travel_stats()),
                             ("completion time", self.completion_stats())):
            if stats is None:
                lines.append(f"{label}: no successful cases")
            else:
                lines.append(f"{label}: {stats['mean']:.2f} "
                             f"+/- {stats['std']:.2f} "
                             f"over {stats['count']} cases")
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["case", "category", "converted", "planned",
                         "travel_cost", "completion_time", "detail"])
        for r in self.results:
            writer.writerow([r.name, r.category, int(r.converted),
                             int(r.planned),
                             "" if r.travel_cost is None else r.travel_cost,
                             "" if r.completion_time is None
                             else r.completion_time,
                             r.detail])
        return buf.getvalue()


def _aligned(rows: list[tuple[str, ...]]) -> list[str]:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    return ["  ".join(cell.ljust(widths[i])
                      for i, cell in enumerate(row)).rstrip()
            for row in rows]


def evaluate_case(case: EvalCase, *, objective: str = "travel",
                  serial: bool = False,
                  skills: Mapping[str, int] | None = None,
                  timeout_s: float = planner.DEFAULT_TIMEOUT_S,
                  node_cap: int = planner.DEFAULT_NODE_CAP) -> CaseResult:
    skills = dict(skills or tasktree.DEFAULT_SKILLS)
    try:
        spec = tasktree.construct(case.tree, skills)
        problems = hierarchy.validate(spec)
        if problems:
            raise DomainError("; ".join(str(p) for p in problems))
    except DomainError as exc:
        return CaseResult(case.name, False, False, None, None,
                          f"conversion failed: {exc}", case.category)
    try:
        result = planner.plan(case.scenario, spec, objective,
                              serial=serial, timeout_s=timeout_s,
                              node_cap=node_cap)
    except (planner.Infeasible, planner.PlanTimeout,
            CapacityError, DomainError) as exc:
        return CaseResult(case.name, True, False, None, None,
                          f"planning failed: {exc}", case.category)
    return CaseResult(case.name, True, True, result.travel_cost,
                      result.completion_time, "", case.category)


def evaluate(cases: Sequence[EvalCase], *, objective: str = "travel",
             serial: bool = False,
             skills: Mapping[str, int] | None = None,
             timeout_s: float = planner.DEFAULT_TIMEOUT_S,
             node_cap: int = planner.DEFAULT_NODE_CAP) -> EvalReport:
    report = EvalReport(objective=objective)
    for case in cases:
        report.results.append(
            evaluate_case(case, objective=objective, serial=serial,
                          skills=skills, timeout_s=timeout_s,
                          node_cap=node_cap))
    return report


def build_suite(trees: Sequence[tuple[str, TaskTree]],
                scenarios: Sequence[tuple[str, Scenario]],
                robots: Sequence[int] = (1, 2), *,
                seed: int = 0) -> list[EvalCase]:
    """Cross trees with worlds and robot counts; robot seats are seeded.

    Tree i is paired with scenario i mod len(scenarios); each robot count
    forms its own report category so the table mirrors count-by-count rows.
    """
    if not trees or not scenarios:
        raise DomainError("need at least one tree and one scenario")
    rng = random.Random(seed)
    cases = []
    for k in robots:
        for i, (name, tree) in enumerate(trees):
            _, base = scenarios[i % len(scenarios)]
            world = with_robots(base, k, rng)
            cases.append(EvalCase(f"{name}-r{k}", tree, world,
                                  category=f"{k} robots"))
    return cases


def write_report(report: EvalReport, out_dir: str | Path, *,
                 figures: bool = True) -> list[Path]:
    """Write the table, JSON, CSV, and figures; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    text_path = out / "report.txt"
    text_path.write_text(report.to_text() + "\n", encoding="utf-8")
    written.append(text_path)
    json_path = out / "report.json"
    json_path.write_text(json.dumps(report.to_json(), indent=2) + "\n",
                         encoding="utf-8")
    written.append(json_path)
    csv_path = out / "cases.csv"
    csv_path.write_text(report.to_csv(), encoding="utf-8")
    written.append(csv_path)
    if figures:
        from . import figures as figmod
        written.extend(figmod.render_figures(report, out))
    return written
