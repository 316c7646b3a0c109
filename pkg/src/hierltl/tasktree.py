"""Hierarchical task trees and their translation into co-safe LTL.

A tree decomposes an instruction into subtasks.  Interior nodes carry an
ordered child list plus precedence relations (child a must finish before
child b); leaves carry a sequence of robot API calls.  Node ids encode the
path from the root: task_1 -> task_1_2 -> task_1_2_1.

Each interior node turns into a formula over its child names via
generate_ltl; each leaf turns into a nested-Eventually formula over its
canonical call propositions via action_formula.  construct() assembles the
whole tree into a level-indexed hierarchy.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from . import ltl
from .errors import DomainError
from .hierarchy import HierSpec, SpecNode
from .ltl import Formula

NODE_ID_RE = re.compile(r"^task(_\d+)+$")

# verb -> argument count
DEFAULT_SKILLS: dict[str, int] = {
    "pickup": 1,
    "move": 2,
    "place": 2,
    "open": 1,
    "close": 1,
    "slice": 1,
    "toggleon": 1,
    "toggleoff": 1,
}


@dataclass(frozen=True)
class ApiCall:
    verb: str
    args: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))

    @property
    def text(self) -> str:
        return f"{self.verb}({', '.join(self.args)})"

    @property
    def prop(self) -> str:
        return ltl.canonical_call(self.verb, self.args)


@dataclass(frozen=True)
class TaskNode:
    node_id: str
    instruction: str = ""
    children: tuple[str, ...] = ()
    relations: tuple[tuple[str, str], ...] = ()
    actions: tuple[ApiCall, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        object.__setattr__(self, "relations",
                           tuple((a, b) for a, b in self.relations))
        object.__setattr__(self, "actions", tuple(self.actions))

    @property
    def is_leaf(self) -> bool:
        return not self.children


class TaskTree:
    def __init__(self, root: str, nodes: Mapping[str, TaskNode]):
        self.root = root
        self.nodes: dict[str, TaskNode] = dict(nodes)

    def node(self, node_id: str) -> TaskNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise DomainError(f"unknown task node {node_id}") from None

    def walk(self) -> tuple[str, ...]:
        """Node ids in depth-first document order (parents before children)."""
        out: list[str] = []
        stack = [self.root]
        seen: set[str] = set()
        while stack:
            nid = stack.pop()
            if nid in seen or nid not in self.nodes:
                continue
            seen.add(nid)
            out.append(nid)
            for child in reversed(self.nodes[nid].children):
                stack.append(child)
        return tuple(out)

    def leaves(self) -> tuple[str, ...]:
        return tuple(n for n in self.walk() if self.nodes[n].is_leaf)

    def depth_of(self, node_id: str) -> int:
        """1 for the root, parent depth + 1 below; follows the id path."""
        return node_id.count("_") - self.root.count("_") + 1

    def parent_of(self, node_id: str) -> str | None:
        for nid in self.walk():
            if node_id in self.nodes[nid].children:
                return nid
        return None

    def objects(self) -> frozenset[str]:
        """Every argument mentioned by a leaf API call."""
        return frozenset(arg for node in self.nodes.values()
                         for call in node.actions for arg in call.args)

    def to_json(self) -> dict:
        nodes = {}
        for nid in self.walk():
            node = self.nodes[nid]
            entry: dict = {"instruction": node.instruction}
            if node.children:
                entry["children"] = list(node.children)
                entry["relations"] = [list(r) for r in node.relations]
            else:
                entry["actions"] = [{"verb": c.verb, "args": list(c.args)}
                                    for c in node.actions]
            nodes[nid] = entry
        return {"format_version": 1, "root": self.root, "nodes": nodes}

    @classmethod
    def from_json(cls, data: Mapping) -> "TaskTree":
        try:
            root = str(data["root"])
            nodes = {}
            for nid, entry in data["nodes"].items():
                actions = tuple(
                    ApiCall(str(c["verb"]), tuple(str(a) for a in c.get("args", ())))
                    for c in entry.get("actions", ()))
                nodes[str(nid)] = TaskNode(
                    node_id=str(nid),
                    instruction=str(entry.get("instruction", "")),
                    children=tuple(str(c) for c in entry.get("children", ())),
                    relations=tuple((str(a), str(b))
                                    for a, b in entry.get("relations", ())),
                    actions=actions,
                )
        except (KeyError, TypeError) as exc:
            raise DomainError(f"malformed task tree JSON: {exc}") from exc
        return cls(root, nodes)

    def to_dot(self) -> str:
        lines = ["digraph tasktree {", "  rankdir=TB;"]
        for nid in self.walk():
            node = self.nodes[nid]
            if node.is_leaf:
                acts = "\\n".join(c.text for c in node.actions)
                lines.append(f'  "{nid}" [shape=box, label="{nid}\\n{acts}"];')
            else:
                lines.append(f'  "{nid}" [shape=ellipse, label="{nid}"];')
            for child in node.children:
                lines.append(f'  "{nid}" -> "{child}";')
            for a, b in node.relations:
                lines.append(f'  "{a}" -> "{b}" [style=dashed, constraint=false];')
        lines.append("}")
        return "\n".join(lines)


def validate_tree(tree: TaskTree,
                  skills: Mapping[str, int] = DEFAULT_SKILLS) -> list[str]:
    """Structural checks; returns one message per problem, empty when clean."""
    problems: list[str] = []
    if tree.root not in tree.nodes:
        problems.append(f"root {tree.root} is not a node")
        return problems

    parents: dict[str, str] = {}
    for nid, node in tree.nodes.items():
        if nid != node.node_id:
            problems.append(f"node keyed {nid} carries id {node.node_id}")
        if not NODE_ID_RE.match(nid):
            problems.append(f"node id {nid} is not of the form task_i_j_...")
        if node.children and node.actions:
            problems.append(f"{nid} has both children and actions")
        if not node.children and not node.actions:
            problems.append(f"{nid} has neither children nor actions")
        for child in node.children:
            if child not in tree.nodes:
                problems.append(f"{nid} lists missing child {child}")
                continue
            if not re.match(re.escape(nid) + r"_\d+$", child):
                problems.append(f"child {child} does not extend parent id {nid}")
            if child in parents:
                problems.append(
                    f"{child} has two parents: {parents[child]} and {nid}")
            parents[child] = nid
        childset = set(node.children)
        for a, b in node.relations:
            if a not in childset or b not in childset:
                problems.append(
                    f"{nid} relates {a} -> {b}, which are not both its children")
            elif a == b:
                problems.append(f"{nid} relates {a} to itself")
        cycle = _find_cycle(node.children, node.relations)
        if cycle:
            problems.append(
                f"{nid} relations form a cycle: {' -> '.join(cycle)}")
        for call in node.actions:
            verb = call.verb.lower()
            if verb not in skills:
                problems.append(f"{nid} uses unknown skill {call.verb}")
            elif len(call.args) != skills[verb]:
                problems.append(
                    f"{nid}: {call.text} takes {len(call.args)} arguments, "
                    f"{call.verb} needs {skills[verb]}")

    if tree.root in parents:
        problems.append(f"root {tree.root} appears as a child")
    reachable = set(tree.walk())
    for nid in tree.nodes:
        if nid not in reachable:
            problems.append(f"{nid} is unreachable from the root")
    return problems


def _find_cycle(members: Sequence[str],
                relations: Sequence[tuple[str, str]]) -> list[str] | None:
    succ: dict[str, list[str]] = {m: [] for m in members}
    for a, b in relations:
        if a in succ and b in succ and a != b:
            succ[a].append(b)
    color: dict[str, int] = {}
    path: list[str] = []

    def visit(v: str) -> list[str] | None:
        color[v] = 1
        path.append(v)
        for w in succ[v]:
            if color.get(w) == 1:
                return path[path.index(w):] + [w]
            if color.get(w, 0) == 0:
                found = visit(w)
                if found:
                    return found
        color[v] = 2
        path.pop()
        return None

    for m in members:
        if color.get(m, 0) == 0:
            found = visit(m)
            if found:
                return found
    return None


# ---------------------------------------------------------------------------
# Formula generation


def generate_ltl(children: Sequence[str],
                 relations: Iterable[tuple[str, str]]) -> Formula:
    """Formula over a sibling group, honoring its precedence relations.

    A child that must come first heads a nested Eventually over whatever
    follows it; unrelated children contribute independent Eventually
    conjuncts.  A relation cycle is a domain error naming the cycle.
    """
    members = list(children)
    rels = [(a, b) for a, b in relations]
    cycle = _find_cycle(members, rels)
    if cycle:
        raise DomainError(f"relations form a cycle: {' -> '.join(cycle)}")
    return _order_formula(members, rels)


def _order_formula(members: list[str],
                   relations: list[tuple[str, str]]) -> Formula:
    if not members:
        return ltl.TRUE
    parts = []
    for comp in _components(members, relations):
        inner = [r for r in relations if r[0] in comp and r[1] in comp]
        parts.append(_component_formula(comp, inner))
    return ltl.conj(parts)


def _components(members: list[str],
                relations: list[tuple[str, str]]) -> list[list[str]]:
    """Undirected connected components, ordered by first member appearance."""
    parent = {m: m for m in members}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in relations:
        if a in parent and b in parent:
            parent[find(a)] = find(b)
    groups: dict[str, list[str]] = {}
    for m in members:
        groups.setdefault(find(m), []).append(m)
    return list(groups.values())


def _component_formula(members: list[str],
                       relations: list[tuple[str, str]]) -> Formula:
    if len(members) == 1:
        return ltl.Eventually(ltl.Prop(members[0]))
    incoming = {m: 0 for m in members}
    for _, b in relations:
        incoming[b] += 1
    sources = [m for m in members if incoming[m] == 0]
    if len(sources) == 1:
        head = sources[0]
        rest = [m for m in members if m != head]
        tail_rel = [r for r in relations if r[0] != head and r[1] != head]
        tail = _order_formula(rest, tail_rel)
        return ltl.Eventually(ltl.conj((ltl.Prop(head), tail)))
    # Several minimal elements: keep the longest precedence chain intact and
    # recurse on what is left; relations crossing the split are dropped.
    chain = _longest_chain(members, relations)
    chainset = set(chain)
    rest = [m for m in members if m not in chainset]
    rest_rel = [r for r in relations if r[0] in rest and r[1] in rest]
    parts = [_chain_formula(chain), _order_formula(rest, rest_rel)]
    return ltl.conj(parts)


def _chain_formula(chain: Sequence[str]) -> Formula:
    out: Formula = ltl.Eventually(ltl.Prop(chain[-1]))
    for m in reversed(chain[:-1]):
        out = ltl.Eventually(ltl.And(ltl.Prop(m), out))
    return out


def _longest_chain(members: list[str],
                   relations: list[tuple[str, str]]) -> list[str]:
    """Longest path in the precedence DAG; ties break lexicographically."""
    succ: dict[str, list[str]] = {m: [] for m in members}
    for a, b in relations:
        succ[a].append(b)
    best: dict[str, list[str]] = {}

    def down(v: str) -> list[str]:
        if v in best:
            return best[v]
        tail: list[str] = []
        for w in sorted(succ[v]):
            cand = down(w)
            if len(cand) > len(tail):
                tail = cand
        best[v] = [v] + tail
        return best[v]

    top: list[str] = []
    for m in sorted(members):
        cand = down(m)
        if len(cand) > len(top):
            top = cand
    return top


def action_formula(calls: Sequence[ApiCall],
                   skills: Mapping[str, int] = DEFAULT_SKILLS) -> Formula:
    """Leaf formula: the API calls in order, as a right-nested Eventually."""
    if not calls:
        raise DomainError("a leaf needs at least one API call")
    for call in calls:
        if call.verb.lower() not in skills:
            raise DomainError(f"unknown skill {call.verb}")
    out: Formula = ltl.Eventually(ltl.Prop(calls[-1].prop))
    for call in reversed(calls[:-1]):
        out = ltl.Eventually(ltl.And(ltl.Prop(call.prop), out))
    return out


# ---------------------------------------------------------------------------
# Tree -> hierarchy


def construct(tree: TaskTree,
              skills: Mapping[str, int] = DEFAULT_SKILLS) -> HierSpec:
    """Assemble the level-indexed hierarchy for a task tree.

    Nodes are visited depth-first in document order and grouped by depth;
    each formula is named after its node.  Interior nodes contribute their
    ordering formula, leaves their action formula.
    """
    problems = validate_tree(tree, skills)
    if problems:
        raise DomainError("invalid task tree: " + "; ".join(problems))
    levels: list[list[SpecNode]] = []
    for nid in tree.walk():
        depth = tree.depth_of(nid)
        while len(levels) < depth:
            levels.append([])
        node = tree.nodes[nid]
        formula = (action_formula(node.actions, skills) if node.is_leaf
                   else generate_ltl(node.children, node.relations))
        levels[depth - 1].append(SpecNode(nid, formula))
    return HierSpec(levels)
