"""Hierarchical co-safe LTL specifications.

A hierarchy has K levels of named formulas.  A proposition inside a formula
at level k < K is *composite*: it must name a formula one level down, and
every formula below the top level must be referenced by exactly one formula
at the next higher level, so the name graph is a tree with a single root.
Atomic propositions appear exclusively at the bottom level.

Satisfaction assigns every non-root formula a closed step interval inside
its parent's interval (the root owns the whole trace).  Bottom formulas are
checked directly on their trace segment; higher formulas see each child as a
proposition that pulses exactly at the child's interval end step.  Sibling
intervals may overlap by default; serial mode forbids any overlap.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

from . import automata, ltl
from .errors import CapacityError, DomainError
from .ltl import Formula, Trace

COMPOSITE_NAME_RE = re.compile(r"^(task(_\d+)+|phi_\d+_\d+)$")

IntervalAssignment = dict[str, tuple[int, int]]


@dataclass(frozen=True)
class SpecNode:
    name: str
    formula: Formula


@dataclass(frozen=True)
class Violation:
    rule: str
    formula: str | None = None
    prop: str | None = None
    message: str = ""

    def __str__(self) -> str:
        where = f" in {self.formula}" if self.formula else ""
        return f"[{self.rule}]{where}: {self.message}"


class HierSpec:
    """Named formulas arranged level-major; levels[0] is the top level."""

    def __init__(self, levels: Sequence[Sequence[SpecNode]]):
        self.levels: tuple[tuple[SpecNode, ...], ...] = tuple(
            tuple(level) for level in levels)
        if not self.levels or not any(self.levels):
            raise DomainError("a hierarchy needs at least one formula")

    @property
    def depth(self) -> int:
        return len(self.levels)

    def names(self) -> tuple[str, ...]:
        return tuple(n.name for level in self.levels for n in level)

    def level_of(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for k, level in enumerate(self.levels):
            for node in level:
                out.setdefault(node.name, k)
        return out

    def formula_map(self) -> dict[str, Formula]:
        return {n.name: n.formula for level in self.levels for n in level}

    @property
    def root(self) -> SpecNode:
        return self.levels[0][0]

    def children_of(self, name: str) -> tuple[str, ...]:
        """Composite propositions of a formula, in first-occurrence order.

        Meaningful on validated hierarchies, where every proposition of a
        non-bottom formula names a formula one level down.
        """
        level = self.level_of()
        k = level[name]
        if k == self.depth - 1:
            return ()
        below = {n.name for n in self.levels[k + 1]}
        return tuple(p for p in ltl.props(self.formula_map()[name]) if p in below)

    def to_json(self) -> dict:
        return {
            "format_version": 1,
            "levels": [
                [{"name": n.name, "formula": ltl.to_text(n.formula)} for n in level]
                for level in self.levels
            ],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "HierSpec":
        try:
            levels = [
                [SpecNode(str(item["name"]), ltl.parse(str(item["formula"])))
                 for item in level]
                for level in data["levels"]
            ]
        except (KeyError, TypeError) as exc:
            raise DomainError(f"malformed hierarchy JSON: {exc}") from exc
        return cls(levels)

    def to_dot(self) -> str:
        lines = ["digraph hierarchy {", "  rankdir=TB;"]
        for k, level in enumerate(self.levels):
            for node in level:
                label = f"{node.name}\\n{ltl.to_text(node.formula)}"
                lines.append(f'  "{node.name}" [shape=box, label="{label}"];')
        level = self.level_of()
        for name in self.names():
            for child in self.children_of(name):
                lines.append(f'  "{name}" -> "{child}";')
        lines.append("}")
        return "\n".join(lines)


def auto_name(level: int, index: int) -> str:
    """Default formula name: 1-based level and within-level index."""
    return f"phi_{level}_{index}"


def spec_from_texts(levels: Sequence[Sequence[str]]) -> HierSpec:
    """Build a hierarchy from formula texts, naming each phi_<level>_<index>."""
    built = []
    for k, level in enumerate(levels, start=1):
        built.append([SpecNode(auto_name(k, i), ltl.parse(text))
                      for i, text in enumerate(level, start=1)])
    return HierSpec(built)


# ---------------------------------------------------------------------------
# Validation


def validate(spec: HierSpec) -> list[Violation]:
    """Check the three hierarchy rules plus naming and rootedness.

    Returns an empty list on a well-formed hierarchy; violations carry the
    rule id (rule-1, rule-2, rule-3, unresolved, multi-root, duplicate-name,
    not-co-safe).
    """
    out: list[Violation] = []
    seen: set[str] = set()
    for level in spec.levels:
        for node in level:
            if node.name in seen:
                out.append(Violation("duplicate-name", node.name,
                                     message=f"name {node.name} defined twice"))
            seen.add(node.name)

    if len(spec.levels[0]) != 1:
        out.append(Violation(
            "multi-root", None,
            message=f"top level holds {len(spec.levels[0])} formulas, expected 1"))

    level_of = spec.level_of()
    bottom = spec.depth - 1
    refs: dict[str, set[str]] = {}

    for k, level in enumerate(spec.levels):
        for node in level:
            if not ltl.is_sc_ltl(node.formula):
                out.append(Violation("not-co-safe", node.name,
                                     message="negation above a non-atom"))
                continue
            for prop in ltl.props(node.formula):
                resolved = level_of.get(prop)
                if k < bottom:
                    if resolved is None:
                        if COMPOSITE_NAME_RE.match(prop):
                            out.append(Violation(
                                "unresolved", node.name, prop,
                                f"composite {prop} names no formula"))
                        else:
                            out.append(Violation(
                                "rule-3", node.name, prop,
                                f"atomic proposition {prop} above the bottom level"))
                    elif resolved != k + 1:
                        out.append(Violation(
                            "rule-1", node.name, prop,
                            f"{prop} is at level {resolved + 1}, "
                            f"not the next level {k + 2}"))
                    else:
                        refs.setdefault(prop, set()).add(node.name)
                else:
                    if resolved is not None:
                        out.append(Violation(
                            "rule-1", node.name, prop,
                            f"bottom-level formula references composite {prop}"))

    for k, level in enumerate(spec.levels):
        if k == 0:
            continue
        for node in level:
            count = len(refs.get(node.name, ()))
            if count != 1:
                out.append(Violation(
                    "rule-2", node.name,
                    message=f"referenced by {count} formulas at level {k}, "
                            f"expected exactly 1"))
    return out


def leaf_specs(spec: HierSpec) -> tuple[SpecNode, ...]:
    """Bottom-level formulas in level-major, index-minor order."""
    return spec.levels[-1]


# ---------------------------------------------------------------------------
# Satisfaction


@lru_cache(maxsize=512)
def _dfa(formula: Formula) -> automata.Dfa:
    return automata.compile_formula(formula)


class _Evaluator:
    """Shared machinery for interval search over one spec and one trace."""

    def __init__(self, spec: HierSpec, trace: Trace, serial: bool):
        self.spec = spec
        self.trace = trace
        self.n = len(trace)
        self.serial = serial
        self.formulas = spec.formula_map()
        self.children = {name: spec.children_of(name) for name in spec.names()}
        self.root = spec.root.name

    def pulse_trace(self, s: int, e: int, ends: Mapping[str, int]) -> Trace:
        steps = []
        for j in range(s, e + 1):
            steps.append(frozenset(c for c, end in ends.items() if end == j))
        return tuple(steps)


class _Exhaustive(_Evaluator):
    """Reference oracle: exhaustive search over interval assignments."""

    def __init__(self, spec: HierSpec, trace: Trace, serial: bool):
        super().__init__(spec, trace, serial)
        self._feasible: dict[tuple[str, int, int], bool] = {}

    def feasible(self, name: str, s: int, e: int) -> bool:
        key = (name, s, e)
        got = self._feasible.get(key)
        if got is not None:
            return got
        kids = self.children[name]
        if not kids:
            ok = ltl.evaluate(self.formulas[name], self.trace[s:e + 1])
        elif self.serial:
            ok = self._serial_ends(name, kids, s, e) is not None
        else:
            ok = self._overlap_ends(name, kids, s, e) is not None
        self._feasible[key] = ok
        return ok

    def feasible_from(self, name: str, s: int, e: int) -> int | None:
        """Smallest start s' >= s with a feasible window [s', e], else None."""
        for start in range(s, e + 1):
            if self.feasible(name, start, e):
                return start
        return None

    def _overlap_ends(self, name: str, kids: tuple[str, ...],
                      s: int, e: int) -> dict[str, int] | None:
        formula = self.formulas[name]
        ends: dict[str, int] = {}

        def rec(i: int) -> bool:
            if i == len(kids):
                return ltl.evaluate(formula, self.pulse_trace(s, e, ends))
            child = kids[i]
            for end in range(s, e + 1):
                if self.feasible_from(child, s, end) is None:
                    continue
                ends[child] = end
                if rec(i + 1):
                    return True
                del ends[child]
            return False

        return dict(ends) if rec(0) else None

    def _serial_ends(self, name: str, kids: tuple[str, ...],
                     s: int, e: int) -> dict[str, tuple[int, int]] | None:
        formula = self.formulas[name]
        windows: dict[str, tuple[int, int]] = {}

        def rec(remaining: frozenset[str], t0: int) -> bool:
            if not remaining:
                ends = {c: win[1] for c, win in windows.items()}
                return ltl.evaluate(formula, self.pulse_trace(s, e, ends))
            for child in sorted(remaining):
                for start in range(t0, e + 1):
                    for end in range(start, e + 1):
                        if not self.feasible(child, start, end):
                            continue
                        windows[child] = (start, end)
                        if rec(remaining - {child}, end + 1):
                            return True
                        del windows[child]
            return False

        return dict(windows) if rec(frozenset(kids), s) else None

    def witness(self, name: str, s: int, e: int) -> IntervalAssignment | None:
        """Windows for the whole subtree, assuming feasible(name, s, e)."""
        kids = self.children[name]
        if not kids:
            return {}
        if self.serial:
            wins = self._serial_ends(name, kids, s, e)
            if wins is None:
                return None
            out: IntervalAssignment = {}
            for child, (cs, ce) in wins.items():
                out[child] = (cs, ce)
                sub = self.witness(child, cs, ce)
                if sub is None:
                    return None
                out.update(sub)
            return out
        ends = self._overlap_ends(name, kids, s, e)
        if ends is None:
            return None
        out = {}
        for child, end in ends.items():
            start = self.feasible_from(child, s, end)
            if start is None:
                return None
            out[child] = (start, end)
            sub = self.witness(child, start, end)
            if sub is None:
                return None
            out.update(sub)
        return out


class _PulseDp(_Evaluator):
    """Polynomial check via automaton runs; used to monitor long traces."""

    def __init__(self, spec: HierSpec, trace: Trace, serial: bool):
        super().__init__(spec, trace, serial)
        self._ec: dict[tuple[str, int], int | None] = {}
        self._leaf_min_end: dict[str, list[int | None]] = {}

    def earliest_completion(self, name: str, s_lo: int) -> int | None:
        """Earliest feasible window end for a window starting at or after s_lo."""
        if s_lo >= self.n:
            return None
        key = (name, s_lo)
        if key in self._ec:
            return self._ec[key]
        here = self._fixed_start(name, s_lo)
        later = self.earliest_completion(name, s_lo + 1)
        best = min((v for v in (here, later) if v is not None), default=None)
        self._ec[key] = best
        return best

    def _fixed_start(self, name: str, s: int) -> int | None:
        kids = self.children[name]
        if not kids:
            return self._leaf_ends(name)[s]
        if self.serial:
            return self._serial_fixed(name, kids, s)
        return self._overlap_fixed(name, kids, s)

    def _leaf_ends(self, name: str) -> list[int | None]:
        got = self._leaf_min_end.get(name)
        if got is not None:
            return got
        dfa = _dfa(self.formulas[name])
        ends: list[int | None] = []
        for s in range(self.n):
            state = dfa.initial
            end: int | None = None
            for i in range(s, self.n):
                state = dfa.step(state, self.trace[i])
                if state in dfa.accepting:
                    end = i
                    break
                if state == dfa.dead:
                    break
            ends.append(end)
        self._leaf_min_end[name] = ends
        return ends

    def _overlap_fixed(self, name: str, kids: tuple[str, ...],
                       s: int) -> int | None:
        floors = []
        for child in kids:
            floor = self.earliest_completion(child, s)
            if floor is None:
                return None
            floors.append(floor)
        dfa = _dfa(self.formulas[name])
        all_done = frozenset(kids)
        frontier: set[tuple[int, frozenset[str]]] = {(dfa.initial, frozenset())}
        for i in range(s, self.n):
            avail = [c for c, f in zip(kids, floors) if f <= i]
            nxt: set[tuple[int, frozenset[str]]] = set()
            for state, done in frontier:
                pending = [c for c in avail if c not in done]
                for mask in range(1 << len(pending)):
                    pulses = frozenset(
                        c for b, c in enumerate(pending) if mask >> b & 1)
                    after = dfa.step(state, pulses)
                    if after == dfa.dead:
                        continue
                    done2 = done | pulses
                    if done2 == all_done and after in dfa.accepting:
                        return i
                    nxt.add((after, done2))
            frontier = nxt
            if not frontier:
                return None
        return None

    def _serial_fixed(self, name: str, kids: tuple[str, ...],
                      s: int) -> int | None:
        dfa = _dfa(self.formulas[name])
        memo: dict[tuple[frozenset[str], int, int], int | None] = {}

        def go(remaining: frozenset[str], t0: int, state: int) -> int | None:
            if state == dfa.dead:
                return None
            if not remaining:
                if state in dfa.accepting:
                    return t0 - 1
                cur = state
                for i in range(t0, self.n):
                    cur = dfa.step(cur, frozenset())
                    if cur in dfa.accepting:
                        return i
                    if cur == dfa.dead:
                        return None
                return None
            key = (remaining, t0, state)
            if key in memo:
                return memo[key]
            best: int | None = None
            for child in sorted(remaining):
                floor = self.earliest_completion(child, t0)
                if floor is None:
                    continue
                cur = state
                for i in range(t0, self.n):
                    if i >= floor:
                        after = dfa.step(cur, frozenset((child,)))
                        sub = go(remaining - {child}, i + 1, after)
                        if sub is not None and (best is None or sub < best):
                            best = sub
                    cur = dfa.step(cur, frozenset())
                    if cur == dfa.dead:
                        break
            memo[key] = best
            return best

        return go(frozenset(kids), s, dfa.initial)


def _normalize(trace: Iterable[Iterable[str]]) -> Trace:
    return ltl.as_trace(trace)


def trace_feasible(spec: HierSpec, trace: Iterable[Iterable[str]],
                   *, serial: bool = False) -> bool:
    """Hierarchical satisfaction via automaton-based interval search.

    Polynomial-leaning alternative to satisfies() without a length cap; the
    two agree on every trace (differentially tested) but this one returns no
    witness.
    """
    t = _normalize(trace)
    if not t:
        return _empty_trace_case(spec)
    dp = _PulseDp(spec, t, serial)
    end = dp.earliest_completion(spec.root.name, 0)
    return end is not None


def _empty_trace_case(spec: HierSpec) -> bool:
    if spec.depth == 1:
        return ltl.evaluate(spec.root.formula, ())
    return False


def satisfies(spec: HierSpec, trace: Iterable[Iterable[str]], *,
              serial: bool = False,
              cap: int = 12) -> tuple[bool, IntervalAssignment | None]:
    """Reference oracle: exhaustive search over interval assignments.

    Returns (satisfied, witness); the witness maps every non-root formula to
    its interval.  Exponential in hierarchy width, so traces longer than
    `cap` steps are refused with a capacity error.
    """
    t = _normalize(trace)
    if len(t) > cap:
        raise CapacityError(
            f"trace of {len(t)} steps exceeds the oracle cap of {cap}; "
            f"use the automaton monitor for long traces")
    if not t:
        ok = _empty_trace_case(spec)
        return ok, ({} if ok else None)
    search = _Exhaustive(spec, t, serial)
    root = spec.root.name
    if not search.feasible(root, 0, len(t) - 1):
        return False, None
    witness = search.witness(root, 0, len(t) - 1)
    return True, witness
