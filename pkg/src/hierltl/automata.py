"""Deterministic finite automata for co-safe LTL, built by formula progression.

States are the closure of the (simplified) input formula under one-step
progression, identified up to syntactic simplification.  The state labeled
True is accepting and absorbing; the state labeled False, when reachable, is
the unique dead state.  Transitions are stored per state against the state
formula's own support propositions, so a formula over a large alphabet never
materializes 2^|alphabet| symbols.
"""

from __future__ import annotations

import math
from collections import deque
from typing import Iterable, Sequence

from . import ltl
from .errors import CapacityError
from .ltl import FALSE, TRUE, Formula, NotCoSafeError, Valuation


class Dfa:
    """Deterministic automaton over valuations of a fixed alphabet."""

    def __init__(self, labels: Sequence[Formula], alphabet: Sequence[str],
                 support: Sequence[tuple[str, ...]],
                 delta: Sequence[dict[Valuation, int]]):
        self.labels = tuple(labels)
        self.alphabet = tuple(alphabet)
        self.initial = 0
        self.accepting = frozenset(
            i for i, f in enumerate(self.labels) if f == TRUE)
        dead = [i for i, f in enumerate(self.labels) if f == FALSE]
        self.dead = dead[0] if dead else None
        self._support = tuple(support)
        self._delta = tuple(delta)
        self._distances: list[float] | None = None

    @property
    def state_count(self) -> int:
        return len(self.labels)

    def label(self, state: int) -> Formula:
        return self.labels[state]

    def step(self, state: int, valuation: Iterable[str]) -> int:
        restricted = frozenset(valuation) & frozenset(self._support[state])
        return self._delta[state][restricted]

    def run(self, trace: Iterable[Iterable[str]]) -> int:
        state = self.initial
        for valuation in trace:
            state = self.step(state, valuation)
        return state

    def accepts(self, trace: Iterable[Iterable[str]]) -> bool:
        return self.run(trace) in self.accepting

    def successors(self, state: int) -> tuple[int, ...]:
        return tuple(sorted(set(self._delta[state].values())))

    def distance_to_accept(self, state: int) -> float:
        """Minimum number of symbols from state to an accepting state.

        math.inf for states that cannot reach acceptance (notably the dead
        state).  Computed once by backward breadth-first search.
        """
        if self._distances is None:
            dist = [math.inf] * self.state_count
            back: list[set[int]] = [set() for _ in range(self.state_count)]
            for src in range(self.state_count):
                for dst in self._delta[src].values():
                    back[dst].add(src)
            queue = deque()
            for acc in self.accepting:
                dist[acc] = 0
                queue.append(acc)
            while queue:
                node = queue.popleft()
                for prev in back[node]:
                    if dist[prev] is math.inf:
                        dist[prev] = dist[node] + 1
                        queue.append(prev)
            self._distances = dist
        return self._distances[state]

    # -- symbolic edge view -------------------------------------------------

    def edges(self) -> list[tuple[int, str, int]]:
        """(source, guard, target) triples; guards are literal conjunctions."""
        out = []
        for src in range(self.state_count):
            support = self._support[src]
            by_target: dict[int, list[int]] = {}
            for valuation, dst in self._delta[src].items():
                mask = 0
                for i, p in enumerate(support):
                    if p in valuation:
                        mask |= 1 << i
                by_target.setdefault(dst, []).append(mask)
            for dst in sorted(by_target):
                for cube_mask, care in _cover(by_target[dst], len(support)):
                    out.append((src, _guard_text(support, cube_mask, care), dst))
        return out

    def to_dot(self) -> str:
        lines = ["digraph dfa {", "  rankdir=LR;", '  hidden [shape=point, style=invis];']
        for i, f in enumerate(self.labels):
            shape = "doublecircle" if i in self.accepting else "circle"
            style = ', style=filled, fillcolor="#dddddd"' if i == self.dead else ""
            lines.append(f'  s{i} [shape={shape}, label="{ltl.to_text(f)}"{style}];')
        lines.append(f"  hidden -> s{self.initial};")
        for src, guard, dst in self.edges():
            lines.append(f'  s{src} -> s{dst} [label="{guard}"];')
        lines.append("}")
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {
            "format_version": 1,
            "alphabet": list(self.alphabet),
            "initial": self.initial,
            "accepting": sorted(self.accepting),
            "dead": self.dead,
            "states": [{"id": i, "label": ltl.to_text(f)}
                       for i, f in enumerate(self.labels)],
            "edges": [{"from": src, "guard": guard, "to": dst}
                      for src, guard, dst in self.edges()],
        }


def _cover(minterms: list[int], width: int) -> list[tuple[int, int]]:
    """Greedy cube cover of a set of minterms.

    Returns (value_mask, care_mask) pairs: a valuation v is inside the cube
    when v & care == value & care.  Cubes are expanded one dropped literal at
    a time while staying inside the on-set.
    """
    on = set(minterms)
    full_care = (1 << width) - 1
    covered: set[int] = set()
    cubes = []
    for term in sorted(on):
        if term in covered:
            continue
        value, care = term, full_care
        for bit in range(width):
            probe = care & ~(1 << bit)
            if _cube_inside(value, probe, width, on):
                care = probe
        cubes.append((value & care, care))
        covered.update(_cube_members(value, care, width))
    return cubes


def _cube_members(value: int, care: int, width: int) -> list[int]:
    free = [b for b in range(width) if not care >> b & 1]
    members = []
    for mask in range(1 << len(free)):
        term = value & care
        for i, bit in enumerate(free):
            if mask >> i & 1:
                term |= 1 << bit
        members.append(term)
    return members


def _cube_inside(value: int, care: int, width: int, on: set[int]) -> bool:
    return all(m in on for m in _cube_members(value, care, width))


def _guard_text(support: tuple[str, ...], value: int, care: int) -> str:
    lits = []
    for i, p in enumerate(support):
        if care >> i & 1:
            lits.append(p if value >> i & 1 else "!" + p)
    return " & ".join(lits) if lits else "T"


def compile_formula(f: Formula, *, max_states: int = 10_000) -> Dfa:
    """Progression-closure subset construction; state ids in discovery order."""
    if not ltl.is_sc_ltl(f):
        raise NotCoSafeError(f"not co-safe: {ltl.to_text(f)}")
    root = ltl.simplify(f)
    alphabet = ltl.props(root)
    order = {p: i for i, p in enumerate(alphabet)}

    labels: list[Formula] = [root]
    index: dict[Formula, int] = {root: 0}
    support: list[tuple[str, ...]] = []
    delta: list[dict[Valuation, int]] = []

    queue = deque([0])
    while queue:
        state = queue.popleft()
        formula = labels[state]
        sup = tuple(sorted(ltl.props(formula), key=order.__getitem__))
        moves: dict[Valuation, int] = {}
        for mask in range(1 << len(sup)):
            valuation = frozenset(p for i, p in enumerate(sup) if mask >> i & 1)
            succ = ltl.progress(formula, valuation)
            target = index.get(succ)
            if target is None:
                target = len(labels)
                if target >= max_states:
                    raise CapacityError(
                        f"automaton exceeds {max_states} states for "
                        f"{ltl.to_text(root)}")
                labels.append(succ)
                index[succ] = target
                queue.append(target)
            moves[valuation] = target
        while len(support) <= state:
            support.append(())
            delta.append({})
        support[state] = sup
        delta[state] = moves
    return Dfa(labels, alphabet, support, delta)
