"""Simultaneous task allocation and planning over grid worlds.

plan() runs best-first search on the product of the joint robot state and
one automaton per formula in the hierarchy.  Leaf automata consume the
atomic propositions fired by robot API actions; each non-leaf automaton
consumes the names of children at the single step where the child's own
automaton first accepts (completion-instant pulse).  Any robot may fire any
proposition, so allocation falls out of the search rather than a separate
assignment phase.

Objectives: "travel" counts meters moved (waiting and manipulation free,
uniform-cost search) and "makespan" counts steps (A* with the automaton
distance-to-accept as heuristic; the maximum over automata is a lower bound
because every automaton consumes exactly one symbol per step).

greedy_plan() is the scalability fallback: it sequences leaves topologically
and routes one robot at a time, so it carries no optimality claim.
"""

from __future__ import annotations

import heapq
import itertools
import time
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from . import gridworld, hierarchy, ltl
from .errors import DomainError
from .gridworld import Action, Api, Cell, JointState, MoveStep, PlanTrace, Scenario, WAIT
from .hierarchy import HierSpec
from .ltl import Formula
from .tasktree import ApiCall

OBJECTIVES = ("travel", "makespan")

DEFAULT_TIMEOUT_S = 300.0
DEFAULT_NODE_CAP = 2_000_000


class Infeasible(DomainError):
    """No trace reachable in this scenario satisfies the hierarchy."""


class PlanTimeout(DomainError):
    """Budget exhausted; carries the best goal reached so far, if any."""

    def __init__(self, message: str, incumbent: "PlanResult | None" = None):
        super().__init__(message)
        self.incumbent = incumbent


@dataclass(frozen=True)
class PlanResult:
    objective: str
    objective_value: float
    travel_cost: float
    completion_time: int
    allocation: dict[str, tuple[str, ...]]
    trace: PlanTrace
    stats: dict

    def to_json(self) -> dict:
        return {
            "format_version": 1,
            "objective": self.objective,
            "objective_value": self.objective_value,
            "travel_cost": self.travel_cost,
            "completion_time": self.completion_time,
            "allocation": {k: list(v) for k, v in sorted(self.allocation.items())},
            "stats": dict(self.stats),
            "plan": self.trace.to_json(),
        }


# ---------------------------------------------------------------------------
# Grounding


def ground_props(spec: HierSpec, scenario: Scenario) -> dict[str, ApiCall]:
    """Resolve every leaf proposition to the API call it abbreviates.

    A proposition like move_plate_lower_rack is matched against the skill
    registry and the scenario's object/location names; failure to find
    exactly one reading is an error naming the proposition.
    """
    objects = [o for o, _ in scenario.objects]
    locations = list(scenario.locations)
    out: dict[str, ApiCall] = {}
    for node in hierarchy.leaf_specs(spec):
        for prop in ltl.props(node.formula):
            if prop in out:
                continue
            readings = _readings(prop, scenario.skills, objects, locations)
            if not readings:
                raise DomainError(f"cannot ground proposition {prop}")
            if len(readings) > 1:
                texts = ", ".join(c.text for c in readings)
                raise DomainError(f"proposition {prop} is ambiguous: {texts}")
            out[prop] = readings[0]
    return out


def _readings(prop: str, skills: Mapping[str, int], objects: Sequence[str],
              locations: Sequence[str]) -> list[ApiCall]:
    found = []
    for verb in sorted(skills):
        prefix = verb + "_"
        if not prop.startswith(prefix):
            continue
        rest = prop[len(prefix):]
        arity = skills[verb]
        if arity == 1:
            pool = objects if verb == "pickup" else [*objects, *locations]
            if rest in pool:
                found.append(ApiCall(verb, (rest,)))
        elif arity == 2:
            for obj in objects:
                if rest == obj:
                    continue
                if rest.startswith(obj + "_") and rest[len(obj) + 1:] in locations:
                    found.append(ApiCall(verb, (obj, rest[len(obj) + 1:])))
    return found


# ---------------------------------------------------------------------------
# Spec machinery shared by both planners


def completion_order_pairs(f: Formula) -> tuple[tuple[str, str], ...]:
    """Completion-order constraints a template formula imposes.

    A proposition conjoined with nested eventualities must complete before
    everything inside them: ◇(a ∧ ◇(b ∧ ◇c)) yields (a,b), (a,c), (b,c).
    """
    pairs: list[tuple[str, str]] = []

    def flatten(g: Formula) -> list[Formula]:
        if isinstance(g, ltl.And):
            return flatten(g.left) + flatten(g.right)
        return [g]

    def walk(g: Formula) -> None:
        if isinstance(g, ltl.Eventually):
            parts = flatten(g.operand)
            heads = [p.name for p in parts if isinstance(p, ltl.Prop)]
            tails = [p for p in parts if not isinstance(p, ltl.Prop)]
            for head in heads:
                for tail in tails:
                    for prop in ltl.props(tail):
                        pairs.append((head, prop))
            for tail in tails:
                walk(tail)
        elif isinstance(g, (ltl.And, ltl.Or, ltl.Until)):
            walk(g.left)
            walk(g.right)
        elif isinstance(g, (ltl.Not, ltl.Next)):
            walk(g.operand)

    walk(f)
    seen: dict[tuple[str, str], None] = {}
    for p in pairs:
        seen.setdefault(p)
    return tuple(seen)


class _Machine:
    """Compiled hierarchy: automata, child links, atom sets, sibling groups."""

    def __init__(self, spec: HierSpec, serial: bool):
        problems = hierarchy.validate(spec)
        if problems:
            raise DomainError(
                "hierarchy invalid: " + "; ".join(str(p) for p in problems))
        self.spec = spec
        self.serial = serial
        self.names = list(spec.names())
        self.index = {n: i for i, n in enumerate(self.names)}
        fmap = spec.formula_map()
        self.formulas = [fmap[n] for n in self.names]
        self.children = {n: spec.children_of(n) for n in self.names}
        self.is_leaf = {n: not self.children[n] for n in self.names}
        self.dfas = [hierarchy._dfa(f) for f in self.formulas]
        self.root = spec.root.name
        # Bottom-up update order: deepest level first, so child pulses are
        # known before their parent consumes them.
        self.order = [node.name for level in reversed(spec.levels)
                      for node in level]
        self.atoms: dict[str, frozenset[str]] = {}
        for name in self.order:
            if self.is_leaf[name]:
                self.atoms[name] = frozenset(ltl.props(fmap[name]))
            else:
                self.atoms[name] = frozenset().union(
                    *(self.atoms[c] for c in self.children[name]))
        self.groups = [(n, self.children[n], completion_order_pairs(fmap[n]))
                       for n in self.names if self.children[n]]

    def initial(self) -> tuple[int, ...]:
        return tuple(d.initial for d in self.dfas)

    def accepting(self, states: Sequence[int]) -> bool:
        return all(s in d.accepting for d, s in zip(self.dfas, states))

    def advance(self, states: Sequence[int], fired: frozenset[str],
                started: tuple[bool, ...] | None,
                ) -> tuple[tuple[int, ...], tuple[bool, ...] | None] | None:
        """One synchronous symbol for every automaton; None when rejected.

        `fired` holds the atomic props completed this step.  Rejection
        happens on a dead automaton or, in serial mode, on sibling overlap.
        """
        new = list(states)
        pulses: set[str] = set()
        active: set[str] = set()
        for name in self.order:
            i = self.index[name]
            dfa = self.dfas[i]
            if self.is_leaf[name]:
                symbol = fired & self.atoms[name]
            else:
                symbol = pulses & set(self.children[name])
            if fired & self.atoms[name]:
                active.add(name)
            was_accepting = states[i] in dfa.accepting
            new[i] = dfa.step(states[i], symbol)
            if new[i] == dfa.dead:
                return None
            if not was_accepting and new[i] in dfa.accepting:
                pulses.add(name)

        if not self.serial:
            return tuple(new), None

        assert started is not None
        for _, members, ordered in self.groups:
            firing = [m for m in members if m in active]
            if len(firing) > 1:
                return None
            for m in firing:
                for other in members:
                    if other == m:
                        continue
                    j = self.index[other]
                    open_before = (started[j]
                                   and states[j] not in self.dfas[j].accepting)
                    if open_before:
                        return None
            for v1, v2 in ordered:
                if v2 in active and states[self.index[v1]] not in \
                        self.dfas[self.index[v1]].accepting:
                    return None
        new_started = tuple(
            started[i] or (self.names[i] in active)
            for i in range(len(self.names)))
        return tuple(new), new_started

    def completion_steps(self, props: ltl.Trace) -> dict[str, int]:
        """1-based step at which each formula first accepts; absent if never."""
        states = list(self.initial())
        done: dict[str, int] = {}
        for step_no, valuation in enumerate(props, start=1):
            pulses: set[str] = set()
            for name in self.order:
                i = self.index[name]
                dfa = self.dfas[i]
                symbol = (valuation & self.atoms[name] if self.is_leaf[name]
                          else pulses & set(self.children[name]))
                was = states[i] in dfa.accepting
                states[i] = dfa.step(states[i], symbol)
                if not was and states[i] in dfa.accepting:
                    pulses.add(name)
                    done.setdefault(name, step_no)
        return done


def completion_steps(spec: HierSpec, props: Iterable[Iterable[str]]) -> dict[str, int]:
    """First-acceptance step per formula under the pulse-cascade semantics."""
    return _Machine(spec, serial=False).completion_steps(ltl.as_trace(props))


# ---------------------------------------------------------------------------
# Optimal search


def _candidate_actions(scenario: Scenario, state: JointState, ridx: int,
                       calls: Sequence[ApiCall]) -> list[Action]:
    out: list[Action] = [WAIT]
    x, y = state.cells[ridx]
    for direction, (dx, dy) in gridworld.DIRECTIONS.items():
        if scenario.passable((x + dx, y + dy)):
            out.append(MoveStep(direction))
    for call in calls:
        if _precondition(scenario, state, ridx, call):
            out.append(Api(call))
    return out


def _precondition(scenario: Scenario, state: JointState, ridx: int,
                  call: ApiCall) -> bool:
    verb = call.verb.lower()
    cell = state.cells[ridx]
    if verb == "pickup":
        oidx = scenario.object_index(call.args[0])
        return (state.carrying[ridx] is None
                and state.object_cells[oidx] == cell)
    if verb in ("move", "place"):
        return (state.carrying[ridx] == call.args[0]
                and cell in scenario.region(call.args[1]))
    target = call.args[0]
    if target in scenario.locations:
        return cell in scenario.locations[target]
    for oid, _ in scenario.objects:
        if oid == target:
            return state.object_cells[scenario.object_index(oid)] == cell
    return False


def plan(scenario: Scenario, spec: HierSpec, objective: str = "travel", *,
         serial: bool = False, timeout_s: float = DEFAULT_TIMEOUT_S,
         node_cap: int = DEFAULT_NODE_CAP) -> PlanResult:
    """Minimum-objective plan whose trace satisfies the hierarchy.

    Exact: uniform-cost for travel, A* with an admissible automaton-distance
    heuristic for makespan.  Raises Infeasible when the search space is
    exhausted, PlanTimeout (carrying any incumbent) on budget exhaustion.
    """
    if objective not in OBJECTIVES:
        raise DomainError(f"unknown objective {objective!r}")
    machine = _Machine(spec, serial)
    grounded = ground_props(spec, scenario)
    calls = [grounded[p] for p in sorted(grounded)]
    robot_ids = scenario.robot_ids()
    t0 = time.monotonic()

    def heuristic(dstates: tuple[int, ...]) -> float:
        if objective == "travel":
            return 0.0
        worst = 0.0
        for dfa, s in zip(machine.dfas, dstates):
            d = dfa.distance_to_accept(s)
            if d > worst:
                worst = d
        return worst

    start_j = gridworld.initial_state(scenario)
    start_started = (False,) * len(machine.names) if serial else None
    start_key = (start_j.key(), machine.initial(), start_started)
    h0 = heuristic(machine.initial())
    if h0 == float("inf"):
        raise Infeasible("the hierarchy is unsatisfiable from the start")

    # key -> (best g, parent key, joint action taken)
    best: dict[tuple, tuple[float, tuple | None, dict | None]] = {
        start_key: (0.0, None, None)}
    jstates: dict[tuple, JointState] = {start_key: start_j}
    heap: list[tuple[float, float, str, int, tuple]] = []
    counter = itertools.count()
    heapq.heappush(heap, (h0, 0.0, repr(start_key), next(counter), start_key))
    closed: set[tuple] = set()
    expanded = 0
    generated = 0
    incumbent: tuple[float, tuple] | None = None

    def build(goal_key: tuple) -> PlanResult:
        steps: list[dict[str, Action]] = []
        key = goal_key
        while True:
            _, parent, action = best[key]
            if parent is None:
                break
            steps.append(action)
            key = parent
        steps.reverse()
        trace = gridworld.execute(scenario, steps)
        return _finish(scenario, spec, machine, objective, trace,
                       {"expanded": expanded, "generated": generated,
                        "runtime_s": round(time.monotonic() - t0, 6),
                        "method": "optimal"}, serial)

    while heap:
        f, g, _, _, key = heapq.heappop(heap)
        if key in closed or g > best[key][0]:
            continue
        jkey, dstates, started = key
        if machine.accepting(dstates):
            return build(key)
        closed.add(key)
        expanded += 1
        if expanded > node_cap or time.monotonic() - t0 > timeout_s:
            inc = build(incumbent[1]) if incumbent else None
            what = "node cap" if expanded > node_cap else "timeout"
            raise PlanTimeout(
                f"{what} exhausted after {expanded} expansions", inc)

        state = jstates[key]
        per_robot = [_candidate_actions(scenario, state, i, calls)
                     for i in range(len(robot_ids))]
        for combo in itertools.product(*per_robot):
            moves = dict(zip(robot_ids, combo))
            try:
                nstate = gridworld.step(scenario, state, moves)
            except DomainError:
                continue
            fired = frozenset(a.call.prop for a in combo if isinstance(a, Api))
            adv = machine.advance(dstates, fired, started)
            if adv is None:
                continue
            ndstates, nstarted = adv
            if objective == "travel":
                cost = sum(scenario.cell_size for a in combo
                           if isinstance(a, MoveStep))
            else:
                cost = 1.0
            nkey = (nstate.key(), ndstates, nstarted)
            ng = g + cost
            old = best.get(nkey)
            if old is not None and old[0] <= ng:
                continue
            h = heuristic(ndstates)
            if h == float("inf"):
                continue
            best[nkey] = (ng, key, moves)
            jstates[nkey] = nstate
            generated += 1
            if machine.accepting(ndstates):
                if incumbent is None or ng < incumbent[0]:
                    incumbent = (ng, nkey)
            heapq.heappush(heap, (ng + h, ng, repr(nkey), next(counter), nkey))

    raise Infeasible("search space exhausted without satisfying the hierarchy")


def _finish(scenario: Scenario, spec: HierSpec, machine: _Machine,
            objective: str, trace: PlanTrace, stats: dict,
            serial: bool) -> PlanResult:
    if not gridworld.check_success(trace, spec, serial=serial):
        raise DomainError(
            "planner produced a trace the hierarchy oracle rejects; "
            "the specification is outside the supported template fragment")
    travel, completion = gridworld.metrics(trace, scenario)
    allocation: dict[str, set[str]] = {
        node.name: set() for node in hierarchy.leaf_specs(spec)}
    leaf_atoms = {node.name: machine.atoms[node.name]
                  for node in hierarchy.leaf_specs(spec)}
    for _, rid, action in trace.entries:
        if isinstance(action, Api):
            for leaf, atoms in leaf_atoms.items():
                if action.call.prop in atoms:
                    allocation[leaf].add(rid)
    value = travel if objective == "travel" else float(trace.makespan)
    return PlanResult(
        objective=objective,
        objective_value=value,
        travel_cost=travel,
        completion_time=completion,
        allocation={k: tuple(sorted(v)) for k, v in allocation.items()},
        trace=trace,
        stats=stats,
    )


# ---------------------------------------------------------------------------
# Greedy fallback


def _leaf_call_sequence(machine: _Machine, name: str,
                        grounded: Mapping[str, ApiCall]) -> list[ApiCall]:
    formula = machine.formulas[machine.index[name]]
    props = list(ltl.props(formula))
    pairs = set(completion_order_pairs(formula))
    ordered: list[str] = []
    remaining = list(props)
    while remaining:
        for p in remaining:
            if not any((q, p) in pairs for q in remaining if q != p):
                ordered.append(p)
                remaining.remove(p)
                break
        else:
            raise DomainError(f"leaf {name} has cyclic internal order")
    return [grounded[p] for p in ordered]


def _topo_leaves(machine: _Machine) -> list[str]:
    leaves = [n for n in machine.names if machine.is_leaf[n]]
    pos = {n: i for i, n in enumerate(leaves)}
    succ: dict[str, set[str]] = {n: set() for n in leaves}
    indeg = {n: 0 for n in leaves}
    for parent, members, ordered in machine.groups:
        for v1, v2 in ordered:
            if v1 not in machine.index or v2 not in machine.index:
                continue
            for a in _descendant_leaves(machine, v1):
                for b in _descendant_leaves(machine, v2):
                    if b not in succ[a]:
                        succ[a].add(b)
                        indeg[b] += 1
    out: list[str] = []
    ready = sorted((n for n in leaves if indeg[n] == 0), key=pos.get)
    while ready:
        n = ready.pop(0)
        out.append(n)
        for m in sorted(succ[n], key=pos.get):
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
        ready.sort(key=pos.get)
    if len(out) != len(leaves):
        raise DomainError("hierarchy order constraints are cyclic")
    return out


def _descendant_leaves(machine: _Machine, name: str) -> list[str]:
    if machine.is_leaf[name]:
        return [name]
    out: list[str] = []
    for c in machine.children[name]:
        out.extend(_descendant_leaves(machine, c))
    return out


def _bfs_path(scenario: Scenario, start: Cell, goals: frozenset[Cell],
              avoid: frozenset[Cell]) -> list[str] | None:
    """Shortest move sequence to any goal cell, None if unreachable."""
    if start in goals:
        return []
    frontier = deque([start])
    came: dict[Cell, tuple[Cell, str]] = {start: (start, "")}
    while frontier:
        cell = frontier.popleft()
        for direction in ("N", "E", "S", "W"):
            dx, dy = gridworld.DIRECTIONS[direction]
            dest = (cell[0] + dx, cell[1] + dy)
            if dest in came or not scenario.passable(dest) or dest in avoid:
                continue
            came[dest] = (cell, direction)
            if dest in goals:
                path: list[str] = []
                cur = dest
                while cur != start:
                    prev, d = came[cur]
                    path.append(d)
                    cur = prev
                return list(reversed(path))
            frontier.append(dest)
    return None


def _call_goals(scenario: Scenario, state: JointState,
                call: ApiCall) -> frozenset[Cell]:
    verb = call.verb.lower()
    if verb == "pickup":
        cell = state.object_cells[scenario.object_index(call.args[0])]
        if cell is None:
            raise DomainError(f"{call.args[0]} is being carried; cannot plan "
                              f"{call.text}")
        return frozenset((cell,))
    if verb in ("move", "place"):
        return scenario.region(call.args[1])
    target = call.args[0]
    if target in scenario.locations:
        return scenario.locations[target]
    cell = state.object_cells[scenario.object_index(target)]
    if cell is None:
        raise DomainError(f"{target} is being carried; cannot plan {call.text}")
    return frozenset((cell,))


def greedy_plan(scenario: Scenario, spec: HierSpec,
                objective: str = "travel", *,
                serial: bool = False) -> PlanResult:
    """Sequential one-leaf-at-a-time planner; sound but not optimal.

    Leaves run in a topological order of the hierarchy's completion-order
    constraints, each assigned to the robot adding the least objective.
    Robots not executing the current leaf stay parked, so sibling intervals
    never overlap and serial mode is honored for free.
    """
    if objective not in OBJECTIVES:
        raise DomainError(f"unknown objective {objective!r}")
    t0 = time.monotonic()
    machine = _Machine(spec, serial)
    grounded = ground_props(spec, scenario)
    robot_ids = scenario.robot_ids()
    state = gridworld.initial_state(scenario)
    timeline: list[dict[str, Action]] = []

    for leaf in _topo_leaves(machine):
        calls = _leaf_call_sequence(machine, leaf, grounded)
        candidates: list[tuple[float, int, list[Action]]] = []
        for ridx, rid in enumerate(robot_ids):
            parked = frozenset(c for i, c in enumerate(state.cells) if i != ridx)
            actions = _route_leaf(scenario, state, ridx, rid, calls, parked)
            if actions is None:
                continue
            moves = sum(1 for a in actions if isinstance(a, MoveStep))
            cost = (moves * scenario.cell_size if objective == "travel"
                    else float(len(actions)))
            candidates.append((cost, ridx, actions))
        if not candidates:
            raise Infeasible(f"no robot can execute leaf {leaf}")
        candidates.sort(key=lambda c: (c[0], c[1]))
        _, ridx, actions = candidates[0]
        rid = robot_ids[ridx]
        for action in actions:
            moves = {rid: action}
            state = gridworld.step(scenario, state, moves)
            timeline.append(moves)

    trace = gridworld.execute(scenario, timeline)
    return _finish(scenario, spec, machine, objective, trace,
                   {"expanded": 0, "generated": 0,
                    "runtime_s": round(time.monotonic() - t0, 6),
                    "method": "greedy"}, serial)


def _route_leaf(scenario: Scenario, state: JointState, ridx: int, rid: str,
                calls: Sequence[ApiCall],
                parked: frozenset[Cell]) -> list[Action] | None:
    """Route one robot through a leaf's calls; None if it cannot do them."""
    actions: list[Action] = []
    sim = state
    for call in calls:
        try:
            goals = _call_goals(scenario, sim, call)
        except DomainError:
            return None
        path = _bfs_path(scenario, sim.cells[ridx], goals, parked)
        if path is None:
            return None
        segment = [MoveStep(d) for d in path] + [Api(call)]
        try:
            for action in segment:
                sim = gridworld.step(scenario, sim, {rid: action})
        except DomainError:
            return None
        actions.extend(segment)
    return actions
