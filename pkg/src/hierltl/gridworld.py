"""Discrete grid worlds: robots, objects, named locations, synchronous steps.

Motion is 4-connected on a bounded grid with blocked cells; all robots move
at once, one cell per step.  Manipulation verbs take one step and no travel.
Every executed API call contributes its canonical proposition to the trace
at exactly the step it completes, which is what the hierarchy semantics and
the planner both consume.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from . import hierarchy, ltl
from .errors import CapacityError, DomainError
from .hierarchy import HierSpec
from .tasktree import DEFAULT_SKILLS, ApiCall

Cell = tuple[int, int]

DIRECTIONS: dict[str, Cell] = {
    "N": (0, 1),
    "S": (0, -1),
    "E": (1, 0),
    "W": (-1, 0),
}

MAX_DIM = 30


@dataclass(frozen=True)
class MoveStep:
    direction: str

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise DomainError(f"unknown direction {self.direction!r}")


@dataclass(frozen=True)
class Wait:
    pass


@dataclass(frozen=True)
class Api:
    call: ApiCall


Action = MoveStep | Wait | Api

WAIT = Wait()


def action_to_json(action: Action) -> dict:
    if isinstance(action, MoveStep):
        return {"type": "move", "dir": action.direction}
    if isinstance(action, Wait):
        return {"type": "wait"}
    return {"type": "api", "verb": action.call.verb, "args": list(action.call.args)}


def action_from_json(data: Mapping) -> Action:
    kind = data.get("type")
    if kind == "move":
        return MoveStep(str(data["dir"]))
    if kind == "wait":
        return WAIT
    if kind == "api":
        return Api(ApiCall(str(data["verb"]),
                           tuple(str(a) for a in data.get("args", ()))))
    raise DomainError(f"unknown action type {kind!r}")


class Scenario:
    """Immutable world description; validates every entity placement."""

    def __init__(self, width: int, height: int, *,
                 blocked: Iterable[Cell] = (),
                 cell_size: float = 0.25,
                 robots: Sequence[tuple[str, Cell]] = (),
                 objects: Sequence[tuple[str, Cell]] = (),
                 locations: Mapping[str, Iterable[Cell]] | None = None,
                 skills: Mapping[str, int] = DEFAULT_SKILLS,
                 max_dim: int = MAX_DIM):
        if not (1 <= width <= max_dim and 1 <= height <= max_dim):
            raise CapacityError(
                f"grid {width}x{height} outside the allowed 1..{max_dim} range")
        self.width = width
        self.height = height
        self.cell_size = float(cell_size)
        self.blocked = frozenset(tuple(c) for c in blocked)
        self.robots = tuple((str(r), tuple(c)) for r, c in robots)
        self.objects = tuple((str(o), tuple(c)) for o, c in objects)
        self.locations = {str(k): frozenset(tuple(c) for c in v)
                          for k, v in (locations or {}).items()}
        self.skills = dict(skills)
        self._check()

    def _check(self) -> None:
        for cell in self.blocked:
            if not self.in_bounds(cell):
                raise DomainError(f"blocked cell {cell} out of bounds")
        ids: set[str] = set()
        for rid, cell in self.robots:
            if rid in ids:
                raise DomainError(f"duplicate robot id {rid}")
            ids.add(rid)
            self._check_free(cell, f"robot {rid}")
        oids: set[str] = set()
        for oid, cell in self.objects:
            if oid in oids:
                raise DomainError(f"duplicate object id {oid}")
            oids.add(oid)
            self._check_free(cell, f"object {oid}")
        for name, cells in self.locations.items():
            if not cells:
                raise DomainError(f"location {name} has no cells")
            for cell in cells:
                self._check_free(cell, f"location {name}")

    def _check_free(self, cell: Cell, what: str) -> None:
        if not self.in_bounds(cell):
            raise DomainError(f"{what} at {cell} is out of bounds")
        if cell in self.blocked:
            raise DomainError(f"{what} at {cell} is on a blocked cell")

    def in_bounds(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def passable(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and cell not in self.blocked

    def robot_ids(self) -> tuple[str, ...]:
        return tuple(r for r, _ in self.robots)

    def robot_index(self, rid: str) -> int:
        for i, (r, _) in enumerate(self.robots):
            if r == rid:
                return i
        raise DomainError(f"unknown robot {rid}")

    def object_index(self, oid: str) -> int:
        for i, (o, _) in enumerate(self.objects):
            if o == oid:
                return i
        raise DomainError(f"unknown object {oid}")

    def region(self, name: str) -> frozenset[Cell]:
        try:
            return self.locations[name]
        except KeyError:
            raise DomainError(f"unknown location {name}") from None

    def to_json(self) -> dict:
        return {
            "format_version": 1,
            "grid": {"width": self.width, "height": self.height,
                     "blocked": sorted(list(c) for c in self.blocked),
                     "cell_size": self.cell_size},
            "robots": [{"id": r, "cell": list(c)} for r, c in self.robots],
            "objects": [{"id": o, "cell": list(c)} for o, c in self.objects],
            "locations": {k: sorted(list(c) for c in v)
                          for k, v in sorted(self.locations.items())},
            "skills": dict(sorted(self.skills.items())),
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "Scenario":
        try:
            grid = data["grid"]
            return cls(
                int(grid["width"]), int(grid["height"]),
                blocked=[tuple(c) for c in grid.get("blocked", ())],
                cell_size=float(grid.get("cell_size", 0.25)),
                robots=[(r["id"], tuple(r["cell"])) for r in data.get("robots", ())],
                objects=[(o["id"], tuple(o["cell"])) for o in data.get("objects", ())],
                locations={k: [tuple(c) for c in v]
                           for k, v in data.get("locations", {}).items()},
                skills=data.get("skills", DEFAULT_SKILLS),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DomainError(f"malformed scenario JSON: {exc}") from exc


@dataclass(frozen=True)
class JointState:
    """Robot cells, what each carries, object cells (None while carried)."""

    cells: tuple[Cell, ...]
    carrying: tuple[str | None, ...]
    object_cells: tuple[Cell | None, ...]
    step: int = 0

    def key(self) -> tuple:
        """Hashable identity without the step counter."""
        return (self.cells, self.carrying, self.object_cells)


def initial_state(scenario: Scenario) -> JointState:
    return JointState(
        cells=tuple(c for _, c in scenario.robots),
        carrying=(None,) * len(scenario.robots),
        object_cells=tuple(c for _, c in scenario.objects),
        step=0,
    )


def _object_cell(scenario: Scenario, state: JointState, oid: str) -> Cell | None:
    return state.object_cells[scenario.object_index(oid)]


def _in_region(scenario: Scenario, state: JointState, ridx: int,
               target: str) -> bool:
    cell = state.cells[ridx]
    if target in scenario.locations:
        return cell in scenario.locations[target]
    for oid, _ in scenario.objects:
        if oid == target:
            return _object_cell(scenario, state, oid) == cell
    raise DomainError(f"unknown location or object {target}")


def step(scenario: Scenario, state: JointState,
         moves: Mapping[str, Action]) -> JointState:
    """Advance one synchronous step. Robots without an entry wait.

    Raises a domain error naming the robot on any precondition violation,
    or naming both robots on a vertex or edge conflict.
    """
    ids = scenario.robot_ids()
    for rid in moves:
        scenario.robot_index(rid)
    actions = [moves.get(rid, WAIT) for rid in ids]

    old_cells = state.cells
    new_cells = list(old_cells)
    for i, act in enumerate(actions):
        if isinstance(act, MoveStep):
            dx, dy = DIRECTIONS[act.direction]
            dest = (old_cells[i][0] + dx, old_cells[i][1] + dy)
            if not scenario.passable(dest):
                raise DomainError(
                    f"robot {ids[i]} cannot move {act.direction} into {dest}")
            new_cells[i] = dest

    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            if new_cells[i] == new_cells[j]:
                raise DomainError(
                    f"vertex conflict: robots {ids[i]} and {ids[j]} "
                    f"both end on {new_cells[i]}")
            if new_cells[i] == old_cells[j] and new_cells[j] == old_cells[i]:
                raise DomainError(
                    f"edge conflict: robots {ids[i]} and {ids[j]} swap cells")

    carrying = list(state.carrying)
    object_cells = list(state.object_cells)
    for i, act in enumerate(actions):
        if not isinstance(act, Api):
            continue
        call = act.call
        verb = call.verb.lower()
        rid = ids[i]
        if verb not in scenario.skills:
            raise DomainError(f"robot {rid}: unknown skill {call.verb}")
        if len(call.args) != scenario.skills[verb]:
            raise DomainError(
                f"robot {rid}: {call.text} takes {len(call.args)} arguments, "
                f"{call.verb} needs {scenario.skills[verb]}")
        if verb == "pickup":
            oid = call.args[0]
            oidx = scenario.object_index(oid)
            if carrying[i] is not None:
                raise DomainError(
                    f"robot {rid} cannot {call.text}: already carrying "
                    f"{carrying[i]}")
            if object_cells[oidx] is None:
                raise DomainError(
                    f"robot {rid} cannot {call.text}: {oid} is already carried")
            if object_cells[oidx] != new_cells[i]:
                raise DomainError(
                    f"robot {rid} cannot {call.text}: not at {oid}")
            carrying[i] = oid
            object_cells[oidx] = None
        elif verb in ("move", "place"):
            oid, target = call.args
            oidx = scenario.object_index(oid)
            if carrying[i] != oid:
                raise DomainError(
                    f"robot {rid} cannot {call.text}: not carrying {oid}")
            if new_cells[i] not in scenario.region(target):
                raise DomainError(
                    f"robot {rid} cannot {call.text}: not inside {target}")
            carrying[i] = None
            object_cells[oidx] = new_cells[i]
        else:
            # Remaining skills only need the robot next to their target;
            # the world carries no further state for them.
            probe = JointState(tuple(new_cells), tuple(carrying),
                               tuple(object_cells), state.step)
            if not _in_region(scenario, probe, i, call.args[0]):
                raise DomainError(
                    f"robot {rid} cannot {call.text}: not at {call.args[0]}")

    return JointState(tuple(new_cells), tuple(carrying), tuple(object_cells),
                      state.step + 1)


@dataclass(frozen=True)
class PlanTrace:
    """Executed plan: per-step actions, induced prop trace, final state."""

    entries: tuple[tuple[int, str, Action], ...]
    props: ltl.Trace
    final: JointState

    @property
    def makespan(self) -> int:
        return len(self.props)

    def per_step(self) -> list[dict[str, Action]]:
        steps: list[dict[str, Action]] = [{} for _ in range(self.makespan)]
        for step_no, rid, action in self.entries:
            steps[step_no - 1][rid] = action
        return steps

    def to_json(self) -> dict:
        return {
            "format_version": 1,
            "steps": [
                [{"robot": rid, "action": action_to_json(act)}
                 for rid, act in sorted(moves.items())]
                for moves in self.per_step()
            ],
            "props": [sorted(v) for v in self.props],
        }

    @classmethod
    def from_json(cls, data: Mapping, scenario: Scenario) -> "PlanTrace":
        try:
            plan = [{entry["robot"]: action_from_json(entry["action"])
                     for entry in step_moves}
                    for step_moves in data["steps"]]
        except (KeyError, TypeError) as exc:
            raise DomainError(f"malformed plan JSON: {exc}") from exc
        return execute(scenario, plan)


def execute(scenario: Scenario,
            plan: Sequence[Mapping[str, Action]]) -> PlanTrace:
    """Run a per-step action plan from the initial state. Steps are 1-based."""
    state = initial_state(scenario)
    entries: list[tuple[int, str, Action]] = []
    props: list[frozenset[str]] = []
    for step_no, moves in enumerate(plan, start=1):
        state = step(scenario, state, moves)
        done: set[str] = set()
        for rid in scenario.robot_ids():
            action = moves.get(rid, WAIT)
            entries.append((step_no, rid, action))
            if isinstance(action, Api):
                done.add(action.call.prop)
        props.append(frozenset(done))
    return PlanTrace(tuple(entries), tuple(props), state)


def replay(scenario: Scenario, trace: PlanTrace) -> JointState:
    """Re-run the recorded actions; returns the final state it reaches."""
    return execute(scenario, trace.per_step()).final


def metrics(trace: PlanTrace, scenario: Scenario) -> tuple[float, int]:
    """(travel cost in meters, completion step of the last real action).

    Travel cost counts one cell size per move across all robots; manipulation
    is free.  Waiting at the end does not extend the completion time.
    """
    moves = sum(1 for _, _, act in trace.entries if isinstance(act, MoveStep))
    completion = 0
    for step_no, _, act in trace.entries:
        if not isinstance(act, Wait):
            completion = max(completion, step_no)
    return moves * scenario.cell_size, completion


ORACLE_CAP = 12


def check_success(trace: PlanTrace, spec: HierSpec, *,
                  serial: bool = False, mode: str = "auto") -> bool:
    """Whether the induced prop trace satisfies the hierarchy.

    mode "oracle" uses the exhaustive interval search (refuses long traces),
    "monitor" the automaton-based check, "auto" picks by trace length.
    """
    if mode not in ("auto", "oracle", "monitor"):
        raise DomainError(f"unknown check mode {mode!r}")
    if mode == "oracle" or (mode == "auto" and len(trace.props) <= ORACLE_CAP):
        ok, _ = hierarchy.satisfies(spec, trace.props, serial=serial)
        return ok
    return hierarchy.trace_feasible(spec, trace.props, serial=serial)
