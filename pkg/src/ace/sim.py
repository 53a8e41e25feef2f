"""Deterministic grid-world household used as the agent's environment.

Scenario files (YAML or JSON) declare the grid as character rows, a
parallel grid of dirt digits, a legend mapping characters to hierarchical
room ids (``kitchen.counters``), objects, the robot, the owner, physics
constants, an event schedule, hazard classes, and the agent's self-profile.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigurationError, ContractViolation, PrivilegeError

VERBS = ("move", "clean_cell", "grasp", "release", "ask_owner", "speak", "recharge", "api_call")

DEFAULT_CONSTANTS = {
    "cost.move": 1,
    "cost.clean_cell": 2,
    "cost.grasp": 1,
    "cost.release": 1,
    "cost.ask_owner": 0,
    "cost.speak": 0,
    "cost.recharge": 0,
    "cost.api_call": 0,
    "recharge_rate": 10,
    "battery_cap": 100,
    "max_dirt": 9,
}

Cell = tuple  # (row, col)


def cell_key(cell: Cell) -> str:
    return f"{cell[0]},{cell[1]}"


def parse_cell(value) -> Cell:
    if isinstance(value, str):
        r, c = value.split(",")
        return (int(r), int(c))
    r, c = value
    return (int(r), int(c))


def neighbours(cell: Cell) -> list[Cell]:
    r, c = cell
    return [(r - 1, c), (r, c + 1), (r + 1, c), (r, c - 1)]


def adjacent(a: Cell, b: Cell) -> bool:
    return abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1


def room_prefixes(room: str) -> list[str]:
    parts = room.split(".")
    return [".".join(parts[: i + 1]) for i in range(len(parts))]


@dataclass
class Tile:
    room: str
    dirt: int = 0


@dataclass
class Thing:
    cell: Cell | None
    graspable: bool = True
    tags: tuple[str, ...] = ()
    present: bool = True


@dataclass
class Robot:
    cell: Cell
    battery: int
    holding: str | None = None


@dataclass
class Owner:
    cell: Cell | None = None
    responds_after: int = 3


@dataclass
class HouseState:
    tiles: dict[Cell, Tile]
    objects: dict[str, Thing]
    robot: Robot
    owner: Owner = field(default_factory=Owner)
    tick: int = 0
    station: Cell | None = None
    constants: dict[str, Any] = field(default_factory=lambda: dict(DEFAULT_CONSTANTS))
    jammed: list[dict] = field(default_factory=list)
    requests: list[tuple[int, str]] = field(default_factory=list)
    utterances: list[str] = field(default_factory=list)
    outbound: list[dict] = field(default_factory=list)

    def cost(self, verb: str) -> int:
        return int(self.constants[f"cost.{verb}"])

    def occupied(self, cell: Cell) -> str | None:
        for oid in sorted(self.objects):
            thing = self.objects[oid]
            if thing.present and thing.cell == cell:
                return oid
        return None

    def passable(self, cell: Cell) -> bool:
        return cell in self.tiles and self.occupied(cell) is None


@dataclass(frozen=True)
class EffectorCommand:
    verb: str
    args: Mapping[str, Any] = field(default_factory=dict)
    tick: int | None = None

    def to_dict(self) -> dict:
        return {"verb": self.verb, "args": dict(self.args)}


@dataclass
class StepResult:
    accepted: bool
    reason: str | None
    cost: int
    percepts: dict
    telemetry: dict


def _reject(state: HouseState, reason: str) -> StepResult:
    return StepResult(False, reason, 0, {"rejected": reason}, _telemetry(state))


def _telemetry(state: HouseState) -> dict:
    return {"battery": state.robot.battery, "cell": cell_key(state.robot.cell)}


def _jammed(state: HouseState, verb: str) -> bool:
    room = state.tiles[state.robot.cell].room
    for fault in state.jammed:
        if fault.get("verb") == verb and fault.get("room", room) in room_prefixes(room):
            return True
    return False


def apply_command(state: HouseState, command: EffectorCommand) -> StepResult:
    """Apply one command in place.  Rejected commands cost nothing."""
    verb, args = command.verb, command.args
    if verb not in VERBS:
        raise ContractViolation(f"unknown verb {verb!r}")
    robot = state.robot
    if robot.battery <= 0 or state.cost(verb) > robot.battery:
        return _reject(state, "no-power")
    if _jammed(state, verb):
        return _reject(state, "effector-jammed")
    percepts: dict = {}

    if verb == "move":
        to = parse_cell(args["to"])
        if not adjacent(robot.cell, to):
            return _reject(state, "not-adjacent")
        if to not in state.tiles:
            return _reject(state, "wall")
        if state.occupied(to) is not None:
            return _reject(state, "blocked")
        robot.cell = to
    elif verb == "clean_cell":
        if "cell" in args and parse_cell(args["cell"]) != robot.cell:
            return _reject(state, "wrong-cell")
        tile = state.tiles[robot.cell]
        if tile.dirt <= 0:
            return _reject(state, "already-clean")
        tile.dirt -= 1
        percepts["dirt"] = tile.dirt
    elif verb == "grasp":
        oid = args["object"]
        thing = state.objects.get(oid)
        if thing is None or not thing.present or thing.cell is None:
            return _reject(state, "no-such-object")
        if robot.holding is not None:
            return _reject(state, "hands-full")
        if thing.cell != robot.cell and not adjacent(thing.cell, robot.cell):
            return _reject(state, "out-of-reach")
        if not thing.graspable:
            return _reject(state, "cannot-grasp")
        thing.cell = None
        robot.holding = oid
    elif verb == "release":
        if robot.holding is None:
            return _reject(state, "nothing-held")
        state.objects[robot.holding].cell = robot.cell
        robot.holding = None
    elif verb == "ask_owner":
        oid = args["object"]
        thing = state.objects.get(oid)
        if thing is None or not thing.present:
            return _reject(state, "no-such-object")
        if any(o == oid for _, o in state.requests):
            return _reject(state, "already-asked")
        state.requests.append((state.tick + state.owner.responds_after, oid))
        percepts["owner_due"] = state.tick + state.owner.responds_after
    elif verb == "speak":
        state.utterances.append(str(args.get("text", "")))
    elif verb == "recharge":
        if state.station is None or robot.cell != state.station:
            return _reject(state, "not-at-station")
        cap = int(state.constants["battery_cap"])
        robot.battery = min(cap, robot.battery + int(state.constants["recharge_rate"]))
    elif verb == "api_call":
        state.outbound.append({"endpoint": args.get("endpoint"), "body": args.get("body")})

    cost = state.cost(verb)
    robot.battery -= cost
    return StepResult(True, None, cost, percepts, _telemetry(state))


def step(state: HouseState, command: EffectorCommand) -> tuple[HouseState, StepResult]:
    """Pure transition: returns a new state and the step result."""
    new = copy.deepcopy(state)
    result = apply_command(new, command)
    if not result.accepted:
        return state, result
    return new, result


def owner_responses(state: HouseState) -> list[dict]:
    """Complete owner requests due at ``state.tick`` (in place); return WorldEvent payloads."""
    due = [(t, o) for t, o in state.requests if t <= state.tick]
    state.requests = [(t, o) for t, o in state.requests if t > state.tick]
    events = []
    for _, oid in due:
        thing = state.objects[oid]
        thing.present = False
        thing.cell = None
        events.append(
            {
                "event": "owner-response",
                "object": oid,
                "facts": {f"object.{oid}.present": False, f"object.{oid}.cell": None},
            }
        )
    return events


def oracle_snapshot(state: HouseState) -> dict[str, Any]:
    """Flat fact map of the world, used for predicate evaluation."""
    facts: dict[str, Any] = {"tick": state.tick}
    dirt: dict[str, int] = {}
    for cell in sorted(state.tiles):
        tile = state.tiles[cell]
        for prefix in room_prefixes(tile.room):
            dirt[prefix] = dirt.get(prefix, 0) + tile.dirt
    for room in sorted(dirt):
        facts[f"{room}.dirt"] = dirt[room]
    robot = state.robot
    facts["robot.battery"] = robot.battery
    facts["robot.cell"] = cell_key(robot.cell)
    facts["robot.holding"] = robot.holding
    facts["robot.at_station"] = state.station is not None and robot.cell == state.station
    for oid in sorted(state.objects):
        thing = state.objects[oid]
        facts[f"object.{oid}.present"] = thing.present
        facts[f"object.{oid}.cell"] = None if thing.cell is None else cell_key(thing.cell)
    facts["owner.pending"] = len(state.requests)
    facts["speech.count"] = len(state.utterances)
    return facts


def layout_view(state: HouseState) -> dict:
    """Geometry survey handed to the planner at start-up."""
    return {
        "cells": [
            {"cell": cell_key(c), "room": state.tiles[c].room, "dirt": state.tiles[c].dirt}
            for c in sorted(state.tiles)
        ],
        "objects": [
            {
                "id": oid,
                "cell": None if t.cell is None else cell_key(t.cell),
                "tags": list(t.tags),
            }
            for oid, t in sorted(state.objects.items())
            if t.present
        ],
        "station": None if state.station is None else cell_key(state.station),
        "robot": cell_key(state.robot.cell),
    }


def state_to_dict(state: HouseState) -> dict:
    return {
        "tick": state.tick,
        "tiles": {cell_key(c): [t.room, t.dirt] for c, t in sorted(state.tiles.items())},
        "objects": {
            oid: {
                "cell": None if t.cell is None else cell_key(t.cell),
                "graspable": t.graspable,
                "present": t.present,
            }
            for oid, t in sorted(state.objects.items())
        },
        "robot": {
            "cell": cell_key(state.robot.cell),
            "battery": state.robot.battery,
            "holding": state.robot.holding,
        },
        "requests": [[t, o] for t, o in state.requests],
        "utterances": list(state.utterances),
        "outbound": list(state.outbound),
    }


class Environment:
    """Owns the house state; only the holder of ``token`` may drive effectors."""

    def __init__(self, state: HouseState, token: object):
        self.state = state
        self._token = token
        self.log: list[dict] = []
        self.listeners: list = []

    def step(self, command: EffectorCommand, *, token: object) -> StepResult:
        if token is not self._token:
            raise PrivilegeError("environment effectors are reserved for Task Prosecution")
        result = apply_command(self.state, command)
        self.log.append(
            {
                "record": "env",
                "tick": self.state.tick,
                "command": command.to_dict(),
                "accepted": result.accepted,
                "reason": result.reason,
                "cost": result.cost,
                "battery": self.state.robot.battery,
                "cell": cell_key(self.state.robot.cell),
            }
        )
        for fn in self.listeners:
            fn(self.log[-1])
        return result

    def snapshot(self) -> dict[str, Any]:
        return oracle_snapshot(self.state)


# -- scenarios ----------------------------------------------------------------


@dataclass(frozen=True)
class ScheduledEvent:
    tick: int
    payload: Mapping[str, Any]
    target: str = "GlobalStrategy"
    effect: Mapping[str, Any] | None = None


@dataclass(frozen=True)
class EventSchedule:
    entries: tuple[ScheduledEvent, ...] = ()

    def __post_init__(self):
        ticks = [e.tick for e in self.entries]
        if ticks != sorted(ticks):
            object.__setattr__(
                self, "entries", tuple(sorted(self.entries, key=lambda e: e.tick))
            )

    def due(self, tick: int) -> list[ScheduledEvent]:
        return [e for e in self.entries if e.tick == tick]

    def pending_after(self, tick: int) -> bool:
        return any(e.tick > tick for e in self.entries)


def inject(schedule: EventSchedule, tick: int) -> list[ScheduledEvent]:
    return schedule.due(tick)


def apply_effect(state: HouseState, effect: Mapping[str, Any] | None) -> None:
    if not effect:
        return
    if "add_dirt" in effect:
        spec = effect["add_dirt"]
        cap = int(state.constants["max_dirt"])
        if "cell" in spec:
            cells = [parse_cell(spec["cell"])]
        else:
            cells = [c for c in sorted(state.tiles) if spec["room"] in room_prefixes(state.tiles[c].room)][:1]
        for c in cells:
            tile = state.tiles[c]
            tile.dirt = min(cap, tile.dirt + int(spec.get("amount", 1)))
    if "remove_object" in effect:
        thing = state.objects[effect["remove_object"]]
        thing.present = False
        thing.cell = None


@dataclass
class Scenario:
    name: str
    doc: dict
    state: HouseState
    schedule: EventSchedule
    zones: dict[str, dict]
    hazards: dict[str, dict]
    agent: dict
    knowledge: dict
    effectors: tuple[str, ...]
    budget: dict

    def initial_state(self) -> HouseState:
        return copy.deepcopy(self.state)


def _grid(rows: list[str], name: str) -> list[str]:
    if not rows or len({len(r) for r in rows}) != 1:
        raise ConfigurationError(f"{name} rows must be non-empty and equal length")
    return rows


def scenario_from_doc(doc: Mapping[str, Any]) -> Scenario:
    doc = copy.deepcopy(dict(doc))
    layout = _grid(list(doc["layout"]), "layout")
    dirt_rows = doc.get("dirt") or ["0" * len(layout[0])] * len(layout)
    _grid(dirt_rows, "dirt")
    if len(dirt_rows) != len(layout) or len(dirt_rows[0]) != len(layout[0]):
        raise ConfigurationError("dirt grid must match layout")
    legend = doc["legend"]
    constants = {**DEFAULT_CONSTANTS, **doc.get("constants", {})}
    tiles: dict[Cell, Tile] = {}
    for r, row in enumerate(layout):
        for c, ch in enumerate(row):
            if ch == "#":
                continue
            if ch not in legend:
                raise ConfigurationError(f"layout char {ch!r} missing from legend")
            d = dirt_rows[r][c]
            dirt = int(d) if d.isdigit() else 0
            if not 0 <= dirt <= int(constants["max_dirt"]):
                raise ConfigurationError(f"dirt {dirt} out of range at {r},{c}")
            tiles[(r, c)] = Tile(legend[ch], dirt)
    objects = {
        oid: Thing(
            cell=parse_cell(spec["cell"]),
            graspable=bool(spec.get("graspable", True)),
            tags=tuple(spec.get("tags", ())),
        )
        for oid, spec in sorted((doc.get("objects") or {}).items())
    }
    robot_doc = doc["robot"]
    robot = Robot(cell=parse_cell(robot_doc["cell"]), battery=int(robot_doc.get("battery", 100)))
    if robot.cell not in tiles:
        raise ConfigurationError("robot must start on a floor cell")
    if robot.battery < 0:
        raise ConfigurationError("battery must be non-negative")
    owner_doc = doc.get("owner") or {}
    owner = Owner(
        cell=parse_cell(owner_doc["cell"]) if owner_doc.get("cell") else None,
        responds_after=int(owner_doc.get("responds_after", 3)),
    )
    station = parse_cell(doc["station"]) if doc.get("station") else None
    state = HouseState(
        tiles=tiles,
        objects=objects,
        robot=robot,
        owner=owner,
        station=station,
        constants=constants,
        jammed=list((doc.get("faults") or {}).get("jammed", [])),
    )
    schedule = EventSchedule(
        tuple(
            ScheduledEvent(
                tick=int(e["tick"]),
                payload=e["payload"],
                target=e.get("target", "GlobalStrategy"),
                effect=e.get("effect"),
            )
            for e in doc.get("events") or []
        )
    )
    effectors = tuple(doc.get("effectors") or VERBS)
    return Scenario(
        name=doc.get("name", "scenario"),
        doc=doc,
        state=state,
        schedule=schedule,
        zones=dict(doc.get("zones") or {}),
        hazards=dict(doc.get("hazards") or {}),
        agent=dict(doc.get("agent") or {}),
        knowledge=dict(doc.get("knowledge") or {}),
        effectors=effectors,
        budget=dict(doc.get("budget") or {}),
    )


def builtin_scenarios() -> list[str]:
    root = resources.files("ace.data") / "scenarios"
    return sorted(p.name.removesuffix(".yaml") for p in root.iterdir() if p.name.endswith(".yaml"))


def read_scenario_doc(path_or_name: str | Path) -> dict:
    path = Path(path_or_name)
    if path.exists():
        text = path.read_text(encoding="utf-8")
    elif str(path_or_name) in builtin_scenarios():
        text = (resources.files("ace.data") / "scenarios" / f"{path_or_name}.yaml").read_text(encoding="utf-8")
    else:
        raise FileNotFoundError(f"no scenario at {path_or_name}")
    doc = yaml.safe_load(text)
    if not isinstance(doc, dict):
        raise ConfigurationError("scenario must be a mapping")
    return doc


def load_scenario(path_or_name: str | Path) -> Scenario:
    return scenario_from_doc(read_scenario_doc(path_or_name))
