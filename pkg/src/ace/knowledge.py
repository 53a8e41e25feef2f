"""Built-in domain knowledge for the rule-based cognition engine.

Strategy rules turn world facts (and mission keywords) into objectives.
Decomposition turns cleaning objectives into per-zone tasks with concrete
command templates.  Scenarios may extend both.
"""

from __future__ import annotations

import re
from typing import Any, Mapping

from . import planning
from . import predicates as P
from .plans import ResourceState, make_task
from .sim import parse_cell

# Lower band = higher priority.
STRATEGY_RULES: tuple[dict, ...] = (
    {
        "id": "infection-control",
        "when": P.fact("pandemic", "==", True),
        "text": "prioritize infectious disease treatment",
        "tags": ["medical"],
        "band": 0,
    },
    {
        "id": "rescue-kitten",
        "when": P.fact("pet.in_danger", "==", True),
        "text": "rescue the kitten",
        "tags": ["prevents-suffering"],
        "band": 0,
    },
    {
        "id": "defeat-zombie-king",
        "when": P.fact("invaders.zombies", "==", True),
        "text": "defeat the zombie king",
        "tags": ["quest"],
        "band": 1,
    },
    {
        "id": "quest-guidance",
        "when": P.fact("player.request", "==", "quest"),
        "text": "guide the hero on their quest",
        "tags": ["dialogue"],
        "requires": ["dialogue.quests"],
        "band": 1,
    },
    {
        "id": "romance-advice",
        "when": P.fact("player.request", "==", "romance"),
        "text": "give romance advice",
        "tags": ["dialogue"],
        "requires": ["dialogue.romance"],
        "band": 1,
    },
    {
        "id": "cook-feast",
        "when": P.fact("player.request", "==", "feast"),
        "text": "cook an elaborate feast",
        "tags": ["cooking"],
        "requires": ["cooking:complex"],
        "band": 1,
    },
    {
        "id": "routine-care",
        "mission_keywords": ["health", "patient"],
        "text": "diagnose and treat patients",
        "tags": ["medical"],
        "band": 1,
    },
)

_ROOM_DIRT = re.compile(r"^([A-Za-z_][\w-]*)\.dirt$")

ZONE_METHODS = {
    "counters": "clear counters",
    "dishwasher": "load the dishwasher",
    "floor": "sweep floors",
    "floors": "sweep floors",
    "table": "wipe the table",
    "sink": "scrub the sink",
}

HARM_WORDS = ("harm", "hurt", "injure", "poison", "kill", "steal", "deceive", "endanger")


def fact_tag(key: str) -> str:
    return f"fact:{key}"


def tag_facts(tags) -> list[str]:
    return [t[5:] for t in tags if t.startswith("fact:")]


def strategize(
    mission: str | None,
    facts: Mapping[str, Any],
    rules: tuple[dict, ...] | list[dict] = STRATEGY_RULES,
    banned: tuple[str, ...] | list[str] = (),
) -> list[dict]:
    """Objectives implied by the mission and the current facts, unsorted."""
    text = (mission or "").lower()
    out: dict[str, dict] = {}
    for key in sorted(facts):
        m = _ROOM_DIRT.match(key)
        value = facts[key]
        if m and isinstance(value, int) and not isinstance(value, bool) and value > 0:
            room = m.group(1)
            out[f"tidy-{room}"] = {
                "id": f"tidy-{room}",
                "text": f"tidy {room}",
                "tags": ["cleaning", fact_tag(key)],
                "requires": ["cleaning"],
                "band": 2,
                "magnitude": value,
            }
    for rule in rules:
        keywords = rule.get("mission_keywords")
        if keywords:
            if not any(k in text for k in keywords):
                continue
            tags = [*rule.get("tags", []), "mission-intrinsic"]
        elif "when" in rule:
            if not P.evaluate(rule["when"], facts):
                continue
            tags = [*rule.get("tags", []), *(fact_tag(k) for k in sorted(P.referenced_facts(rule["when"])))]
        else:
            continue
        obj = {
            "id": rule["id"],
            "text": rule["text"],
            "tags": tags,
            "requires": list(rule.get("requires", [])),
            "band": int(rule.get("band", 1)),
            "magnitude": 0,
        }
        if rule.get("harm"):
            obj["harm"] = True
        out[rule["id"]] = obj
    return [o for k, o in sorted(out.items()) if k not in set(banned)]


def rank_objectives(objectives: list[dict]) -> list[dict]:
    ranked = sorted(objectives, key=lambda o: (o.get("band", 1), -o.get("magnitude", 0), o["id"]))
    return [{**o, "priority": i} for i, o in enumerate(ranked, 1)]


# -- decomposition ------------------------------------------------------------


def _zone_method(zone: str) -> str:
    leaf = zone.rsplit(".", 1)[-1]
    return ZONE_METHODS.get(leaf, f"clean the {leaf.replace('_', ' ')}")


def _costs(world: Mapping) -> dict[str, int]:
    constants = world.get("constants", {})
    return {v: int(constants.get(f"cost.{v}", d)) for v, d in
            (("move", 1), ("clean_cell", 2), ("grasp", 1), ("release", 1))}


def clean_failures(costs: Mapping[str, int]) -> list[tuple[str, dict]]:
    return [
        ("battery-exhausted", P.fact("robot.battery", "<", costs["clean_cell"])),
        ("cannot-grasp", P.fact("task.last_rejection", "==", "cannot-grasp")),
        ("effector-jammed", P.fact("task.last_rejection", "==", "effector-jammed")),
    ]


def decompose(objectives: list[dict], world: Mapping, reactions: list[dict] = ()) -> list:
    """Turn objectives into TaskSpecs, estimating costs along a chained tour."""
    layout = world["layout"]
    zones: Mapping[str, Mapping] = world.get("zones", {})
    costs = _costs(world)
    floor = planning.floor_cells(layout)
    blockers = planning.blocker_map(layout)
    pos = parse_cell(layout["robot"])
    facts = world.get("facts", {})
    tasks = []

    for reaction in reactions:
        if P.evaluate(reaction["when"], facts):
            spec = reaction["task"]
            tasks.append(
                make_task(
                    spec["id"],
                    success=P.fact("task.accepted", ">=", len(spec["approach"])),
                    objective_ref=spec.get("objective_ref", "reaction"),
                    methodology=spec["methodology"],
                    approach=tuple(spec["approach"]),
                    cost=ResourceState(time=len(spec["approach"])),
                    essential=True,
                    urgency=float(spec.get("urgency", 1.0)),
                    importance=float(spec.get("importance", 1.0)),
                    tags=tuple(spec.get("tags", ("reaction",))),
                )
            )

    for obj in objectives:
        rooms = tag_facts(obj.get("tags", ()))
        if "cleaning" in obj.get("tags", ()) and rooms:
            room = rooms[0].removesuffix(".dirt")
            zone_names = [z for z in zones if z == room or z.startswith(room + ".")]
            if not zone_names:
                zone_names = planning.leaf_rooms(layout, room)
            # chain tours in the order the zones are likely to run
            zone_names.sort(key=lambda z: _zone_rank(zones.get(z, {}), z))
            for zone in zone_names:
                cells = planning.cells_of(layout, zone)
                if sum(cells.values()) == 0:
                    continue
                zdoc = zones.get(zone, {})
                templates, energy, end = planning.zone_tour(cells, pos, floor, blockers, costs)
                if not templates:
                    continue
                for cell in cells:
                    blockers.pop(cell, None)
                pos = end
                touched = planning.objects_touched(templates)
                tags = {t for oid in touched for t in _object_tags(layout, oid)}
                tasks.append(
                    make_task(
                        zone.replace(".", "-"),
                        success=P.fact(f"{zone}.dirt", "==", 0),
                        failures=clean_failures(costs),
                        objective_ref=obj["id"],
                        methodology=zdoc.get("method", _zone_method(zone)),
                        approach=tuple(templates),
                        cost=ResourceState(energy=energy, time=len(templates)),
                        essential=bool(zdoc.get("essential", False)),
                        urgency=float(zdoc.get("urgency", 0.5)),
                        importance=float(zdoc.get("importance", 0.5)),
                        tags=tuple(sorted({"cleaning", *zdoc.get("tags", ()), *tags})),
                        capabilities=("cleaning",),
                    )
                )
        else:
            approach = ({"verb": "speak", "args": {"text": obj["text"]}},)
            tasks.append(
                make_task(
                    obj["id"],
                    success=P.fact("task.accepted", ">=", 1),
                    objective_ref=obj["id"],
                    methodology=obj["text"],
                    approach=approach,
                    cost=ResourceState(time=1),
                    essential="mission-intrinsic" in obj.get("tags", ()),
                    urgency=0.5,
                    importance=max(0.1, 1.0 - 0.1 * (int(obj.get("priority", 1)) - 1)),
                    tags=tuple(t for t in obj.get("tags", ()) if not t.startswith("fact:")),
                    capabilities=tuple(obj.get("requires", ())),
                )
            )
    return tasks


def _zone_rank(zdoc: Mapping, name: str) -> tuple:
    u, i = float(zdoc.get("urgency", 0.5)), float(zdoc.get("importance", 0.5))
    return (not zdoc.get("essential", False), -(u * i), name)


def _object_tags(layout: Mapping, oid: str) -> list[str]:
    for o in layout["objects"]:
        if o["id"] == oid:
            return list(o.get("tags", ()))
    return []
