"""Grid geometry used to turn zone-cleaning objectives into command templates."""

from __future__ import annotations

from collections import deque
from typing import Iterable

from .sim import Cell, cell_key, neighbours, parse_cell


def bfs_path(passable: set[Cell], start: Cell, goal: Cell) -> list[Cell] | None:
    """Shortest 4-connected path from start to goal, excluding ``start``.

    Neighbour expansion order is fixed (N, E, S, W) so paths are
    deterministic.
    """
    if start == goal:
        return []
    if goal not in passable:
        return None
    prev: dict[Cell, Cell] = {start: start}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for nb in neighbours(cur):
            if nb in prev or nb not in passable:
                continue
            prev[nb] = cur
            if nb == goal:
                path = [nb]
                while prev[path[-1]] != start:
                    path.append(prev[path[-1]])
                return path[::-1]
            queue.append(nb)
    return None


def distance(passable: set[Cell], start: Cell, goal: Cell) -> int | None:
    path = bfs_path(passable, start, goal)
    return None if path is None else len(path)


def zone_tour(
    zone_cells: dict[Cell, int],
    start: Cell,
    floor: set[Cell],
    blockers: dict[Cell, str],
    costs: dict[str, int],
) -> tuple[list[dict], int, Cell]:
    """Plan a nearest-neighbour cleaning tour over the dirty cells of a zone.

    ``zone_cells`` maps cell -> dirt.  ``blockers`` maps occupied cells to
    object ids; a blocked dirty cell is cleared by grasping its object from a
    neighbouring cell first.  Returns (templates, estimated energy, end cell).
    """
    passable = {c for c in floor if c not in blockers}
    todo = sorted(c for c, d in zone_cells.items() if d > 0)
    templates: list[dict] = []
    energy = 0
    pos = start
    holding = None
    while todo:
        best = None
        for c in todo:
            reach = passable | {c}
            d = distance(reach, pos, c) if c not in blockers else _approach_distance(passable, pos, c)
            if d is None:
                continue
            if best is None or d < best[0]:
                best = (d, c)
        if best is None:
            break
        _, cell = best
        todo.remove(cell)
        if cell in blockers:
            oid = blockers[cell]
            stand = _stand_cell(passable, pos, cell)
            steps = _walk(passable, pos, stand)
            templates += steps
            energy += len(steps) * costs["move"]
            pos = stand
            templates.append({"verb": "grasp", "args": {"object": oid}})
            energy += costs["grasp"]
            holding = oid
            passable = passable | {cell}
        steps = _walk(passable | {cell}, pos, cell)
        templates += steps
        energy += len(steps) * costs["move"]
        pos = cell
        for _ in range(zone_cells[cell]):
            templates.append({"verb": "clean_cell", "args": {"cell": cell_key(cell)}})
            energy += costs["clean_cell"]
    if holding is not None:
        templates.append({"verb": "release", "args": {}})
        energy += costs["release"]
    return templates, energy, pos


def _walk(passable: set[Cell], start: Cell, goal: Cell) -> list[dict]:
    """One single-cell move template per step of the shortest path."""
    return [{"verb": "move", "args": {"to": cell_key(c)}} for c in bfs_path(passable, start, goal) or []]


def _stand_cell(passable: set[Cell], start: Cell, target: Cell) -> Cell | None:
    best = None
    for nb in neighbours(target):
        if nb not in passable:
            continue
        d = distance(passable, start, nb)
        if d is None:
            continue
        if best is None or d < best[0]:
            best = (d, nb)
    return None if best is None else best[1]


def _approach_distance(passable: set[Cell], start: Cell, target: Cell) -> int | None:
    stand = _stand_cell(passable, start, target)
    if stand is None:
        return None
    return distance(passable, start, stand) + 1


def cells_of(layout: dict, room: str) -> dict[Cell, int]:
    out = {}
    for entry in layout["cells"]:
        r = entry["room"]
        if r == room or r.startswith(room + "."):
            out[parse_cell(entry["cell"])] = int(entry["dirt"])
    return out


def leaf_rooms(layout: dict, under: str) -> list[str]:
    rooms = sorted({e["room"] for e in layout["cells"]})
    return [r for r in rooms if r == under or r.startswith(under + ".")]


def floor_cells(layout: dict) -> set[Cell]:
    return {parse_cell(e["cell"]) for e in layout["cells"]}


def blocker_map(layout: dict) -> dict[Cell, str]:
    return {parse_cell(o["cell"]): o["id"] for o in layout["objects"] if o.get("cell")}


def objects_touched(templates: Iterable[dict]) -> list[str]:
    return [t["args"]["object"] for t in templates if t["verb"] in ("grasp", "ask_owner")]
