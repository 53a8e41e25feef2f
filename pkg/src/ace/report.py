"""Read-only views over a run trace."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping

from .messaging import LayerId, MessageKind, dumps

VIEWS = ("interventions", "roadmaps", "decisions", "outcomes")


@dataclass(frozen=True)
class Filters:
    layer: str | None = None
    kind: str | None = None
    ticks: tuple[int, int] | None = None

    def __post_init__(self):
        if self.layer is not None and self.layer not in {l.value for l in LayerId} | {"Environment"}:
            raise ValueError(f"unknown layer {self.layer!r}")
        if self.kind is not None and self.kind not in {k.value for k in MessageKind}:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.ticks is not None and self.ticks[0] > self.ticks[1]:
            raise ValueError("tick range start exceeds end")

    def match(self, rec: Mapping) -> bool:
        if self.layer is not None and self.layer not in (rec.get("source"), rec.get("target")):
            return False
        if self.kind is not None and rec.get("kind") != self.kind:
            return False
        if self.ticks is not None and not self.ticks[0] <= rec.get("tick", -1) <= self.ticks[1]:
            return False
        return True


def parse_ticks(text: str) -> tuple[int, int]:
    """``A:B`` (inclusive), ``A:`` or ``:B``; a bare ``N`` means a single tick."""
    if ":" not in text:
        n = int(text)
        return (n, n)
    lo, hi = text.split(":", 1)
    return (int(lo) if lo else 0, int(hi) if hi else 2**63 - 1)


def load(lines: Iterable[str]) -> list[dict]:
    return [json.loads(line) for line in lines if line.strip()]


def envelopes(records: Iterable[Mapping], filters: Filters = Filters()) -> list[dict]:
    return [r for r in records if "seq" in r and filters.match(r)]


def render_envelopes(records: list[dict], filters: Filters = Filters()) -> list[str]:
    return [dumps(r) for r in envelopes(records, filters)]


def render_interventions(records: list[dict], filters: Filters = Filters()) -> list[str]:
    out = []
    for r in records:
        if r.get("record") != "intervention":
            continue
        probe = {"tick": r["tick"], "target": r["target"], "source": "Aspirational", "kind": r["action"]}
        if not filters.match(probe):
            continue
        subject = "" if r.get("subject") is None else f" subject=#{r['subject']}"
        out.append(f"tick {r['tick']:>4}  {r['action']:<9} -> {r['target']:<17} {r['effect']}{subject}  {r['rationale']}")
    return out


def _task_line(task: Mapping, allocation: Mapping) -> str:
    flags = []
    if task.get("essential"):
        flags.append("essential")
    if task.get("contingency"):
        flags.append("contingency")
    alloc = allocation.get(task["id"])
    spend = "unallocated" if alloc is None else f"energy {alloc['energy']}"
    prereq = f" after {','.join(task['prerequisites'])}" if task.get("prerequisites") else ""
    return f"    {task['id']:<24} {spend:<12} u={task['urgency']:.2f} i={task['importance']:.2f}{prereq} {' '.join(flags)}".rstrip()


def render_roadmaps(records: list[dict], filters: Filters = Filters()) -> list[str]:
    out = []
    prev: dict | None = None
    for r in envelopes(records, filters):
        if r["kind"] != "Roadmap" or r["verdict"] != "delivered":
            continue
        p = r["payload"]
        out.append(f"roadmap v{p['version']} (tick {r['tick']}, {p.get('trigger', 'plan')}) budget energy {p['budget']['energy']}")
        for t in p["tasks"]:
            out.append(_task_line(t, p["allocation"]))
        for d in p.get("deferred", []):
            out.append(f"    deferred {d['task']}: {d['reason']}")
        for a in p.get("abandoned", []):
            out.append(f"    abandoned {a['task']}: {a['reason']}")
        for risk in p.get("risks", []):
            out.append(f"    risk {risk['task']} on {risk['trigger']} -> {','.join(risk['contingency'])}")
        if prev is not None:
            before = {t["id"] for t in prev["tasks"]}
            after = {t["id"] for t in p["tasks"]}
            added, removed = sorted(after - before), sorted(before - after)
            moved = sorted(
                tid for tid in after & before
                if prev["allocation"].get(tid) != p["allocation"].get(tid)
            )
            out.append(f"    diff vs v{prev['version']}: +{added or '[]'} -{removed or '[]'} reallocated {moved or '[]'}")
        prev = p
    return out


def render_decisions(records: list[dict], filters: Filters = Filters()) -> list[str]:
    out = []
    for r in envelopes(records, filters):
        if r["verdict"] != "delivered" or r["source"] != "CognitiveControl":
            continue
        p = r["payload"]
        if r["kind"] == "TaskInstruction":
            out.append(f"tick {r['tick']:>4}  dispatch {p['task']['id']} attempt {p['attempt']} ({p['decision']})")
        elif r["kind"] == "Telemetry" and p.get("event") == "deliberation":
            opts = ", ".join(f"{o['id']}={o.get('score', 0):.2f}" for o in p["options"])
            out.append(f"tick {r['tick']:>4}  deliberation chose {p['chosen']} from [{opts}]")
        elif r["kind"] == "Telemetry" and p.get("event") == "escalation":
            out.append(f"tick {r['tick']:>4}  escalate {p.get('task')} ({p['reason']})")
        elif r["kind"] == "DilemmaEscalation":
            ids = ", ".join(o["id"] if isinstance(o, Mapping) else str(o) for o in p["options"])
            out.append(f"tick {r['tick']:>4}  dilemma over [{ids}] while running {p.get('current')}")
    return out


def render_outcomes(records: list[dict], filters: Filters = Filters()) -> list[str]:
    out = []
    for r in envelopes(records, filters):
        if r["kind"] != "OutcomeSignal" or r["source"] != "TaskProsecution" or r["verdict"] != "delivered":
            continue
        p = r["payload"]
        reason = f" ({p['reason']})" if p.get("reason") else ""
        out.append(
            f"tick {r['tick']:>4}  {p['task']:<24} {p['status']}{reason} attempt {p['attempt']} "
            f"commands {p['commands']} energy {p['resources_spent']['energy']}"
        )
    return out


RENDERERS = {
    "interventions": render_interventions,
    "roadmaps": render_roadmaps,
    "decisions": render_decisions,
    "outcomes": render_outcomes,
}


def inspect(lines: Iterable[str], filters: Filters = Filters(), view: str | None = None) -> list[str]:
    records = load(lines)
    if view is None:
        return render_envelopes(records, filters)
    if view not in RENDERERS:
        raise ValueError(f"unknown view {view!r}")
    return RENDERERS[view](records, filters)
