"""Layer 4: project roadmaps, resource allocation, risks and contingencies."""

from __future__ import annotations

from typing import Any, Iterable, Mapping, Sequence

from .. import predicates as P
from ..cognition import CognitionRequest, RequestKind
from ..messaging import Envelope, LayerId, MessageKind as K, thaw
from ..plans import RESOURCES, ResourceState, Risk, Roadmap, TaskSpec, make_task
from .base import Layer


def priority_key(task: TaskSpec) -> tuple:
    return (not task.essential, -(task.urgency * task.importance), task.id)


def allocate(tasks: Sequence[TaskSpec], budget: ResourceState) -> tuple[dict[str, dict], list[dict]]:
    """Greedy allocation in priority order.

    Essential tasks come first, then urgency*importance descending, ties by
    id.  A task that does not fit is deferred with ``insufficient-<resource>``.
    Once an essential task has been deferred for a resource, no non-essential
    task drawing on that resource is allocated.
    """
    remaining = budget
    blocked: list[str] = []
    allocation: dict[str, dict] = {}
    deferred: list[dict] = []
    for task in sorted(tasks, key=priority_key):
        short = remaining.shortfall(task.cost)
        if short is None and not task.essential:
            short = next((r for r in blocked if getattr(task.cost, r) > 0), None)
        if short is None:
            allocation[task.id] = task.cost.to_dict()
            remaining = remaining.minus(task.cost)
            continue
        deferred.append({"task": task.id, "reason": f"insufficient-{short}"})
        if task.essential and short not in blocked:
            blocked.append(short)
    return allocation, deferred


def assess_risks(tasks: Sequence[TaskSpec], hazards: Mapping[str, Mapping],
                 objects: Mapping[str, Sequence[str]] | None = None) -> tuple[list[Risk], list[TaskSpec]]:
    """Attach a risk entry and contingency tasks to every task tagged with a declared hazard.

    ``objects`` maps object ids to their tags; hazard tags on objects a task
    grasps produce per-object contingencies (ask the owner to move it).
    """
    objects = objects or {}
    risks: list[Risk] = []
    contingencies: dict[str, TaskSpec] = {}
    for task in tasks:
        if task.contingency:
            continue
        for tag in sorted(set(task.tags) & set(hazards)):
            spec = hazards[tag]
            trigger = spec.get("trigger", tag)
            kind = spec.get("contingency", "report_skip")
            condition = P.fact("task.last_rejection", "==", trigger)
            grasped = [
                t["args"]["object"] for t in task.approach
                if t["verb"] == "grasp" and tag in objects.get(t["args"]["object"], ())
            ]
            if kind == "ask_owner" and grasped:
                ids = []
                for oid in grasped:
                    cid = f"ask-owner-{oid}"
                    ids.append(cid)
                    contingencies.setdefault(cid, make_task(
                        cid,
                        success=P.fact(f"object.{oid}.present", "==", False),
                        objective_ref=task.objective_ref,
                        methodology=f"ask the owner to move the {oid}",
                        approach=({"verb": "ask_owner", "args": {"object": oid}},),
                        essential=task.essential,
                        urgency=task.urgency,
                        importance=task.importance,
                        tags=("contingency", f"trigger:{task.id}"),
                        contingency=True,
                        await_ticks=int(spec.get("await", 5)),
                    ))
                risks.append(Risk(task.id, spec.get("risk", tag), trigger, condition, tuple(ids)))
            else:
                cid = f"report-{task.id}"
                contingencies.setdefault(cid, make_task(
                    cid,
                    success=P.fact("task.accepted", ">=", 1),
                    objective_ref=task.objective_ref,
                    methodology=f"report that {task.methodology} could not be done",
                    approach=({"verb": "speak", "args": {"text": f"{spec.get('risk', tag)}: skipping {task.id}"}},),
                    essential=False,
                    tags=("contingency", f"trigger:{task.id}"),
                    contingency=True,
                ))
                risks.append(Risk(task.id, spec.get("risk", tag), trigger, condition, (cid,), "report_skip"))
    return risks, list(contingencies.values())


def referenced(tasks: Iterable[TaskSpec]) -> set[str]:
    out: set[str] = set()
    for t in tasks:
        out |= P.referenced_facts(t.success_def)
    return out


class ExecutiveFunctionLayer(Layer):
    layer_id = LayerId.EXECUTIVE_FUNCTION

    def __init__(self, bus, engine, settings, *, budget: Mapping | None = None, reactions: Sequence[dict] = ()):
        super().__init__(bus, engine, settings)
        self.budget_cfg = ResourceState.from_dict(budget or {"energy": 100, "time": 1000})
        self.reactions = [dict(r) for r in reactions]
        self.params: dict | None = None
        self.layout: dict | None = None
        self.zones: dict = {}
        self.hazards: dict = {}
        self.constants: dict = {}
        self.facts: dict[str, Any] = {}
        self.battery: int | None = None
        self.roadmap: Roadmap | None = None
        self.version = 0
        self.completed: list[str] = []
        self.abandoned: list[dict] = []
        self.escalations: list[dict] = []
        self.waiting = False

    # -- inputs --

    def on_world_event(self, env: Envelope) -> None:
        p = thaw(env.payload)
        if p["event"] == "layout":
            self.layout = p["layout"]
            self.zones = p.get("zones", {})
            self.hazards = p.get("hazards", {})
            self.constants = p.get("constants", {})
            if self.waiting and self.params is not None:
                self.plan(self.params, trigger="layout")
            return
        facts = p.get("facts") or {}
        changed = [k for k in sorted(facts) if self.facts.get(k) != facts[k]]
        self.facts.update(facts)
        if p["event"] == "owner-response" and self.layout is not None:
            gone = {k.split(".")[1] for k, v in facts.items() if k.endswith(".present") and v is False}
            self.layout = {**self.layout, "objects": [o for o in self.layout["objects"] if o["id"] not in gone]}
        if changed and self.params is not None and self.roadmap is not None and self.material(changed):
            self.plan(self.params, trigger="world-delta")

    def material(self, changed: list[str]) -> bool:
        # contingency tasks report their own completion; their facts do not force a replan
        base = [t for t in self.roadmap.tasks if not t.contingency] if self.roadmap else []
        watched = referenced(base)
        for r in self.reactions:
            watched |= P.referenced_facts(r["when"])
        return bool(watched & set(changed))

    def on_telemetry(self, env: Envelope) -> None:
        p = thaw(env.payload)
        if "battery" in p and env.source.rank > self.layer_id.rank:
            self.battery = int(p["battery"])
        event = p.get("event")
        if event == "task-status" and p.get("status") == "success" and p["task"] not in self.completed:
            self.completed.append(p["task"])
        elif event == "escalation":
            self.escalations.append(p)
            self.replan_failure(p.get("task"), p.get("reason", "escalated"))

    def on_mission_params(self, env: Envelope) -> None:
        self.params = thaw(env.payload)
        self.plan(self.params, trigger="mission-params")

    def on_moral_judgment(self, env: Envelope) -> None:
        p = thaw(env.payload)
        self.send(LayerId.COGNITIVE_CONTROL, K.MORAL_JUDGMENT, p, correlation=env.correlation, salience=env.salience)

    def on_directive(self, env: Envelope) -> None:
        p = thaw(env.payload)
        if p.get("action") == "drop-tasks" and self.roadmap is not None:
            for tid in p.get("tasks", []):
                self.abandoned.append({"task": tid, "reason": "censored"})
            self.reissue("directive")
        elif p.get("action") == "replan" and self.params is not None:
            self.plan(self.params, trigger="directive")

    # -- planning --

    def resources(self) -> ResourceState:
        energy = self.budget_cfg.energy if self.battery is None else min(self.battery, self.budget_cfg.energy)
        return ResourceState(energy=max(0, energy), time=self.budget_cfg.time, money=self.budget_cfg.money)

    def _abandoned_ids(self) -> set[str]:
        return {a["task"] for a in self.abandoned}

    def plan(self, params: Mapping, trigger: str = "mission-params") -> Roadmap | None:
        feasible = [f["objective"] for f in params.get("feasible_objectives", [])]
        if not feasible:
            self.send_up(K.TELEMETRY, {"event": "nothing plannable", "strategic_ref": params.get("strategic_ref")},
                         salience=self.settings.salience_status)
            return None
        if self.layout is None:
            self.waiting = True
            return None
        self.waiting = False
        world = {"layout": self.layout, "zones": self.zones, "constants": self.constants, "facts": self.facts}
        request = CognitionRequest(
            RequestKind.PLAN,
            [("objectives", feasible), ("world", world), ("reactions", self.reactions)],
        )
        response = self.engine.evaluate(request)
        skip = set(self.completed) | self._abandoned_ids()
        tasks = [TaskSpec.from_dict(t) for t in response["tasks"] if t["id"] not in skip]
        return self._issue(tasks, trigger, params.get("strategic_ref"))

    def _issue(self, tasks: list[TaskSpec], trigger: str, mission_ref: str | None) -> Roadmap:
        objects = {o["id"]: o.get("tags", []) for o in (self.layout or {}).get("objects", [])}
        base = [t for t in tasks if not t.contingency]
        risks, contingencies = assess_risks(base, self.hazards, objects)
        kept = {t.id for t in contingencies}
        contingencies += [t for t in tasks if t.contingency and t.id not in kept]
        all_tasks = base + contingencies
        budget = self.resources()
        allocation, deferred = allocate(base, budget)
        checkpoints = []
        for ref in dict.fromkeys(t.objective_ref for t in base):
            members = [t.id for t in base if t.objective_ref == ref]
            tests = [t.success_def for t in base if t.objective_ref == ref]
            checkpoints.append({"after": members, "objective": ref, "test": P.all_of(*tests)})
        self.version += 1
        roadmap = Roadmap(
            version=self.version,
            mission_ref=mission_ref,
            tasks=tuple(all_tasks),
            budget=budget,
            checkpoints=tuple(checkpoints),
            risks=tuple(risks),
            allocation=allocation,
            deferred=tuple(deferred),
            completed=tuple(self.completed),
            abandoned=tuple(self.abandoned),
        )
        roadmap.validate()
        self.roadmap = roadmap
        payload = {**roadmap.to_dict(), "trigger": trigger}
        self.send(LayerId.COGNITIVE_CONTROL, K.ROADMAP, payload, correlation=mission_ref)
        if deferred:
            self.send_up(K.TELEMETRY, {"event": "tasks-deferred", "deferred": deferred, "version": self.version},
                         salience=self.settings.salience_status)
        return roadmap

    def reissue(self, trigger: str) -> Roadmap | None:
        if self.roadmap is None:
            return None
        gone = self._abandoned_ids() | set(self.completed)
        tasks = [t for t in self.roadmap.tasks if t.id not in gone]
        tasks = [t for t in tasks if not t.contingency or any(f"trigger:{x.id}" in t.tags for x in tasks)]
        return self._issue(tasks, trigger, self.roadmap.mission_ref)

    def replan_failure(self, task_id: str | None, reason: str) -> Roadmap | None:
        """Replace an escalated task by its contingency chain, or abandon it."""
        if self.roadmap is None or task_id is None or task_id not in self.roadmap.task_ids:
            return None
        if task_id in self.completed or task_id in self._abandoned_ids():
            return None
        chain = [c for r in self.roadmap.risks if r.task == task_id for c in r.contingency]
        if chain:
            self.abandoned.append({"task": task_id, "reason": "replaced-by-contingency"})
            promoted = []
            for t in self.roadmap.tasks:
                if t.id in chain:
                    d = t.to_dict()
                    d.update(contingency=False, tags=[x for x in t.tags if not x.startswith("trigger:")])
                    promoted.append(TaskSpec.from_dict(d))
            others = [t for t in self.roadmap.tasks if t.id not in chain and t.id != task_id
                      and t.id not in self.completed and t.id not in self._abandoned_ids()]
            return self._issue(promoted + others, f"escalation:{reason}", self.roadmap.mission_ref)
        self.abandoned.append({"task": task_id, "reason": f"escalated-{reason}"})
        return self.reissue(f"escalation:{reason}")

    def busy(self) -> bool:
        return False

    def state(self) -> dict:
        return {
            "params": self.params,
            "layout": self.layout,
            "zones": self.zones,
            "hazards": self.hazards,
            "constants": self.constants,
            "facts": dict(sorted(self.facts.items())),
            "battery": self.battery,
            "roadmap": None if self.roadmap is None else self.roadmap.to_dict(),
            "version": self.version,
            "completed": list(self.completed),
            "abandoned": list(self.abandoned),
            "escalations": list(self.escalations),
            "waiting": self.waiting,
        }

    def restore(self, state: Mapping) -> None:
        self.params = state["params"]
        self.layout = state["layout"]
        self.zones = state["zones"]
        self.hazards = state["hazards"]
        self.constants = state["constants"]
        self.facts = dict(state["facts"])
        self.battery = state["battery"]
        self.roadmap = None if state["roadmap"] is None else Roadmap.from_dict(state["roadmap"])
        self.version = state["version"]
        self.completed = list(state["completed"])
        self.abandoned = list(state["abandoned"])
        self.escalations = list(state["escalations"])
        self.waiting = state["waiting"]
