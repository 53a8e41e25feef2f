"""Plan data shared by Executive Function, Cognitive Control and Task Prosecution."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Any, Iterable, Mapping

from . import predicates as P
from .errors import ContractViolation, ValidationError
from .messaging import thaw

RESOURCES = ("energy", "time", "money")


@dataclass(frozen=True)
class ResourceState:
    energy: int = 0
    time: int = 0
    money: int = 0

    def __post_init__(self):
        for name in RESOURCES:
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")

    def __add__(self, other: "ResourceState") -> "ResourceState":
        return ResourceState(*(getattr(self, r) + getattr(other, r) for r in RESOURCES))

    def minus(self, other: "ResourceState") -> "ResourceState":
        return ResourceState(*(max(0, getattr(self, r) - getattr(other, r)) for r in RESOURCES))

    def shortfall(self, cost: "ResourceState") -> str | None:
        """Name of the first resource ``cost`` exceeds, or ``None`` if it fits."""
        for r in RESOURCES:
            if getattr(cost, r) > getattr(self, r):
                return r
        return None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "ResourceState":
        d = d or {}
        return cls(*(int(d.get(r, 0)) for r in RESOURCES))


@dataclass(frozen=True)
class TaskSpec:
    id: str
    objective_ref: str
    methodology: str
    approach: tuple
    success_def: Mapping
    failure_def: tuple = ()
    cost: ResourceState = field(default_factory=ResourceState)
    prerequisites: tuple[str, ...] = ()
    essential: bool = False
    urgency: float = 0.5
    importance: float = 0.5
    tags: tuple[str, ...] = ()
    capabilities: tuple[str, ...] = ()
    contingency: bool = False
    await_ticks: int = 0

    def __post_init__(self):
        for name in ("urgency", "importance"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} {v} outside [0, 1]")

    def success(self, facts: Mapping) -> bool:
        return P.evaluate(self.success_def, facts)

    def failure_reason(self, facts: Mapping) -> str | None:
        for clause in self.failure_def:
            if P.evaluate(clause["when"], facts):
                return clause["reason"]
        return None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "objective_ref": self.objective_ref,
            "methodology": self.methodology,
            "approach": thaw(list(self.approach)),
            "success_def": thaw(self.success_def),
            "failure_def": thaw(list(self.failure_def)),
            "cost": self.cost.to_dict(),
            "prerequisites": list(self.prerequisites),
            "essential": self.essential,
            "urgency": self.urgency,
            "importance": self.importance,
            "tags": list(self.tags),
            "capabilities": list(self.capabilities),
            "contingency": self.contingency,
            "await_ticks": self.await_ticks,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TaskSpec":
        d = thaw(d)
        return cls(
            id=d["id"],
            objective_ref=d.get("objective_ref", ""),
            methodology=d.get("methodology", ""),
            approach=tuple(d["approach"]),
            success_def=d["success_def"],
            failure_def=tuple(d.get("failure_def", ())),
            cost=ResourceState.from_dict(d.get("cost")),
            prerequisites=tuple(d.get("prerequisites", ())),
            essential=bool(d.get("essential", False)),
            urgency=float(d.get("urgency", 0.5)),
            importance=float(d.get("importance", 0.5)),
            tags=tuple(d.get("tags", ())),
            capabilities=tuple(d.get("capabilities", ())),
            contingency=bool(d.get("contingency", False)),
            await_ticks=int(d.get("await_ticks", 0)),
        )


def make_task(
    id: str,
    *,
    success: Mapping,
    failures: Iterable[tuple[str, Mapping]] = (),
    **kwargs: Any,
) -> TaskSpec:
    """Build a task whose failure clauses exclude its success definition.

    Each failure clause is conjoined with ``not success`` so the two
    definitions can never hold on the same state.
    """
    clauses = tuple(
        {"reason": reason, "when": P.all_of(when, P.negate(success))} for reason, when in failures
    )
    return TaskSpec(id=id, success_def=success, failure_def=clauses, **kwargs)


def definitions_exclusive(task: TaskSpec, base: Mapping | None = None) -> bool:
    preds = [task.success_def, *(c["when"] for c in task.failure_def)]
    for state in P.probe_states(preds, base):
        if task.success(state) and task.failure_reason(state) is not None:
            return False
    return True


@dataclass(frozen=True)
class Risk:
    task: str
    hazard: str
    trigger: str
    condition: Mapping
    contingency: tuple[str, ...]
    action: str = "insert_prerequisite"

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "hazard": self.hazard,
            "trigger": self.trigger,
            "condition": thaw(self.condition),
            "contingency": list(self.contingency),
            "action": self.action,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Risk":
        d = thaw(d)
        return cls(
            task=d["task"],
            hazard=d["hazard"],
            trigger=d["trigger"],
            condition=d["condition"],
            contingency=tuple(d["contingency"]),
            action=d.get("action", "insert_prerequisite"),
        )


@dataclass(frozen=True)
class Roadmap:
    version: int
    mission_ref: str | None
    tasks: tuple[TaskSpec, ...]
    budget: ResourceState
    checkpoints: tuple = ()
    risks: tuple[Risk, ...] = ()
    allocation: Mapping[str, Mapping] = field(default_factory=dict)
    deferred: tuple = ()
    completed: tuple[str, ...] = ()
    abandoned: tuple = ()

    def task(self, task_id: str) -> TaskSpec:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise KeyError(task_id)

    @property
    def task_ids(self) -> list[str]:
        return [t.id for t in self.tasks]

    def validate(self) -> None:
        ids = self.task_ids
        if len(ids) != len(set(ids)):
            raise ContractViolation("duplicate task ids in roadmap")
        known = set(ids)
        for risk in self.risks:
            missing = [c for c in risk.contingency if c not in known]
            if missing:
                raise ContractViolation(f"risk on {risk.task} names unknown contingency {missing}")
        if not acyclic({t.id: t.prerequisites for t in self.tasks}):
            raise ContractViolation("task dependency graph has a cycle")

    def with_(self, **changes) -> "Roadmap":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "mission_ref": self.mission_ref,
            "tasks": [t.to_dict() for t in self.tasks],
            "checkpoints": thaw(list(self.checkpoints)),
            "risks": [r.to_dict() for r in self.risks],
            "budget": self.budget.to_dict(),
            "allocation": {k: thaw(v) for k, v in sorted(self.allocation.items())},
            "deferred": thaw(list(self.deferred)),
            "completed": list(self.completed),
            "abandoned": thaw(list(self.abandoned)),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Roadmap":
        d = thaw(d)
        return cls(
            version=int(d["version"]),
            mission_ref=d.get("mission_ref"),
            tasks=tuple(TaskSpec.from_dict(t) for t in d["tasks"]),
            budget=ResourceState.from_dict(d.get("budget")),
            checkpoints=tuple(d.get("checkpoints", ())),
            risks=tuple(Risk.from_dict(r) for r in d.get("risks", ())),
            allocation=d.get("allocation", {}),
            deferred=tuple(d.get("deferred", ())),
            completed=tuple(d.get("completed", ())),
            abandoned=tuple(d.get("abandoned", ())),
        )


def acyclic(graph: Mapping[str, Iterable[str]]) -> bool:
    """True iff following prerequisite edges never revisits a node."""
    state: dict[str, int] = {}

    def visit(node: str) -> bool:
        mark = state.get(node, 0)
        if mark == 1:
            return False
        if mark == 2:
            return True
        state[node] = 1
        for nxt in graph.get(node, ()):
            if not visit(nxt):
                return False
        state[node] = 2
        return True

    return all(visit(n) for n in sorted(graph))
