"""Layer 5: task selection, switching, frustration, and cognitive damping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from ..cognition import CognitionRequest, RequestKind
from ..errors import ContractViolation, ProtocolError
from ..messaging import Envelope, LayerId, MessageKind as K, thaw
from ..plans import Roadmap, TaskSpec
from .base import Layer

ETHICAL_TAGS = frozenset({"prevents-suffering"})


# -- frustration ---------------------------------------------------------------


@dataclass(frozen=True)
class FrustrationState:
    window: tuple[bool, ...] = ()  # True = failure
    size: int = 5
    threshold: float = 0.6

    @property
    def failure_ratio(self) -> float:
        return sum(self.window) / len(self.window) if self.window else 0.0

    @property
    def frustrated(self) -> bool:
        return len(self.window) == self.size and self.failure_ratio >= self.threshold

    def to_dict(self) -> dict:
        return {
            "window": ["F" if f else "S" for f in self.window],
            "failure_ratio": self.failure_ratio,
            "threshold": self.threshold,
            "frustrated": self.frustrated,
        }


def update_frustration(state: FrustrationState, success: bool) -> FrustrationState:
    window = (state.window + (not success,))[-state.size:]
    return FrustrationState(window, state.size, state.threshold)


# -- selection -----------------------------------------------------------------


@dataclass(frozen=True)
class Weights:
    urgency: float = 0.4
    importance: float = 0.4
    cost: float = 0.2


def task_score(task: TaskSpec, max_energy: int, w: Weights = Weights()) -> float:
    norm = task.cost.energy / max_energy if max_energy > 0 else 0.0
    return w.urgency * task.urgency + w.importance * task.importance - w.cost * norm


def eligible(roadmap: Roadmap, completed: Iterable[str], available: Iterable[str] | None = None,
             extra_prereqs: Mapping[str, Sequence[str]] | None = None) -> list[TaskSpec]:
    """Tasks that are available (allocated unless given), not done, with prerequisites complete."""
    done = set(completed)
    avail = set(roadmap.allocation) if available is None else set(available)
    extra = extra_prereqs or {}
    out = []
    for t in roadmap.tasks:
        if t.id not in avail or t.id in done:
            continue
        if all(p in done for p in (*t.prerequisites, *extra.get(t.id, ()))):
            out.append(t)
    return out


def select_task(candidates: Sequence[TaskSpec], *, frustrated: bool = False, last_failed: str | None = None,
                weights: Weights = Weights()) -> TaskSpec | None:
    """Argmax of the weighted score; ties go to the smallest id."""
    pool = [t for t in candidates if not (frustrated and t.id == last_failed)]
    if not pool:
        return None
    max_energy = max(t.cost.energy for t in pool)
    return min(pool, key=lambda t: (-task_score(t, max_energy, weights), t.id))


def non_dominated(candidates: Sequence[TaskSpec]) -> list[TaskSpec]:
    """Pareto front on (urgency up, importance up, energy cost down)."""
    def dominates(a: TaskSpec, b: TaskSpec) -> bool:
        ge = a.urgency >= b.urgency and a.importance >= b.importance and a.cost.energy <= b.cost.energy
        gt = a.urgency > b.urgency or a.importance > b.importance or a.cost.energy < b.cost.energy
        return ge and gt

    return [t for t in candidates if not any(dominates(o, t) for o in candidates if o is not t)]


# -- damping -------------------------------------------------------------------


@dataclass(frozen=True)
class Deliberation:
    options: tuple[Mapping[str, Any], ...]
    chosen: str
    record: str

    def to_dict(self) -> dict:
        return {"options": thaw(list(self.options)), "chosen": self.chosen, "record": self.record}


def pros_cons(task: TaskSpec, max_energy: int) -> tuple[list[str], list[str]]:
    pros, cons = [], []
    (pros if task.urgency >= 0.5 else cons).append("urgent" if task.urgency >= 0.5 else "not urgent")
    (pros if task.importance >= 0.5 else cons).append("important" if task.importance >= 0.5 else "minor")
    if task.essential:
        pros.append("essential")
    norm = task.cost.energy / max_energy if max_energy > 0 else 0.0
    (pros if norm <= 0.5 else cons).append("affordable" if norm <= 0.5 else "expensive")
    return pros, cons


def damp(options: Sequence[Mapping[str, Any]], engine=None) -> Deliberation:
    """Score options by |pros| - |cons| plus a bounded engine adjustment."""
    if len(options) < 2:
        raise ContractViolation("damping needs at least two options")
    adjustments: Mapping[str, float] = {}
    if engine is not None:
        request = CognitionRequest(RequestKind.DELIBERATE, [("options", list(options))])
        adjustments = engine.evaluate(request)["adjustments"]
    scored = []
    for opt in options:
        adj = max(-0.5, min(0.5, float(adjustments.get(str(opt["id"]), 0.0))))
        score = len(opt.get("pros", ())) - len(opt.get("cons", ())) + adj
        scored.append({**thaw(opt), "score": score})
    best = min(scored, key=lambda o: (-o["score"], str(o["id"])))
    record = "; ".join(
        f"{o['id']}: +{len(o.get('pros', ()))}/-{len(o.get('cons', ()))} -> {o['score']:.2f}" for o in scored
    ) + f"; chose {best['id']}"
    return Deliberation(tuple(scored), str(best["id"]), record)


# -- failure policy ------------------------------------------------------------


@dataclass(frozen=True)
class Action:
    kind: str  # continue | retry | switch | escalate | insert_prerequisite | report_skip
    task: str | None = None
    contingency: tuple[str, ...] = ()
    reason: str = ""


def handle_failure(task_id: str, reason: str, roadmap: Roadmap, *, frustration: FrustrationState,
                   retries: int, retry_cap: int, used: Iterable[str] = ()) -> Action:
    used = set(used)
    for risk in roadmap.risks:
        if risk.task == task_id and risk.trigger == reason and not set(risk.contingency) <= used:
            kind = "insert_prerequisite" if risk.action == "insert_prerequisite" else "report_skip"
            return Action(kind, task_id, risk.contingency, reason)
    return should_switch_after_failure(task_id, frustration, retries, retry_cap)


def should_switch_after_failure(task_id: str, frustration: FrustrationState, retries: int, retry_cap: int) -> Action:
    if frustration.frustrated:
        return Action("escalate", task_id, reason="frustration")
    if retries < retry_cap:
        return Action("retry", task_id)
    return Action("switch", task_id, reason="retries-exhausted")


class CognitiveControlLayer(Layer):
    layer_id = LayerId.COGNITIVE_CONTROL

    def __init__(self, bus, engine, settings):
        super().__init__(bus, engine, settings)
        self.weights = Weights(settings.w_urgency, settings.w_importance, settings.w_cost)
        self.frustration = FrustrationState((), settings.window, settings.frustration_threshold)
        self.roadmap: Roadmap | None = None
        self.completed: list[str] = []
        self.skipped: list[str] = []
        self.inserted: dict[str, list[str]] = {}
        self.retries: dict[str, int] = {}
        self.parked: list[str] = []
        self.dispatched: str | None = None
        self.attempts: dict[str, int] = {}
        self.last_failed: str | None = None
        self.escalated = False
        self.next_task: str | None = None
        self.pending_dilemma: dict | None = None
        self.dilemmas = 0
        self.asked: list[str] = []
        self.idle_version: int | None = None
        self.decisions: list[dict] = []
        self.facts: dict[str, Any] = {}

    # -- views --

    def available(self) -> set[str]:
        if self.roadmap is None:
            return set()
        avail = set(self.roadmap.allocation)
        for cs in self.inserted.values():
            avail |= set(cs)
        return avail

    def candidates(self) -> list[TaskSpec]:
        if self.roadmap is None:
            return []
        done = set(self.completed) | set(self.skipped)
        pool = eligible(self.roadmap, done, self.available(), self.inserted)
        pool = [t for t in pool if t.id not in self.skipped]
        unparked = [t for t in pool if t.id not in self.parked]
        return unparked or pool

    def choose(self) -> tuple[TaskSpec | None, Deliberation | None]:
        pool = self.candidates()
        if self.frustration.frustrated:
            pool = [t for t in pool if t.id != self.last_failed] or []
        if not pool:
            return None, None
        front = non_dominated(pool)
        if len(front) >= 2:
            max_energy = max(t.cost.energy for t in pool)
            options = []
            for t in sorted(front, key=lambda t: t.id):
                pros, cons = pros_cons(t, max_energy)
                options.append({"id": t.id, "pros": pros, "cons": cons, "tags": list(t.tags)})
            d = damp(options, self.engine)
            return self.roadmap.task(d.chosen), d
        return select_task(pool, weights=self.weights), None

    # -- dispatch --

    def dispatch(self, task: TaskSpec, why: str) -> None:
        self.dispatched = task.id
        self.attempts[task.id] = self.attempts.get(task.id, 0) + 1
        self.decisions.append({"tick": self.tick, "decision": why, "task": task.id})
        self.send(
            LayerId.TASK_PROSECUTION,
            K.TASK_INSTRUCTION,
            {"task": task.to_dict(), "attempt": self.attempts[task.id], "decision": why},
            correlation=task.id,
        )

    def status(self, payload: Mapping) -> None:
        self.send_up(K.TELEMETRY, payload, salience=self.settings.salience_status)

    def on_tick(self, tick: int) -> None:
        if self.dispatched is not None or self.pending_dilemma is not None or self.roadmap is None:
            return
        if self.next_task is not None:
            tid, self.next_task = self.next_task, None
            if tid in self.roadmap.task_ids and tid not in self.completed:
                self.dispatch(self.roadmap.task(tid), "forced")
                return
        task, deliberation = self.choose()
        if task is None:
            if self.idle_version != self.roadmap.version:
                self.idle_version = self.roadmap.version
                self.send_up(K.TELEMETRY, {"event": "idle", "roadmap": self.roadmap.version}, salience=0.3)
            return
        if deliberation is not None:
            self.status({"event": "deliberation", **deliberation.to_dict()})
        self.dispatch(task, "damped" if deliberation else "selected")

    # -- inputs --

    def on_roadmap(self, env: Envelope) -> None:
        roadmap = Roadmap.from_dict(thaw(env.payload))
        previous = set(self.roadmap.task_ids) if self.roadmap is not None else set()
        self.roadmap = roadmap
        ids = set(roadmap.task_ids)
        self.inserted = {k: [c for c in v if c in ids] for k, v in self.inserted.items() if k in ids}
        self.idle_version = None
        self.decisions.append({"tick": self.tick, "decision": "adopt-roadmap", "version": roadmap.version})
        if self.dispatched is None:
            return
        if self.dispatched not in ids or any(a["task"] == self.dispatched for a in roadmap.abandoned):
            self.preempt("task removed from roadmap")
            return
        current = roadmap.task(self.dispatched)
        if ETHICAL_TAGS & set(current.tags):
            return
        for cand in self.candidates():
            if cand.id == current.id or cand.id in self.asked:
                continue
            if ETHICAL_TAGS & set(cand.tags):
                self.escalate_dilemma(current, cand)
                return
        fresh = [t for t in self.candidates() if t.id != current.id and t.id not in previous]
        if fresh:
            max_energy = max(t.cost.energy for t in fresh + [current])
            best = select_task(fresh, weights=self.weights)
            if task_score(best, max_energy, self.weights) > task_score(current, max_energy, self.weights):
                self.next_task = best.id
                self.preempt(f"{best.id} is more urgent")

    def escalate_dilemma(self, current: TaskSpec, cand: TaskSpec) -> None:
        self.dilemmas += 1
        self.asked.append(cand.id)
        options = [
            {"id": current.id, "tags": list(current.tags), "methodology": current.methodology, "role": "current"},
            {"id": cand.id, "tags": list(cand.tags), "methodology": cand.methodology, "role": "candidate"},
        ]
        self.pending_dilemma = {"correlation": f"dilemma-{self.dilemmas}", "current": current.id, "candidate": cand.id}
        self.decisions.append({"tick": self.tick, "decision": "escalate-dilemma", "task": cand.id})
        self.send_up(K.DILEMMA_ESCALATION, {"options": options, "current": current.id},
                     salience=self.settings.salience_dilemma, correlation=self.pending_dilemma["correlation"])

    def on_moral_judgment(self, env: Envelope) -> None:
        p = thaw(env.payload)
        pending = self.pending_dilemma
        if pending is None or env.correlation != pending["correlation"]:
            return
        self.pending_dilemma = None
        preferred = p.get("preferred")
        self.decisions.append({"tick": self.tick, "decision": "moral-judgment", "task": preferred,
                               "verdict": p["verdict"]})
        if p["verdict"] == "deny":
            self.status({"event": "escalation", "reason": "moral-conflict", "task": pending["current"]})
        elif preferred == pending["candidate"]:
            self.next_task = preferred
            if self.dispatched == pending["current"]:
                self.preempt(p["rationale"])

    def preempt(self, rationale: str) -> None:
        if self.dispatched is None:
            return
        self.decisions.append({"tick": self.tick, "decision": "preempt", "task": self.dispatched})
        self.send(LayerId.TASK_PROSECUTION, K.DIRECTIVE,
                  {"action": "abort-task", "task": self.dispatched, "rationale": rationale})

    def on_directive(self, env: Envelope) -> None:
        p = thaw(env.payload)
        if p.get("action") == "abort-task":
            self.preempt(p.get("rationale", "directed"))

    def on_world_event(self, env: Envelope) -> None:
        self.facts.update(thaw(env.payload).get("facts") or {})

    def on_telemetry(self, env: Envelope) -> None:
        pass

    def forwards(self, env: Envelope) -> bool:
        # Outcomes are summarised northward as task-status telemetry instead.
        return env.kind is not K.OUTCOME_SIGNAL or env.payload.get("status") == "failure"

    def on_outcome_signal(self, env: Envelope) -> None:
        p = thaw(env.payload)
        tid = p["task"]
        if tid != self.dispatched:
            self.send_up(K.TELEMETRY, {"event": "protocol-error", "task": tid,
                                       "error": str(ProtocolError(f"outcome for undispatched task {tid}"))},
                         salience=self.settings.salience_escalation)
            return
        self.dispatched = None
        status, reason = p["status"], p.get("reason", "")
        task = self.roadmap.task(tid) if self.roadmap and tid in self.roadmap.task_ids else None
        caps = list(task.capabilities) if task else []
        if status == "failure" and reason == "preempted":
            self.decisions.append({"tick": self.tick, "decision": "preempted", "task": tid})
            return
        self.frustration = update_frustration(self.frustration, status == "success")
        battery = (p.get("observed") or {}).get("robot.battery")
        telemetry = {"event": "task-status", "task": tid, "status": status, "capabilities": caps,
                     "frustration": self.frustration.to_dict()}
        if battery is not None:
            telemetry["battery"] = battery
        if reason:
            telemetry["reason"] = reason
        self.status(telemetry)
        if status == "success":
            self.completed.append(tid)
            self.retries.pop(tid, None)
            if tid in self.parked:
                self.parked.remove(tid)
            self._after_frustration_update()
            self.decisions.append({"tick": self.tick, "decision": "switch", "task": tid, "reason": "completed"})
            return
        self.last_failed = tid
        action = handle_failure(
            tid, reason, self.roadmap, frustration=self.frustration,
            retries=self.retries.get(tid, 0), retry_cap=self.settings.retry_cap,
            used=[c for cs in self.inserted.values() for c in cs],
        )
        self.decisions.append({"tick": self.tick, "decision": action.kind, "task": tid, "reason": reason})
        escalated = self._after_frustration_update()
        if action.kind == "insert_prerequisite":
            self.inserted.setdefault(tid, [])
            self.inserted[tid] += [c for c in action.contingency if c not in self.inserted[tid]]
            self.next_task = action.contingency[0]
        elif action.kind == "report_skip":
            self.inserted.setdefault(tid, [])
            self.inserted[tid] += list(action.contingency)
            self.skipped.append(tid)
            self.next_task = action.contingency[0]
        elif action.kind == "retry":
            self.retries[tid] = self.retries.get(tid, 0) + 1
            self.next_task = tid
        elif action.kind == "switch":
            if tid not in self.parked:
                self.parked.append(tid)
        elif action.kind == "escalate":
            if tid not in self.parked:
                self.parked.append(tid)
            if not escalated and not self.escalated:
                self._escalate(tid)

    def _after_frustration_update(self) -> bool:
        """Escalate once each time the frustrated flag becomes set."""
        if not self.frustration.frustrated:
            self.escalated = False
            return False
        if self.escalated or self.last_failed is None:
            return False
        self._escalate(self.last_failed)
        return True

    def _escalate(self, tid: str) -> None:
        self.escalated = True
        if tid not in self.parked:
            self.parked.append(tid)
        self.decisions.append({"tick": self.tick, "decision": "escalate", "task": tid, "reason": "frustration"})
        self.send_up(K.TELEMETRY, {"event": "escalation", "reason": "frustration", "task": tid,
                                   "frustration": self.frustration.to_dict()},
                     salience=self.settings.salience_escalation)

    def busy(self) -> bool:
        if self.dispatched is not None or self.pending_dilemma is not None or self.next_task is not None:
            return True
        return False

    def state(self) -> dict:
        return {
            "roadmap": None if self.roadmap is None else self.roadmap.to_dict(),
            "completed": list(self.completed),
            "skipped": list(self.skipped),
            "inserted": {k: list(v) for k, v in sorted(self.inserted.items())},
            "retries": dict(sorted(self.retries.items())),
            "parked": list(self.parked),
            "dispatched": self.dispatched,
            "attempts": dict(sorted(self.attempts.items())),
            "last_failed": self.last_failed,
            "escalated": self.escalated,
            "next_task": self.next_task,
            "pending_dilemma": self.pending_dilemma,
            "dilemmas": self.dilemmas,
            "asked": list(self.asked),
            "idle_version": self.idle_version,
            "frustration": self.frustration.to_dict(),
            "decisions": list(self.decisions),
            "facts": dict(sorted(self.facts.items())),
        }

    def restore(self, state: Mapping) -> None:
        self.roadmap = None if state["roadmap"] is None else Roadmap.from_dict(state["roadmap"])
        self.completed = list(state["completed"])
        self.skipped = list(state["skipped"])
        self.inserted = {k: list(v) for k, v in state["inserted"].items()}
        self.retries = dict(state["retries"])
        self.parked = list(state["parked"])
        self.dispatched = state["dispatched"]
        self.attempts = dict(state["attempts"])
        self.last_failed = state["last_failed"]
        self.escalated = state["escalated"]
        self.next_task = state["next_task"]
        self.pending_dilemma = state["pending_dilemma"]
        self.dilemmas = state["dilemmas"]
        self.asked = list(state["asked"])
        self.idle_version = state["idle_version"]
        window = tuple(x == "F" for x in state["frustration"]["window"])
        self.frustration = FrustrationState(window, self.settings.window, self.settings.frustration_threshold)
        self.decisions = list(state["decisions"])
        self.facts = dict(state["facts"])
