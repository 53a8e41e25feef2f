"""Layer 6: executes one task at a time against the environment."""

from __future__ import annotations

from typing import Any, Mapping

from .. import predicates as P
from ..errors import ContractViolation, ProtocolError
from ..messaging import Envelope, LayerId, MessageKind as K, thaw
from ..planning import bfs_path
from ..plans import ResourceState, TaskSpec
from ..sim import EffectorCommand, Environment, cell_key, parse_cell
from .base import Layer


class TaskProsecutionLayer(Layer):
    """Holds the environment access token; nothing else may drive effectors."""

    layer_id = LayerId.TASK_PROSECUTION

    def __init__(self, bus, engine, settings, *, environment: Environment, token: object,
                 effectors: tuple[str, ...]):
        super().__init__(bus, engine, settings)
        self._env = environment
        self._token = token
        self.effectors = tuple(effectors)
        self.current: TaskSpec | None = None
        self.attempt = 0
        self.cursor = 0
        self.accepted = 0
        self.issued = 0
        self.last_rejection: str | None = None
        self.spent = 0
        self.started = 0
        self.wait_until: int | None = None
        self.report: list[dict] = []
        self.reports: list[dict] = []
        self.outcomes = 0

    # -- facts --

    def facts(self) -> dict[str, Any]:
        facts = self._env.snapshot()
        facts.update({
            "task.accepted": self.accepted,
            "task.commands": self.issued,
            "task.last_rejection": self.last_rejection,
        })
        return facts

    # -- inputs --

    def on_task_instruction(self, env: Envelope) -> None:
        p = thaw(env.payload)
        if self.current is not None:
            self.send_up(K.TELEMETRY, {"event": "protocol-error", "task": p["task"]["id"],
                                       "error": f"{self.current.id} still executing"},
                         salience=self.settings.salience_escalation)
            return
        self.current = TaskSpec.from_dict(p["task"])
        self.attempt = int(p.get("attempt", 0))
        self.cursor = self.accepted = self.issued = self.spent = 0
        self.last_rejection = None
        self.wait_until = None
        self.started = self.tick
        self.report = []
        if not self.current.approach:
            raise ContractViolation(f"task {self.current.id} has an empty approach")
        bad = sorted({c["verb"] for c in self.current.approach} - set(self.effectors))
        if bad:
            self.emit("failure", "unsupported-effector")
            return
        self.evaluate()

    def on_directive(self, env: Envelope) -> None:
        p = thaw(env.payload)
        if p.get("action") == "abort-task" and self.current is not None and p.get("task") in (None, self.current.id):
            self.emit("failure", "preempted")

    # -- execution --

    def _expand(self, tmpl: Mapping) -> EffectorCommand | None | str:
        """Concrete command for a template, ``None`` to skip it, or ``"stay"`` to reuse it."""
        state = self._env.state
        verb, args = tmpl["verb"], tmpl.get("args", {})
        if verb == "move":
            goal = parse_cell(args["to"])
            if state.robot.cell == goal:
                return None
            passable = {c for c in state.tiles if state.passable(c)}
            path = bfs_path(passable, state.robot.cell, goal)
            if not path:
                self.last_rejection = "unreachable"
                return None
            return EffectorCommand("move", {"to": cell_key(path[0])})
        if verb == "clean_cell":
            cell = parse_cell(args["cell"]) if "cell" in args else state.robot.cell
            tile = state.tiles.get(cell)
            if tile is None or tile.dirt == 0:
                return None
        if verb == "grasp":
            thing = state.objects.get(args["object"])
            if thing is None or not thing.present or state.robot.holding == args["object"]:
                return None
        if verb == "release" and state.robot.holding is None:
            return None
        return EffectorCommand(verb, dict(args))

    def advance(self, tick: int) -> dict | None:
        """Issue at most one command for the current task; return the step record."""
        self.tick = tick
        if self.halted or self.current is None:
            return None
        if self.wait_until is not None:
            self.evaluate(expired=tick >= self.wait_until)
            return None
        approach = self.current.approach
        while self.cursor < len(approach):
            tmpl = approach[self.cursor]
            cmd = self._expand(tmpl)
            if cmd is None:
                self.cursor += 1
                continue
            finishes = tmpl["verb"] != "move" or parse_cell(cmd.args["to"]) == parse_cell(tmpl["args"]["to"])
            result = self._env.step(EffectorCommand(cmd.verb, cmd.args, tick), token=self._token)
            self.issued += 1
            entry = {"tick": tick, "verb": cmd.verb, "args": dict(cmd.args), "accepted": result.accepted,
                     "reason": result.reason, "cost": result.cost}
            self.report.append(entry)
            if result.accepted:
                self.accepted += 1
                self.spent += result.cost
            else:
                self.last_rejection = result.reason
            if finishes or not result.accepted:
                self.cursor += 1
            self.send_up(K.TELEMETRY, {"event": "step", "verb": cmd.verb, "accepted": result.accepted,
                                       "reason": result.reason, **result.telemetry},
                         salience=self.settings.salience_step, correlation=self.current.id)
            self.evaluate()
            return entry
        self.evaluate()
        return None

    def evaluate(self, *, expired: bool = False) -> str | None:
        """Check the task's definitions; emit an outcome once one holds.

        An exhausted approach fails with ``success-not-achieved``, after
        waiting ``await_ticks`` if the task asks for a grace period.
        """
        if self.current is None:
            return None
        facts = self.facts()
        ok = self.current.success(facts)
        reason = self.current.failure_reason(facts)
        if ok and reason is not None:
            raise ContractViolation(f"task {self.current.id}: success and failure both hold")
        if ok:
            self.emit("success")
            return "success"
        if reason is not None:
            self.emit("failure", reason)
            return "failure"
        if self.wait_until is not None:
            if expired:
                self.emit("failure", "success-not-achieved")
                return "failure"
            return None
        if self.cursor < len(self.current.approach):
            return None
        if self.current.await_ticks > 0:
            self.wait_until = self.tick + self.current.await_ticks
            return None
        self.emit("failure", "success-not-achieved")
        return "failure"

    def emit(self, status: str, reason: str = "") -> None:
        if self.current is None:
            raise ProtocolError("outcome without a dispatched task")
        if status == "failure" and not reason:
            raise ContractViolation("a failure needs a reason")
        task = self.current
        facts = self.facts()
        keys = sorted(P.referenced_facts(task.success_def) | {"robot.battery", "robot.cell"})
        payload = {
            "task": task.id,
            "status": status,
            "observed": {k: facts.get(k) for k in keys if not k.startswith("task.")},
            "resources_spent": ResourceState(energy=self.spent, time=max(0, self.tick - self.started)).to_dict(),
            "commands": self.issued,
            "attempt": self.attempt,
        }
        if reason:
            payload["reason"] = reason
        self.reports.append({"task": task.id, "attempt": self.attempt, "status": status, "reason": reason,
                             "commands": list(self.report), "energy": self.spent})
        self.current = None
        self.wait_until = None
        self.outcomes += 1
        salience = self.settings.salience_success if status == "success" else self.settings.salience_failure
        self.send_up(K.OUTCOME_SIGNAL, payload, salience=salience, correlation=task.id)

    def busy(self) -> bool:
        return self.current is not None

    def state(self) -> dict:
        return {
            "current": None if self.current is None else self.current.to_dict(),
            "attempt": self.attempt,
            "cursor": self.cursor,
            "accepted": self.accepted,
            "issued": self.issued,
            "last_rejection": self.last_rejection,
            "spent": self.spent,
            "started": self.started,
            "wait_until": self.wait_until,
            "report": list(self.report),
            "reports": list(self.reports),
            "outcomes": self.outcomes,
        }

    def restore(self, state: Mapping) -> None:
        self.current = None if state["current"] is None else TaskSpec.from_dict(state["current"])
        self.attempt = state["attempt"]
        self.cursor = state["cursor"]
        self.accepted = state["accepted"]
        self.issued = state["issued"]
        self.last_rejection = state["last_rejection"]
        self.spent = state["spent"]
        self.started = state["started"]
        self.wait_until = state["wait_until"]
        self.report = list(state["report"])
        self.reports = list(state["reports"])
        self.outcomes = state["outcomes"]
