"""Layer 1: constitution holder, entity-wide monitor, and intervention authority."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Protocol

from ..cognition import CognitionRequest, Judgment, RequestKind, judge
from ..constitution import Constitution
from ..errors import ContractViolation
from ..messaging import (
    CONTROL_KINDS,
    ENVIRONMENT,
    Envelope,
    InterventionRecord,
    LayerId,
    MessageKind as K,
    thaw,
)
from .base import Layer

GATED_KINDS = frozenset({K.STRATEGIC_DOCUMENT, K.ROADMAP})
# Judged elsewhere (dilemmas) or authored by this layer.
REVIEW_EXEMPT = CONTROL_KINDS | {K.MISSION, K.MORAL_JUDGMENT, K.DILEMMA_ESCALATION}

_ITEMS = {
    K.STRATEGIC_DOCUMENT: ("objectives", "drop-objectives"),
    K.MISSION_PARAMS: ("feasible_objectives", "drop-objectives"),
    K.ROADMAP: ("tasks", "drop-tasks"),
}


class Controller(Protocol):
    def halt(self, layer: LayerId) -> None: ...

    def reboot(self, layer: LayerId) -> None: ...


@dataclass(frozen=True)
class Intervention:
    kind: K
    target: LayerId
    rationale: str
    subject: int | None = None
    details: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in CONTROL_KINDS:
            raise ContractViolation(f"{self.kind} is not an intervention kind")
        if self.target is LayerId.ASPIRATIONAL:
            raise ContractViolation("the Aspirational layer never intervenes on itself")
        if self.kind is K.CENSOR and self.subject is None:
            raise ContractViolation("a Censor needs a subject seq")


def _item_id(item: Mapping) -> str:
    if "objective" in item and isinstance(item["objective"], Mapping):
        return str(item["objective"].get("id"))
    return str(item.get("id"))


class AspirationalLayer(Layer):
    layer_id = LayerId.ASPIRATIONAL
    gated_kinds = GATED_KINDS

    def __init__(self, bus, engine, settings, constitution: Constitution, controller: Controller | None = None):
        super().__init__(bus, engine, settings)
        self.constitution = constitution
        self.controller = controller
        bus.register_monitor(LayerId.ASPIRATIONAL)
        self._tap = bus.tap(LayerId.ASPIRATIONAL)
        if settings.gate:
            bus.gate = self
        self.reviewed = 0
        self.reviewed_through = 0
        self.denials: list[tuple[int, str]] = []
        self.halted_layers: list[str] = []
        self.pending_reboots: list[tuple[int, str]] = []
        self.interventions: list[dict] = []
        self.resolutions: list[dict] = []
        self.missions_issued = 0

    # -- missions --

    def mission_payload(self) -> dict:
        return {
            "statement": self.constitution.mission,
            "imperatives": list(self.constitution.imperatives),
            "frameworks": [fw.name for fw in self.constitution.secondary_frameworks],
        }

    def issue_missions(self) -> None:
        self.missions_issued += 1
        self.send(
            LayerId.GLOBAL_STRATEGY,
            K.MISSION,
            self.mission_payload(),
            correlation=f"mission-{self.missions_issued}",
        )

    # -- judgment --

    def _judge(self, subject: Any) -> Judgment:
        request = CognitionRequest(
            RequestKind.JUDGE,
            [("constitution", {"imperatives": list(self.constitution.imperatives)}), ("subject", subject)],
        )
        return judge(self.engine, request)

    def _offending_items(self, env: Envelope) -> list[str]:
        spec = _ITEMS.get(env.kind)
        if spec is None:
            return []
        items = thaw(env.payload).get(spec[0], [])
        return [_item_id(i) for i in items if self._judge(i).verdict == "deny"]

    def review(self, env: Envelope) -> list[Intervention]:
        """Judge one tapped envelope; return the interventions it warrants."""
        self.reviewed += 1
        self.reviewed_through = max(self.reviewed_through, env.seq or 0)
        if env.source is LayerId.ASPIRATIONAL or env.source is ENVIRONMENT or env.kind in REVIEW_EXEMPT:
            return []
        verdict = self._judge({"kind": env.kind.value, "payload": thaw(env.payload)})
        if verdict.verdict != "deny":
            return []
        return self._corrections(env, verdict.rationale)

    def _corrections(self, env: Envelope, rationale: str) -> list[Intervention]:
        action = _ITEMS.get(env.kind, (None, "correct"))[1]
        ids = self._offending_items(env)
        directive = {"action": action, "rationale": rationale, "subject": env.seq, "kind": env.kind.value}
        if action == "drop-tasks":
            directive["tasks"] = ids
        elif action == "drop-objectives":
            directive["objectives"] = ids
        out = [
            Intervention(K.CENSOR, env.target, rationale, subject=env.seq),
            Intervention(K.DIRECTIVE, env.source, rationale, details=directive),
        ]
        out += self._note_denial(env.source)
        return out

    def _note_denial(self, source: LayerId) -> list[Intervention]:
        tick = self.bus.tick
        self.denials.append((tick, source.value))
        recent = [t for t, s in self.denials if s == source.value and tick - t < self.settings.denial_window]
        if len(recent) < self.settings.denials_to_halt or source.value in self.halted_layers:
            return []
        self.denials = [(t, s) for t, s in self.denials if s != source.value]
        return [Intervention(K.HALT, source, f"{len(recent)} denials within {self.settings.denial_window} ticks")]

    # -- pre-delivery gate (called by the bus) --

    def check(self, env: Envelope) -> str | None:
        verdict = self._judge({"kind": env.kind.value, "payload": thaw(env.payload)})
        return verdict.rationale if verdict.verdict == "deny" else None

    def after_censor(self, env: Envelope, rationale: str) -> None:
        self.bus.record_intervention(
            InterventionRecord(self.bus.tick, "Censor", env.target, "withheld", rationale, env.seq, env)
        )
        self.interventions.append(
            {"tick": self.bus.tick, "kind": "Censor", "target": env.target.value, "subject": env.seq, "effect": "withheld"}
        )
        for iv in self._corrections(env, rationale):
            if iv.kind is K.CENSOR:
                self.send(iv.target, K.CENSOR, {"subject": iv.subject, "rationale": iv.rationale, "stage": "pre-delivery"})
            else:
                self.apply_intervention(iv)

    # -- applying interventions --

    def apply_intervention(self, iv: Intervention) -> str:
        """Publish the control envelope and carry out its effect."""
        payload: dict[str, Any] = {"rationale": iv.rationale, **dict(iv.details)}
        if iv.kind is K.CENSOR:
            payload["subject"] = iv.subject
            self.send(iv.target, K.CENSOR, payload)
            effect = self.bus.censor(iv.subject, by=LayerId.ASPIRATIONAL, rationale=iv.rationale)
        elif iv.kind is K.DIRECTIVE:
            payload.setdefault("action", "correct")
            self.send(iv.target, K.DIRECTIVE, payload)
            effect = "delivered"
        elif iv.kind is K.HALT:
            self.send(iv.target, K.HALT, payload)
            if self.controller is not None:
                self.controller.halt(iv.target)
            self.halted_layers.append(iv.target.value)
            if self.settings.auto_reboot:
                self.pending_reboots.append((self.bus.tick + 1, iv.target.value))
            effect = "halted"
        else:
            self.send(iv.target, K.REBOOT, payload)
            if self.controller is not None:
                self.controller.reboot(iv.target)
            if iv.target.value in self.halted_layers:
                self.halted_layers.remove(iv.target.value)
            effect = "rebooted"
        if iv.kind is not K.CENSOR:
            self.bus.record_intervention(
                InterventionRecord(self.bus.tick, iv.kind.value, iv.target, effect, iv.rationale)
            )
        self.interventions.append(
            {"tick": self.bus.tick, "kind": iv.kind.value, "target": iv.target.value, "subject": iv.subject, "effect": effect}
        )
        return effect

    # -- dilemmas --

    def resolve_dilemma(self, env: Envelope) -> Envelope | None:
        if env.kind is not K.DILEMMA_ESCALATION:
            raise ContractViolation("resolve_dilemma needs a DilemmaEscalation")
        options = thaw(env.payload).get("options")
        if not options or any("id" not in o for o in options):
            payload = {
                "verdict": "deny",
                "rationale": "malformed escalation: options must be non-empty and carry ids",
                "cited_principles": [],
                "preferred": None,
            }
        else:
            j = self._judge({"options": options})
            payload = j.to_payload()
            payload["options"] = [o["id"] for o in options]
            if j.verdict == "deny":
                payload["action"] = "replan"
        self.resolutions.append({"correlation": env.correlation, **payload})
        receipt = self.send(
            LayerId.GLOBAL_STRATEGY, K.MORAL_JUDGMENT, payload, correlation=env.correlation, salience=1.0
        )
        return next((e for e in self.bus.delivered[::-1] if e.seq == receipt.seq), None)

    def on_dilemma_escalation(self, env: Envelope) -> None:
        self.resolve_dilemma(env)

    # -- per tick --

    def on_tick(self, tick: int) -> None:
        for when, name in list(self.pending_reboots):
            if when <= tick:
                self.pending_reboots.remove((when, name))
                self.apply_intervention(Intervention(K.REBOOT, LayerId(name), "automatic reboot after halt"))
        for env in self._tap.read():
            for iv in self.review(env):
                self.apply_intervention(iv)

    def busy(self) -> bool:
        return bool(self.pending_reboots) or self._tap.pending() > 0

    def state(self) -> dict:
        return {
            "constitution": self.constitution.serialize(),
            "reviewed": self.reviewed,
            "reviewed_through": self.reviewed_through,
            "denials": [list(d) for d in self.denials],
            "halted_layers": list(self.halted_layers),
            "pending_reboots": [list(p) for p in self.pending_reboots],
            "interventions": list(self.interventions),
            "resolutions": list(self.resolutions),
            "missions_issued": self.missions_issued,
        }

    def restore(self, state: Mapping) -> None:
        self.reviewed = state["reviewed"]
        self.reviewed_through = state["reviewed_through"]
        self.denials = [tuple(d) for d in state["denials"]]
        self.halted_layers = list(state["halted_layers"])
        self.pending_reboots = [tuple(p) for p in state["pending_reboots"]]
        self.interventions = list(state["interventions"])
        self.resolutions = list(state["resolutions"])
        self.missions_issued = state["missions_issued"]
