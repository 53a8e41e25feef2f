"""Layer 3: self-model, episodic memory, and mission shaping.

Every state change goes through an episodic record, so the layer's state is
a fold over its log and :func:`replay` rebuilds it exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from ..cognition import CognitionRequest, RequestKind
from ..config import Settings
from ..errors import CorruptionError, ValidationError
from ..memory import DeclarativeStore, EpisodicLog, EpisodicRecord
from ..messaging import Envelope, LayerId, MessageKind as K, thaw
from .base import Layer


def update_confidence(c: float, outcome: str, alpha: float = 0.2, beta: float = 0.3) -> float:
    if outcome == "success":
        c = c + alpha * (1.0 - c)
    elif outcome == "failure":
        c = c * (1.0 - beta)
    else:
        raise ValidationError(f"outcome must be success or failure, got {outcome!r}")
    return min(1.0, max(0.0, c))


@dataclass
class AgentState:
    operational: dict[str, dict] = field(default_factory=dict)
    configuration: dict[str, Any] = field(default_factory=lambda: {"components": [], "links": []})
    capabilities: dict[str, float] = field(default_factory=dict)
    limitations: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "operational": {k: dict(v) for k, v in sorted(self.operational.items())},
            "configuration": thaw(self.configuration),
            "capabilities": dict(sorted(self.capabilities.items())),
            "limitations": sorted(self.limitations),
        }


def apply_record(state: AgentState, record: EpisodicRecord, settings: Settings) -> None:
    """Fold one episodic record into the agent state."""
    p = record.payload
    if record.kind == "event" and "boot" in p:
        profile = p["boot"]
        state.capabilities = {k: float(v) for k, v in sorted(profile.get("capabilities", {}).items())}
        state.limitations = sorted(profile.get("limitations", []))
        for name in state.limitations:
            state.capabilities.pop(name, None)
        state.configuration = thaw(profile.get("configuration", {"components": [], "links": []}))
        for k, v in sorted(profile.get("operational", {}).items()):
            state.operational[k] = {"value": v, "units": "", "tick": record.tick}
    elif record.kind == "observation" and "param" in p:
        cur = state.operational.get(p["param"])
        if cur is None or cur["tick"] <= p["tick"]:
            state.operational[p["param"]] = {"value": p["value"], "units": p.get("units", ""), "tick": p["tick"]}
    elif record.kind == "decision" and "capability" in p:
        name = p["capability"]
        if name in state.limitations:
            return
        c = state.capabilities.get(name, settings.prior)
        c = update_confidence(c, p["outcome"], settings.alpha, settings.beta)
        if c < settings.demotion_floor:
            state.capabilities.pop(name, None)
            state.limitations = sorted({*state.limitations, name})
        else:
            state.capabilities[name] = c


def replay(records: Iterable[EpisodicRecord | Mapping], settings: Settings | None = None) -> AgentState:
    """Rebuild agent state from an episodic log; gaps or regressions raise."""
    settings = settings or Settings()
    state = AgentState()
    last = 0
    for r in records:
        if not isinstance(r, EpisodicRecord):
            r = EpisodicRecord.from_dict(r)
        if r.seq != last + 1:
            raise CorruptionError(f"episodic seq {r.seq} does not follow {last}", last or None)
        apply_record(state, r, settings)
        last = r.seq
    return state


class AgentModelLayer(Layer):
    layer_id = LayerId.AGENT_MODEL

    def __init__(self, bus, engine, settings, *, profile: Mapping | None = None,
                 store: DeclarativeStore | None = None):
        super().__init__(bus, engine, settings)
        self.state_ = AgentState()
        self.log = EpisodicLog()
        self.store = store or DeclarativeStore()
        self.held: dict | None = None
        self.params_issued = 0
        self.record("event", {"boot": thaw(profile or {})})

    # -- episodic memory --

    def record(self, kind: str, payload: Mapping, **metadata) -> EpisodicRecord:
        rec = EpisodicRecord(self.log.last_seq + 1, self.tick, kind, thaw(payload),
                             {k: v for k, v in sorted(metadata.items()) if v is not None})
        self.log.append(rec)
        apply_record(self.state_, rec, self.settings)
        return rec

    @property
    def capabilities(self) -> dict[str, float]:
        return dict(self.state_.capabilities)

    @property
    def limitations(self) -> list[str]:
        return list(self.state_.limitations)

    def ingest_telemetry(self, env: Envelope) -> list[str]:
        p = thaw(env.payload)
        changed = []
        for param, units in (("battery", "units"), ("cell", "cell")):
            if param not in p:
                continue
            cur = self.state_.operational.get(param)
            if cur is not None and cur["tick"] > env.tick:
                continue
            self.record("observation", {"param": param, "value": p[param], "units": units, "tick": env.tick},
                        correlation=env.correlation)
            changed.append(param)
        return changed

    def update_capability(self, name: str, outcome: str) -> float | None:
        self.record("decision", {"capability": name, "outcome": outcome})
        return self.state_.capabilities.get(name)

    # -- handlers --

    def on_telemetry(self, env: Envelope) -> None:
        p = thaw(env.payload)
        self.ingest_telemetry(env)
        if p.get("event") == "task-status" and p.get("status") in ("success", "failure"):
            for cap in p.get("capabilities", []):
                self.update_capability(cap, p["status"])
        elif p.get("event") == "deliberation":
            self.record("decision", {"deliberation": p}, correlation=env.correlation)
        elif "battery" not in p and "cell" not in p:
            self.record("event", {"telemetry": p}, correlation=env.correlation)

    def on_outcome_signal(self, env: Envelope) -> None:
        p = thaw(env.payload)
        self.record("event", {"outcome": {k: p[k] for k in ("task", "status", "reason") if k in p}},
                    correlation=env.correlation)

    def on_strategic_document(self, env: Envelope) -> None:
        doc = thaw(env.payload)
        if self.held is not None and doc["world_version"] < self.held["world_version"]:
            self.record("event", {"ignored-stale-document": doc["version"]})
            return
        self.held = doc
        self.record("event", {"strategic-document": doc["version"]}, correlation=env.correlation)
        self.shape_mission(doc)

    def shape_mission(self, doc: Mapping) -> dict:
        request = CognitionRequest(
            RequestKind.SHAPE_MISSION,
            [
                ("objectives", doc["objectives"]),
                ("agent_state", {"capabilities": self.capabilities, "limitations": self.limitations}),
                ("threshold", self.settings.feasibility),
                ("prior", self.settings.prior),
            ],
        )
        response = self.engine.evaluate(request)
        self.params_issued += 1
        params = {
            "strategic_ref": f"{doc.get('mission_ref')}/sd-{doc['version']}",
            "strategic_version": doc["version"],
            "mission": doc.get("mission"),
            "feasible_objectives": response["feasible"],
            "deferred_objectives": response["deferred"],
            "state_snapshot_ref": f"episodic-{self.log.last_seq}",
        }
        self.record("decision", {"shaped": doc["version"],
                                 "deferred": [d["objective"]["id"] for d in response["deferred"]]})
        self.send(LayerId.EXECUTIVE_FUNCTION, K.MISSION_PARAMS, params, correlation=doc.get("mission_ref"))
        return params

    def on_moral_judgment(self, env: Envelope) -> None:
        self.record("event", {"moral-judgment": thaw(env.payload)}, correlation=env.correlation)
        self.send(LayerId.EXECUTIVE_FUNCTION, K.MORAL_JUDGMENT, env.payload, correlation=env.correlation,
                  salience=env.salience)

    def on_directive(self, env: Envelope) -> None:
        self.record("event", {"directive": thaw(env.payload)})

    def on_censor(self, env: Envelope) -> None:
        self.record("event", {"censored": env.payload["subject"]})

    def recall(self, tag: str) -> list[dict]:
        return [d.to_dict() for d in self.store.query(tag)]

    # -- snapshots --

    def state(self) -> dict:
        return {
            "agent": self.state_.to_dict(),
            "episodic": [r.to_dict() for r in self.log],
            "held": self.held,
            "params_issued": self.params_issued,
        }

    def restore(self, state: Mapping) -> None:
        self.log = EpisodicLog(EpisodicRecord.from_dict(r) for r in state["episodic"])
        self.state_ = replay(self.log, self.settings)
        self.held = state["held"]
        self.params_issued = state["params_issued"]
