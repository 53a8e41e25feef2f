"""Layer 2: world model and strategic documents."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

from .. import knowledge
from ..cognition import CognitionRequest, RequestKind
from ..errors import EngineUnavailable
from ..messaging import Envelope, LayerId, MessageKind as K, thaw
from .base import Layer


@dataclass
class WorldModel:
    """Last-writer-wins fact store ordered by (tick, seq)."""

    facts: dict[str, dict] = field(default_factory=dict)
    version: int = 0

    def ingest(self, facts: Mapping[str, Any], *, tick: int, seq: int, source: str) -> list[str]:
        changed: list[str] = []
        touched = False
        for key in sorted(facts):
            value = facts[key]
            old = self.facts.get(key)
            if old is not None and (old["tick"], old["seq"]) > (tick, seq):
                continue
            touched = True
            if old is not None and old["value"] == value:
                old.update(tick=tick, seq=seq, source=source)
                continue
            self.facts[key] = {"value": value, "tick": tick, "seq": seq, "source": source}
            changed.append(key)
        if touched:
            self.version += 1
        return changed

    def values(self) -> dict[str, Any]:
        return {k: v["value"] for k, v in sorted(self.facts.items())}

    def to_dict(self) -> dict:
        return {"facts": {k: dict(v) for k, v in sorted(self.facts.items())}, "version": self.version}

    @classmethod
    def from_dict(cls, d: Mapping) -> "WorldModel":
        return cls({k: dict(v) for k, v in d["facts"].items()}, d["version"])


def fold_facts(events: list[tuple[int, int, Mapping[str, Any]]]) -> dict[str, Any]:
    """Reference fold: for each key keep the value with the greatest (tick, seq)."""
    best: dict[str, tuple] = {}
    for tick, seq, facts in events:
        for k, v in facts.items():
            if k not in best or (tick, seq) >= best[k][0]:
                best[k] = ((tick, seq), v)
    return {k: best[k][1] for k in sorted(best)}


class GlobalStrategyLayer(Layer):
    layer_id = LayerId.GLOBAL_STRATEGY

    def __init__(self, bus, engine, settings, *, rules: list[dict] | None = None):
        super().__init__(bus, engine, settings)
        self.world = WorldModel()
        self.rules = list(rules or [])
        self.mission: dict | None = None
        self.mission_ref: str | None = None
        self.banned: list[str] = []
        self.doc: dict | None = None
        self.doc_version = 0
        self.documents: list[dict] = []
        self.retry = False

    # -- ingestion --

    def ingest(self, env: Envelope) -> list[str]:
        facts = thaw(env.payload).get("facts") or {}
        return self.world.ingest(facts, tick=env.tick, seq=env.seq, source=str(env.source))

    def on_world_event(self, env: Envelope) -> None:
        delta = self.ingest(env)
        if delta and self.mission is not None and self.material(delta):
            self.formulate()

    def material(self, delta: list[str]) -> bool:
        """A delta matters if it touches a fact an objective rests on or changes the objective set."""
        if self.doc is None:
            return True
        referenced = {k for o in self.doc["objectives"] for k in knowledge.tag_facts(o.get("tags", ()))}
        if referenced & set(delta):
            return True
        candidate = self._objectives()
        return candidate is not None and [o["id"] for o in candidate] != self.doc["priorities"]

    # -- missions and directives --

    def on_mission(self, env: Envelope) -> None:
        self.mission = thaw(env.payload)
        self.mission_ref = env.correlation or f"mission-{env.seq}"
        self.formulate()

    def on_directive(self, env: Envelope) -> None:
        d = thaw(env.payload)
        if d.get("action") == "drop-objectives":
            for oid in d.get("objectives", []):
                if oid not in self.banned:
                    self.banned.append(oid)
            if self.mission is not None:
                self.formulate()

    def on_moral_judgment(self, env: Envelope) -> None:
        self.send(LayerId.AGENT_MODEL, K.MORAL_JUDGMENT, env.payload, correlation=env.correlation,
                  salience=env.salience)

    # -- strategy --

    def _objectives(self) -> list[dict] | None:
        request = CognitionRequest(
            RequestKind.STRATEGIZE,
            [
                ("mission", self.mission or {}),
                ("facts", self.world.values()),
                ("banned", list(self.banned)),
                ("rules", self.rules),
            ],
        )
        try:
            response = self.engine.evaluate(request)
        except EngineUnavailable:
            return None
        self._last_response = response
        return knowledge.rank_objectives(response["objectives"])

    def formulate(self) -> dict | None:
        objectives = self._objectives()
        if objectives is None:
            self.retry = True
            self.send_up(K.TELEMETRY, {"event": "engine-unavailable", "layer": self.layer_id.value},
                         salience=self.settings.salience_escalation)
            return None
        self.retry = False
        response = self._last_response
        self.doc_version += 1
        doc = {
            "version": self.doc_version,
            "mission_ref": self.mission_ref,
            "mission": (self.mission or {}).get("statement"),
            "objectives": [
                {k: o[k] for k in ("id", "text", "tags", "requires", "priority", "harm") if k in o}
                for o in objectives
            ],
            "strategies": response["strategies"],
            "principles": response["principles"],
            "priorities": [o["id"] for o in objectives],
            "world_version": self.world.version,
        }
        self.doc = doc
        self.documents.append(doc)
        self.send(LayerId.AGENT_MODEL, K.STRATEGIC_DOCUMENT, doc, correlation=self.mission_ref)
        return doc

    def on_tick(self, tick: int) -> None:
        if self.retry and self.mission is not None:
            self.formulate()

    def busy(self) -> bool:
        return self.retry

    def state(self) -> dict:
        return {
            "world": self.world.to_dict(),
            "mission": self.mission,
            "mission_ref": self.mission_ref,
            "banned": list(self.banned),
            "doc": self.doc,
            "doc_version": self.doc_version,
            "retry": self.retry,
        }

    def restore(self, state: Mapping) -> None:
        self.world = WorldModel.from_dict(state["world"])
        self.mission = state["mission"]
        self.mission_ref = state["mission_ref"]
        self.banned = list(state["banned"])
        self.doc = state["doc"]
        self.doc_version = state["doc_version"]
        self.retry = state["retry"]
