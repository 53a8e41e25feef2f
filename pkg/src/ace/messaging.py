"""Envelopes, layer identities, the privilege rule table and the bus.

The bus is the only channel between layers.  Every publish attempt is
authorized against a fixed rule table, written to the audit log, and (if
allowed) appended to the target layer's inbox.  Monitors may tap the stream
of delivered envelopes without touching any inbox.
"""

from __future__ import annotations

import json
import math
import threading
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from types import MappingProxyType
from typing import Any, Callable, Iterable, Iterator, Mapping, Protocol

import jsonschema

from .errors import ContractViolation, PrivilegeError, ValidationError


class LayerId(Enum):
    ASPIRATIONAL = "Aspirational"
    GLOBAL_STRATEGY = "GlobalStrategy"
    AGENT_MODEL = "AgentModel"
    EXECUTIVE_FUNCTION = "ExecutiveFunction"
    COGNITIVE_CONTROL = "CognitiveControl"
    TASK_PROSECUTION = "TaskProsecution"

    @property
    def rank(self) -> int:
        return _RANKS[self]

    @classmethod
    def by_rank(cls, rank: int) -> "LayerId":
        for layer, r in _RANKS.items():
            if r == rank:
                return layer
        raise ValueError(f"no layer with rank {rank}")

    @property
    def above(self) -> "LayerId | None":
        return None if self.rank == 1 else LayerId.by_rank(self.rank - 1)

    @property
    def below(self) -> "LayerId | None":
        return None if self.rank == 6 else LayerId.by_rank(self.rank + 1)

    def __str__(self) -> str:
        return self.value


_RANKS = {layer: i + 1 for i, layer in enumerate(LayerId)}
LAYERS: tuple[LayerId, ...] = tuple(LayerId)


class _Environment:
    """Pseudo-source for events that originate outside the entity.

    It sits below Task Prosecution, so anything it sends travels north.
    """

    name = value = "Environment"
    rank = 7

    def __repr__(self) -> str:
        return "ENVIRONMENT"

    def __str__(self) -> str:
        return self.value

    def __reduce__(self):
        return "ENVIRONMENT"


ENVIRONMENT = _Environment()
SOURCES: tuple = LAYERS + (ENVIRONMENT,)


def parse_party(name: str):
    if name == ENVIRONMENT.value:
        return ENVIRONMENT
    try:
        return LayerId(name)
    except ValueError:
        raise ValidationError(f"unknown layer {name!r}") from None


class MessageKind(Enum):
    MISSION = "Mission"
    MORAL_JUDGMENT = "MoralJudgment"
    STRATEGIC_DOCUMENT = "StrategicDocument"
    MISSION_PARAMS = "MissionParams"
    ROADMAP = "Roadmap"
    TASK_INSTRUCTION = "TaskInstruction"
    TELEMETRY = "Telemetry"
    OUTCOME_SIGNAL = "OutcomeSignal"
    DILEMMA_ESCALATION = "DilemmaEscalation"
    DIRECTIVE = "Directive"
    CENSOR = "Censor"
    HALT = "Halt"
    REBOOT = "Reboot"
    WORLD_EVENT = "WorldEvent"

    def __str__(self) -> str:
        return self.value


K = MessageKind
CONTROL_KINDS = frozenset({K.DIRECTIVE, K.CENSOR, K.HALT, K.REBOOT})
NORTHBOUND_KINDS = frozenset({K.TELEMETRY, K.OUTCOME_SIGNAL, K.DILEMMA_ESCALATION})
# WorldEvent is reserved for the Environment pseudo-source.
SOUTHBOUND_KINDS = frozenset(MessageKind) - NORTHBOUND_KINDS - {K.WORLD_EVENT}
ASPIRATIONAL_OVERRIDE_KINDS = CONTROL_KINDS | {K.MISSION, K.MORAL_JUDGMENT}
ENVIRONMENT_KINDS = frozenset({K.WORLD_EVENT, K.TELEMETRY})
ENVIRONMENT_TARGETS = frozenset(
    {LayerId.GLOBAL_STRATEGY, LayerId.EXECUTIVE_FUNCTION, LayerId.COGNITIVE_CONTROL}
)


class Direction(str, Enum):
    SOUTHBOUND = "southbound"
    NORTHBOUND = "northbound"
    # only ever seen on rejected self-addressed attempts
    LATERAL = "lateral"


def direction_between(source, target) -> Direction:
    if source.rank < target.rank:
        return Direction.SOUTHBOUND
    if source.rank > target.rank:
        return Direction.NORTHBOUND
    return Direction.LATERAL


# -- immutable payloads -------------------------------------------------------


def freeze(value: Any) -> Any:
    """Deep-copy a JSON-like value into read-only mappings and tuples."""
    if isinstance(value, Mapping):
        return MappingProxyType({str(k): freeze(v) for k, v in value.items()})
    if isinstance(value, (list, tuple)):
        return tuple(freeze(v) for v in value)
    if isinstance(value, (set, frozenset)):
        return tuple(sorted(freeze(v) for v in value))
    if isinstance(value, Enum):
        return value.value
    return value


def thaw(value: Any) -> Any:
    """Inverse of :func:`freeze`, producing plain dicts with sorted keys."""
    if isinstance(value, Mapping):
        return {k: thaw(value[k]) for k in sorted(value)}
    if isinstance(value, (list, tuple)):
        return [thaw(v) for v in value]
    return value


def dumps(record: Mapping) -> str:
    """Serialize one trace/audit record as a single canonical JSON line."""
    return json.dumps(record, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


# -- payload schemas ----------------------------------------------------------

_str_list = {"type": "array", "items": {"type": "string"}}
_obj = {"type": "object"}

PAYLOAD_SCHEMAS: dict[MessageKind, dict] = {
    K.MISSION: {
        "type": "object",
        "required": ["statement", "imperatives"],
        "properties": {
            "statement": {"type": ["string", "null"]},
            "imperatives": {**_str_list, "minItems": 1},
            "frameworks": _str_list,
        },
    },
    K.MORAL_JUDGMENT: {
        "type": "object",
        "required": ["verdict", "rationale", "cited_principles"],
        "properties": {
            "verdict": {"enum": ["approve", "deny", "amend"]},
            "rationale": {"type": "string"},
            "cited_principles": {"type": "array", "items": {"type": "integer"}},
            "preferred": {"type": ["string", "null"]},
        },
    },
    K.STRATEGIC_DOCUMENT: {
        "type": "object",
        "required": ["version", "mission_ref", "objectives", "priorities", "world_version"],
        "properties": {
            "version": {"type": "integer"},
            "objectives": {"type": "array", "items": {"type": "object", "required": ["id", "text"]}},
            "strategies": _str_list,
            "principles": _str_list,
            "priorities": _str_list,
            "world_version": {"type": "integer"},
        },
    },
    K.MISSION_PARAMS: {
        "type": "object",
        "required": ["strategic_ref", "feasible_objectives", "deferred_objectives"],
        "properties": {
            "feasible_objectives": {"type": "array"},
            "deferred_objectives": {"type": "array"},
        },
    },
    K.ROADMAP: {
        "type": "object",
        "required": ["version", "tasks", "risks", "budget"],
        "properties": {
            "version": {"type": "integer"},
            "tasks": {"type": "array", "items": {"type": "object", "required": ["id"]}},
            "risks": {"type": "array"},
            "budget": _obj,
        },
    },
    K.TASK_INSTRUCTION: {
        "type": "object",
        "required": ["task"],
        "properties": {"task": {"type": "object", "required": ["id", "approach"]}},
    },
    K.TELEMETRY: {"type": "object", "required": ["event"], "properties": {"event": {"type": "string"}}},
    K.OUTCOME_SIGNAL: {
        "type": "object",
        "required": ["task", "status"],
        "properties": {"task": {"type": "string"}, "status": {"enum": ["success", "failure"]}},
    },
    K.DILEMMA_ESCALATION: {
        "type": "object",
        "required": ["options"],
        "properties": {"options": {"type": "array", "items": {"type": "object", "required": ["id"]}}},
    },
    K.DIRECTIVE: {
        "type": "object",
        "required": ["action", "rationale"],
        "properties": {"action": {"type": "string"}, "rationale": {"type": "string"}},
    },
    K.CENSOR: {
        "type": "object",
        "required": ["subject", "rationale"],
        "properties": {"subject": {"type": "integer"}, "rationale": {"type": "string"}},
    },
    K.HALT: {"type": "object", "required": ["rationale"]},
    K.REBOOT: {"type": "object", "required": ["rationale"]},
    K.WORLD_EVENT: {
        "type": "object",
        "required": ["event"],
        "properties": {"event": {"type": "string"}, "facts": _obj},
    },
}


@lru_cache(maxsize=None)
def _validator(kind: MessageKind):
    return jsonschema.Draft7Validator(PAYLOAD_SCHEMAS[kind])


def validate_payload(kind: MessageKind, payload: Mapping) -> None:
    errors = sorted(_validator(kind).iter_errors(thaw(payload)), key=lambda e: list(e.path))
    if errors:
        raise ValidationError(f"{kind.value} payload invalid: {errors[0].message}")


# -- envelopes ----------------------------------------------------------------


@dataclass(frozen=True)
class Envelope:
    """The universal inter-layer message.

    ``seq`` and ``tick`` are left as ``None`` by producers and stamped by the
    bus on publish.  ``direction`` is derived from the endpoint ranks.
    """

    source: Any
    target: Any
    kind: MessageKind
    payload: Mapping = field(default_factory=dict)
    salience: float = 0.5
    correlation: str | None = None
    seq: int | None = None
    tick: int | None = None
    direction: Direction | None = None

    def __post_init__(self):
        if isinstance(self.salience, bool) or not isinstance(self.salience, (int, float)):
            raise ValidationError(f"salience must be a real number, got {self.salience!r}")
        if not math.isfinite(self.salience) or not 0.0 <= self.salience <= 1.0:
            raise ValidationError(f"salience {self.salience} outside [0, 1]")
        if self.source not in SOURCES:
            raise ValidationError(f"unknown source {self.source!r}")
        if not isinstance(self.target, LayerId):
            raise ValidationError(f"target must be a layer, got {self.target!r}")
        if not isinstance(self.kind, MessageKind):
            raise ValidationError(f"unknown kind {self.kind!r}")
        derived = direction_between(self.source, self.target)
        if self.direction is None:
            object.__setattr__(self, "direction", derived)
        elif Direction(self.direction) is not derived:
            raise ValidationError(
                f"direction {self.direction} inconsistent with {self.source}->{self.target}"
            )
        object.__setattr__(self, "salience", float(self.salience))
        if not isinstance(self.payload, MappingProxyType):
            object.__setattr__(self, "payload", freeze(self.payload))

    def to_record(self) -> dict:
        return {
            "seq": self.seq,
            "tick": self.tick,
            "source": self.source.value,
            "target": self.target.value,
            "direction": self.direction.value,
            "kind": self.kind.value,
            "salience": self.salience,
            "correlation": self.correlation,
            "payload": thaw(self.payload),
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "Envelope":
        return cls(
            source=parse_party(record["source"]),
            target=parse_party(record["target"]),
            kind=MessageKind(record["kind"]),
            payload=record.get("payload") or {},
            salience=record["salience"],
            correlation=record.get("correlation"),
            seq=record.get("seq"),
            tick=record.get("tick"),
            direction=Direction(record["direction"]) if record.get("direction") else None,
        )

    def to_json(self) -> str:
        return dumps(self.to_record())


def rewrap(envelope: Envelope, via: LayerId) -> Envelope:
    """Forward a northbound envelope one hop up, with ``via`` as the new source."""
    upper = via.above
    if upper is None:
        raise ContractViolation(f"{via} has no layer above it")
    return Envelope(
        source=via,
        target=upper,
        kind=envelope.kind,
        payload=envelope.payload,
        salience=envelope.salience,
        correlation=envelope.correlation,
    )


def should_percolate(envelope: Envelope, layer_threshold: float) -> bool:
    if envelope.direction is not Direction.NORTHBOUND:
        raise ContractViolation("only northbound envelopes percolate")
    return envelope.salience >= layer_threshold


# -- authorization ------------------------------------------------------------


@dataclass(frozen=True)
class Decision:
    allow: bool
    reason: str

    def __bool__(self) -> bool:
        return self.allow


def authorize(source, target, kind: MessageKind) -> Decision:
    if not isinstance(target, LayerId):
        return Decision(False, "deny:target-not-layer")
    if source is ENVIRONMENT:
        if kind not in ENVIRONMENT_KINDS:
            return Decision(False, "deny:environment-kind")
        if target not in ENVIRONMENT_TARGETS:
            return Decision(False, "deny:environment-target")
        return Decision(True, "allow:environment-input")
    if source not in LAYERS:
        return Decision(False, "deny:unknown-source")
    if source is target:
        return Decision(False, "deny:self-addressed")
    if kind is K.WORLD_EVENT:
        return Decision(False, "deny:world-event-reserved")
    if source.rank < target.rank:
        if kind in NORTHBOUND_KINDS:
            return Decision(False, "deny:northbound-kind-southward")
        if source.rank == target.rank - 1:
            return Decision(True, "allow:adjacent-southbound")
        if source is LayerId.ASPIRATIONAL and kind in ASPIRATIONAL_OVERRIDE_KINDS:
            return Decision(True, "allow:aspirational-override")
        return Decision(False, "deny:non-adjacent")
    if kind in CONTROL_KINDS:
        return Decision(False, "deny:control-northward")
    if kind not in NORTHBOUND_KINDS:
        return Decision(False, "deny:southbound-kind-northward")
    if source.rank == target.rank + 1:
        return Decision(True, "allow:adjacent-northbound")
    return Decision(False, "deny:non-adjacent")


# -- audit --------------------------------------------------------------------


class Verdict(str, Enum):
    DELIVERED = "delivered"
    REJECTED = "rejected"
    CENSORED = "censored"


@dataclass(frozen=True)
class AuditRecord:
    seq: int
    verdict: Verdict
    reason: str
    envelope: Envelope

    def to_record(self) -> dict:
        rec = self.envelope.to_record()
        rec["verdict"] = self.verdict.value
        rec["reason"] = self.reason
        return rec


@dataclass(frozen=True)
class InterventionRecord:
    """Effect of an Aspirational intervention, kept in the audit log."""

    tick: int
    action: str
    target: LayerId
    effect: str
    rationale: str
    subject: int | None = None
    envelope: Envelope | None = None

    def to_record(self) -> dict:
        return {
            "record": "intervention",
            "tick": self.tick,
            "action": self.action,
            "target": self.target.value,
            "subject": self.subject,
            "effect": self.effect,
            "rationale": self.rationale,
            "envelope": None if self.envelope is None else self.envelope.to_record(),
        }


@dataclass(frozen=True)
class Receipt:
    seq: int
    verdict: Verdict
    reason: str

    @property
    def delivered(self) -> bool:
        return self.verdict is Verdict.DELIVERED


class Gate(Protocol):
    """Pre-delivery reviewer for selected kinds (held by the Aspirational layer)."""

    gated_kinds: frozenset

    def check(self, envelope: Envelope) -> str | None:
        """Return a censorship rationale, or ``None`` to let the envelope through."""

    def after_censor(self, envelope: Envelope, rationale: str) -> None: ...


MONITOR_PARTIES = frozenset({LayerId.ASPIRATIONAL, "trace-recorder"})


class Inbox:
    """Single-consumer FIFO view over one layer's queue."""

    def __init__(self, bus: "Bus", layer: LayerId):
        self._bus = bus
        self.layer = layer

    def pop(self) -> Envelope | None:
        with self._bus._lock:
            q = self._bus._queues[self.layer]
            return q.popleft() if q else None

    def peek_all(self) -> list[Envelope]:
        with self._bus._lock:
            return list(self._bus._queues[self.layer])

    def __len__(self) -> int:
        with self._bus._lock:
            return len(self._bus._queues[self.layer])

    def __iter__(self) -> Iterator[Envelope]:
        return iter(self.peek_all())


class Tap:
    """Read-only cursor over the delivered stream, in global seq order."""

    def __init__(self, bus: "Bus"):
        self._bus = bus
        self._cursor = 0

    def read(self) -> list[Envelope]:
        with self._bus._lock:
            out = self._bus._delivered[self._cursor :]
            self._cursor = len(self._bus._delivered)
        return out

    def pending(self) -> int:
        with self._bus._lock:
            return len(self._bus._delivered) - self._cursor

    def __iter__(self) -> Iterator[Envelope]:
        return iter(self.read())


class Bus:
    """In-process message bus with one ordered append point."""

    def __init__(self, *, gate: Gate | None = None, validate_payloads: bool = True):
        self._lock = threading.RLock()
        self.mail = threading.Condition(self._lock)
        self._seq = 0
        self.tick = 0
        self._queues: dict[LayerId, deque[Envelope]] = {layer: deque() for layer in LAYERS}
        self._delivered: list[Envelope] = []
        self._monitors: set = set()
        self._listeners: list[Callable[[Mapping], None]] = []
        self.audit: list[AuditRecord | InterventionRecord] = []
        self.gate = gate
        self.validate_payloads = validate_payloads

    # -- publishing --

    def publish(self, envelope: Envelope) -> Receipt:
        if self.validate_payloads:
            validate_payload(envelope.kind, envelope.payload)
        censored_by: str | None = None
        with self._lock:
            self._seq += 1
            env = replace(
                envelope, seq=self._seq, tick=self.tick if envelope.tick is None else envelope.tick
            )
            decision = authorize(env.source, env.target, env.kind)
            if not decision.allow:
                verdict, reason = Verdict.REJECTED, decision.reason
            else:
                if self.gate is not None and env.kind in self.gate.gated_kinds:
                    censored_by = self.gate.check(env)
                if censored_by is not None:
                    verdict, reason = Verdict.CENSORED, censored_by
                else:
                    verdict, reason = Verdict.DELIVERED, decision.reason
                    self._queues[env.target].append(env)
                    self._delivered.append(env)
                    self.mail.notify_all()
            self._append(AuditRecord(env.seq, verdict, reason, env))
            if censored_by is not None:
                self.gate.after_censor(env, censored_by)
            return Receipt(env.seq, verdict, reason)

    def send(self, source, target, kind, payload=None, *, salience=0.5, correlation=None) -> Receipt:
        return self.publish(
            Envelope(source, target, kind, payload or {}, salience=salience, correlation=correlation)
        )

    def _append(self, record) -> None:
        self.audit.append(record)
        if self._listeners:
            line = record.to_record()
            for fn in self._listeners:
                fn(line)

    def on_record(self, fn: Callable[[Mapping], None]) -> None:
        self._listeners.append(fn)

    # -- consumption --

    def inbox(self, layer: LayerId) -> Inbox:
        return Inbox(self, layer)

    def pending(self) -> int:
        with self._lock:
            return sum(len(q) for q in self._queues.values())

    def register_monitor(self, party) -> None:
        if party not in MONITOR_PARTIES:
            raise PrivilegeError(f"{party} may not monitor the bus")
        self._monitors.add(party)

    def tap(self, caller) -> Tap:
        if caller not in self._monitors:
            raise PrivilegeError(f"{caller} is not a registered monitor")
        return Tap(self)

    # -- interventions --

    def censor(self, subject_seq: int, *, by, rationale: str) -> str:
        """Remove an undelivered-to-handler envelope from its inbox.

        Returns ``"removed"`` or ``"late-censor"`` when the envelope was
        already consumed (audit only).
        """
        if by is not LayerId.ASPIRATIONAL:
            raise PrivilegeError("only the Aspirational layer may censor")
        with self._lock:
            for layer, q in self._queues.items():
                for env in q:
                    if env.seq == subject_seq:
                        q.remove(env)
                        self.record_intervention(
                            InterventionRecord(
                                self.tick, "Censor", layer, "removed", rationale, subject_seq, env
                            )
                        )
                        return "removed"
            subject = next((e for e in self._delivered if e.seq == subject_seq), None)
            target = subject.target if subject is not None else LayerId.GLOBAL_STRATEGY
            self.record_intervention(
                InterventionRecord(self.tick, "Censor", target, "late-censor", rationale, subject_seq, subject)
            )
            return "late-censor"

    def record_intervention(self, record: InterventionRecord) -> None:
        with self._lock:
            self._append(record)

    # -- introspection --

    @property
    def publish_records(self) -> list[AuditRecord]:
        return [r for r in self.audit if isinstance(r, AuditRecord)]

    @property
    def delivered(self) -> list[Envelope]:
        with self._lock:
            return list(self._delivered)


def envelope_lines(envelopes: Iterable[Envelope]) -> str:
    return "".join(e.to_json() + "\n" for e in envelopes)
