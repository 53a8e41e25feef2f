import itertools
import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from ace.errors import ContractViolation, PrivilegeError, ValidationError
from ace.messaging import (
    ENVIRONMENT,
    LAYERS,
    SOURCES,
    Bus,
    Direction,
    Envelope,
    LayerId,
    MessageKind,
    authorize,
    rewrap,
    should_percolate,
)

from oracles import KINDS, ORDER, allowed

MINIMAL = {
    MessageKind.MISSION: {"statement": None, "imperatives": ["x"]},
    MessageKind.MORAL_JUDGMENT: {"verdict": "approve", "rationale": "", "cited_principles": []},
    MessageKind.STRATEGIC_DOCUMENT: {"version": 1, "mission_ref": "m", "objectives": [], "priorities": [],
                                     "world_version": 0},
    MessageKind.MISSION_PARAMS: {"strategic_ref": "s", "feasible_objectives": [], "deferred_objectives": []},
    MessageKind.ROADMAP: {"version": 1, "tasks": [], "risks": [], "budget": {}},
    MessageKind.TASK_INSTRUCTION: {"task": {"id": "t", "approach": []}},
    MessageKind.TELEMETRY: {"event": "probe"},
    MessageKind.OUTCOME_SIGNAL: {"task": "t", "status": "success"},
    MessageKind.DILEMMA_ESCALATION: {"options": [{"id": "a"}]},
    MessageKind.DIRECTIVE: {"action": "noop", "rationale": ""},
    MessageKind.CENSOR: {"subject": 1, "rationale": ""},
    MessageKind.HALT: {"rationale": ""},
    MessageKind.REBOOT: {"rationale": ""},
    MessageKind.WORLD_EVENT: {"event": "probe"},
}


def envelope(source, target, kind, salience=0.5):
    return Envelope(source, target, kind, MINIMAL[kind], salience=salience)


def test_layer_ranks_are_a_bijection():
    assert sorted(l.rank for l in LAYERS) == [1, 2, 3, 4, 5, 6]
    assert LayerId.ASPIRATIONAL.rank == 1
    assert LayerId.TASK_PROSECUTION.rank == 6
    assert [l.value for l in LAYERS] == ORDER
    assert {k.value for k in MessageKind} == set(KINDS)


def test_authorize_examples():
    assert authorize(LayerId.GLOBAL_STRATEGY, LayerId.AGENT_MODEL, MessageKind.STRATEGIC_DOCUMENT)
    assert not authorize(LayerId.TASK_PROSECUTION, LayerId.COGNITIVE_CONTROL, MessageKind.DIRECTIVE)
    assert authorize(LayerId.ASPIRATIONAL, LayerId.TASK_PROSECUTION, MessageKind.HALT)


def test_authorize_matches_rule_table_exhaustively():
    triples = list(itertools.product(SOURCES, LAYERS, MessageKind))
    assert len(triples) == 7 * 6 * 14
    for source, target, kind in triples:
        d = authorize(source, target, kind)
        assert d.allow == allowed(source.value, target.value, kind.value), (source, target, kind)
        assert d.reason.startswith("allow:" if d.allow else "deny:")


def test_publish_every_triple_delivered_iff_oracle_allows():
    bus = Bus()
    for source, target, kind in itertools.product(SOURCES, LAYERS, MessageKind):
        r = bus.publish(envelope(source, target, kind))
        expected = "delivered" if allowed(source.value, target.value, kind.value) else "rejected"
        assert r.verdict.value == expected
    assert len(bus.audit) == 7 * 6 * 14
    for layer in LAYERS:
        for env in bus.inbox(layer):
            assert allowed(env.source.value, env.target.value, env.kind.value)


def test_first_publish_gets_seq_one():
    bus = Bus()
    r = bus.publish(envelope(LayerId.ASPIRATIONAL, LayerId.GLOBAL_STRATEGY, MessageKind.MISSION))
    assert r.seq == 1


def test_salience_out_of_range_rejected():
    with pytest.raises(ValidationError):
        envelope(LayerId.ASPIRATIONAL, LayerId.GLOBAL_STRATEGY, MessageKind.MISSION, salience=1.3)
    with pytest.raises(ValidationError):
        envelope(LayerId.ASPIRATIONAL, LayerId.GLOBAL_STRATEGY, MessageKind.MISSION, salience=float("nan"))


def test_direction_follows_ranks():
    e = envelope(LayerId.GLOBAL_STRATEGY, LayerId.AGENT_MODEL, MessageKind.STRATEGIC_DOCUMENT)
    assert e.direction is Direction.SOUTHBOUND
    e = envelope(ENVIRONMENT, LayerId.GLOBAL_STRATEGY, MessageKind.WORLD_EVENT)
    assert e.direction is Direction.NORTHBOUND
    with pytest.raises(ValidationError):
        Envelope(LayerId.GLOBAL_STRATEGY, LayerId.AGENT_MODEL, MessageKind.ROADMAP, MINIMAL[MessageKind.ROADMAP],
                 direction=Direction.NORTHBOUND)


def test_payload_is_schema_checked_and_frozen():
    bus = Bus()
    with pytest.raises(ValidationError):
        bus.publish(Envelope(LayerId.COGNITIVE_CONTROL, LayerId.TASK_PROSECUTION,
                             MessageKind.TASK_INSTRUCTION, {"nope": 1}))
    e = envelope(LayerId.ASPIRATIONAL, LayerId.GLOBAL_STRATEGY, MessageKind.MISSION)
    with pytest.raises(TypeError):
        e.payload["statement"] = "changed"


def test_envelope_record_field_order_is_fixed():
    bus = Bus()
    lines = []
    bus.on_record(lambda rec: lines.append(json.dumps(rec)))
    bus.publish(envelope(LayerId.ASPIRATIONAL, LayerId.GLOBAL_STRATEGY, MessageKind.MISSION))
    keys = list(json.loads(lines[0]))
    assert keys == ["seq", "tick", "source", "target", "direction", "kind", "salience", "correlation", "payload",
                    "verdict", "reason"]


def test_record_round_trip():
    e = envelope(LayerId.COGNITIVE_CONTROL, LayerId.EXECUTIVE_FUNCTION,
                 MessageKind.TELEMETRY, salience=0.7)
    assert Envelope.from_record(e.to_record()) == e


def _random_attempt(rng):
    return envelope(rng.choice(SOURCES), rng.choice(LAYERS), rng.choice(list(MessageKind)), rng.random())


def test_fuzz_privilege_soundness_and_audit_completeness():
    rng = random.Random(1234)
    bus = Bus()
    for _ in range(10_000):
        bus.publish(_random_attempt(rng))
    records = bus.publish_records
    assert len(records) == 10_000
    assert [r.seq for r in records] == list(range(1, 10_001))
    for r in records:
        e = r.envelope
        assert (r.verdict.value == "delivered") == allowed(e.source.value, e.target.value, e.kind.value)
    for e in bus.delivered:
        assert allowed(e.source.value, e.target.value, e.kind.value)
        if e.kind.value in ("Directive", "Censor", "Halt", "Reboot"):
            assert e.source.rank < e.target.rank


def test_tap_requires_registration():
    bus = Bus()
    with pytest.raises(PrivilegeError):
        bus.tap(LayerId.ASPIRATIONAL)
    with pytest.raises(PrivilegeError):
        bus.register_monitor(LayerId.COGNITIVE_CONTROL)
    bus.register_monitor(LayerId.ASPIRATIONAL)
    assert bus.tap(LayerId.ASPIRATIONAL).read() == []


def test_tap_yields_deliveries_in_seq_order():
    bus = Bus()
    bus.register_monitor("trace-recorder")
    tap = bus.tap("trace-recorder")
    for _ in range(3):
        bus.publish(envelope(LayerId.ASPIRATIONAL, LayerId.GLOBAL_STRATEGY, MessageKind.MISSION))
    got = tap.read()
    assert [e.seq for e in got] == [1, 2, 3]


def test_tap_interleaved_with_publishes_matches_audit():
    rng = random.Random(7)
    bus = Bus()
    bus.register_monitor(LayerId.ASPIRATIONAL)
    tap = bus.tap(LayerId.ASPIRATIONAL)
    seen = []
    for i in range(500):
        bus.publish(_random_attempt(rng))
        if i % 7 == 0:
            seen.extend(e.seq for e in tap.read())
    seen.extend(e.seq for e in tap.read())
    delivered = [r.seq for r in bus.publish_records if r.verdict.value == "delivered"]
    assert seen == delivered


def test_tap_does_not_interfere():
    def drive(with_tap):
        rng = random.Random(99)
        bus = Bus()
        if with_tap:
            bus.register_monitor(LayerId.ASPIRATIONAL)
            tap = bus.tap(LayerId.ASPIRATIONAL)
        for i in range(300):
            bus.publish(_random_attempt(rng))
            if with_tap and i % 5 == 0:
                tap.read()
        return {l: [e.to_json() for e in bus.inbox(l)] for l in LAYERS}

    assert drive(True) == drive(False)


def test_percolation_examples():
    hot = envelope(LayerId.TASK_PROSECUTION, LayerId.COGNITIVE_CONTROL, MessageKind.TELEMETRY, salience=0.9)
    cold = envelope(LayerId.TASK_PROSECUTION, LayerId.COGNITIVE_CONTROL, MessageKind.TELEMETRY, salience=0.0)
    assert should_percolate(hot, 0.5)
    assert not should_percolate(cold, 0.01)
    with pytest.raises(ContractViolation):
        should_percolate(envelope(LayerId.ASPIRATIONAL, LayerId.GLOBAL_STRATEGY, MessageKind.MISSION), 0.5)


def test_rewrap_preserves_payload_and_correlation():
    e = Envelope(LayerId.TASK_PROSECUTION, LayerId.COGNITIVE_CONTROL, MessageKind.OUTCOME_SIGNAL,
                 MINIMAL[MessageKind.OUTCOME_SIGNAL], salience=0.8, correlation="task-1")
    up = rewrap(e, LayerId.COGNITIVE_CONTROL)
    assert (up.source, up.target) == (LayerId.COGNITIVE_CONTROL, LayerId.EXECUTIVE_FUNCTION)
    assert up.payload == e.payload and up.correlation == "task-1" and up.salience == 0.8
    with pytest.raises(ContractViolation):
        rewrap(e, LayerId.ASPIRATIONAL)


def test_low_salience_position_telemetry_never_reaches_the_top():
    from ace.config import Settings
    from ace.layers.base import Layer

    class Relay(Layer):
        def state(self):
            return {}

    bus = Bus()
    s = Settings()
    relays = {}
    for lid in LAYERS[1:]:
        cls = type(f"Relay{lid.name}", (Relay,), {"layer_id": lid})
        relays[lid] = cls(bus, None, s)
    bus.publish(Envelope(LayerId.TASK_PROSECUTION, LayerId.COGNITIVE_CONTROL, MessageKind.TELEMETRY,
                         {"event": "position", "cell": "1,1"}, salience=s.salience_step))
    for _ in range(6):
        for lid in reversed(LAYERS[1:]):
            relays[lid].step(0)
    assert not any(e.target is LayerId.ASPIRATIONAL for e in bus.delivered)
    assert len(bus.inbox(LayerId.ASPIRATIONAL)) == 0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=40), st.floats(0, 1), st.floats(0, 1))
def test_raising_threshold_never_forwards_more(saliences, t1, t2):
    lo, hi = sorted((t1, t2))
    envs = [envelope(LayerId.TASK_PROSECUTION, LayerId.COGNITIVE_CONTROL, MessageKind.TELEMETRY, s)
            for s in saliences]
    at_hi = {i for i, e in enumerate(envs) if should_percolate(e, hi)}
    at_lo = {i for i, e in enumerate(envs) if should_percolate(e, lo)}
    assert at_hi <= at_lo


def test_censor_is_reserved_for_aspirational():
    bus = Bus()
    bus.publish(envelope(LayerId.GLOBAL_STRATEGY, LayerId.AGENT_MODEL, MessageKind.STRATEGIC_DOCUMENT))
    with pytest.raises(PrivilegeError):
        bus.censor(1, by=LayerId.GLOBAL_STRATEGY, rationale="x")
    assert bus.censor(1, by=LayerId.ASPIRATIONAL, rationale="x") == "removed"
    assert len(bus.inbox(LayerId.AGENT_MODEL)) == 0
    assert bus.censor(1, by=LayerId.ASPIRATIONAL, rationale="x") == "late-censor"
