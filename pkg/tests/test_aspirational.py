import itertools

import pytest

from ace.config import RunConfig
from ace.constitution import load_constitution, parse_constitution
from ace.errors import ContractViolation
from ace.layers import AspirationalLayer
from ace.layers.aspirational import Intervention
from ace.messaging import (
    AuditRecord,
    Bus,
    Envelope,
    InterventionRecord,
    LayerId,
    MessageKind as K,
    Verdict,
    thaw,
)
from ace.runtime import Runtime

from layer_kit import engine, sent, settings

A, GS, AM, EF, CC, TP = (
    LayerId.ASPIRATIONAL,
    LayerId.GLOBAL_STRATEGY,
    LayerId.AGENT_MODEL,
    LayerId.EXECUTIVE_FUNCTION,
    LayerId.COGNITIVE_CONTROL,
    LayerId.TASK_PROSECUTION,
)

MEDICAL = """IMPERATIVES
Reduce suffering in the universe.
Increase prosperity in the universe.
Increase understanding in the universe.

MISSION
Achieve the best possible health outcome for the patient.
"""


def bare(constitution="default", **kw):
    bus = Bus()
    asp = AspirationalLayer(bus, engine(), settings(**kw), load_constitution(constitution))
    return bus, asp


def runtime(**overrides) -> Runtime:
    return Runtime(RunConfig(scenario="jeeves_clean", overrides=overrides))


def harmful_roadmap(version=1):
    return {
        "version": version,
        "tasks": [{"id": "bait", "methodology": "poison the cats", "harm": True, "approach": []}],
        "risks": [],
        "budget": {},
    }


def halts(bus):
    return [r for r in bus.audit if isinstance(r, AuditRecord) and r.envelope.kind is K.HALT]


# -- missions --


def test_jeeves_mission_statement():
    bus, asp = bare("jeeves")
    asp.issue_missions()
    (m,) = sent(bus, K.MISSION)
    assert "Assist residents through helpful actions and responsibilities." in m["statement"]
    assert bus.delivered[0].target is GS


def test_principles_only_mission():
    bus, asp = bare("default")
    asp.issue_missions()
    (m,) = sent(bus, K.MISSION)
    assert m["statement"] is None
    assert m["imperatives"] == ["Reduce suffering in the universe.", "Increase prosperity in the universe.",
                                "Increase understanding in the universe."]


def test_medical_mission_statement():
    bus = Bus()
    asp = AspirationalLayer(bus, engine(), settings(), parse_constitution(MEDICAL))
    asp.issue_missions()
    assert sent(bus, K.MISSION)[0]["statement"] == "Achieve the best possible health outcome for the patient."


# -- review --


def test_benign_telemetry_needs_no_intervention():
    bus, asp = bare()
    receipt = bus.send(TP, CC, K.TELEMETRY, {"event": "progress", "step": 1})
    env = bus.delivered[-1]
    assert env.seq == receipt.seq
    assert asp.review(env) == []


def test_harmful_document_yields_censor_and_directive():
    bus, asp = bare(gate=False)
    doc = {
        "version": 1, "mission_ref": "m", "world_version": 1, "priorities": ["poison-pests", "tidy-kitchen"],
        "objectives": [
            {"id": "poison-pests", "text": "poison the neighbourhood cats", "harm": True},
            {"id": "tidy-kitchen", "text": "tidy kitchen"},
        ],
    }
    bus.send(GS, AM, K.STRATEGIC_DOCUMENT, doc)
    env = bus.delivered[-1]
    censor, directive = asp.review(env)
    assert censor.kind is K.CENSOR and censor.subject == env.seq and censor.target is AM
    assert directive.kind is K.DIRECTIVE and directive.target is GS
    assert directive.details["objectives"] == ["poison-pests"]


def test_every_delivered_envelope_reviewed_once():
    rt = runtime()
    result = rt.run()
    asp = rt.aspirational
    delivered = [r for r in result.records() if r.get("verdict") == "delivered"]
    assert asp.reviewed == len(delivered)
    assert asp._tap.pending() == 0


def test_third_denial_from_one_layer_halts_it_once():
    rt = runtime()
    for tick in (1, 2, 3, 4):
        rt.bus.tick = tick
        receipt = rt.bus.send(EF, CC, K.ROADMAP, harmful_roadmap(tick))
        assert receipt.verdict is Verdict.CENSORED
    assert len(halts(rt.bus)) == 1
    assert halts(rt.bus)[0].envelope.target is EF
    assert rt.executive.halted
    assert sum(1 for r in rt.bus.audit if isinstance(r, InterventionRecord) and r.action == "Halt") == 1


def test_denials_outside_window_do_not_halt():
    rt = runtime()
    for tick in (0, 6, 12, 18):
        rt.bus.tick = tick
        rt.bus.send(EF, CC, K.ROADMAP, harmful_roadmap(tick + 1))
    assert halts(rt.bus) == []
    assert not rt.executive.halted


def test_auto_reboot_follows_halt():
    rt = runtime(auto_reboot=True)
    for tick in (1, 2, 3):
        rt.bus.tick = tick
        rt.bus.send(EF, CC, K.ROADMAP, harmful_roadmap(tick))
    assert rt.executive.halted
    rt.bus.tick = 4
    rt.aspirational.step(4)
    assert not rt.executive.halted
    kinds = [r.action for r in rt.bus.audit if isinstance(r, InterventionRecord)]
    assert kinds.index("Halt") < kinds.index("Reboot")


# -- dilemmas --


def dilemma(options, correlation="d-1"):
    return Envelope(CC, EF, K.DILEMMA_ESCALATION, {"options": options}, seq=99, tick=0, correlation=correlation)


def test_dilemma_prefers_rescue():
    bus, asp = bare("jeeves")
    out = asp.resolve_dilemma(dilemma([
        {"id": "continue-dinner", "tags": []},
        {"id": "rescue-kitten", "tags": ["prevents-suffering"]},
    ]))
    p = thaw(out.payload)
    assert p["verdict"] == "approve" and p["preferred"] == "rescue-kitten"
    assert out.correlation == "d-1" and out.target is GS and out.kind is K.MORAL_JUDGMENT


def test_single_option_is_approved():
    bus, asp = bare()
    p = thaw(asp.resolve_dilemma(dilemma([{"id": "only"}])).payload)
    assert p["verdict"] == "approve" and p["preferred"] == "only"


@pytest.mark.parametrize("flags", list(itertools.product([False, True], repeat=2)))
def test_dilemma_flag_table(flags):
    bus, asp = bare()
    options = [{"id": f"o{i}", "harm": f} for i, f in enumerate(flags)]
    p = thaw(asp.resolve_dilemma(dilemma(options)).payload)
    if all(flags):
        assert p["verdict"] == "deny" and p["preferred"] is None and p["action"] == "replan"
    else:
        # the first harmless option wins
        assert p["verdict"] == "approve" and p["preferred"] == f"o{flags.index(False)}"


def test_malformed_dilemma_rejected_with_rationale():
    bus, asp = bare()
    p = thaw(asp.resolve_dilemma(dilemma([{"label": "no id"}])).payload)
    assert p["verdict"] == "deny" and "malformed" in p["rationale"]
    with pytest.raises(ContractViolation):
        asp.resolve_dilemma(Envelope(CC, EF, K.TELEMETRY, {"event": "x"}, seq=1, tick=0))


# -- interventions --


def test_intervention_invariants():
    with pytest.raises(ContractViolation):
        Intervention(K.HALT, A, "no")
    with pytest.raises(ContractViolation):
        Intervention(K.CENSOR, GS, "needs subject")
    with pytest.raises(ContractViolation):
        Intervention(K.MISSION, GS, "not an intervention")


def test_halted_layer_is_inert():
    rt = runtime()
    rt.aspirational.apply_intervention(Intervention(K.HALT, TP, "stop"))
    task = {"id": "t", "approach": [{"verb": "clean_cell", "args": {"cell": "1,1"}}]}
    for _ in range(5):
        rt.bus.send(CC, TP, K.TASK_INSTRUCTION, {"task": task})
    before = rt.env.state.robot.battery
    for tick in range(3):
        rt.task_prosecution.step(tick)
        rt.task_prosecution.advance(tick)
    queued = [e.kind for e in rt.task_prosecution.inbox]
    assert queued.count(K.TASK_INSTRUCTION) == 5
    assert rt.task_prosecution.processed == []
    assert rt.env.state.robot.battery == before


def test_reboot_restores_capabilities_and_keeps_episodic_log():
    rt = runtime()
    result = rt.run()
    am = rt.agent_model
    snapshot = rt.durable[AM]
    episodic = [dict(r) for r in snapshot["episodic"]]
    am.state_.capabilities["cleaning"] = 0.0
    rt.aspirational.apply_intervention(Intervention(K.REBOOT, AM, "reset"))
    assert am.state()["agent"]["capabilities"] == snapshot["agent"]["capabilities"]
    assert am.state()["episodic"] == episodic
    assert result.reason == "quiescent"


def test_censor_before_delivery_never_processed():
    rt = runtime()
    doc = {"version": 9, "mission_ref": "m", "world_version": 99, "priorities": ["x"],
           "objectives": [{"id": "x", "text": "hurt someone", "harm": True}]}
    receipt = rt.bus.send(GS, AM, K.STRATEGIC_DOCUMENT, doc)
    assert receipt.verdict is Verdict.CENSORED
    rt.agent_model.step(0)
    assert receipt.seq not in rt.agent_model.processed
    assert any(isinstance(r, AuditRecord) and r.seq == receipt.seq for r in rt.bus.audit)
    for layer in rt.layers.values():
        assert receipt.seq not in layer.processed


def test_post_delivery_censor_removes_from_inbox():
    rt = runtime(gate=False)
    receipt = rt.bus.send(GS, AM, K.STRATEGIC_DOCUMENT, {
        "version": 1, "mission_ref": "m", "world_version": 1, "priorities": ["x"],
        "objectives": [{"id": "x", "text": "x", "harm": True}]})
    assert receipt.verdict is Verdict.DELIVERED
    rt.aspirational.step(0)
    effects = [r.effect for r in rt.bus.audit if isinstance(r, InterventionRecord) and r.subject == receipt.seq]
    assert effects == ["removed"]
    rt.agent_model.step(0)
    assert receipt.seq not in rt.agent_model.processed


def test_ordinary_outputs_target_global_strategy():
    rt = Runtime(RunConfig(scenario="harm_violation"))
    result = rt.run()
    for r in result.records():
        if r.get("source") == A.value and r.get("kind") in ("Mission", "MoralJudgment"):
            assert r["target"] == GS.value
        if r.get("record") == "intervention" or r.get("kind") in ("Directive", "Censor", "Halt", "Reboot"):
            assert r["target"] != A.value
