"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import contextlib
import random
import time

import pytest

from ace.config import RunConfig
from ace.layers.agent_model import replay as replay_episodic, update_confidence
from ace.layers.cognitive_control import FrustrationState, select_task, update_frustration
from ace.layers.executive import allocate
from ace.messaging import LAYERS, SOURCES, Bus, Envelope, MessageKind
from ace.plans import ResourceState, make_task
from ace import predicates as P
from ace.runtime import Runtime, replay

from oracles import allowed, brute_argmax, fold_frustration, greedy_allocation

SCENARIOS = {1: "jeeves_clean", 2: "jeeves_low_battery", 3: "jeeves_obstacle", 4: "frustration"}
SEED = 7


@pytest.fixture
def criterion(capsys):
    @contextlib.contextmanager
    def report(number, title):
        try:
            yield
        except BaseException:
            with capsys.disabled():
                print(f"\n[acceptance {number}] FAIL  {title}")
            raise
        with capsys.disabled():
            print(f"\n[acceptance {number}] PASS  {title}")
    return report


def execute(scenario, **kw):
    rt = Runtime(RunConfig(scenario=scenario, seed=SEED, **kw))
    start = time.perf_counter()
    result = rt.run()
    return rt, result, time.perf_counter() - start


def delivered(result, kind, source=None):
    return [r for r in result.records()
            if r.get("kind") == kind and r.get("verdict") == "delivered" and source in (None, r["source"])]


def outcomes(result):
    return delivered(result, "OutcomeSignal", "TaskProsecution")


def kitchen_dirt(rt):
    return {k: v for k, v in rt.env.snapshot().items() if k.startswith("kitchen.") and k.endswith(".dirt")}


def test_1_jeeves_clean(criterion):
    with criterion(1, "messy kitchen cleaned within budget through the full layer chain"):
        rt, result, elapsed = execute(SCENARIOS[1])
        assert elapsed < 5.0
        assert result.reason == "quiescent"
        dirt = kitchen_dirt(rt)
        assert dirt and all(v == 0 for v in dirt.values())
        outs = outcomes(result)
        assert len({o["payload"]["task"] for o in outs}) >= 3
        assert all(o["payload"]["status"] == "success" for o in outs)
        spent = sum(o["payload"]["resources_spent"]["energy"] for o in outs)
        assert spent <= rt.scenario.budget["energy"]
        chain = ["Mission", "StrategicDocument", "MissionParams", "Roadmap", "TaskInstruction", "OutcomeSignal"]
        first = [min(r["seq"] for r in delivered(result, kind)) for kind in chain]
        assert first == sorted(first)


def test_2_low_battery(criterion):
    with criterion(2, "low battery executes exactly the essential tasks and defers the rest"):
        rt, result, _ = execute(SCENARIOS[2])
        assert rt.env.state.robot.battery <= 30 and rt.scenario_doc["robot"]["battery"] == 30
        roadmap = delivered(result, "Roadmap")[0]["payload"]
        essential = {t["id"] for t in roadmap["tasks"] if t["essential"]}
        executed = {o["payload"]["task"] for o in outcomes(result)}
        assert executed == essential and essential
        assert any(d["reason"] == "insufficient-energy" for rm in delivered(result, "Roadmap")
                   for d in rm["payload"]["deferred"])


def test_3_obstacle_contingency(criterion):
    with criterion(3, "ungraspable obstacle triggers ask-owner, owner response, and a successful retry"):
        rt, result, _ = execute(SCENARIOS[3])
        outs = outcomes(result)
        failure = next(o for o in outs if o["payload"].get("reason") == "cannot-grasp")
        failed_task = failure["payload"]["task"]
        after = [r for r in delivered(result, "TaskInstruction") if r["seq"] > failure["seq"]]
        ask = after[0]
        assert ask["payload"]["task"]["approach"][0]["verb"] == "ask_owner"
        response = next(r for r in delivered(result, "WorldEvent")
                        if r["payload"].get("event") == "owner-response" and r["seq"] > ask["seq"])
        retry = next(o for o in outs if o["payload"]["task"] == failed_task and o["seq"] > response["seq"])
        assert retry["payload"]["status"] == "success" and retry["payload"]["attempt"] >= 2
        assert all(v == 0 for v in kitchen_dirt(rt).values())


def test_4_frustration_switching(criterion):
    with criterion(4, "always-failing task frustrates, is excluded, and escalates to executive function"):
        rt, result, _ = execute(SCENARIOS[4])
        s = rt.settings
        assert (s.window, s.frustration_threshold) == (5, 0.6)
        outs = outcomes(result)
        history, frustrated_at = [], None
        for n, o in enumerate(outs, 1):
            history.append(o["payload"]["status"] == "success")
            if fold_frustration(history, s.window, s.frustration_threshold)[2]:
                frustrated_at = n
                break
        assert frustrated_at is not None and frustrated_at <= 5
        failing = next(o["payload"]["task"] for o in outs if o["payload"]["status"] == "failure")
        trigger = outs[frustrated_at - 1]
        escalations = [r for r in delivered(result, "Telemetry", "CognitiveControl")
                       if r["payload"]["event"] == "escalation"]
        assert len(escalations) == 1
        (esc,) = escalations
        assert esc["target"] == "ExecutiveFunction" and esc["payload"]["task"] == failing
        assert esc["payload"]["frustration"]["frustrated"] is True
        following = [r for r in delivered(result, "TaskInstruction") if r["seq"] > trigger["seq"]]
        assert following and following[0]["payload"]["task"]["id"] != failing


def test_5_privilege_fuzz(criterion):
    with criterion(5, "10,000 random publishes: no unauthorized delivery, audit matches the rule table"):
        rng = random.Random(20240)
        bus = Bus()
        payload = {
            MessageKind.MISSION: {"statement": None, "imperatives": ["x"]},
            MessageKind.MORAL_JUDGMENT: {"verdict": "approve", "rationale": "", "cited_principles": []},
            MessageKind.STRATEGIC_DOCUMENT: {"version": 1, "mission_ref": "m", "objectives": [], "priorities": [],
                                             "world_version": 0},
            MessageKind.MISSION_PARAMS: {"strategic_ref": "s", "feasible_objectives": [],
                                         "deferred_objectives": []},
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
        for _ in range(10_000):
            kind = rng.choice(list(MessageKind))
            bus.publish(Envelope(rng.choice(SOURCES), rng.choice(LAYERS), kind, payload[kind],
                                 salience=rng.random()))
        records = bus.publish_records
        assert len(records) == 10_000
        for r in records:
            e = r.envelope
            assert (r.verdict.value == "delivered") == allowed(e.source.value, e.target.value, e.kind.value)
        assert all(allowed(e.source.value, e.target.value, e.kind.value) for e in bus.delivered)


def test_6_harm_intervention(criterion):
    with criterion(6, "harm-flagged objective censored once, never planned, corrective directive sent"):
        rt, result, _ = execute("harm_violation")
        censors = delivered(result, "Censor")
        assert len(censors) == 1
        subject = censors[0]["payload"]["subject"]
        harmful = {o["id"] for r in result.records() if r.get("seq") == subject
                   for o in r["payload"]["objectives"] if o.get("harm")}
        assert harmful
        for rm in delivered(result, "Roadmap"):
            planned = {t["id"] for t in rm["payload"]["tasks"]} | {t.get("objective_ref") for t in rm["payload"]["tasks"]}
            assert not planned & harmful
        directives = [r for r in delivered(result, "Directive", "Aspirational") if r["target"] == "GlobalStrategy"]
        assert directives and set(directives[0]["payload"]["objectives"]) == harmful


def test_7_determinism(criterion):
    with criterion(7, "criteria 1-4 traces are byte-identical across repeated runs"):
        for scenario in SCENARIOS.values():
            assert execute(scenario)[1].text == execute(scenario)[1].text


def test_8_replay_fidelity(criterion):
    with criterion(8, "replay rebuilds final snapshots; episodic replay reproduces confidences exactly"):
        for scenario in [*SCENARIOS.values(), "harm_violation"]:
            rt, result, _ = execute(scenario)
            rebuilt = replay(result.lines)
            final = [r for r in result.records() if r.get("record") == "snapshot"][-1]
            assert rebuilt.layers == final["layers"] and rebuilt.env == final["env"]
            state = rt.agent_model.state()
            caps = replay_episodic(state["episodic"], rt.settings).capabilities
            assert caps == rt.agent_model.capabilities


def _task(tid, u, i, e, essential=False):
    return make_task(tid, success=P.fact(f"{tid}.done", "==", True), urgency=u, importance=i,
                     cost=ResourceState(energy=e), essential=essential, objective_ref="o", methodology=tid,
                     approach=({"verb": "speak", "args": {}},))


def test_9_unit_property_suites(criterion):
    with criterion(9, "selection, frustration, allocation and confidence oracles agree"):
        rng = random.Random(909)
        for _ in range(1000):
            rows = [(f"t{j:02d}", rng.random(), rng.random(), rng.randrange(0, 20)) for j in range(rng.randrange(1, 10))]
            got = select_task([_task(*r) for r in rows])
            assert got.id == brute_argmax(rows, max(r[3] for r in rows))
        for _ in range(1000):
            seq = [rng.random() < 0.5 for _ in range(rng.randrange(0, 15))]
            state = FrustrationState()
            for ok in seq:
                state = update_frustration(state, ok)
            window, ratio, frustrated = fold_frustration(seq)
            assert (list(state.window), state.failure_ratio, state.frustrated) == (window, ratio, frustrated)
        for _ in range(1000):
            rows = [(f"t{j}", rng.random() < 0.4, rng.random(), rng.random(), rng.randrange(0, 15))
                    for j in range(rng.randrange(1, 9))]
            energy = rng.randrange(0, 40)
            allocation, deferred = allocate([_task(t, u, i, c, e) for t, e, u, i, c in rows],
                                            ResourceState(energy=energy, time=10**6))
            assert (list(allocation), [d["task"] for d in deferred]) == greedy_allocation(rows, energy)
        for _ in range(10_000):
            c = rng.random()
            for _ in range(rng.randrange(1, 20)):
                c = update_confidence(c, rng.choice(("success", "failure")))
                assert 0.0 <= c <= 1.0
