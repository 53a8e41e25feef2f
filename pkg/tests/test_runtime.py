import json

import pytest

from ace.config import RunConfig
from ace.errors import ConfigurationError, CorruptionError
from ace.runtime import Runtime, RuntimeFailure, default_states, read_trace, replay, run


def config(**kw) -> RunConfig:
    return RunConfig(**{"scenario": "jeeves_clean", "seed": 7, **kw})


# -- configuration --


@pytest.mark.parametrize("ticks", [0, -1, True, 2.5])
def test_non_positive_max_ticks_rejected(ticks):
    with pytest.raises(ConfigurationError):
        RunConfig(max_ticks=ticks)


@pytest.mark.parametrize("kw", [{"cognition": "magic"}, {"mode": "async"}, {"fault": {"layer": "AgentModel"}},
                                {"overrides": {"frustration_threshold": 2.0}}])
def test_bad_config_rejected_before_any_tick(kw):
    with pytest.raises(ConfigurationError):
        RunConfig(**kw)


def test_config_dict_round_trip():
    c = config(overrides={"retry_cap": 3}, fault={"layer": "AgentModel", "tick": 2})
    assert RunConfig.from_dict(c.to_dict()) == c


# -- run --


def test_seeded_jeeves_ends_with_clean_kitchen():
    result = run(config())
    assert result.reason == "quiescent"
    snap = result.runtime.env.snapshot()
    kitchen = {k: v for k, v in snap.items() if k.startswith("kitchen.") and k.endswith(".dirt")}
    assert kitchen and all(v == 0 for v in kitchen.values())
    outcomes = [r for r in result.records() if r.get("kind") == "OutcomeSignal" and r.get("source") == "TaskProsecution"]
    assert outcomes and all(r["payload"]["status"] == "success" for r in outcomes)


def test_trace_has_header_first_and_end_last():
    recs = run(config()).records()
    assert recs[0]["record"] == "header" and recs[0]["config"]["seed"] == 7
    assert recs[-2]["record"] == "snapshot" and recs[-1]["record"] == "end"
    seqs = [r["seq"] for r in recs if "seq" in r]
    assert seqs == list(range(1, len(seqs) + 1))


def test_identical_configs_give_byte_identical_traces():
    for scenario in ("jeeves_clean", "frustration"):
        assert run(config(scenario=scenario)).text == run(config(scenario=scenario)).text


def test_clean_house_is_quiescent_without_tasks():
    result = run(config(scenario="clean_house"))
    assert result.reason == "quiescent" and result.ticks < 300
    assert not any(r.get("kind") == "TaskInstruction" for r in result.records())


def test_max_ticks_bounds_the_run():
    result = run(config(max_ticks=2))
    assert result.ticks == 2 and result.reason == "max-ticks"


def test_trace_written_to_file(tmp_path):
    path = tmp_path / "t.jsonl"
    result = run(config(trace=str(path)))
    assert path.read_text(encoding="utf-8") == result.text
    assert read_trace(path) == result.lines


def test_threaded_mode_reaches_quiescence():
    result = run(config(mode="threaded"))
    assert result.reason == "quiescent"
    snap = result.runtime.env.snapshot()
    assert all(v == 0 for k, v in snap.items() if k.startswith("kitchen.") and k.endswith(".dirt"))


def test_layer_failure_flushes_trace_with_marker(tmp_path):
    path = tmp_path / "crash.jsonl"
    with pytest.raises(RuntimeFailure):
        run(config(trace=str(path), fault={"layer": "CognitiveControl", "tick": 3}))
    recs = [json.loads(l) for l in read_trace(path)]
    (marker,) = [r for r in recs if r.get("record") == "failure"]
    assert marker["tick"] == 3 and marker["layer"] == "CognitiveControl"
    assert recs[-1]["record"] == "snapshot"


def test_trace_before_failure_marker_replays():
    rt = Runtime(config(fault={"layer": "ExecutiveFunction", "tick": 1}))
    with pytest.raises(RuntimeFailure):
        rt.run()
    result = replay(rt.lines)
    assert result.failed and result.lines_verified == len(rt.lines)


# -- replay --


@pytest.mark.parametrize("scenario", ["jeeves_clean", "jeeves_obstacle", "harm_violation"])
def test_replay_reconstructs_final_snapshots(scenario):
    result = run(config(scenario=scenario))
    rebuilt = replay(result.lines)
    snapshot = [r for r in result.records() if r.get("record") == "snapshot"][-1]
    assert json.dumps(rebuilt.layers, sort_keys=True) == json.dumps(snapshot["layers"], sort_keys=True)
    assert rebuilt.layers == result.layers and rebuilt.env == result.env
    assert rebuilt.lines_verified == len(result.lines) and not rebuilt.failed


def test_empty_trace_gives_default_states():
    out = replay([])
    assert out.layers == default_states() and out.lines_verified == 0
    assert replay(["", "  "]).layers == default_states()


def test_tampered_line_is_corruption():
    lines = list(run(config()).lines)
    i = next(i for i, l in enumerate(lines) if l.startswith('{"seq":') and '"TaskInstruction"' in l)
    prior = [json.loads(l)["seq"] for l in lines[:i] if l.startswith('{"seq":')]
    lines[i] = lines[i].replace('"attempt":1', '"attempt":9')
    with pytest.raises(CorruptionError) as err:
        replay(lines)
    assert err.value.last_good_seq == prior[-1]


def test_truncated_trace_names_last_good_seq():
    lines = run(config()).lines
    cut = lines[: len(lines) // 2]
    last = [json.loads(l)["seq"] for l in cut if l.startswith('{"seq":')][-1]
    with pytest.raises(CorruptionError) as err:
        replay(cut)
    assert err.value.last_good_seq == last


def test_extra_lines_are_corruption():
    lines = run(config()).lines + ['{"record":"end","ticks":1,"reason":"x"}']
    with pytest.raises(CorruptionError):
        replay(lines)


def test_unreadable_header_is_corruption():
    with pytest.raises(CorruptionError) as err:
        replay(['{"record":"snapshot"}'])
    assert err.value.last_good_seq is None
