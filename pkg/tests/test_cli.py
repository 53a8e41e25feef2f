import json

import pytest

from ace import cli
from ace.memory import DeclarativeStore
from ace.runtime import Runtime, read_trace


def ace(*argv):
    return cli.main(list(argv))


@pytest.fixture
def trace(tmp_path):
    def make(scenario="jeeves_clean"):
        path = tmp_path / f"{scenario}.jsonl"
        assert ace("run", "--scenario", scenario, "--seed", "7", "--trace", str(path)) == 0
        return path
    return make


def test_run_succeeds_and_reports(trace, capsys):
    path = trace()
    out = capsys.readouterr().out
    assert out.startswith("quiescent after") and str(path) in out
    assert json.loads(read_trace(path)[0])["record"] == "header"


@pytest.mark.parametrize("argv", [
    ["--max-ticks", "0"],
    ["--scenario", "no-such-scenario"],
    ["--constitution", "/nonexistent/c.txt"],
    ["--override", "retry_cap=-1"],
    ["--override", "no_such_knob=1"],
])
def test_configuration_errors_exit_two(argv, capsys):
    assert ace("run", *argv) == 2
    assert "configuration error" in capsys.readouterr().err


def test_malformed_override_is_usage_error():
    with pytest.raises(SystemExit) as err:
        ace("run", "--override", "novalue")
    assert err.value.code == 2


def test_layer_failure_exits_three(tmp_path, monkeypatch, capsys):
    original = Runtime._step_layer

    def explode(self, layer, tick):
        if tick == 2 and layer.layer_id.value == "CognitiveControl":
            raise RuntimeError("boom")
        original(self, layer, tick)

    monkeypatch.setattr(Runtime, "_step_layer", explode)
    path = tmp_path / "t.jsonl"
    assert ace("run", "--trace", str(path)) == 3
    assert "boom" in capsys.readouterr().err
    assert any(json.loads(l).get("record") == "failure" for l in read_trace(path))


def test_replay_verifies_trace(trace, capsys):
    path = trace()
    capsys.readouterr()
    assert ace("replay", str(path)) == 0
    assert capsys.readouterr().out.startswith(f"verified {len(read_trace(path))} lines")


def test_replay_states_are_json(trace, capsys):
    path = trace()
    capsys.readouterr()
    assert ace("replay", "--states", str(path)) == 0
    states = json.loads(capsys.readouterr().out)
    assert set(states) == {"Aspirational", "GlobalStrategy", "AgentModel", "ExecutiveFunction",
                           "CognitiveControl", "TaskProsecution"}


def test_corrupt_trace_exits_three(trace, capsys):
    path = trace()
    lines = read_trace(path)
    path.write_text("\n".join(lines[: len(lines) - 5]) + "\n", encoding="utf-8")
    assert ace("replay", str(path)) == 3
    assert "last good seq" in capsys.readouterr().err


def test_missing_trace_exits_two(tmp_path):
    assert ace("replay", str(tmp_path / "none.jsonl")) == 2
    assert ace("inspect", str(tmp_path / "none.jsonl")) == 2


def test_inspect_kind_filter(trace, capsys):
    path = trace()
    capsys.readouterr()
    assert ace("inspect", str(path), "--kind", "OutcomeSignal") == 0
    rows = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    assert rows and {r["kind"] for r in rows} == {"OutcomeSignal"}


def test_inspect_without_filters_lists_every_envelope(trace, capsys):
    path = trace()
    capsys.readouterr()
    ace("inspect", str(path))
    out = capsys.readouterr().out.splitlines()
    audit = [l for l in read_trace(path) if l.startswith('{"seq":')]
    assert out == audit


def test_inspect_interventions_on_violation(trace, capsys):
    path = trace("harm_violation")
    capsys.readouterr()
    ace("inspect", str(path), "--interventions")
    lines = capsys.readouterr().out.splitlines()
    assert sum(1 for l in lines if " Censor " in l) == 1


def test_inspect_output_is_stable(trace, capsys):
    path = trace("jeeves_obstacle")
    capsys.readouterr()
    for view in ("--roadmaps", "--decisions", "--outcomes"):
        ace("inspect", str(path), view)
        first = capsys.readouterr().out
        ace("inspect", str(path), view)
        assert capsys.readouterr().out == first and first


def test_inspect_layer_and_tick_filters(trace, capsys):
    path = trace()
    capsys.readouterr()
    ace("inspect", str(path), "--layer", "TaskProsecution", "--ticks", "3:6")
    rows = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    assert rows
    assert all("TaskProsecution" in (r["source"], r["target"]) and 3 <= r["tick"] <= 6 for r in rows)


@pytest.mark.parametrize("argv", [["--kind", "Gossip"], ["--layer", "Basement"], ["--ticks", "9:2"],
                                  ["--ticks", "x"]])
def test_unknown_filter_is_usage_error(trace, argv):
    path = trace()
    with pytest.raises(SystemExit) as err:
        ace("inspect", str(path), *argv)
    assert err.value.code == 2


def test_memory_add(tmp_path, capsys):
    docs = tmp_path / "docs"
    docs.mkdir()
    (docs / "recipes.md").write_text("# Recipes\ntags: cooking, food\nboil water first\n", encoding="utf-8")
    (docs / "notes.txt").write_text("Notes\nplain text\n", encoding="utf-8")
    (docs / "image.png").write_bytes(b"\x89PNG")
    store = tmp_path / "store.jsonl"
    assert ace("memory", "add", str(docs), "--store", str(store)) == 0
    assert "added 2 documents" in capsys.readouterr().out
    loaded = DeclarativeStore.load(store)
    assert loaded.ids() == ["notes", "recipes"]
    assert [d.id for d in loaded.query("cooking")] == ["recipes"]
    # ingesting the same files again collides on ids
    assert ace("memory", "add", str(docs), "--store", str(store)) == 2


def test_memory_store_from_environment(tmp_path, monkeypatch):
    docs = tmp_path / "d"
    docs.mkdir()
    (docs / "a.txt").write_text("A\n", encoding="utf-8")
    monkeypatch.setenv(cli.MEMORY_STORE_ENV, str(tmp_path / "env.jsonl"))
    assert ace("memory", "add", str(docs)) == 0
    assert DeclarativeStore.load(tmp_path / "env.jsonl").ids() == ["a"]


def test_memory_add_missing_directory(tmp_path):
    assert ace("memory", "add", str(tmp_path / "nope"), "--store", str(tmp_path / "s.jsonl")) == 2
