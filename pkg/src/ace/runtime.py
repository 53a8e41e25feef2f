"""Deterministic scheduler wiring the six layers, the bus and the environment.

Per tick: owner responses and scheduled events are injected, each layer
drains its inbox in rank order 1..6, Task Prosecution advances the
environment by at most one command, and every running layer's state is
snapshotted.  The run ends at quiescence or ``max_ticks``.

The trace is a JSON-lines file: a header (config, constitution text,
scenario document), one line per audit record (envelope fields in fixed
order, then verdict and reason), intervention and environment-step
records, and a final snapshot plus end or failure marker.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .cognition import make_engine
from .config import RunConfig
from .constitution import parse_constitution, read_constitution_text
from .errors import AceError, CorruptionError
from .layers.agent_model import AgentModelLayer
from .layers.aspirational import AspirationalLayer
from .layers.base import Layer
from .layers.cognitive_control import CognitiveControlLayer
from .layers.executive import ExecutiveFunctionLayer
from .layers.global_strategy import GlobalStrategyLayer
from .layers.task_prosecution import TaskProsecutionLayer
from .memory import DeclarativeStore
from .messaging import ENVIRONMENT, LAYERS, Bus, Envelope, LayerId, MessageKind as K, dumps, parse_party
from .sim import (
    Environment,
    apply_effect,
    inject,
    layout_view,
    owner_responses,
    read_scenario_doc,
    scenario_from_doc,
    state_to_dict,
)

TRACE_FORMAT = 1


class RuntimeFailure(AceError):
    """A layer raised during a run; the trace carries a failure marker."""


class InjectedFault(AceError):
    """Deliberate crash used to exercise failure handling."""


@dataclass
class RunResult:
    lines: list[str]
    layers: dict[str, dict]
    env: dict
    ticks: int
    reason: str
    runtime: "Runtime" = field(repr=False, default=None)

    @property
    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines)

    def records(self) -> list[dict]:
        return [json.loads(line) for line in self.lines]


class Runtime:
    def __init__(self, config: RunConfig, *, constitution_text: str | None = None,
                 scenario_doc: Mapping | None = None, store: DeclarativeStore | None = None):
        self.config = config
        self.settings = config.settings
        self.constitution_text = (
            constitution_text if constitution_text is not None else read_constitution_text(config.constitution)
        )
        self.constitution = parse_constitution(self.constitution_text)
        self.scenario_doc = dict(scenario_doc) if scenario_doc is not None else read_scenario_doc(config.scenario)
        self.scenario = scenario_from_doc(self.scenario_doc)
        if store is None and config.memory:
            store = DeclarativeStore.load(config.memory)

        self.lines: list[str] = []
        self._emit({
            "record": "header",
            "format": TRACE_FORMAT,
            "config": config.to_dict(),
            "constitution": self.constitution_text,
            "scenario": self.scenario_doc,
        })
        self.bus = Bus()
        self.bus.register_monitor("trace-recorder")
        self.bus.on_record(self._emit)
        self._token = object()
        self.env = Environment(self.scenario.initial_state(), self._token)
        self.env.listeners.append(self._emit)

        kb = self.scenario.knowledge

        def engine():
            return make_engine(config.cognition, scenario_knowledge=kb)

        s = self.settings
        self.aspirational = AspirationalLayer(self.bus, engine(), s, self.constitution, controller=self)
        self.global_strategy = GlobalStrategyLayer(self.bus, engine(), s, rules=kb.get("strategy_rules", []))
        self.agent_model = AgentModelLayer(self.bus, engine(), s, profile=self.scenario.agent, store=store)
        self.executive = ExecutiveFunctionLayer(self.bus, engine(), s, budget=self.scenario.budget,
                                                reactions=kb.get("reactions", []))
        self.cognitive_control = CognitiveControlLayer(self.bus, engine(), s)
        self.task_prosecution = TaskProsecutionLayer(self.bus, engine(), s, environment=self.env,
                                                     token=self._token, effectors=self.scenario.effectors)
        self.layers: dict[LayerId, Layer] = {
            layer.layer_id: layer
            for layer in (self.aspirational, self.global_strategy, self.agent_model, self.executive,
                          self.cognitive_control, self.task_prosecution)
        }
        self.durable: dict[LayerId, dict] = {lid: self._copy(l.state()) for lid, l in self.layers.items()}
        self.tick = 0
        self._active: str | None = None

    # -- trace --

    def _emit(self, record: Mapping) -> None:
        self.lines.append(dumps(record))

    @staticmethod
    def _copy(state: Mapping) -> dict:
        return json.loads(dumps(state))

    def states(self) -> dict[str, dict]:
        return {lid.value: self._copy(layer.state()) for lid, layer in self.layers.items()}

    # -- controller used by the Aspirational layer --

    def halt(self, layer: LayerId) -> None:
        self.layers[layer].halted = True

    def reboot(self, layer: LayerId) -> None:
        target = self.layers[layer]
        target.restore(self._copy(self.durable[layer]))
        target.halted = False

    # -- scheduling --

    def survey(self) -> None:
        state = self.env.state
        snap = self.env.snapshot()
        extra = dict(self.scenario_doc.get("facts") or {})
        rooms = {k: v for k, v in snap.items() if k.endswith(".dirt") and k.count(".") == 1}
        self.bus.publish(Envelope(ENVIRONMENT, LayerId.GLOBAL_STRATEGY, K.WORLD_EVENT,
                                  {"event": "survey", "facts": {**rooms, **extra}}))
        self.bus.publish(Envelope(ENVIRONMENT, LayerId.EXECUTIVE_FUNCTION, K.WORLD_EVENT, {
            "event": "layout",
            "layout": layout_view(state),
            "zones": self.scenario.zones,
            "hazards": self.scenario.hazards,
            "constants": state.constants,
            "facts": extra,
        }))
        self.bus.publish(Envelope(ENVIRONMENT, LayerId.EXECUTIVE_FUNCTION, K.TELEMETRY,
                                  {"event": "battery", "battery": state.robot.battery,
                                   "cell": snap["robot.cell"]}, salience=self.settings.salience_status))

    def inject_events(self, tick: int) -> None:
        for payload in owner_responses(self.env.state):
            for target in (LayerId.GLOBAL_STRATEGY, LayerId.EXECUTIVE_FUNCTION):
                self.bus.publish(Envelope(ENVIRONMENT, target, K.WORLD_EVENT, payload))
        for event in inject(self.scenario.schedule, tick):
            apply_effect(self.env.state, event.effect)
            self.bus.publish(Envelope(ENVIRONMENT, parse_party(event.target), K.WORLD_EVENT, event.payload))

    def _step_layer(self, layer: Layer, tick: int) -> None:
        fault = self.config.fault
        if fault and fault["tick"] == tick and fault["layer"] == layer.layer_id.value:
            raise InjectedFault(f"injected fault in {layer.layer_id.value} at tick {tick}")
        layer.step(tick)

    def tick_once(self, tick: int) -> None:
        self.tick = tick
        self.bus.tick = tick
        self.env.state.tick = tick
        if tick == 0:
            self.survey()
            self.aspirational.issue_missions()
        self.inject_events(tick)
        if self.config.mode == "threaded":
            self._step_threaded(tick)
        else:
            for lid in LAYERS:
                self._active = lid.value
                self._step_layer(self.layers[lid], tick)
        self._active = LayerId.TASK_PROSECUTION.value
        self.task_prosecution.advance(tick)
        self._active = None
        for lid, layer in self.layers.items():
            if not layer.halted:
                self.durable[lid] = self._copy(layer.state())

    def _step_threaded(self, tick: int) -> None:
        errors: list[BaseException] = []

        def work(layer: Layer) -> None:
            try:
                self._step_layer(layer, tick)
            except BaseException as exc:  # surfaced on the scheduler thread
                errors.append(exc)

        threads = [threading.Thread(target=work, args=(self.layers[lid],), name=lid.value) for lid in LAYERS]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            raise errors[0]

    def quiescent(self) -> bool:
        for lid, layer in self.layers.items():
            if layer.halted:
                continue
            if len(layer.inbox) or layer.busy():
                return False
        if self.scenario.schedule.pending_after(self.tick) or self.env.state.requests:
            return False
        return True

    def run(self) -> RunResult:
        reason = "max-ticks"
        ticks = 0
        try:
            for tick in range(self.config.max_ticks):
                self.tick_once(tick)
                ticks = tick + 1
                if self.quiescent():
                    reason = "quiescent"
                    break
        except Exception as exc:
            self._emit({"record": "failure", "tick": self.tick, "layer": self._active,
                        "error": f"{type(exc).__name__}: {exc}"})
            self._emit(self._snapshot_record())
            self.flush()
            raise RuntimeFailure(f"run failed at tick {self.tick} in {self._active}: {exc}") from exc
        self._emit(self._snapshot_record())
        self._emit({"record": "end", "ticks": ticks, "reason": reason})
        self.flush()
        return RunResult(list(self.lines), self.states(), state_to_dict(self.env.state), ticks, reason, self)

    def _snapshot_record(self) -> dict:
        return {"record": "snapshot", "tick": self.tick, "layers": self.states(),
                "env": state_to_dict(self.env.state)}

    def flush(self) -> None:
        if self.config.trace:
            Path(self.config.trace).write_text("".join(l + "\n" for l in self.lines), encoding="utf-8")


def run(config: RunConfig, **kwargs) -> RunResult:
    return Runtime(config, **kwargs).run()


# -- replay -------------------------------------------------------------------


@dataclass
class ReplayResult:
    layers: dict[str, dict]
    env: dict | None
    lines_verified: int
    failed: bool = False


def default_states() -> dict[str, dict]:
    return Runtime(RunConfig()).states()


def read_trace(path: str | Path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def replay(lines: Iterable[str]) -> ReplayResult:
    """Re-execute the run described by a trace header and verify every line.

    Raises :class:`CorruptionError` naming the last envelope seq that
    verified when a line differs or the trace ends early.
    """
    lines = [l for l in lines]
    if not lines or all(not l.strip() for l in lines):
        return ReplayResult(default_states(), None, 0)
    try:
        header = json.loads(lines[0])
        if header.get("record") != "header":
            raise ValueError("first line is not a header")
        config = RunConfig.from_dict(header["config"])
        runtime = Runtime(config, constitution_text=header["constitution"], scenario_doc=header["scenario"])
    except (ValueError, KeyError, TypeError, AceError) as exc:
        raise CorruptionError(f"trace header unreadable: {exc}", None) from exc
    failed = False
    try:
        runtime.run()
    except RuntimeFailure:
        failed = True
    produced = runtime.lines
    last_good: int | None = None
    for i, line in enumerate(lines):
        if i >= len(produced) or line != produced[i]:
            raise CorruptionError(f"trace line {i + 1} does not match re-execution", last_good)
        seq = _seq_of(line)
        if seq is not None:
            last_good = seq
    if len(lines) < len(produced):
        raise CorruptionError(f"trace truncated after line {len(lines)}", last_good)
    return ReplayResult(runtime.states(), state_to_dict(runtime.env.state), len(lines), failed)


def _seq_of(line: str) -> int | None:
    if not line.startswith('{"seq":'):
        return None
    try:
        return int(json.loads(line)["seq"])
    except (ValueError, KeyError, TypeError):
        return None
