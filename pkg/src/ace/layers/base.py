"""Behaviour shared by all six layer actors."""

from __future__ import annotations

import re
from typing import Any, Mapping

from ..cognition import CognitionEngine
from ..config import Settings
from ..messaging import (
    ENVIRONMENT,
    NORTHBOUND_KINDS,
    Bus,
    Envelope,
    LayerId,
    MessageKind,
    Receipt,
    rewrap,
    should_percolate,
)

_CAMEL = re.compile(r"(?<!^)(?=[A-Z])")


def handler_name(kind: MessageKind) -> str:
    return "on_" + _CAMEL.sub("_", kind.value).lower()


class Layer:
    """A single-consumer actor bound to one inbox on the bus.

    Subclasses implement ``on_<kind>`` handlers, ``on_tick`` and the
    ``state``/``restore`` pair used for durable snapshots.  Northbound
    envelopes whose salience reaches the layer's threshold are re-wrapped
    and forwarded one hop up after handling.
    """

    layer_id: LayerId

    def __init__(self, bus: Bus, engine: CognitionEngine, settings: Settings):
        self.bus = bus
        self.engine = engine
        self.settings = settings
        self.threshold = settings.threshold(self.layer_id)
        self.inbox = bus.inbox(self.layer_id)
        self.halted = False
        self.processed: list[int] = []
        self.tick = 0

    # -- messaging --

    def send(self, target: LayerId, kind: MessageKind, payload: Mapping, *, salience: float = 0.5,
             correlation: str | None = None) -> Receipt:
        return self.bus.publish(
            Envelope(self.layer_id, target, kind, payload, salience=salience, correlation=correlation)
        )

    def send_up(self, kind: MessageKind, payload: Mapping, *, salience: float, correlation=None) -> Receipt | None:
        above = self.layer_id.above
        if above is None:
            return None
        return self.send(above, kind, payload, salience=salience, correlation=correlation)

    def send_down(self, kind: MessageKind, payload: Mapping, *, salience: float = 0.5, correlation=None) -> Receipt | None:
        below = self.layer_id.below
        if below is None:
            return None
        return self.send(below, kind, payload, salience=salience, correlation=correlation)

    # -- processing --

    def step(self, tick: int) -> None:
        """Drain the inbox in seq order, then run per-tick work."""
        self.tick = tick
        if self.halted:
            return
        while not self.halted:
            env = self.inbox.pop()
            if env is None:
                break
            self.processed.append(env.seq)
            self.receive(env)
        if not self.halted:
            self.on_tick(tick)

    def receive(self, env: Envelope) -> None:
        handler = getattr(self, handler_name(env.kind), None)
        if handler is not None:
            handler(env)
        if (
            env.kind in NORTHBOUND_KINDS
            and self.layer_id.above is not None
            and self.forwards(env)
            and should_percolate(env, self.threshold)
        ):
            self.bus.publish(rewrap(env, self.layer_id))

    def forwards(self, env: Envelope) -> bool:
        return True

    def on_tick(self, tick: int) -> None:
        pass

    def from_environment(self, env: Envelope) -> bool:
        return env.source is ENVIRONMENT

    # -- snapshots --

    def state(self) -> dict[str, Any]:
        raise NotImplementedError

    def restore(self, state: Mapping[str, Any]) -> None:
        raise NotImplementedError

    def busy(self) -> bool:
        """True while the layer holds work that will generate more traffic."""
        return False
