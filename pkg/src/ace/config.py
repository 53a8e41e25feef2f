"""Run configuration and tunable policy constants."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Any, Mapping

from .errors import ConfigurationError
from .messaging import LAYERS


@dataclass(frozen=True)
class Settings:
    """Numeric policy knobs.  Every field may be overridden from a RunConfig."""

    # percolation threshold per layer name
    thresholds: Mapping[str, float] = field(
        default_factory=lambda: {layer.value: 0.5 for layer in LAYERS}
    )
    # capability learning
    alpha: float = 0.2
    beta: float = 0.3
    demotion_floor: float = 0.05
    prior: float = 0.5
    feasibility: float = 0.3
    # task selection and switching
    w_urgency: float = 0.4
    w_importance: float = 0.4
    w_cost: float = 0.2
    window: int = 5
    frustration_threshold: float = 0.6
    retry_cap: int = 2
    # salience stamps
    salience_success: float = 0.4
    salience_failure: float = 0.8
    salience_step: float = 0.1
    salience_status: float = 0.6
    salience_escalation: float = 0.9
    salience_dilemma: float = 1.0
    # intervention policy
    denials_to_halt: int = 3
    denial_window: int = 10
    auto_reboot: bool = False
    gate: bool = True

    _UNIT = (
        "alpha", "beta", "demotion_floor", "prior", "feasibility", "w_urgency", "w_importance",
        "w_cost", "frustration_threshold", "salience_success", "salience_failure", "salience_step",
        "salience_status", "salience_escalation", "salience_dilemma",
    )

    def __post_init__(self):
        for name in self._UNIT:
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name}={v!r} must lie in [0, 1]")
        for name in ("window", "denials_to_halt", "denial_window"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be at least 1")
        if self.retry_cap < 0:
            raise ConfigurationError("retry_cap must be non-negative")
        known = {layer.value for layer in LAYERS}
        merged = {layer.value: 0.5 for layer in LAYERS}
        for k, v in dict(self.thresholds).items():
            if k not in known:
                raise ConfigurationError(f"unknown layer {k!r} in thresholds")
            if not 0.0 <= float(v) <= 1.0:
                raise ConfigurationError(f"threshold for {k} must lie in [0, 1]")
            merged[k] = float(v)
        object.__setattr__(self, "thresholds", merged)

    def threshold(self, layer) -> float:
        return self.thresholds[layer.value]

    @classmethod
    def from_overrides(cls, overrides: Mapping[str, Any] | None) -> "Settings":
        overrides = dict(overrides or {})
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(overrides) - names)
        if unknown:
            raise ConfigurationError(f"unknown overrides {unknown}")
        return cls(**overrides)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["thresholds"] = dict(sorted(d["thresholds"].items()))
        return d


@dataclass(frozen=True)
class RunConfig:
    constitution: str = "default"
    scenario: str = "jeeves_clean"
    seed: int = 0
    max_ticks: int = 300
    cognition: str = "rule"
    overrides: Mapping[str, Any] = field(default_factory=dict)
    trace: str | None = None
    memory: str | None = None
    fault: Mapping[str, Any] | None = None
    mode: str = "deterministic"

    def __post_init__(self):
        if isinstance(self.max_ticks, bool) or not isinstance(self.max_ticks, int) or self.max_ticks <= 0:
            raise ConfigurationError(f"max_ticks must be a positive integer, got {self.max_ticks!r}")
        if self.cognition not in ("rule", "external"):
            raise ConfigurationError(f"cognition must be rule or external, got {self.cognition!r}")
        if self.mode not in ("deterministic", "threaded"):
            raise ConfigurationError(f"mode must be deterministic or threaded, got {self.mode!r}")
        if not isinstance(self.seed, int):
            raise ConfigurationError("seed must be an integer")
        if self.fault is not None and not {"layer", "tick"} <= set(self.fault):
            raise ConfigurationError("fault needs 'layer' and 'tick'")
        Settings.from_overrides(self.overrides)

    @property
    def settings(self) -> Settings:
        return Settings.from_overrides(self.overrides)

    def to_dict(self) -> dict:
        """Fields that determine the run (the trace path does not)."""
        return {
            "constitution": self.constitution,
            "scenario": self.scenario,
            "seed": self.seed,
            "max_ticks": self.max_ticks,
            "cognition": self.cognition,
            "overrides": dict(sorted(dict(self.overrides).items())),
            "fault": None if self.fault is None else dict(self.fault),
            "mode": self.mode,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})
