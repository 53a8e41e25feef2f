"""Pluggable reasoning interface used by every layer.

``RuleEngine`` is a deterministic, flag-driven stand-in for a language-model
service.  ``ExternalEngine`` posts the same request document to an HTTP
endpoint and fails fast with :class:`EngineUnavailable`.
"""

from __future__ import annotations

import json
import os
import re
import socket
import urllib.error
import urllib.request
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Any, Mapping, Protocol, Sequence

import jsonschema

from . import knowledge
from .errors import CognitionRequestError, ConfigurationError, EngineUnavailable
from .messaging import thaw

COGNITION_URL_ENV = "ACE_COGNITION_URL"


class RequestKind(str, Enum):
    JUDGE = "Judge"
    STRATEGIZE = "Strategize"
    SHAPE_MISSION = "ShapeMission"
    PLAN = "Plan"
    DELIBERATE = "Deliberate"


REQUIRED_SECTIONS: dict[RequestKind, tuple[str, ...]] = {
    RequestKind.JUDGE: ("constitution", "subject"),
    RequestKind.STRATEGIZE: ("mission", "facts"),
    RequestKind.SHAPE_MISSION: ("objectives", "agent_state"),
    RequestKind.PLAN: ("objectives", "world"),
    RequestKind.DELIBERATE: ("options",),
}


@dataclass(frozen=True)
class CognitionRequest:
    kind: RequestKind
    context: tuple[tuple[str, Any], ...]
    seed: int = 0

    def __init__(self, kind, context, seed: int = 0):
        kind = RequestKind(kind)
        items = tuple(context.items()) if isinstance(context, Mapping) else tuple(context)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "context", tuple((str(k), thaw(v)) for k, v in items))
        object.__setattr__(self, "seed", int(seed))
        names = [k for k, _ in self.context]
        missing = [s for s in REQUIRED_SECTIONS[kind] if s not in names]
        if missing:
            raise CognitionRequestError(f"{kind.value} request missing sections {missing}")

    def section(self, name: str, default: Any = None) -> Any:
        for k, v in self.context:
            if k == name:
                return v
        return default

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "context": [{"name": k, "value": v} for k, v in self.context],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "CognitionRequest":
        return cls(d["kind"], [(s["name"], s["value"]) for s in d["context"]], d.get("seed", 0))


_verdict = {"enum": ["approve", "deny", "amend"]}
_ints = {"type": "array", "items": {"type": "integer", "minimum": 1}}
_strs = {"type": "array", "items": {"type": "string"}}

RESPONSE_SCHEMAS: dict[RequestKind, dict] = {
    RequestKind.JUDGE: {
        "type": "object",
        "required": ["kind", "verdict", "rationale", "cited_principles"],
        "properties": {
            "kind": {"const": "Judge"},
            "verdict": _verdict,
            "rationale": {"type": "string"},
            "cited_principles": _ints,
            "preferred": {"type": ["string", "null"]},
            "findings": _strs,
        },
        "if": {"properties": {"verdict": {"enum": ["deny", "amend"]}}},
        "then": {"properties": {"rationale": {"minLength": 1}}},
    },
    RequestKind.STRATEGIZE: {
        "type": "object",
        "required": ["kind", "objectives", "strategies", "principles"],
        "properties": {
            "kind": {"const": "Strategize"},
            "objectives": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["id", "text", "tags", "requires", "band"],
                    "properties": {"tags": _strs, "requires": _strs, "band": {"type": "integer"}},
                },
            },
            "strategies": _strs,
            "principles": _strs,
        },
    },
    RequestKind.SHAPE_MISSION: {
        "type": "object",
        "required": ["kind", "feasible", "deferred"],
        "properties": {
            "kind": {"const": "ShapeMission"},
            "feasible": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["objective", "required_capabilities", "min_confidence_met"],
                },
            },
            "deferred": {
                "type": "array",
                "items": {"type": "object", "required": ["objective", "reasons"]},
            },
        },
    },
    RequestKind.PLAN: {
        "type": "object",
        "required": ["kind", "tasks"],
        "properties": {
            "kind": {"const": "Plan"},
            "tasks": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["id", "approach", "success_def", "failure_def", "cost"],
                },
            },
        },
    },
    RequestKind.DELIBERATE: {
        "type": "object",
        "required": ["kind", "adjustments"],
        "properties": {
            "kind": {"const": "Deliberate"},
            "adjustments": {
                "type": "object",
                "additionalProperties": {"type": "number", "minimum": -0.5, "maximum": 0.5},
            },
        },
    },
}


@lru_cache(maxsize=None)
def _response_validator(kind: RequestKind):
    return jsonschema.Draft7Validator(RESPONSE_SCHEMAS[kind])


def validate_response(kind: RequestKind, response: Mapping) -> None:
    err = next(iter(_response_validator(RequestKind(kind)).iter_errors(response)), None)
    if err is not None:
        raise CognitionRequestError(f"{RequestKind(kind).value} response invalid: {err.message}")


@dataclass(frozen=True)
class Judgment:
    verdict: str
    rationale: str
    cited_principles: tuple[int, ...] = ()
    preferred: str | None = None
    findings: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.verdict not in ("approve", "deny", "amend"):
            raise ValueError(f"unknown verdict {self.verdict!r}")
        if self.verdict != "approve" and not self.rationale:
            raise ValueError(f"{self.verdict} requires a rationale")

    @classmethod
    def from_response(cls, r: Mapping) -> "Judgment":
        return cls(
            r["verdict"],
            r["rationale"],
            tuple(r["cited_principles"]),
            r.get("preferred"),
            tuple(r.get("findings", ())),
        )

    def to_payload(self) -> dict:
        return {
            "verdict": self.verdict,
            "rationale": self.rationale,
            "cited_principles": list(self.cited_principles),
            "preferred": self.preferred,
        }


class CognitionEngine(Protocol):
    def evaluate(self, request: CognitionRequest) -> dict: ...


def judge(engine: CognitionEngine, request: CognitionRequest) -> Judgment:
    return Judgment.from_response(engine.evaluate(request))


# -- rule-based engine --------------------------------------------------------

_HARM_RE = re.compile(r"\b(" + "|".join(knowledge.HARM_WORDS) + r")\w*\b", re.IGNORECASE)


def _suffering_index(imperatives: Sequence[str]) -> int:
    for i, text in enumerate(imperatives, 1):
        if "suffering" in text.lower():
            return i
    return 1


def _imperatives(constitution: Any) -> list[str]:
    if isinstance(constitution, Mapping):
        return list(constitution.get("imperatives", ()))
    if isinstance(constitution, str):
        return [re.sub(r"^\d+\.\s*", "", l) for l in constitution.splitlines() if l.strip()]
    return list(constitution or ())


def scan(subject: Any, path: str = "$") -> tuple[list[str], list[str]]:
    """Walk a payload for harm and caution markers; return (harms, cautions)."""
    harms: list[str] = []
    cautions: list[str] = []
    if isinstance(subject, Mapping):
        label = subject.get("id", path)
        if subject.get("harm") is True:
            harms.append(f"{label}: flagged harm")
        if subject.get("caution") is True:
            cautions.append(f"{label}: flagged caution")
        for t in subject.get("tags", ()) or ():
            if isinstance(t, str) and (t == "harm" or t.startswith("harm:")):
                harms.append(f"{label}: tagged {t}")
            if t == "caution":
                cautions.append(f"{label}: tagged caution")
        for k in sorted(subject):
            if k in ("harm", "caution", "tags"):
                continue
            h, c = scan(subject[k], f"{path}.{k}")
            harms += h
            cautions += c
    elif isinstance(subject, (list, tuple)):
        for i, v in enumerate(subject):
            h, c = scan(v, f"{path}[{i}]")
            harms += h
            cautions += c
    elif isinstance(subject, str):
        m = _HARM_RE.search(subject)
        if m:
            harms.append(f"{path}: mentions {m.group(0).lower()}")
    return harms, cautions


def _option_harmful(option: Mapping) -> bool:
    return bool(scan(option)[0])


class RuleEngine:
    """Deterministic flag- and keyword-driven engine.

    ``strategy_rules`` and ``reactions`` extend the built-in knowledge; the
    ``seed`` of a request never changes the outcome, which keeps the engine
    a pure function of the request.
    """

    name = "rule"

    def __init__(self, strategy_rules: Sequence[dict] = (), reactions: Sequence[dict] = ()):
        self.strategy_rules = tuple(knowledge.STRATEGY_RULES) + tuple(strategy_rules)
        self.reactions = tuple(reactions)

    def evaluate(self, request: CognitionRequest) -> dict:
        handler = {
            RequestKind.JUDGE: self._judge,
            RequestKind.STRATEGIZE: self._strategize,
            RequestKind.SHAPE_MISSION: self._shape,
            RequestKind.PLAN: self._plan,
            RequestKind.DELIBERATE: self._deliberate,
        }[request.kind]
        response = {"kind": request.kind.value, **handler(request)}
        validate_response(request.kind, response)
        return response

    def _judge(self, req: CognitionRequest) -> dict:
        imperatives = _imperatives(req.section("constitution"))
        cite = _suffering_index(imperatives) if imperatives else 1
        subject = req.section("subject")
        options = subject.get("options") if isinstance(subject, Mapping) else None
        if options is not None:
            return self._judge_options(options, cite)
        harms, cautions = scan(subject)
        if harms:
            return {
                "verdict": "deny",
                "rationale": "conflicts with reducing suffering: " + "; ".join(harms),
                "cited_principles": [cite],
                "findings": harms,
            }
        if cautions:
            return {
                "verdict": "amend",
                "rationale": "proceed only with added safeguards: " + "; ".join(cautions),
                "cited_principles": [cite],
                "findings": cautions,
            }
        return {"verdict": "approve", "rationale": "consistent with the imperatives", "cited_principles": []}

    def _judge_options(self, options: Sequence[Mapping], cite: int) -> dict:
        if not options:
            return {"verdict": "deny", "rationale": "no options to choose between", "cited_principles": [cite]}
        ranked = sorted(
            enumerate(options),
            key=lambda io: (
                _option_harmful(io[1]),
                "prevents-suffering" not in (io[1].get("tags") or ()),
                io[0],
            ),
        )
        idx, best = ranked[0]
        if _option_harmful(best):
            return {
                "verdict": "deny",
                "rationale": "every option causes harm; escalate for replanning",
                "cited_principles": [cite],
                "preferred": None,
                "findings": [str(o["id"]) for o in options],
            }
        if len(options) == 1:
            why = "the only option is acceptable"
        elif "prevents-suffering" in (best.get("tags") or ()):
            why = f"{best['id']} prevents suffering and takes precedence"
        else:
            why = f"{best['id']} is acceptable and listed first"
        return {
            "verdict": "approve",
            "rationale": why,
            "cited_principles": [cite] if len(options) > 1 else [],
            "preferred": str(best["id"]),
        }

    def _strategize(self, req: CognitionRequest) -> dict:
        mission = req.section("mission")
        statement = mission.get("statement") if isinstance(mission, Mapping) else mission
        facts = req.section("facts") or {}
        rules = self.strategy_rules + tuple(req.section("rules") or ())
        objectives = knowledge.strategize(statement, facts, rules, req.section("banned") or ())
        strategies = [f"address '{o['text']}'" for o in knowledge.rank_objectives(objectives)]
        imperatives = mission.get("imperatives", []) if isinstance(mission, Mapping) else []
        return {"objectives": objectives, "strategies": strategies, "principles": list(imperatives)}

    def _shape(self, req: CognitionRequest) -> dict:
        state = req.section("agent_state")
        caps = state.get("capabilities", {})
        limits = set(state.get("limitations", ()))
        threshold = float(req.section("threshold", 0.3))
        prior = float(req.section("prior", 0.5))
        feasible, deferred = [], []
        for obj in req.section("objectives"):
            required = list(obj.get("requires", ()))
            reasons, notes = [], []
            for cap in required:
                base = cap.split(":", 1)[0]
                if cap in limits or base in limits:
                    reasons.append(f"limitation:{cap}")
                    notes.append(f"redirect: refer the request about {cap} to a better-suited source")
                    continue
                conf = caps.get(cap, caps.get(base, prior))
                if conf < threshold:
                    reasons.append(f"low-confidence:{cap}={conf:.2f}<{threshold:.2f}")
            if reasons:
                deferred.append({"objective": obj, "reasons": reasons, "annotations": notes})
            else:
                feasible.append(
                    {
                        "objective": obj,
                        "required_capabilities": required,
                        "min_confidence_met": True,
                        "annotations": [],
                    }
                )
        return {"feasible": feasible, "deferred": deferred}

    def _plan(self, req: CognitionRequest) -> dict:
        # reactions named in the request override same-id engine reactions
        merged = {r["task"]["id"]: r for r in self.reactions}
        merged.update({r["task"]["id"]: r for r in req.section("reactions") or ()})
        reactions = list(merged.values())
        tasks = knowledge.decompose(list(req.section("objectives")), req.section("world"), reactions)
        return {"tasks": [t.to_dict() for t in tasks]}

    def _deliberate(self, req: CognitionRequest) -> dict:
        adjustments = {}
        for opt in req.section("options"):
            tags = opt.get("tags") or ()
            adjustments[str(opt["id"])] = 0.25 if "essential" in tags else 0.0
        return {"adjustments": adjustments}


# -- external adapter ---------------------------------------------------------


class ExternalEngine:
    """POSTs request documents to a cognition service and validates replies."""

    name = "external"

    def __init__(self, url: str | None = None, timeout: float = 5.0):
        self.url = url or os.environ.get(COGNITION_URL_ENV)
        if not self.url:
            raise ConfigurationError(f"external cognition needs a URL (set {COGNITION_URL_ENV})")
        self.timeout = timeout

    def evaluate(self, request: CognitionRequest) -> dict:
        body = json.dumps(request.to_dict()).encode("utf-8")
        req = urllib.request.Request(
            self.url, data=body, headers={"Content-Type": "application/json"}, method="POST"
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                response = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, socket.timeout, TimeoutError, ConnectionError) as exc:
            raise EngineUnavailable(f"cognition service unavailable: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise CognitionRequestError(f"cognition service sent invalid JSON: {exc}") from exc
        validate_response(request.kind, response)
        return response


class FallbackEngine:
    """Try ``primary``; on :class:`EngineUnavailable` answer with ``fallback``."""

    def __init__(self, primary: CognitionEngine, fallback: CognitionEngine):
        self.primary = primary
        self.fallback = fallback
        self.fallbacks = 0

    @property
    def name(self) -> str:
        return f"{getattr(self.primary, 'name', 'primary')}+fallback"

    def evaluate(self, request: CognitionRequest) -> dict:
        try:
            return self.primary.evaluate(request)
        except EngineUnavailable:
            self.fallbacks += 1
            return self.fallback.evaluate(request)


# Three-way splits (possible with approve/deny/amend) resolve to the most
# cautious verdict.
_CAUTION = {"deny": 0, "amend": 1, "approve": 2}


def majority_verdict(verdicts: Sequence[str]) -> str:
    counts = Counter(verdicts)
    top = max(counts.values())
    return min((v for v, n in counts.items() if n == top), key=_CAUTION.__getitem__)


def ensemble_judge(engines: Sequence[CognitionEngine], request: CognitionRequest) -> Judgment:
    if not engines or len(engines) % 2 == 0:
        raise ConfigurationError(f"ensemble needs an odd number of engines, got {len(engines)}")
    members = [judge(e, request) for e in engines]
    if len(members) == 1:
        return members[0]
    verdict = majority_verdict([m.verdict for m in members])
    agreeing = [m for m in members if m.verdict == verdict]
    rationale = " | ".join(m.rationale for m in members if m.rationale)
    cited = sorted({p for m in agreeing for p in m.cited_principles})
    preferred = next((m.preferred for m in agreeing if m.preferred is not None), None)
    return Judgment(verdict, rationale or verdict, tuple(cited), preferred)


def make_engine(mode: str = "rule", *, scenario_knowledge: Mapping | None = None, url: str | None = None,
                timeout: float = 5.0) -> CognitionEngine:
    kb = scenario_knowledge or {}
    rule = RuleEngine(kb.get("strategy_rules", ()), kb.get("reactions", ()))
    if mode == "rule":
        return rule
    if mode == "external":
        return FallbackEngine(ExternalEngine(url, timeout), rule)
    raise ConfigurationError(f"unknown cognition mode {mode!r}")
