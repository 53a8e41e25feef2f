"""Predicate specs over flat fact maps.

A predicate is a JSON document::

    {"fact": "kitchen.dirt", "op": "==", "value": 0}
    {"all": [p, ...]}   {"any": [p, ...]}   {"not": p}   {"const": true}

Missing facts read as ``None``; ordering comparisons against ``None`` are
false.
"""

from __future__ import annotations

import operator
from typing import Any, Iterable, Mapping

_OPS = {
    "==": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


def fact(key: str, op: str, value: Any) -> dict:
    if op not in _OPS:
        raise ValueError(f"unknown operator {op!r}")
    return {"fact": key, "op": op, "value": value}


def all_of(*preds) -> dict:
    return {"all": list(preds)}


def any_of(*preds) -> dict:
    return {"any": list(preds)}


def negate(pred) -> dict:
    return {"not": pred}


TRUE = {"const": True}


def evaluate(pred: Mapping, facts: Mapping[str, Any]) -> bool:
    if "const" in pred:
        return bool(pred["const"])
    if "all" in pred:
        return all(evaluate(p, facts) for p in pred["all"])
    if "any" in pred:
        return any(evaluate(p, facts) for p in pred["any"])
    if "not" in pred:
        return not evaluate(pred["not"], facts)
    op = pred["op"]
    actual = facts.get(pred["fact"])
    expected = pred["value"]
    if op in ("==", "!="):
        return _OPS[op](actual, expected)
    if actual is None or expected is None or isinstance(actual, bool) != isinstance(expected, bool):
        return False
    try:
        return _OPS[op](actual, expected)
    except TypeError:
        return False


def referenced_facts(pred: Mapping) -> set[str]:
    if "fact" in pred:
        return {pred["fact"]}
    out: set[str] = set()
    for key in ("all", "any"):
        for p in pred.get(key, ()):
            out |= referenced_facts(p)
    if "not" in pred:
        out |= referenced_facts(pred["not"])
    return out


def mentioned_values(pred: Mapping) -> dict[str, set]:
    """Map each referenced fact to the constants it is compared against."""
    out: dict[str, set] = {}
    if "fact" in pred:
        out.setdefault(pred["fact"], set()).add(_hashable(pred["value"]))
        return out
    children = list(pred.get("all", ())) + list(pred.get("any", ()))
    if "not" in pred:
        children.append(pred["not"])
    for p in children:
        for k, vs in mentioned_values(p).items():
            out.setdefault(k, set()).update(vs)
    return out


def _hashable(v):
    return tuple(v) if isinstance(v, list) else v


def probe_states(preds: Iterable[Mapping], base: Mapping[str, Any] | None = None) -> list[dict]:
    """Fact maps that exercise every referenced fact near its boundary values.

    Used to check that two predicates cannot hold together on the fact
    vocabulary they mention.  The cross product is capped at a few thousand
    states; beyond that, facts are probed one at a time.
    """
    values: dict[str, set] = {}
    for p in preds:
        for k, vs in mentioned_values(p).items():
            values.setdefault(k, set()).update(vs)
    candidates: dict[str, list] = {}
    for k, vs in sorted(values.items()):
        cand = {None}
        for v in vs:
            cand.add(v)
            if isinstance(v, bool):
                cand |= {True, False}
            elif isinstance(v, (int, float)):
                cand |= {v - 1, v + 1}
        candidates[k] = sorted(cand, key=repr)
    states: list[dict] = [dict(base or {})]
    total = 1
    for vs in candidates.values():
        total *= len(vs)
    if total <= 4096:
        for k, vs in candidates.items():
            states = [{**s, k: v} for s in states for v in vs]
    else:
        for k, vs in candidates.items():
            states += [{**(base or {}), k: v} for v in vs]
    return states
