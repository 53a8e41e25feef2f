"""Independent reference implementations used as test oracles.

Each function is written from the stated rules, without importing the
corresponding production code path.
"""

from __future__ import annotations

ORDER = [
    "Aspirational", "GlobalStrategy", "AgentModel", "ExecutiveFunction", "CognitiveControl", "TaskProsecution",
]
RANK = {name: i + 1 for i, name in enumerate(ORDER)}
RANK["Environment"] = 7

KINDS = [
    "Mission", "MoralJudgment", "StrategicDocument", "MissionParams", "Roadmap", "TaskInstruction",
    "Telemetry", "OutcomeSignal", "DilemmaEscalation", "Directive", "Censor", "Halt", "Reboot", "WorldEvent",
]
NORTH = {"Telemetry", "OutcomeSignal", "DilemmaEscalation"}
SOUTH = {
    "Mission", "MoralJudgment", "StrategicDocument", "MissionParams", "Roadmap", "TaskInstruction",
    "Directive", "Censor", "Halt", "Reboot",
}
OVERRIDE = {"Directive", "Censor", "Halt", "Reboot", "Mission", "MoralJudgment"}


def allowed(source: str, target: str, kind: str) -> bool:
    if source == "Environment":
        return kind in ("WorldEvent", "Telemetry") and target in (
            "GlobalStrategy", "ExecutiveFunction", "CognitiveControl")
    s, t = RANK[source], RANK[target]
    if s == t - 1 and kind in SOUTH:
        return True
    if s == t + 1 and kind in NORTH:
        return True
    if source == "Aspirational" and t > 1 and kind in OVERRIDE:
        return True
    return False


def fold_frustration(outcomes, window=5, threshold=0.6):
    """Return (window, ratio, frustrated) after folding booleans (True = success)."""
    w = []
    for ok in outcomes:
        w.append(not ok)
        if len(w) > window:
            w.pop(0)
    ratio = (sum(w) / len(w)) if w else 0.0
    return w, ratio, len(w) == window and ratio >= threshold


def greedy_allocation(tasks, energy):
    """tasks: list of (id, essential, urgency, importance, cost).  Returns (funded ids, deferred ids).

    Essential first, then urgency*importance descending, ties by id.  A task
    is funded when it fits in what remains; otherwise deferred and the scan
    continues.  A deferred essential blocks every non-essential task that
    needs energy.
    """
    order = sorted(tasks, key=lambda t: (not t[1], -(t[2] * t[3]), t[0]))
    left = energy
    funded, deferred = [], []
    essential_short = False
    for tid, essential, _u, _i, cost in order:
        if not essential and essential_short and cost > 0:
            deferred.append(tid)
            continue
        if cost <= left:
            left -= cost
            funded.append(tid)
        else:
            deferred.append(tid)
            if essential:
                essential_short = True
    return funded, deferred


def brute_argmax(tasks, max_energy, excluded=None):
    """tasks: list of (id, urgency, importance, energy)."""
    best = None
    for tid, u, i, e in tasks:
        if tid == excluded:
            continue
        norm = e / max_energy if max_energy > 0 else 0.0
        score = 0.4 * u + 0.4 * i - 0.2 * norm
        if best is None or score > best[0] or (score == best[0] and tid < best[1]):
            best = (score, tid)
    return None if best is None else best[1]


def confidence_fold(prior, outcomes, alpha=0.2, beta=0.3):
    c = prior
    for ok in outcomes:
        c = c + alpha * (1 - c) if ok else c - beta * c
    return c
