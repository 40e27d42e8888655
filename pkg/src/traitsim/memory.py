"""Per-agent three-part memory.

Short-term memory (STM) is a capacity-bounded buffer of recently encountered
content with a recency decay; long-term memory (LTM) receives the
top-engagement STM entries at periodic evaluations; activity memory (AM) is a
bounded FIFO over the agent's own recent actions plus per-kind "last done"
timestamps, rendered into a deterministic textual summary for the decision
prompt.

All three components start empty. LTM never evicts within a run.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, asdict
from typing import Optional

from .core import Action, ActionKind, ContentItem
from .sentiment import NeutralSentiment


@dataclass
class MemoryParams:
    stm_capacity: int = 20  # C
    decay_horizon: int = 3  # D
    eval_period: int = 5  # E
    promotion_quantile: float = 0.1  # q
    am_window: int = 10  # M
    w_reshare: float = 2.0
    w_like: float = 1.0
    w_dislike: float = 1.0
    w_comment: float = 1.0


@dataclass
class StmEntry:
    content_id: int
    reshares: int = 0
    likes: int = 0
    dislikes: int = 0
    comments: int = 0
    comment_texts: list = field(default_factory=list)
    last_touched: int = 0


@dataclass
class LtmEntry:
    content_id: int
    engagement_score: float
    promoted_at: int


@dataclass
class ActivityMemory:
    recent: deque = field(default_factory=deque)  # (iteration, kind, target)
    last_performed: dict = field(default_factory=dict)  # ActionKind -> iteration


@dataclass
class MemoryUnit:
    stm: dict = field(default_factory=dict)  # content_id -> StmEntry
    ltm: dict = field(default_factory=dict)  # content_id -> LtmEntry
    am: ActivityMemory = field(default_factory=ActivityMemory)


def engagement_score(entry: StmEntry, comments, analyzer=None,
                     params: Optional[MemoryParams] = None) -> float:
    """w_r*reshares + w_l*likes - w_d*dislikes + w_c * sum(sentiment)."""
    analyzer = analyzer or NeutralSentiment()
    p = params or MemoryParams()
    return (
        p.w_reshare * entry.reshares
        + p.w_like * entry.likes
        - p.w_dislike * entry.dislikes
        + p.w_comment * sum(analyzer.score(t) for t in comments)
    )


def _score(entry: StmEntry, analyzer, params: Optional[MemoryParams] = None) -> float:
    return engagement_score(entry, [t for _, t in entry.comment_texts], analyzer, params)


def stm_observe(memory: MemoryUnit, content: ContentItem, now: int,
                params: MemoryParams = MemoryParams(), analyzer=None) -> MemoryUnit:
    """Insert or refresh the STM entry for ``content`` with current counters.

    When the buffer would exceed capacity, the lowest-engagement-score entry
    is evicted.
    """
    analyzer = analyzer or NeutralSentiment()
    c = content.counters
    memory.stm[content.content_id] = StmEntry(
        content_id=content.content_id,
        reshares=c.reshares,
        likes=c.likes,
        dislikes=c.dislikes,
        comments=c.comments,
        comment_texts=list(content.comment_texts),
        last_touched=now,
    )
    while len(memory.stm) > params.stm_capacity:
        victim = min(
            memory.stm.values(),
            key=lambda e: (_score(e, analyzer, params), e.last_touched),
        )
        del memory.stm[victim.content_id]
    return memory


def stm_decay(memory: MemoryUnit, now: int,
              params: MemoryParams = MemoryParams()) -> MemoryUnit:
    """Drop every STM entry older than the decay horizon."""
    stale = [cid for cid, e in memory.stm.items()
             if now - e.last_touched > params.decay_horizon]
    for cid in stale:
        del memory.stm[cid]
    return memory


def ltm_evaluate(memory: MemoryUnit, now: int,
                 params: MemoryParams = MemoryParams(), analyzer=None) -> MemoryUnit:
    """Copy the top-q quantile of STM entries (by engagement score) into LTM.

    At least one entry is promoted when the STM is non-empty; entries tied
    with the quantile cutoff are all promoted. Originals stay in STM until
    they decay.
    """
    analyzer = analyzer or NeutralSentiment()
    if not memory.stm:
        return memory
    scored = sorted(
        ((_score(e, analyzer, params), e) for e in memory.stm.values()),
        key=lambda pair: pair[0],
        reverse=True,
    )
    take = max(1, math.ceil(params.promotion_quantile * len(scored)))
    cutoff = scored[take - 1][0]
    for score, entry in scored:
        if score < cutoff:
            break
        existing = memory.ltm.get(entry.content_id)
        if existing is None:
            memory.ltm[entry.content_id] = LtmEntry(entry.content_id, score, now)
        else:
            existing.engagement_score = score
    return memory


def am_record(am: ActivityMemory, action: Action, now: int,
              params: MemoryParams = MemoryParams()) -> ActivityMemory:
    """Append to the bounded FIFO and stamp last_performed for the kind.

    Inactive is tracked like any other kind, so passive agents can see how
    long they have remained passive.
    """
    am.recent.append((now, action.kind, action.target))
    while len(am.recent) > params.am_window:
        am.recent.popleft()
    am.last_performed[action.kind] = now
    return am


_VERBS = {
    ActionKind.POST: "posted",
    ActionKind.RESHARE: "re-shared",
    ActionKind.LIKE: "liked",
    ActionKind.DISLIKE: "disliked",
    ActionKind.COMMENT: "commented",
    ActionKind.FOLLOW: "followed someone",
    ActionKind.INACTIVE: "stayed inactive",
}


def am_summary(am: ActivityMemory, now: int) -> str:
    """Deterministic textual summary of recent actions and per-kind gaps."""
    if not am.recent and not am.last_performed:
        return "No recent activity recorded."
    lines = ["Recent actions (oldest first):"]
    for iteration, kind, target in am.recent:
        suffix = f" (target {target})" if target is not None else ""
        lines.append(f"- iteration {iteration}: {_VERBS[kind]}{suffix}")
    lines.append("Time since each action type:")
    for kind in ActionKind:
        verb = _VERBS[kind]
        last = am.last_performed.get(kind)
        if last is None:
            lines.append(f"- never {verb}")
        else:
            gap = now - last
            lines.append(f"- {verb} {gap} iterations ago")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Checkpoint serialization (line-delimited records; one record per agent).

def memory_to_record(agent_id: str, memory: MemoryUnit) -> dict:
    return {
        "agent": agent_id,
        "stm": [asdict(e) for e in memory.stm.values()],
        "ltm": [asdict(e) for e in memory.ltm.values()],
        "am": {
            "recent": [[it, kind.value, target] for it, kind, target in memory.am.recent],
            "last_performed": {k.value: v for k, v in memory.am.last_performed.items()},
        },
    }


def memory_from_record(record: dict) -> MemoryUnit:
    memory = MemoryUnit()
    for e in record["stm"]:
        entry = StmEntry(**{**e, "comment_texts": [tuple(c) for c in e["comment_texts"]]})
        memory.stm[entry.content_id] = entry
    for e in record["ltm"]:
        memory.ltm[e["content_id"]] = LtmEntry(**e)
    for it, kind, target in record["am"]["recent"]:
        memory.am.recent.append((it, ActionKind(kind), target))
    memory.am.last_performed = {
        ActionKind(k): v for k, v in record["am"]["last_performed"].items()
    }
    return memory
