"""Decision prompts, the Choice-Reason-Content protocol, and backends.

Each iteration an agent receives a prompt with four sections (feedback on its
own content, an activity summary, a recommended feed, and the permitted
actions) and must answer with a labeled three-field triplet::

    CHOICE: <action>
    REASON: <why>
    CONTENT: <payload>

A tolerant parser also accepts a JSON object with ``choice``/``reason``/
``content`` keys. CONTENT carries the post text for "post", a content id for
"reshare"/"like"/"dislike", ``<content id>: <text>`` for "comment", an agent
id for "follow", and is empty for "inactive". Invalid answers are re-prompted
up to ``max_retries`` times, then the agent falls back to inactivity.

Two backends are provided: an HTTP chat-completion client for local model
servers, and a deterministic stub that samples from the archetype table so
whole runs are bit-reproducible from the master seed.
"""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import requests

from .core import (
    Action,
    ActionKind,
    AgentProfile,
    PsychometricVariant,
    Trait,
    archetype_table,
)
from .memory import MemoryUnit, am_summary

log = logging.getLogger(__name__)

DEFAULT_MAX_RETRIES = 3
FALLBACK_REASON = "fallback: invalid responses"

# Stub knobs (configurable via StubBackend): how interact splits into
# like/dislike/comment, and surrogate rows for agents without a behavioral
# trait (identity-only agents post almost exclusively; psychometric variants
# mostly post, with higher inactivity for low-extraversion/high-neuroticism).
INTERACT_SPLIT = (0.6, 0.1, 0.3)
ALL_POST_SURROGATE = (1.0, 0.0, 0.0, 0.0)
PSYCHOMETRIC_SURROGATE = (0.85, 0.0, 0.0, 0.15)
PSYCHOMETRIC_WITHDRAWN_SURROGATE = (0.5, 0.0, 0.0, 0.5)


class TransportError(RuntimeError):
    """Backend unreachable or returned a non-success HTTP status."""

    def __init__(self, message: str, status: Optional[int] = None):
        super().__init__(message)
        self.status = status


class ValidationError(ValueError):
    """A decision response that violates the protocol; ``rule`` names why."""

    def __init__(self, rule: str, detail: str = ""):
        super().__init__(f"{rule}: {detail}" if detail else rule)
        self.rule = rule


@dataclass(frozen=True)
class FeedEntry:
    content_id: int
    author: str
    text: str
    is_reshare: bool
    topic: Optional[str] = None


@dataclass
class DecisionPrompt:
    system_text: str
    feedback_section: str
    activity_section: str
    feed_section: tuple  # of FeedEntry
    actions_section: tuple  # of ActionKind

    def user_text(self) -> str:
        lines = ["## Feedback on your content", self.feedback_section, ""]
        lines += ["## Your recent activity", self.activity_section, ""]
        lines.append("## Recommended feed")
        if self.feed_section:
            for e in self.feed_section:
                tag = " (re-share)" if e.is_reshare else ""
                lines.append(f"[{e.content_id}] by {e.author}{tag}: {e.text}")
        else:
            lines.append("(no content available yet)")
        lines += ["", "## Available actions"]
        lines.append(", ".join(k.value for k in self.actions_section))
        lines += [
            "",
            "Answer with exactly three lines:",
            "CHOICE: one of the available actions",
            "REASON: a short rationale",
            "CONTENT: post text for post; a feed content id for reshare/like/"
            "dislike; '<content id>: <your comment>' for comment; an agent id "
            "for follow; leave empty for inactive.",
        ]
        return "\n".join(lines)


@dataclass
class Decision:
    choice: ActionKind
    reason: str
    target: Optional[object] = None
    payload: Optional[str] = None

    def to_action(self) -> Action:
        action = Action(kind=self.choice, target=self.target, payload=self.payload)
        action.validate_shape()
        return action


def permitted_actions(feed: Sequence[FeedEntry], iteration: int,
                      others_exist: bool = True) -> tuple:
    """Action kinds offered this iteration.

    Iteration 1 (and any empty-feed iteration) offers no engagements; follow
    is offered whenever other agents exist past the first iteration.
    """
    kinds = [ActionKind.POST]
    if feed and iteration > 1:
        kinds += [ActionKind.RESHARE, ActionKind.LIKE, ActionKind.DISLIKE,
                  ActionKind.COMMENT]
    if others_exist and iteration > 1:
        kinds.append(ActionKind.FOLLOW)
    kinds.append(ActionKind.INACTIVE)
    return tuple(kinds)


def build_prompt(agent: AgentProfile, memory: MemoryUnit,
                 feed: Sequence[FeedEntry], iteration: int,
                 own_content_ids: frozenset = frozenset(),
                 others_exist: bool = True) -> DecisionPrompt:
    """Deterministically render the decision prompt for one agent-iteration.

    The behavioral (or psychometric) trait prompt is embedded in the system
    text; identity-only agents get the identity text alone.
    """
    system_parts = [agent.identity_text]
    if isinstance(agent.trait, Trait):
        system_parts.append(_trait_prompt(agent.trait))
    elif isinstance(agent.trait, PsychometricVariant):
        system_parts.append(agent.trait.prompt_text)
    system_text = "\n\n".join(system_parts)

    feedback_lines = []
    for cid in sorted(own_content_ids):
        entry = memory.stm.get(cid)
        if entry is not None:
            feedback_lines.append(
                f"Your content [{cid}]: {entry.reshares} re-shares, "
                f"{entry.likes} likes, {entry.dislikes} dislikes, "
                f"{entry.comments} comments."
            )
    for cid, ltm_entry in sorted(memory.ltm.items()):
        if cid in own_content_ids and not memory.stm.get(cid):
            feedback_lines.append(
                f"Your content [{cid}] had lasting impact "
                f"(engagement score {ltm_entry.engagement_score:g})."
            )
    feedback = "\n".join(feedback_lines) or "No feedback on your content yet."

    return DecisionPrompt(
        system_text=system_text,
        feedback_section=feedback,
        activity_section=am_summary(memory.am, iteration),
        feed_section=tuple(feed),
        actions_section=permitted_actions(feed, iteration, others_exist),
    )


def _trait_prompt(trait: Trait) -> str:
    from .core import TRAIT_PROMPTS

    return TRAIT_PROMPTS[trait]


_CHOICE_ALIASES = {
    "post": ActionKind.POST,
    "tweet": ActionKind.POST,
    "reshare": ActionKind.RESHARE,
    "re-share": ActionKind.RESHARE,
    "retweet": ActionKind.RESHARE,
    "share": ActionKind.RESHARE,
    "like": ActionKind.LIKE,
    "dislike": ActionKind.DISLIKE,
    "comment": ActionKind.COMMENT,
    "follow": ActionKind.FOLLOW,
    "inactive": ActionKind.INACTIVE,
    "none": ActionKind.INACTIVE,
    "nothing": ActionKind.INACTIVE,
}

_LINE_RE = re.compile(
    r"^\s*\**\s*(choice|reason|content)\s*\**\s*[:=]\s*(.*?)\s*$",
    re.IGNORECASE,
)


def _extract_fields(raw_text: str) -> dict:
    stripped = raw_text.strip()
    if stripped.startswith("{"):
        try:
            obj = json.loads(stripped)
        except json.JSONDecodeError:
            obj = None
        if isinstance(obj, dict):
            return {str(k).lower(): ("" if v is None else str(v)) for k, v in obj.items()}
    fields = {}
    current = None
    for line in raw_text.splitlines():
        m = _LINE_RE.match(line)
        if m:
            current = m.group(1).lower()
            fields[current] = m.group(2)
        elif current == "content" and line.strip():
            fields[current] += "\n" + line.rstrip()
    return fields


def validate_decision(raw_text: str, prompt: DecisionPrompt) -> Decision:
    """Parse and check a raw backend response against the prompt.

    Raises ValidationError naming the violated rule: ``parse failure``,
    ``unknown action kind``, ``action not permitted``, ``dangling content
    reference``, ``missing payload``, or ``missing target``.
    """
    fields = _extract_fields(raw_text)
    if "choice" not in fields:
        raise ValidationError("parse failure", "no CHOICE field found")
    choice_word = fields["choice"].strip().strip(".").lower()
    kind = _CHOICE_ALIASES.get(choice_word)
    if kind is None:
        raise ValidationError("unknown action kind", fields["choice"])
    if kind not in prompt.actions_section:
        raise ValidationError("action not permitted", kind.value)
    reason = fields.get("reason", "").strip()
    content = fields.get("content", "").strip()

    feed_ids = {e.content_id for e in prompt.feed_section}
    if kind is ActionKind.POST:
        if not content:
            raise ValidationError("missing payload", "post requires text")
        return Decision(kind, reason, payload=content)
    if kind in (ActionKind.RESHARE, ActionKind.LIKE, ActionKind.DISLIKE):
        cid = _parse_content_id(content)
        if cid is None:
            raise ValidationError("missing target", f"{kind.value} requires a content id")
        if cid not in feed_ids:
            raise ValidationError("dangling content reference", str(cid))
        return Decision(kind, reason, target=cid)
    if kind is ActionKind.COMMENT:
        head, _, text = content.partition(":")
        cid = _parse_content_id(head)
        if cid is None:
            raise ValidationError("missing target", "comment requires '<id>: <text>'")
        if cid not in feed_ids:
            raise ValidationError("dangling content reference", str(cid))
        if not text.strip():
            raise ValidationError("missing payload", "comment requires text")
        return Decision(kind, reason, target=cid, payload=text.strip())
    if kind is ActionKind.FOLLOW:
        if not content:
            raise ValidationError("missing target", "follow requires an agent id")
        return Decision(kind, reason, target=content)
    return Decision(ActionKind.INACTIVE, reason)


def _parse_content_id(text: str) -> Optional[int]:
    m = re.search(r"-?\d+", text)
    return int(m.group()) if m else None


@dataclass
class DecisionContext:
    """Per-decision state handed to backends (the stub needs it; the HTTP
    client ignores it)."""

    agent: AgentProfile
    iteration: int
    rng: Optional[np.random.Generator] = None


def decide(prompt: DecisionPrompt, backend, context: DecisionContext,
           max_retries: int = DEFAULT_MAX_RETRIES) -> Decision:
    """Return the first valid decision, re-prompting on protocol violations.

    Transport errors propagate; after ``max_retries`` invalid responses the
    agent falls back to inactivity.
    """
    for attempt in range(max_retries):
        raw = backend.complete(prompt, context)
        try:
            return validate_decision(raw, prompt)
        except ValidationError as err:
            log.warning(
                "invalid decision from %s (attempt %d/%d): %s",
                context.agent.agent_id, attempt + 1, max_retries, err,
            )
    log.warning("decision fallback to inactive for %s", context.agent.agent_id)
    return Decision(ActionKind.INACTIVE, FALLBACK_REASON)


# ---------------------------------------------------------------------------
# Deterministic stub


def surrogate_distribution(trait) -> tuple:
    """Archetype row for trait-less or psychometric agents under the stub."""
    if trait is None:
        return ALL_POST_SURROGATE
    if isinstance(trait, PsychometricVariant):
        if (trait.factor, trait.level) in (("E", "Low"), ("N", "High")):
            return PSYCHOMETRIC_WITHDRAWN_SURROGATE
        return PSYCHOMETRIC_SURROGATE
    return archetype_table()[trait].as_tuple()


def stub_decide(agent: AgentProfile, feed: Sequence[FeedEntry],
                rng: np.random.Generator, iteration: int = 0,
                interact_split: tuple = INTERACT_SPLIT) -> Decision:
    """Sample a decision from the agent's archetype row.

    The row is masked and renormalized over feasible categories (no
    re-share/interact with an empty feed, and no posting/engaging outside the
    permitted set at iteration 1 an empty feed already encodes). Targets are
    drawn uniformly among topic-matching feed items when any exist, else
    uniformly over the feed.
    """
    row = np.asarray(surrogate_distribution(agent.trait), dtype=float)
    if not feed:
        row = row * np.array([1.0, 0.0, 0.0, 1.0])
    total = row.sum()
    if total <= 0:
        return Decision(ActionKind.INACTIVE, "stub: no feasible active category")
    category = rng.choice(4, p=row / total)

    if category == 0:
        text = f"Update {iteration} from {agent.agent_id} on {agent.topic or 'life'}"
        return Decision(ActionKind.POST, "stub: archetype post", payload=text)
    if category == 3:
        return Decision(ActionKind.INACTIVE, "stub: archetype inactivity")

    matching = [e for e in feed if e.topic == agent.topic]
    pool = matching if matching else list(feed)
    target = pool[rng.integers(len(pool))]
    if category == 1:
        return Decision(ActionKind.RESHARE, "stub: archetype re-share",
                        target=target.content_id)
    sub = rng.choice(3, p=np.asarray(interact_split, dtype=float))
    if sub == 0:
        return Decision(ActionKind.LIKE, "stub: archetype reaction",
                        target=target.content_id)
    if sub == 1:
        return Decision(ActionKind.DISLIKE, "stub: archetype reaction",
                        target=target.content_id)
    text = f"Comment {iteration} from {agent.agent_id}"
    return Decision(ActionKind.COMMENT, "stub: archetype reaction",
                    target=target.content_id, payload=text)


class StubBackend:
    """Renders stub decisions through the same triplet wire format, so the
    validation path is exercised identically to a real backend."""

    def __init__(self, interact_split: tuple = INTERACT_SPLIT):
        self.interact_split = interact_split

    def complete(self, prompt: DecisionPrompt, context: DecisionContext) -> str:
        decision = stub_decide(context.agent, prompt.feed_section, context.rng,
                               context.iteration, self.interact_split)
        if decision.choice is ActionKind.POST:
            content = decision.payload
        elif decision.choice is ActionKind.COMMENT:
            content = f"{decision.target}: {decision.payload}"
        elif decision.target is not None:
            content = str(decision.target)
        else:
            content = ""
        return (
            f"CHOICE: {decision.choice.value}\n"
            f"REASON: {decision.reason}\n"
            f"CONTENT: {content}"
        )


# ---------------------------------------------------------------------------
# HTTP chat-completion client

TOKEN_ENV_VAR = "TRAITSIM_API_TOKEN"


@dataclass
class EndpointConfig:
    url: str  # full chat-completions URL, e.g. http://localhost:11434/v1/chat/completions
    model: str
    temperature: float = 0.7
    timeout: float = 60.0


class LLMBackend:
    """One chat-completion round trip per decision; no retries here (the
    re-prompt loop lives in ``decide``)."""

    def __init__(self, endpoint: EndpointConfig, session=None):
        self.endpoint = endpoint
        self.session = session or requests.Session()

    def chat(self, system_text: str, user_text: str) -> str:
        body = {
            "model": self.endpoint.model,
            "messages": [
                {"role": "system", "content": system_text},
                {"role": "user", "content": user_text},
            ],
            "temperature": self.endpoint.temperature,
            "stream": False,
        }
        headers = {}
        token = os.environ.get(TOKEN_ENV_VAR)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            response = self.session.post(
                self.endpoint.url, json=body, headers=headers,
                timeout=self.endpoint.timeout,
            )
        except requests.RequestException as err:
            raise TransportError(f"backend unreachable: {err}") from err
        if response.status_code != 200:
            raise TransportError(
                f"backend returned HTTP {response.status_code}: {response.text[:200]}",
                status=response.status_code,
            )
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError) as err:
            raise TransportError(f"malformed completion response: {err}") from err

    def complete(self, prompt: DecisionPrompt, context: DecisionContext) -> str:
        return self.chat(prompt.system_text, prompt.user_text())
