"""Three-phase simulation engine.

Initialization builds the population (identity x trait cross product for
trait configurations); each iteration then snapshots the world, lets every
agent decide against that snapshot, and applies all decisions in a fixed
agent order. Decisions never see same-iteration actions, so the decision
phase is order-independent and the whole run is bit-reproducible from the
master seed under the stub backend: every agent draws from its own RNG
stream keyed by (master seed, iteration, agent index).

Re-shares propagate: a re-share is a new content node pointing at its parent
and is itself recommendable, so followers (and everyone else through the
recommender pool) can engage with it, forming propagation chains.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (
    Action,
    ActionKind,
    ActionRecord,
    AgentProfile,
    ContentItem,
    OCEAN_VARIANTS,
    Order,
    Trait,
    ENGAGEMENT_KINDS,
)
from .memory import (
    MemoryParams,
    MemoryUnit,
    am_record,
    ltm_evaluate,
    stm_decay,
    stm_observe,
)
from .reasoning import (
    DecisionContext,
    Decision,
    FeedEntry,
    StubBackend,
    TransportError,
    build_prompt,
    decide,
)
from .sentiment import NeutralSentiment

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

CONFIGURATIONS = ("FullModel", "IdentityOnly", "RandomRecommendation",
                  "PsychometricTraits")


@dataclass
class SimulationConfig:
    configuration: str = "FullModel"
    iterations: int = 25
    feed_size: int = 5
    memory: MemoryParams = field(default_factory=MemoryParams)
    master_seed: int = 0
    max_retries: int = 3

    def __post_init__(self):
        if self.configuration not in CONFIGURATIONS:
            raise ValueError(f"unknown configuration {self.configuration!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.feed_size < 1:
            raise ValueError("feed size must be >= 1")

    @property
    def recommender_strategy(self) -> str:
        return "random" if self.configuration == "RandomRecommendation" else "preference"


@dataclass
class AgentState:
    profile: AgentProfile
    memory: MemoryUnit = field(default_factory=MemoryUnit)
    index: int = 0  # stable position in the sorted agent-id order
    reshared_ids: set = field(default_factory=set)
    own_content_ids: set = field(default_factory=set)


@dataclass
class WorldState:
    agents: dict = field(default_factory=dict)  # agent_id -> AgentState
    content: dict = field(default_factory=dict)  # content_id -> ContentItem
    log: list = field(default_factory=list)  # ActionRecord, append-only
    iteration: int = 0
    next_content_id: int = 1

    def agent_order(self) -> list:
        return sorted(self.agents)


def init_population(personas: Sequence[dict], config: SimulationConfig,
                    follow_edges: Optional[Sequence[tuple]] = None) -> WorldState:
    """Build the initial world from persona records {id, identity_text, topic}.

    Trait configurations take the full cross product of identities and the 7
    behavioral traits (or 10 psychometric variants); IdentityOnly keeps one
    trait-less agent per identity. Memories start empty; the follow graph is
    empty unless edges are supplied (empirical grounding).
    """
    if not personas:
        raise ValueError("empty persona set")
    seen = set()
    for p in personas:
        if p["id"] in seen:
            raise ValueError(f"duplicate persona id {p['id']!r}")
        seen.add(p["id"])

    profiles = []
    if config.configuration == "IdentityOnly":
        for p in personas:
            profiles.append(AgentProfile(p["id"], p["identity_text"], None,
                                         p.get("topic")))
    elif config.configuration == "PsychometricTraits":
        for p in personas:
            for variant in OCEAN_VARIANTS:
                profiles.append(AgentProfile(
                    f"{p['id']}-{variant.code}", p["identity_text"], variant,
                    p.get("topic")))
    else:
        for p in personas:
            for trait in Trait:
                profiles.append(AgentProfile(
                    f"{p['id']}-{trait.name}", p["identity_text"], trait,
                    p.get("topic")))

    world = WorldState()
    for profile in profiles:
        world.agents[profile.agent_id] = AgentState(profile=profile)
    for i, agent_id in enumerate(world.agent_order()):
        world.agents[agent_id].index = i
    if follow_edges:
        for follower, followee in follow_edges:
            if follower not in world.agents or followee not in world.agents:
                raise ValueError(f"follow edge references unknown agent: "
                                 f"{follower!r} -> {followee!r}")
            world.agents[follower].profile.following.add(followee)
    return world


def recommend_feed(agent: AgentState, world: WorldState, strategy: str, k: int,
                   rng: np.random.Generator,
                   max_iteration: Optional[int] = None) -> list:
    """Build one agent's feed from the content pool.

    Pool: everything (originals and re-shares) not authored by the agent and
    not already re-shared by it. Re-shares authored by followees are
    force-included ahead of the ranked remainder; preference ranking puts
    topic matches first, then recency; random sampling is seeded.
    """
    if max_iteration is None:
        max_iteration = world.iteration

    def eligible(item):
        return (item.author != agent.profile.agent_id
                and item.content_id not in agent.reshared_ids
                and item.iteration_created <= max_iteration)

    following = agent.profile.following
    forced = []
    if following:
        forced = [item for item in world.content.values()
                  if eligible(item) and item.is_reshare
                  and item.author in following]
        forced.sort(key=lambda it: (-it.iteration_created, -it.content_id))
    forced_ids = {item.content_id for item in forced}

    if strategy == "preference":
        # Content ids are chronological, so a reversed scan yields the
        # recency order directly; stop once both rank groups can fill the
        # feed. Equivalent to sorting the whole pool, but O(k)-ish on the
        # hot path.
        matches, others = [], []
        for item in reversed(world.content.values()):
            if len(matches) >= k and len(others) >= k:
                break
            if not eligible(item) or item.content_id in forced_ids:
                continue
            if item.topic == agent.profile.topic:
                if len(matches) < k:
                    matches.append(item)
            elif len(others) < k:
                others.append(item)
        chosen = (forced + matches + others)[:k]
    elif strategy == "random":
        rest = [item for item in world.content.values()
                if eligible(item) and item.content_id not in forced_ids]
        take = min(k - len(forced[:k]), len(rest))
        sampled = []
        if take > 0:
            order = sorted(rest, key=lambda it: it.content_id)
            picks = rng.choice(len(order), size=take, replace=False)
            sampled = [order[i] for i in sorted(picks)]
        chosen = (forced[:k] + sampled)[:k]
    else:
        raise ValueError(f"unknown recommender strategy {strategy!r}")
    return [
        FeedEntry(item.content_id, item.author, item.text, item.is_reshare,
                  item.topic)
        for item in chosen
    ]


def classify_order(action: Action, content_store: dict) -> Order:
    """First-order iff the engagement targets an original item."""
    if action.kind not in ENGAGEMENT_KINDS:
        raise ValueError("order is defined for engagement actions only")
    target = content_store[action.target]
    return Order.FIRST if target.parent is None else Order.SECOND


def apply_action(world: WorldState, agent: AgentState, decision: Decision,
                 iteration: int) -> None:
    """Apply one validated decision to the world (serialized phase)."""
    profile = agent.profile
    kind = decision.choice
    order = Order.NA
    action = Action(kind=kind, target=decision.target, payload=decision.payload)

    if kind is ActionKind.POST:
        item = ContentItem(
            content_id=world.next_content_id, author=profile.agent_id,
            iteration_created=iteration, text=decision.payload,
            topic=profile.topic,
        )
        world.next_content_id += 1
        world.content[item.content_id] = item
        agent.own_content_ids.add(item.content_id)
    elif kind is ActionKind.RESHARE:
        parent = world.content[decision.target]
        assert decision.target not in agent.reshared_ids, "duplicate re-share"
        item = ContentItem(
            content_id=world.next_content_id, author=profile.agent_id,
            iteration_created=iteration, text=parent.text, topic=parent.topic,
            parent=parent.content_id, root=parent.root,
        )
        world.next_content_id += 1
        world.content[item.content_id] = item
        agent.own_content_ids.add(item.content_id)
        agent.reshared_ids.add(parent.content_id)
        parent.counters.reshares += 1
        world.content[parent.root].cascade_reshares += 1
        order = classify_order(action, world.content)
    elif kind in (ActionKind.LIKE, ActionKind.DISLIKE, ActionKind.COMMENT):
        target = world.content[decision.target]
        if kind is ActionKind.LIKE:
            target.counters.likes += 1
        elif kind is ActionKind.DISLIKE:
            target.counters.dislikes += 1
        else:
            target.counters.comments += 1
            target.comment_texts.append((profile.agent_id, decision.payload))
        order = classify_order(action, world.content)
    elif kind is ActionKind.FOLLOW:
        profile.following.add(decision.target)  # idempotent
    # INACTIVE: log only

    world.log.append(ActionRecord(
        iteration=iteration, agent=profile.agent_id, action=action,
        order=order, reason_text=decision.reason,
    ))


def agent_rng(master_seed: int, iteration: int, agent_index: int,
              stream: int) -> np.random.Generator:
    """Independent per-(agent, iteration) stream; stream 0 feeds the
    recommender, stream 1 the decision backend."""
    return np.random.default_rng([master_seed, iteration, agent_index, stream])


def run_iteration(world: WorldState, config: SimulationConfig, backend,
                  analyzer=None,
                  decision_order: Optional[Sequence[str]] = None) -> WorldState:
    """One snapshot-decide / serialized-apply cycle.

    ``decision_order`` only changes the sequence in which decisions are
    computed (they are order-independent by construction); application always
    happens in sorted agent order.
    """
    analyzer = analyzer or NeutralSentiment()
    iteration = world.iteration + 1
    snapshot_iteration = world.iteration
    order = list(decision_order) if decision_order is not None else world.agent_order()
    if sorted(order) != world.agent_order():
        raise ValueError("decision_order must be a permutation of agent ids")

    decisions = {}
    for agent_id in order:
        agent = world.agents[agent_id]
        stm_decay(agent.memory, iteration, config.memory)
        feed_rng = agent_rng(config.master_seed, iteration, agent.index, 0)
        feed = recommend_feed(agent, world, config.recommender_strategy,
                              config.feed_size, feed_rng,
                              max_iteration=snapshot_iteration)
        for entry in feed:
            stm_observe(agent.memory, world.content[entry.content_id],
                        iteration, config.memory, analyzer)
        for cid in agent.own_content_ids:
            item = world.content[cid]
            if iteration - item.iteration_created <= config.memory.decay_horizon:
                stm_observe(agent.memory, item, iteration, config.memory, analyzer)
        prompt = build_prompt(agent.profile, agent.memory, feed, iteration,
                              frozenset(agent.own_content_ids),
                              others_exist=len(world.agents) > 1)
        context = DecisionContext(
            agent=agent.profile, iteration=iteration,
            rng=agent_rng(config.master_seed, iteration, agent.index, 1),
        )
        decisions[agent_id] = decide(prompt, backend, context, config.max_retries)

    for agent_id in world.agent_order():
        agent = world.agents[agent_id]
        decision = decisions[agent_id]
        apply_action(world, agent, decision, iteration)
        am_record(agent.memory.am, Action(decision.choice, decision.target,
                                          decision.payload), iteration,
                  config.memory)

    if iteration % config.memory.eval_period == 0:
        for agent_id in world.agent_order():
            ltm_evaluate(world.agents[agent_id].memory, iteration,
                         config.memory, analyzer)
    world.iteration = iteration
    return world


def run_simulation(config: SimulationConfig, personas: Sequence[dict],
                   backend=None, analyzer=None,
                   initial_world: Optional[WorldState] = None,
                   checkpoint_path=None) -> WorldState:
    """Run the configured number of iterations and return the final world.

    Backend transport errors abort the run; if ``checkpoint_path`` is given a
    checkpoint of the partial world is written before re-raising.
    """
    backend = backend or StubBackend()
    world = initial_world if initial_world is not None else init_population(
        personas, config)
    try:
        for _ in range(config.iterations):
            run_iteration(world, config, backend, analyzer)
    except TransportError:
        if checkpoint_path is not None:
            write_artifacts(world, checkpoint_path)
            log.error("transport error; checkpoint written to %s", checkpoint_path)
        raise
    return world


# ---------------------------------------------------------------------------
# Line-delimited artifact serialization (schema_version = 1)


def record_to_dict(record: ActionRecord) -> dict:
    return {
        "iteration": record.iteration,
        "agent": record.agent,
        "kind": record.action.kind.value,
        "target": record.action.target,
        "payload": record.action.payload,
        "order": record.order.value,
        "reason": record.reason_text,
    }


def record_from_dict(d: dict) -> ActionRecord:
    return ActionRecord(
        iteration=d["iteration"], agent=d["agent"],
        action=Action(ActionKind(d["kind"]), d.get("target"), d.get("payload")),
        order=Order(d["order"]), reason_text=d.get("reason", ""),
    )


def content_to_dict(item: ContentItem) -> dict:
    return {
        "content_id": item.content_id,
        "author": item.author,
        "iteration_created": item.iteration_created,
        "parent": item.parent,
        "root": item.root,
        "topic": item.topic,
        "text": item.text,
        "counters": {
            "reshares": item.counters.reshares,
            "likes": item.counters.likes,
            "dislikes": item.counters.dislikes,
            "comments": item.counters.comments,
        },
        "cascade_reshares": item.cascade_reshares,
        "comment_texts": [list(pair) for pair in item.comment_texts],
    }


def content_from_dict(d: dict) -> ContentItem:
    from .core import Counters

    return ContentItem(
        content_id=d["content_id"], author=d["author"],
        iteration_created=d["iteration_created"], text=d["text"],
        topic=d.get("topic"), parent=d.get("parent"), root=d.get("root"),
        counters=Counters(**d["counters"]),
        comment_texts=[tuple(pair) for pair in d.get("comment_texts", [])],
        cascade_reshares=d.get("cascade_reshares", 0),
    )


def write_artifacts(world: WorldState, out_dir) -> None:
    """Write actions.jsonl, content.jsonl, and agents.jsonl into ``out_dir``."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "actions.jsonl", "w") as fh:
        for record in world.log:
            fh.write(json.dumps(record_to_dict(record), sort_keys=True) + "\n")
    with open(out / "content.jsonl", "w") as fh:
        for cid in sorted(world.content):
            fh.write(json.dumps(content_to_dict(world.content[cid]),
                                sort_keys=True) + "\n")
    with open(out / "agents.jsonl", "w") as fh:
        for agent_id in world.agent_order():
            profile = world.agents[agent_id].profile
            trait = profile.trait
            if isinstance(trait, Trait):
                trait_label = trait.name
            elif trait is None:
                trait_label = None
            else:
                trait_label = trait.code
            fh.write(json.dumps({
                "agent_id": agent_id,
                "trait": trait_label,
                "topic": profile.topic,
                "following": sorted(profile.following),
            }, sort_keys=True) + "\n")


def check_integrity(world: WorldState) -> None:
    """Assert content-store invariants: parents/roots resolve, roots are
    originals, and each item's reshare counter equals its child count."""
    children = {}
    for item in world.content.values():
        if item.parent is not None:
            if item.parent not in world.content:
                raise AssertionError(f"dangling parent for {item.content_id}")
            children[item.parent] = children.get(item.parent, 0) + 1
        root = world.content.get(item.root)
        if root is None or root.parent is not None:
            raise AssertionError(f"bad root for {item.content_id}")
    for item in world.content.values():
        if item.counters.reshares != children.get(item.content_id, 0):
            raise AssertionError(f"reshare counter mismatch on {item.content_id}")
