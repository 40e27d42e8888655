"""Empirical grounding pipeline.

Ingests platform-export engagement records, builds the engagement graph,
extracts a capped two-hop ego network around the highest-degree user,
measures each user's empirical action distribution over discrete time slots
(day granularity by default; empty slots count as inactivity), assigns the
nearest behavioral archetype by Euclidean distance, optionally infers an
identity description from the user's original posts, and initializes an
engine world from the empirical follow graph.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Optional, Sequence

from .core import ActionDistribution, AgentProfile, Trait, archetype_table
from .engine import SimulationConfig, WorldState, AgentState
from .networks import WeightedDigraph

SECONDS_PER_DAY = 86400

ENGAGEMENT_RECORD_KINDS = ("reshare", "like", "dislike", "comment")
RECORD_KINDS = ("post",) + ENGAGEMENT_RECORD_KINDS

PLACEHOLDER_IDENTITY = (
    "A general-interest social media user with no original posts on record."
)


class IngestError(ValueError):
    """Malformed platform record; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"record line {line_number}: {message}")
        self.line_number = line_number


@dataclass
class PlatformRecord:
    user: str
    kind: str  # post | reshare | like | dislike | comment
    timestamp: float  # epoch seconds
    target_user: Optional[str] = None
    text: Optional[str] = None

    def __post_init__(self):
        if self.kind not in RECORD_KINDS:
            raise ValueError(f"unknown record kind {self.kind!r}")
        if self.kind in ENGAGEMENT_RECORD_KINDS and not self.target_user:
            raise ValueError(f"{self.kind} record requires target_user")
        if self.kind == "post" and not self.text:
            raise ValueError("post record requires text")


def _parse_timestamp(value) -> float:
    if isinstance(value, (int, float)):
        return float(value)
    dt = datetime.fromisoformat(str(value))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def parse_records(lines) -> list:
    """Parse line-delimited JSON platform records, citing line numbers on
    failure."""
    records = []
    for number, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            records.append(PlatformRecord(
                user=obj["user"],
                kind=obj["kind"],
                timestamp=_parse_timestamp(obj["timestamp"]),
                target_user=obj.get("target_user"),
                text=obj.get("text"),
            ))
        except (ValueError, KeyError, TypeError) as err:
            raise IngestError(number, str(err)) from err
    return records


def build_engagement_graph(records: Sequence[PlatformRecord]) -> WeightedDigraph:
    """Edge (u_i -> u_j) weight = number of u_i's engagements on u_j's
    content. Posts create nodes but no edges."""
    graph = WeightedDigraph()
    for record in records:
        graph.nodes.add(record.user)
        if record.kind in ENGAGEMENT_RECORD_KINDS:
            graph.add_edge(record.user, record.target_user)
    return graph


def extract_ego_network(graph: WeightedDigraph, cap: int = 1000) -> WeightedDigraph:
    """Capped two-hop ego network around the max-degree node.

    The ego is the node with the highest total (in+out) weighted degree;
    neighbors are gathered by BFS over the undirected adjacency to depth 2;
    if they exceed the cap, the cap highest-degree neighbors are kept (ties
    broken by lowest id). The result is the induced subgraph.
    """
    if not graph.nodes:
        raise ValueError("empty graph")
    if cap < 1:
        raise ValueError("cap must be >= 1")
    degree = {node: 0.0 for node in graph.nodes}
    adjacency = {node: set() for node in graph.nodes}
    for (src, dst), weight in graph.edges.items():
        degree[src] += weight
        degree[dst] += weight
        adjacency[src].add(dst)
        adjacency[dst].add(src)
    ego = min(graph.nodes, key=lambda n: (-degree[n], n))

    hop1 = adjacency[ego] - {ego}
    hop2 = set()
    for node in hop1:
        hop2 |= adjacency[node]
    neighbors = (hop1 | hop2) - {ego}
    if len(neighbors) > cap:
        neighbors = set(sorted(neighbors, key=lambda n: (-degree[n], n))[:cap])
    keep = neighbors | {ego}

    sub = WeightedDigraph(nodes=set(keep))
    for (src, dst), weight in graph.edges.items():
        if src in keep and dst in keep:
            sub.edges[(src, dst)] = weight
    return sub


def empirical_action_vector(user_records: Sequence[PlatformRecord],
                            observation_slots: int,
                            slot_seconds: int = SECONDS_PER_DAY,
                            origin: Optional[float] = None) -> ActionDistribution:
    """Slot the user's records into discrete time windows and normalize.

    Each slot contributes one choice: its dominant category (ties broken in
    post > reshare > interact order), or inactivity when the slot is empty.
    """
    if observation_slots < 1:
        raise ValueError("need at least one observation slot")
    if origin is None:
        origin = min((r.timestamp for r in user_records), default=0.0)
    slots = {}
    for record in user_records:
        index = int(math.floor((record.timestamp - origin) / slot_seconds))
        if index < 0 or index >= observation_slots:
            raise ValueError(f"record at {record.timestamp} outside the "
                             f"{observation_slots}-slot observation window")
        counts = slots.setdefault(index, {"post": 0, "reshare": 0, "interact": 0})
        if record.kind == "post":
            counts["post"] += 1
        elif record.kind == "reshare":
            counts["reshare"] += 1
        else:
            counts["interact"] += 1
    totals = {"post": 0, "reshare": 0, "interact": 0, "inactive": 0}
    for counts in slots.values():
        dominant = max(("post", "reshare", "interact"), key=lambda c: counts[c])
        totals[dominant] += 1
    totals["inactive"] = observation_slots - len(slots)
    return ActionDistribution(*(totals[c] / observation_slots
                                for c in ("post", "reshare", "interact", "inactive")))


@dataclass
class TraitAssignment:
    user: str
    empirical_vector: ActionDistribution
    assigned: Trait
    distance: float


def assign_trait(vector: ActionDistribution, archetypes: Optional[dict] = None,
                 user: str = "") -> TraitAssignment:
    """Nearest archetype by Euclidean distance; ties break in Trait enum
    order (SO < OS < OE < BP < CA < PC < IE)."""
    archetypes = archetypes or archetype_table()
    v = vector.as_tuple()
    best_trait, best_distance = None, None
    for trait in Trait:  # enum order is the documented tie-break
        row = archetypes[trait].as_tuple()
        distance = math.sqrt(sum((a - b) ** 2 for a, b in zip(v, row)))
        if best_distance is None or distance < best_distance - 1e-12:
            best_trait, best_distance = trait, distance
    return TraitAssignment(user, vector, best_trait, best_distance)


def infer_identity(user_posts: Sequence[str], backend,
                   budget_chars: int = 4000) -> str:
    """One profiling call over the user's concatenated original posts,
    truncated to the character budget. No posts -> placeholder profile."""
    posts = [p for p in user_posts if p]
    if not posts:
        return PLACEHOLDER_IDENTITY
    joined = "\n".join(f"- {p}" for p in posts)[:budget_chars]
    system = ("You profile social media users. Given a user's original posts, "
              "write a concise third-person description of their personality, "
              "background cues, and topical interests.")
    user = f"Original posts:\n{joined}\n\nDescribe this user in 2-4 sentences."
    return backend.chat(system, user)


def init_from_empirical(assignments: dict, identities: dict,
                        follow_edges: Sequence[tuple],
                        config: SimulationConfig) -> WorldState:
    """Build a world with one agent per empirical user: inferred identity,
    assigned trait, preloaded follow edges, empty memories and content."""
    if set(assignments) != set(identities):
        raise ValueError("assignments and identities must cover the same users")
    world = WorldState()
    for user in sorted(assignments):
        profile = AgentProfile(
            agent_id=user,
            identity_text=identities[user],
            trait=assignments[user].assigned,
            topic=None,
        )
        world.agents[user] = AgentState(profile=profile)
    for i, agent_id in enumerate(world.agent_order()):
        world.agents[agent_id].index = i
    for follower, followee in follow_edges:
        if follower in world.agents and followee in world.agents:
            world.agents[follower].profile.following.add(followee)
    return world
