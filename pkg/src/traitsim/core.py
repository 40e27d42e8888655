"""Domain types shared by every module: traits, actions, content, records.

Value types here are plain dataclasses/enums. Nothing in this module touches
simulation state; the only mutable piece is ``Counters``, which the engine
mutates during its serialized apply phase.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Optional, Union

TOPICS = ("Healthcare", "Technology", "Religion", "Music")

SUM_TOLERANCE = 1e-9


class Trait(Enum):
    """The seven behavioral archetypes. Enum order is the documented tie-break
    order for nearest-archetype assignment."""

    SO = "Silent Observer"
    OS = "Occasional Sharer"
    OE = "Occasional Engager"
    BP = "Balanced Participant"
    CA = "Content Amplifier"
    PC = "Proactive Contributor"
    IE = "Interactive Enthusiast"


TRAIT_PROMPTS = {
    Trait.BP: (
        "You are a Balanced Participant. In each cycle, mix original tweets, "
        "retweets, and occasional likes or dislikes, or comments. Maintain a "
        "steady, balanced level of engagement. Contribute regularly with your "
        "own posts, amplify others via retweets, and use reactions or comments "
        "when appropriate."
    ),
    Trait.CA: (
        "You are a Content Amplifier. Spend most of your time sharing others' "
        "posts and reacting to them with likes, dislikes or comments. Posting "
        "new content is secondary. Your main task is to retweet frequently and "
        "support others with likes, dislikes or comments."
    ),
    Trait.IE: (
        "You are an Interactive Enthusiast. Your primary mode of participation "
        "is reactive: comment extensively, like or dislike content regularly. "
        "Posting or sharing happens only occasionally. Engage deeply through "
        "comments, likes, and dislikes."
    ),
    Trait.OE: (
        "You are an Occasional Engager. Your engagement is limited to minimal "
        "reactions. Occasionally like, dislike, or comment on posts that catch "
        "your eye. Do not retweet or write original tweets."
    ),
    Trait.OS: (
        "You are an Occasional Sharer. Stay mostly silent and inactive. Only "
        "retweet content that clearly aligns with your interests; refrain from "
        "liking, disliking, commenting, or posting original content."
    ),
    Trait.PC: (
        "You are a Proactive Contributor. Lead the conversation with your own "
        "original tweets. You occasionally engage with others through comments, "
        "likes, or dislikes, but you tend to avoid retweets. Prioritize "
        "expressing your own ideas and perspectives."
    ),
    Trait.SO: (
        "You are a Silent Observer. Do not post, share, like, dislike, or "
        "comment under any normal circumstance. Your only job is to watch and "
        "absorb without leaving any trace. Remain invisible in the "
        "conversation. Avoid all posting, sharing, or reacting unless there is "
        "a strong external trigger."
    ),
}


@dataclass(frozen=True)
class PsychometricVariant:
    """One OCEAN factor instantiated at a high or low level."""

    factor: str  # one of O, C, E, A, N
    level: str  # "High" or "Low"
    prompt_text: str

    @property
    def code(self) -> str:
        return f"{self.factor}{self.level[0]}"


_OCEAN_DESCRIPTIONS = {
    ("O", "High"): "You are highly open to experience: curious, imaginative, and drawn to novel ideas and unconventional viewpoints.",
    ("O", "Low"): "You are low in openness: practical, conventional, and most comfortable with familiar topics and routines.",
    ("C", "High"): "You are highly conscientious: organized, deliberate, and careful; you think before you act and follow through reliably.",
    ("C", "Low"): "You are low in conscientiousness: spontaneous and easygoing; you act on impulse and rarely plan ahead.",
    ("E", "High"): "You are highly extraverted: outgoing, talkative, and energized by social exchange; you seek attention and conversation.",
    ("E", "Low"): "You are low in extraversion: reserved and quiet; you prefer to keep to yourself and rarely initiate conversation.",
    ("A", "High"): "You are highly agreeable: warm, cooperative, and trusting; you avoid conflict and support others readily.",
    ("A", "Low"): "You are low in agreeableness: skeptical and blunt; you challenge others and do not shy away from disagreement.",
    ("N", "High"): "You are high in neuroticism: sensitive and easily stressed; negative feedback affects you strongly and makes you withdraw.",
    ("N", "Low"): "You are low in neuroticism: calm, emotionally stable, and resilient; setbacks rarely change your behavior.",
}

OCEAN_VARIANTS = tuple(
    PsychometricVariant(factor=f, level=lvl, prompt_text=text)
    for (f, lvl), text in _OCEAN_DESCRIPTIONS.items()
)


class ActionKind(Enum):
    POST = "post"
    RESHARE = "reshare"
    LIKE = "like"
    DISLIKE = "dislike"
    COMMENT = "comment"
    FOLLOW = "follow"
    INACTIVE = "inactive"


ENGAGEMENT_KINDS = frozenset(
    {ActionKind.RESHARE, ActionKind.LIKE, ActionKind.DISLIKE, ActionKind.COMMENT}
)


class Order(Enum):
    FIRST = "first_order"
    SECOND = "second_order"
    NA = "not_applicable"


@dataclass
class Action:
    """One platform action. Shape constraints:

    - POST requires ``payload`` text,
    - RESHARE/LIKE/DISLIKE/COMMENT require an integer content-id ``target``,
    - FOLLOW requires an agent-id ``target``,
    - INACTIVE carries neither.
    """

    kind: ActionKind
    target: Optional[Union[int, str]] = None
    payload: Optional[str] = None

    def validate_shape(self) -> None:
        k = self.kind
        if k is ActionKind.POST and not self.payload:
            raise ValueError("post requires payload text")
        if k in ENGAGEMENT_KINDS and not isinstance(self.target, int):
            raise ValueError(f"{k.value} requires a content-id target")
        if k is ActionKind.COMMENT and not self.payload:
            raise ValueError("comment requires payload text")
        if k is ActionKind.FOLLOW and not isinstance(self.target, str):
            raise ValueError("follow requires an agent-id target")
        if k is ActionKind.INACTIVE and (self.target is not None or self.payload):
            raise ValueError("inactive carries neither target nor payload")


@dataclass(frozen=True)
class ActionDistribution:
    """4-D probability vector over (post, reshare, interact, inactive)."""

    p_post: float
    p_reshare: float
    p_interact: float
    p_inactive: float

    def __post_init__(self):
        comps = self.as_tuple()
        if any(p < 0 or p > 1 for p in comps):
            raise ValueError(f"probabilities out of [0,1]: {comps}")
        if abs(sum(comps) - 1.0) > SUM_TOLERANCE:
            raise ValueError(f"components must sum to 1, got {sum(comps)!r}")

    def as_tuple(self) -> tuple:
        return (self.p_post, self.p_reshare, self.p_interact, self.p_inactive)


@dataclass
class AgentProfile:
    agent_id: str
    identity_text: str
    trait: Optional[Union[Trait, PsychometricVariant]] = None
    topic: Optional[str] = None
    following: set = field(default_factory=set)


@dataclass
class Counters:
    reshares: int = 0
    likes: int = 0
    dislikes: int = 0
    comments: int = 0


@dataclass
class ContentItem:
    """An original post or a re-share node.

    ``parent is None`` iff the item is an original, in which case
    ``root == content_id``. ``cascade_reshares`` is tracked on originals only
    and counts every re-share event anywhere in the item's cascade;
    ``counters.reshares`` counts direct children only.
    """

    content_id: int
    author: str
    iteration_created: int
    text: str
    topic: Optional[str]
    parent: Optional[int] = None
    root: Optional[int] = None
    counters: Counters = field(default_factory=Counters)
    comment_texts: list = field(default_factory=list)  # (agent_id, text) pairs
    cascade_reshares: int = 0

    def __post_init__(self):
        if self.parent is None:
            if self.root is None:
                self.root = self.content_id
            elif self.root != self.content_id:
                raise ValueError("original item must be its own root")
        elif self.root is None:
            raise ValueError("re-share item requires an explicit root")

    @property
    def is_reshare(self) -> bool:
        return self.parent is not None


@dataclass
class ActionRecord:
    iteration: int
    agent: str
    action: Action
    order: Order = Order.NA
    reason_text: str = ""

    def __post_init__(self):
        na = self.action.kind not in ENGAGEMENT_KINDS
        if na != (self.order is Order.NA):
            raise ValueError("order is NotApplicable exactly for post/follow/inactive")


@lru_cache(maxsize=1)
def archetype_table() -> dict:
    """Canonical trait -> ActionDistribution table, loaded from the plain-text
    asset so recalibration requires no code change."""
    table = {}
    text = resources.files("traitsim.assets").joinpath("archetypes.txt").read_text()
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, *values = line.split()
        table[Trait[name]] = ActionDistribution(*(float(v) for v in values))
    if set(table) != set(Trait):
        missing = set(Trait) - set(table)
        raise ValueError(f"archetype asset missing rows for {missing}")
    return table


def action_category(kind: ActionKind) -> str:
    """Map an action kind onto the 4-category behavioral space.

    Follow is logged but excluded from behavioral vectors ("excluded").
    """
    if kind is ActionKind.POST:
        return "post"
    if kind is ActionKind.RESHARE:
        return "reshare"
    if kind in (ActionKind.LIKE, ActionKind.DISLIKE, ActionKind.COMMENT):
        return "interact"
    if kind is ActionKind.INACTIVE:
        return "inactive"
    return "excluded"
