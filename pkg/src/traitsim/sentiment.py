"""Pluggable comment-sentiment analyzers.

The default analyzer is neutral (every text scores 0), so engagement scores
reduce to counter arithmetic unless a real analyzer is plugged in. A small
signed word-list analyzer is provided for experiments.
"""

from __future__ import annotations

import re


class NeutralSentiment:
    """Scores every text 0.0."""

    def score(self, text: str) -> float:
        return 0.0


_POSITIVE = {
    "good", "great", "love", "like", "excellent", "amazing", "agree",
    "helpful", "insightful", "wonderful", "support", "interesting", "best",
    "thanks", "brilliant", "inspiring",
}
_NEGATIVE = {
    "bad", "hate", "awful", "terrible", "disagree", "wrong", "worst",
    "misleading", "boring", "useless", "dislike", "stupid", "false",
    "harmful", "annoying",
}

_WORD = re.compile(r"[a-z']+")


class WordListSentiment:
    """Signed word-list score in [-1, 1]: (pos - neg) / (pos + neg)."""

    def score(self, text: str) -> float:
        words = _WORD.findall(text.lower())
        pos = sum(w in _POSITIVE for w in words)
        neg = sum(w in _NEGATIVE for w in words)
        if pos + neg == 0:
            return 0.0
        return (pos - neg) / (pos + neg)
