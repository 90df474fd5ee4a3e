"""Dependency-free rule-based tagger: capitalized non-stopword tokens are
unigram person mentions. Deterministic and pure; fully lower-cased input
yields no entities at all, which is what makes it useful for exercising the
case-ablation path end to end."""

from __future__ import annotations

from typing import Sequence

RULE_LABELS = ("PER",)

_STOPWORDS = frozenset(
    """
    the a an and or but if while of to in on at by for with from into over
    after before he she it they we you i his her its their this that these
    those there here when where who what why how not no yes
    """.split()
)


def rule_based_tags(tokens: Sequence[str]) -> list[str]:
    return [
        "B-PER" if token[:1].isupper() and token.lower() not in _STOPWORDS else "O"
        for token in tokens
    ]
