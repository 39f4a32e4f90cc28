"""Keyword heuristics for the purpose flags of a change."""

from __future__ import annotations

import re

KEYWORD_TABLE_VERSION = "1"

# independent flags; a message may set several
KEYWORDS: dict[str, re.Pattern] = {
    "is_corrective": re.compile(r"\b(fix|bug|fail|error|crash)", re.IGNORECASE),
    "is_refactoring": re.compile(
        r"\b(refactor|clean ?up|restructur|renam|mov(e|es|ed|ing)\b)", re.IGNORECASE),
    "is_preventive": re.compile(r"\b(test|ci\b|junit|coverage)", re.IGNORECASE),
    "has_feature_addition": re.compile(
        r"\b(add|implement|introduc|support|feature)", re.IGNORECASE),
    "is_non_functional": re.compile(r"\b(doc|readme|typo|license|comment)", re.IGNORECASE),
}


def classify_change_purpose(commit_message: str) -> dict[str, int]:
    text = commit_message or ""
    flags = {name: int(bool(pat.search(text))) for name, pat in KEYWORDS.items()}
    flags["is_merge"] = int(text.lstrip().startswith("Merge"))
    return flags
