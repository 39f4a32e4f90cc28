"""Commit-message splitting and tokenization."""

from __future__ import annotations

import re

# tag lines would hand the label to any text feature
_FOOTER = re.compile(r"^\s*(depends-on|needed-by|change-id)\s*:", re.IGNORECASE)
_WORD = re.compile(r"[a-z0-9_]+")
_PATH_SPLIT = re.compile(r"[/.\-_]+")


def split_message(message: str) -> tuple[str, str]:
    """``(subject, body)`` of a commit message with tag/Change-Id lines removed."""
    lines = (message or "").splitlines()
    if not lines:
        return "", ""
    subject = lines[0].strip()
    body = [ln for ln in lines[1:] if not _FOOTER.match(ln)]
    return subject, "\n".join(body).strip()


def change_texts(change) -> dict[str, str]:
    """Subject, description and diff blobs as seen at the first patchset."""
    ps = change.first_patchset
    message = ps.commit_message or change.description
    subject, body = split_message(message)
    if not subject:
        subject = change.subject
    return {
        "subject": subject,
        "description": body,
        "message": f"{subject}\n{body}" if body else subject,
        "added_lines": ps.added_lines,
        "deleted_lines": ps.deleted_lines,
    }


def embedding_tokens(text: str) -> list[str]:
    return _WORD.findall((text or "").lower())


def word_tokens(text: str) -> set[str]:
    return set((text or "").lower().split())


def path_tokens(paths) -> set[str]:
    out: set[str] = set()
    for p in paths:
        out.update(t for t in _PATH_SPLIT.split(p.lower()) if t)
    return out


def jaccard(a: set, b: set) -> float:
    union = len(a | b)
    return len(a & b) / union if union else 0.0
