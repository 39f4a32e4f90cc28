"""Depends-On / Needed-By tag extraction and dependency edges."""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import asdict, dataclass, field
from datetime import datetime
from typing import Iterable

from .corpus import Corpus, format_timestamp, parse_timestamp

log = logging.getLogger(__name__)

DEPENDS_ON = "depends_on"
NEEDED_BY = "needed_by"

_REF_CLASS = r"[a-zA-Z0-9/\.\:\+\-\#]{6,}"
_PATTERNS = {
    (DEPENDS_ON, False): re.compile(r"Depends-On:\s(" + _REF_CLASS + ")"),
    (NEEDED_BY, False): re.compile(r"Needed-By:\s(" + _REF_CLASS + ")"),
    (DEPENDS_ON, True): re.compile(r"Depends-On:\s(" + _REF_CLASS + ")", re.IGNORECASE),
    (NEEDED_BY, True): re.compile(r"Needed-By:\s(" + _REF_CLASS + ")", re.IGNORECASE),
}
_CHANGE_ID = re.compile(r"^I[0-9a-fA-F]{6,40}$")
_TRAILING_PUNCT = ".:#/+-"


def extract_depends_on(text: str, ignore_case: bool = False) -> list[str]:
    """Reference payloads of every ``Depends-On:`` tag, in order."""
    return _PATTERNS[DEPENDS_ON, ignore_case].findall(text or "")


def extract_needed_by(text: str, ignore_case: bool = False) -> list[str]:
    """Reference payloads of every ``Needed-By:`` tag, in order."""
    return _PATTERNS[NEEDED_BY, ignore_case].findall(text or "")


def extract_tags(text: str, ignore_case: bool = False) -> list[tuple[str, str]]:
    """All ``(tag_kind, ref)`` pairs ordered by position in ``text``."""
    found = []
    for kind in (DEPENDS_ON, NEEDED_BY):
        for m in _PATTERNS[kind, ignore_case].finditer(text or ""):
            found.append((m.start(), kind, m.group(1)))
    found.sort()
    return [(kind, ref) for _, kind, ref in found]


def clean_ref(ref: str) -> str:
    return ref.rstrip(_TRAILING_PUNCT)


@dataclass(frozen=True)
class Resolution:
    change_number: int | None
    reason: str = ""

    @property
    def resolved(self) -> bool:
        return self.change_number is not None


def _url_change_number(ref: str) -> int | None:
    path = ref.split("://", 1)[-1]
    parts = [p for p in path.split("/") if p]
    # .../c/<project>/+/<number>[/<patchset>] and legacy .../#/c/<number>/
    if "+" in parts:
        i = parts.index("+")
        if i + 1 < len(parts) and parts[i + 1].isdigit():
            return int(parts[i + 1])
    if "c" in parts:
        for p in parts[parts.index("c") + 1:]:
            if p.isdigit():
                return int(p)
    digits = [p for p in parts if p.isdigit()]
    return int(digits[-1]) if digits else None


def resolve_ref(ref: str, corpus: Corpus) -> Resolution:
    """Map a raw tag reference to a change number in ``corpus``.

    Numeric refs map directly and URLs via their change-number path segment,
    whether or not the change is in ``corpus``. Change-Ids go through the
    corpus Change-Id index (exact, or a unique prefix of at least 8
    characters); one shared by several changes is ``ambiguous``.
    """
    ref = clean_ref(ref.strip())
    if not ref:
        return Resolution(None, "empty")
    if ref.isdigit():
        return Resolution(int(ref))
    if "/" in ref:
        number = _url_change_number(ref)
        if number is None:
            return Resolution(None, "unparseable")
        return Resolution(number)
    if _CHANGE_ID.match(ref):
        index = corpus.change_id_index
        hits = index.get(ref)
        if hits is None:
            matches = [k for k in index if k.startswith(ref)] if len(ref) >= 8 else []
            if len(matches) > 1:
                return Resolution(None, "ambiguous")
            hits = index[matches[0]] if matches else None
        if not hits:
            return Resolution(None, "unknown")
        if len(hits) > 1:
            return Resolution(None, "ambiguous")
        return Resolution(hits[0])
    return Resolution(None, "unparseable")


@dataclass(frozen=True)
class DependencyEdge:
    source_change: int
    target_change: int
    tag_kind: str
    declaring_change: int
    declared_in_patchset: int
    declared_at: datetime

    def __post_init__(self):
        if self.source_change == self.target_change:
            raise ValueError("self-dependency")
        expected = self.target_change if self.tag_kind == DEPENDS_ON else self.source_change
        if self.tag_kind not in (DEPENDS_ON, NEEDED_BY) or self.declaring_change != expected:
            raise ValueError(f"inconsistent orientation for {self}")

    @property
    def pair(self) -> tuple[int, int]:
        return self.source_change, self.target_change

    def to_dict(self) -> dict:
        d = asdict(self)
        d["declared_at"] = format_timestamp(self.declared_at)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DependencyEdge":
        return cls(
            source_change=int(d["source_change"]),
            target_change=int(d["target_change"]),
            tag_kind=d["tag_kind"],
            declaring_change=int(d["declaring_change"]),
            declared_in_patchset=int(d["declared_in_patchset"]),
            declared_at=parse_timestamp(d["declared_at"]),
        )


@dataclass(frozen=True)
class UnresolvedRef:
    declaring_change: int
    patchset: int
    tag_kind: str
    ref: str
    reason: str


@dataclass
class ExtractionResult:
    declarations: list[DependencyEdge] = field(default_factory=list)
    unresolved: list[UnresolvedRef] = field(default_factory=list)
    self_references: list[UnresolvedRef] = field(default_factory=list)


def extract_declarations(corpus: Corpus, ignore_case: bool = False) -> ExtractionResult:
    """Every tag declaration in the corpus, at its first declaring patchset.

    Patchset commit messages are scanned in order; for each (tag kind,
    resolved change) the earliest patchset mentioning it wins.
    """
    result = ExtractionResult()
    for change in corpus:
        first_seen: dict[tuple[str, int], int] = {}
        seen_unresolved: set[tuple[str, str]] = set()
        messages = [(ps, ps.commit_message) for ps in change.patchsets]
        if not any(m for _, m in messages):
            # only the current commit message was mined
            messages = [(change.patchsets[-1], change.description)]
        for ps, message in messages:
            for kind, raw in extract_tags(message, ignore_case):
                res = resolve_ref(raw, corpus)
                if res.resolved and res.change_number not in corpus:
                    res = Resolution(None, "not_in_corpus")
                if not res.resolved:
                    if (kind, raw) not in seen_unresolved:
                        seen_unresolved.add((kind, raw))
                        result.unresolved.append(
                            UnresolvedRef(change.change_number, ps.number, kind, raw, res.reason))
                    continue
                key = (kind, res.change_number)
                if key in first_seen:
                    continue
                first_seen[key] = ps.number
                if res.change_number == change.change_number:
                    log.warning("change %d references itself (%s)", change.change_number, raw)
                    result.self_references.append(
                        UnresolvedRef(change.change_number, ps.number, kind, raw, "self"))
                    continue
                if kind == DEPENDS_ON:
                    source, target = res.change_number, change.change_number
                else:
                    source, target = change.change_number, res.change_number
                result.declarations.append(
                    DependencyEdge(source, target, kind, change.change_number,
                                   ps.number, ps.created_at))
    return result


def dedupe_edges(declarations: Iterable[DependencyEdge]) -> list[DependencyEdge]:
    """Keep the earliest declaration per ordered (source, target) pair."""
    best: dict[tuple[int, int], DependencyEdge] = {}
    for e in declarations:
        cur = best.get(e.pair)
        if cur is None or (e.declared_at, e.tag_kind) < (cur.declared_at, cur.tag_kind):
            best[e.pair] = e
    return sorted(best.values(), key=lambda e: (e.declared_at, e.source_change, e.target_change))


def build_edges(corpus: Corpus, ignore_case: bool = False) -> list[DependencyEdge]:
    return dedupe_edges(extract_declarations(corpus, ignore_case).declarations)


def dependent_changes(edges: Iterable[DependencyEdge]) -> set[int]:
    out: set[int] = set()
    for e in edges:
        out.add(e.source_change)
        out.add(e.target_change)
    return out


EDGE_FIELDS = ("source_change", "target_change", "tag_kind", "declaring_change",
               "declared_in_patchset", "declared_at")


def save_edges(edges: Iterable[DependencyEdge], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in edges:
            fh.write(json.dumps(e.to_dict(), separators=(",", ":")) + "\n")


def load_edges(path) -> list[DependencyEdge]:
    with open(path, encoding="utf-8") as fh:
        return [DependencyEdge.from_dict(json.loads(line)) for line in fh if line.strip()]


def save_edges_csv(edges: Iterable[DependencyEdge], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=EDGE_FIELDS, lineterminator="\n")
        w.writeheader()
        for e in edges:
            w.writerow(e.to_dict())


def save_unresolved_csv(items: Iterable[UnresolvedRef], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["declaring_change", "patchset", "tag_kind", "ref", "reason"])
        for u in items:
            w.writerow([u.declaring_change, u.patchset, u.tag_kind, u.ref, u.reason])
