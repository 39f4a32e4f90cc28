"""Code-review change records and the immutable, time-indexed corpus."""

from __future__ import annotations

import json
import logging
import os
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
STATUSES = ("merged", "abandoned", "open")


class CorpusError(ValueError):
    """Raised when a corpus file or record violates the schema."""


def parse_timestamp(value) -> datetime:
    """Parse a timestamp into an aware UTC datetime.

    Accepts ISO-8601 strings (``Z`` or offsets), Gerrit's
    ``"2013-02-01 09:59:32.126000000"`` form (implicitly UTC), datetimes and
    epoch seconds.
    """
    if isinstance(value, datetime):
        dt = value
    elif isinstance(value, (int, float)):
        return datetime.fromtimestamp(value, tz=timezone.utc)
    elif isinstance(value, str):
        text = value.strip().replace(" ", "T", 1)
        if text.endswith("Z"):
            text = text[:-1] + "+00:00"
        # Gerrit emits nanoseconds; fromisoformat takes at most microseconds
        if "." in text:
            head, _, frac = text.partition(".")
            tz = ""
            for sep in ("+", "-"):
                if sep in frac:
                    frac, _, rest = frac.partition(sep)
                    tz = sep + rest
                    break
            text = f"{head}.{frac[:6].ljust(6, '0')}{tz}"
        dt = datetime.fromisoformat(text)
    else:
        raise CorpusError(f"unsupported timestamp {value!r}")
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def file_extension(path: str) -> str:
    name = path.rsplit("/", 1)[-1]
    if "." not in name.lstrip("."):
        return ""
    return name.rsplit(".", 1)[-1].lower()


@dataclass(frozen=True)
class FileRecord:
    path: str
    file_extension: str

    @classmethod
    def from_path(cls, path: str) -> "FileRecord":
        return cls(path, file_extension(path))


@dataclass(frozen=True)
class PatchsetRecord:
    number: int
    created_at: datetime
    commit_message: str = ""
    files: tuple[FileRecord, ...] = ()
    added_lines: str = ""
    deleted_lines: str = ""
    # False when the revision's diff could not be retrieved (purged, error)
    diff_available: bool = True


@dataclass(frozen=True)
class CommentRecord:
    author_id: str
    created_at: datetime
    message: str

    def __post_init__(self):
        if not self.message:
            raise CorpusError("comment message must be non-empty")


@dataclass(frozen=True)
class ChangeRecord:
    change_number: int
    project: str
    owner_id: str
    status: str
    created_at: datetime
    subject: str
    description: str
    insertions: int
    deletions: int
    patchsets: tuple[PatchsetRecord, ...]
    comments: tuple[CommentRecord, ...] = ()
    reviewer_ids: frozenset[str] = frozenset()
    change_id: str = ""
    branch: str = ""

    def __post_init__(self):
        validate_change(self)

    @property
    def first_patchset(self) -> PatchsetRecord:
        return self.patchsets[0]

    def patchset(self, number: int) -> PatchsetRecord:
        for ps in self.patchsets:
            if ps.number == number:
                return ps
        raise KeyError(f"change {self.change_number} has no patchset {number}")


def validate_change(change: ChangeRecord) -> None:
    num = change.change_number
    if not isinstance(num, int) or num <= 0:
        raise CorpusError(f"change_number must be a positive integer, got {num!r}")
    if change.status not in STATUSES:
        raise CorpusError(f"change {num}: unknown status {change.status!r}")
    if change.insertions < 0 or change.deletions < 0:
        raise CorpusError(f"change {num}: negative line counts")
    if not change.patchsets:
        raise CorpusError(f"change {num}: no patchsets")
    prev = None
    for ps in change.patchsets:
        if ps.number < 1:
            raise CorpusError(f"change {num}: patchset number {ps.number} < 1")
        if prev is not None:
            if ps.number <= prev.number:
                raise CorpusError(f"change {num}: patchset numbers not strictly increasing")
            if ps.created_at < prev.created_at:
                raise CorpusError(f"change {num}: patchset {ps.number} created before {prev.number}")
        prev = ps
    if change.patchsets[0].created_at != change.created_at:
        raise CorpusError(f"change {num}: first patchset must be created with the change")


# --- serialization -------------------------------------------------------


def change_to_dict(change: ChangeRecord) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "change_number": change.change_number,
        "change_id": change.change_id,
        "project": change.project,
        "branch": change.branch,
        "owner_id": change.owner_id,
        "status": change.status,
        "created_at": format_timestamp(change.created_at),
        "subject": change.subject,
        "description": change.description,
        "insertions": change.insertions,
        "deletions": change.deletions,
        "reviewer_ids": sorted(change.reviewer_ids),
        "patchsets": [
            {
                "number": ps.number,
                "created_at": format_timestamp(ps.created_at),
                "commit_message": ps.commit_message,
                "files": [[f.path, f.file_extension] for f in ps.files],
                "added_lines": ps.added_lines,
                "deleted_lines": ps.deleted_lines,
                "diff_available": ps.diff_available,
            }
            for ps in change.patchsets
        ],
        "comments": [
            {
                "author_id": c.author_id,
                "created_at": format_timestamp(c.created_at),
                "message": c.message,
            }
            for c in change.comments
        ],
    }


def change_from_dict(data: dict) -> ChangeRecord:
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise CorpusError(f"unsupported schema_version {version!r}")
    try:
        patchsets = tuple(
            PatchsetRecord(
                number=int(ps["number"]),
                created_at=parse_timestamp(ps["created_at"]),
                commit_message=ps.get("commit_message", ""),
                files=tuple(
                    FileRecord(f[0], f[1]) if isinstance(f, (list, tuple))
                    else FileRecord.from_path(f)
                    for f in ps.get("files", ())
                ),
                added_lines=ps.get("added_lines", ""),
                deleted_lines=ps.get("deleted_lines", ""),
                diff_available=bool(ps.get("diff_available", True)),
            )
            for ps in data["patchsets"]
        )
        comments = tuple(
            CommentRecord(str(c["author_id"]), parse_timestamp(c["created_at"]), c["message"])
            for c in data.get("comments", ())
        )
        return ChangeRecord(
            change_number=data["change_number"],
            project=data["project"],
            owner_id=str(data["owner_id"]),
            status=data["status"],
            created_at=parse_timestamp(data["created_at"]),
            subject=data.get("subject", ""),
            description=data.get("description", ""),
            insertions=int(data.get("insertions", 0)),
            deletions=int(data.get("deletions", 0)),
            patchsets=patchsets,
            comments=comments,
            reviewer_ids=frozenset(str(r) for r in data.get("reviewer_ids", ())),
            change_id=data.get("change_id", ""),
            branch=data.get("branch", ""),
        )
    except KeyError as exc:
        raise CorpusError(f"missing field {exc.args[0]!r}") from None


def dumps_change(change: ChangeRecord) -> str:
    return json.dumps(change_to_dict(change), ensure_ascii=False, separators=(",", ":"))


# --- corpus --------------------------------------------------------------


class Corpus:
    """Immutable collection of changes indexed by number and creation time."""

    def __init__(self, changes: Iterable[ChangeRecord]):
        by_number: dict[int, ChangeRecord] = {}
        for change in changes:
            if change.change_number in by_number:
                raise CorpusError(f"duplicate change_number {change.change_number}")
            by_number[change.change_number] = change
        self._by_number = by_number
        self._by_time = tuple(
            sorted(by_number.values(), key=lambda c: (c.created_at, c.change_number))
        )
        self._times = [c.created_at for c in self._by_time]
        self._change_ids: dict[str, list[int]] | None = None
        self._project_times: dict[str, list[datetime]] | None = None

    def __len__(self) -> int:
        return len(self._by_number)

    def __iter__(self) -> Iterator[ChangeRecord]:
        return iter(self._by_time)

    def __contains__(self, number) -> bool:
        return number in self._by_number

    def __getitem__(self, number: int) -> ChangeRecord:
        return self._by_number[number]

    def __eq__(self, other) -> bool:
        return isinstance(other, Corpus) and self._by_time == other._by_time

    def get(self, number: int) -> ChangeRecord | None:
        return self._by_number.get(number)

    @property
    def by_time(self) -> tuple[ChangeRecord, ...]:
        """Changes sorted by (created_at, change_number)."""
        return self._by_time

    @property
    def numbers(self) -> list[int]:
        return [c.change_number for c in self._by_time]

    @property
    def change_id_index(self) -> dict[str, list[int]]:
        if self._change_ids is None:
            index: dict[str, list[int]] = {}
            for c in self._by_time:
                if c.change_id:
                    index.setdefault(c.change_id, []).append(c.change_number)
            self._change_ids = index
        return self._change_ids

    def count_created_between(self, start: datetime, end: datetime,
                              project: str | None = None) -> int:
        """Number of changes created strictly between two instants."""
        lo, hi = min(start, end), max(start, end)
        if project is None:
            times = self._times
        else:
            if self._project_times is None:
                per: dict[str, list[datetime]] = {}
                for c in self._by_time:
                    per.setdefault(c.project, []).append(c.created_at)
                self._project_times = per
            times = self._project_times.get(project, [])
        return max(0, bisect_left(times, hi) - bisect_right(times, lo))

    def created_before(self, instant: datetime) -> "Corpus":
        """Sub-corpus of changes created strictly before ``instant``."""
        return Corpus(self._by_time[: bisect_left(self._times, instant)])

    def subset(self, numbers: Iterable[int]) -> "Corpus":
        return Corpus(self._by_number[n] for n in numbers)


def filter_status(corpus: Corpus, statuses) -> Corpus:
    statuses = set(statuses)
    if not statuses:
        raise ValueError("statuses must be non-empty")
    unknown = statuses - set(STATUSES)
    if unknown:
        raise ValueError(f"unknown statuses {sorted(unknown)}")
    return Corpus(c for c in corpus if c.status in statuses)


def iter_corpus_file(path) -> Iterator[ChangeRecord]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield change_from_dict(json.loads(line))
            except (CorpusError, json.JSONDecodeError, TypeError, ValueError) as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None


def load_corpus(path) -> Corpus:
    """Load a newline-delimited JSON corpus file."""
    changes = []
    seen: dict[int, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                change = change_from_dict(json.loads(line))
            except (CorpusError, json.JSONDecodeError, TypeError, ValueError) as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
            if change.change_number in seen:
                raise CorpusError(
                    f"{path}:{lineno}: duplicate change_number {change.change_number} "
                    f"(first seen on line {seen[change.change_number]})"
                )
            seen[change.change_number] = lineno
            changes.append(change)
    return Corpus(changes)


def save_corpus(corpus: Iterable[ChangeRecord], path) -> None:
    """Write changes in creation order as normalized NDJSON (atomic replace)."""
    path = Path(path)
    records = sorted(corpus, key=lambda c: (c.created_at, c.change_number))
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        for change in records:
            fh.write(dumps_change(change))
            fh.write("\n")
    os.replace(tmp, path)


def append_changes(changes: Iterable[ChangeRecord], path) -> int:
    """Append records to a corpus file, fsyncing before returning."""
    n = 0
    with open(path, "a", encoding="utf-8", newline="\n") as fh:
        for change in changes:
            fh.write(dumps_change(change))
            fh.write("\n")
            n += 1
        fh.flush()
        os.fsync(fh.fileno())
    return n
