"""Batched change download from a Gerrit-style REST endpoint."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterator
from urllib.parse import quote

import requests

from .corpus import (
    ChangeRecord,
    CommentRecord,
    CorpusError,
    FileRecord,
    PatchsetRecord,
    append_changes,
    parse_timestamp,
)

log = logging.getLogger(__name__)

MAX_BATCH = 500
XSSI_PREFIX = ")]}'"
DEFAULT_OPTIONS = (
    "ALL_REVISIONS",
    "ALL_COMMITS",
    "ALL_FILES",
    "MESSAGES",
    "DETAILED_ACCOUNTS",
)
_STATUS = {"MERGED": "merged", "ABANDONED": "abandoned", "NEW": "open"}


class FetchError(RuntimeError):
    """Raised when a batch request keeps failing after all retries."""


def strip_xssi(text: str) -> str:
    if text.startswith(XSSI_PREFIX):
        return text[len(XSSI_PREFIX):].lstrip("\r\n")
    return text


def _account(obj) -> str:
    if not obj:
        return ""
    return str(obj.get("_account_id", obj.get("email", "")))


def _diff_blobs(diff: dict) -> tuple[str, str]:
    added, deleted = [], []
    for chunk in diff.get("content", ()):
        added.extend(chunk.get("b", ()))
        deleted.extend(chunk.get("a", ()))
    return "\n".join(added), "\n".join(deleted)


def normalize_change(raw: dict, diffs: dict | None = None) -> ChangeRecord:
    """Convert one Gerrit ``ChangeInfo`` JSON object into a ``ChangeRecord``.

    ``diffs`` optionally maps patchset number to ``(added, deleted)`` blobs;
    patchsets without an entry get empty blobs and ``diff_available=False``.
    """
    diffs = diffs or {}
    created = parse_timestamp(raw["created"])
    revisions = sorted(
        (raw.get("revisions") or {}).values(), key=lambda r: int(r["_number"])
    )
    patchsets = []
    prev_time = created
    for i, rev in enumerate(revisions):
        number = int(rev["_number"])
        ps_time = created if i == 0 else max(prev_time, parse_timestamp(rev.get("created", created)))
        prev_time = ps_time
        files = tuple(
            FileRecord.from_path(p)
            for p in sorted(rev.get("files") or {})
            if not p.startswith("/")  # /COMMIT_MSG, /MERGE_LIST
        )
        blobs = diffs.get(number)
        patchsets.append(
            PatchsetRecord(
                number=number,
                created_at=ps_time,
                commit_message=(rev.get("commit") or {}).get("message", ""),
                files=files,
                added_lines=blobs[0] if blobs else "",
                deleted_lines=blobs[1] if blobs else "",
                diff_available=blobs is not None,
            )
        )
    if not patchsets:
        patchsets.append(PatchsetRecord(1, created, diff_available=False))
    current = raw.get("current_revision")
    description = ""
    if current and current in (raw.get("revisions") or {}):
        description = (raw["revisions"][current].get("commit") or {}).get("message", "")
    if not description:
        description = patchsets[-1].commit_message
    comments = tuple(
        CommentRecord(_account(m.get("author")), parse_timestamp(m["date"]), m["message"])
        for m in raw.get("messages") or ()
        if m.get("message")
    )
    reviewers = frozenset(
        _account(r) for r in (raw.get("reviewers") or {}).get("REVIEWER", ()) if _account(r)
    )
    return ChangeRecord(
        change_number=int(raw["_number"]),
        project=raw["project"],
        owner_id=_account(raw.get("owner")),
        status=_STATUS.get(raw.get("status", ""), raw.get("status", "").lower()),
        created_at=created,
        subject=raw.get("subject", ""),
        description=description,
        insertions=int(raw.get("insertions", 0)),
        deletions=int(raw.get("deletions", 0)),
        patchsets=tuple(patchsets),
        comments=comments,
        reviewer_ids=reviewers,
        change_id=raw.get("change_id", ""),
        branch=raw.get("branch", ""),
    )


class RateLimiter:
    def __init__(self, min_interval: float, sleep: Callable[[float], None] = time.sleep):
        self.min_interval = min_interval
        self._sleep = sleep
        self._lock = threading.Lock()
        self._last = 0.0

    def wait(self):
        if self.min_interval <= 0:
            return
        with self._lock:
            delay = self._last + self.min_interval - time.monotonic()
            if delay > 0:
                self._sleep(delay)
            self._last = time.monotonic()


class GerritClient:
    """Anonymous (or basic-auth) client for the ``/changes/`` query API."""

    def __init__(self, endpoint: str, session=None, *, auth=None, max_retries: int = 5,
                 backoff: float = 1.0, max_backoff: float = 60.0, min_interval: float = 0.0,
                 sleep: Callable[[float], None] = time.sleep, timeout: float = 60.0):
        self.endpoint = endpoint.rstrip("/") + "/"
        self.session = session or requests.Session()
        self.auth = auth
        self.max_retries = max_retries
        self.backoff = backoff
        self.max_backoff = max_backoff
        self.timeout = timeout
        self._sleep = sleep
        self._limiter = RateLimiter(min_interval, sleep)
        self.requests_made = 0

    def get_json(self, path: str, params=None):
        prefix = "a/" if self.auth else ""
        url = self.endpoint + prefix + path
        delay = self.backoff
        last_exc = None
        for attempt in range(self.max_retries + 1):
            self._limiter.wait()
            self.requests_made += 1
            try:
                resp = self.session.get(url, params=params, auth=self.auth, timeout=self.timeout)
                resp.raise_for_status()
                return json.loads(strip_xssi(resp.text))
            except (requests.RequestException, OSError) as exc:
                last_exc = exc
                if attempt == self.max_retries:
                    break
                log.warning("request %s failed (%s); retry %d in %.1fs",
                            url, exc, attempt + 1, delay)
                self._sleep(delay)
                delay = min(delay * 2, self.max_backoff)
        raise FetchError(f"GET {url} failed after {self.max_retries + 1} attempts: {last_exc}")

    def query_page(self, query: str, start: int, batch_size: int,
                   options=DEFAULT_OPTIONS) -> list[dict]:
        params = [("q", query), ("n", batch_size), ("S", start)]
        params += [("o", o) for o in options]
        page = self.get_json("changes/", params=params)
        if not isinstance(page, list):
            raise FetchError(f"unexpected response type {type(page).__name__}")
        return page

    def file_diff(self, change_number: int, revision: str, path: str) -> dict:
        return self.get_json(
            f"changes/{change_number}/revisions/{revision}/files/{quote(path, safe='')}/diff"
        )

    def first_patchset_diffs(self, raw: dict) -> dict:
        """Fetch the patchset-1 diff blobs; empty dict if any file fails."""
        revisions = raw.get("revisions") or {}
        for sha, rev in revisions.items():
            if int(rev.get("_number", 0)) != 1:
                continue
            added, deleted = [], []
            try:
                for path in sorted(rev.get("files") or {}):
                    if path.startswith("/"):
                        continue
                    a, d = _diff_blobs(self.file_diff(int(raw["_number"]), sha, path))
                    added.append(a)
                    deleted.append(d)
            except FetchError as exc:
                log.warning("change %s: diff unavailable (%s)", raw.get("_number"), exc)
                return {}
            return {1: ("\n".join(x for x in added if x), "\n".join(x for x in deleted if x))}
        return {}


def fetch_changes(endpoint: str, query: str, batch_size: int = MAX_BATCH, *,
                  client: GerritClient | None = None, start: int = 0,
                  concurrency: int = 1, with_diffs: bool = False,
                  on_batch: Callable[[int, list[ChangeRecord]], None] | None = None,
                  ) -> Iterator[ChangeRecord]:
    """Yield every change matching ``query``, paging ``batch_size`` at a time.

    ``on_batch(next_start, records)`` is called once per page after its
    records are yielded, in page order; :func:`mine_to_file` uses it to persist
    the cursor. With ``concurrency > 1`` pages are requested ahead in parallel,
    which may issue a few requests past the end of the result set.
    """
    if not 1 <= batch_size <= MAX_BATCH:
        raise ValueError(f"batch_size must be in [1, {MAX_BATCH}]")
    client = client or GerritClient(endpoint)
    seen: set[int] = set()

    def convert(page):
        out = []
        for raw in page:
            number = raw.get("_number")
            try:
                diffs = client.first_patchset_diffs(raw) if with_diffs else None
                rec = normalize_change(raw, diffs)
            except (CorpusError, KeyError, TypeError, ValueError) as exc:
                log.warning("skipping malformed change %s: %s", number, exc)
                continue
            if rec.change_number in seen:
                continue
            seen.add(rec.change_number)
            out.append(rec)
        return out

    offset = start
    if concurrency <= 1:
        while True:
            page = client.query_page(query, offset, batch_size)
            more = bool(page) and bool(page[-1].get("_more_changes"))
            offset += len(page)
            records = convert(page)
            yield from records
            if on_batch:
                on_batch(offset, records)
            if not more:
                return
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        while True:
            offsets = [offset + i * batch_size for i in range(concurrency)]
            futures = [pool.submit(client.query_page, query, o, batch_size) for o in offsets]
            for fut in futures:
                page = fut.result()
                more = bool(page) and bool(page[-1].get("_more_changes"))
                offset += len(page)
                records = convert(page)
                yield from records
                if on_batch:
                    on_batch(offset, records)
                if not more:
                    for rest in futures:
                        rest.cancel()
                    return


def _write_cursor(path: Path, state: dict) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(state, sort_keys=True), encoding="utf-8")
    os.replace(tmp, path)


def mine_to_file(endpoint: str, query: str, out_path, *, batch_size: int = MAX_BATCH,
                 cursor_path=None, client: GerritClient | None = None,
                 concurrency: int = 1, with_diffs: bool = False) -> int:
    """Download into an NDJSON corpus file, resuming from a persisted cursor.

    Each page is appended and fsynced before the cursor advances, so a crash
    loses at most the page in flight.
    """
    out_path = Path(out_path)
    cursor_path = Path(cursor_path) if cursor_path else out_path.with_name(out_path.name + ".cursor")
    start = 0
    if cursor_path.exists():
        state = json.loads(cursor_path.read_text(encoding="utf-8"))
        if state.get("query") == query and state.get("endpoint") == endpoint:
            start = int(state["start"])
            log.info("resuming %r at offset %d", query, start)
    existing: set[int] = set()
    if start and out_path.exists():
        # a crash between append and cursor write leaves a page on disk twice otherwise
        with open(out_path, encoding="utf-8") as fh:
            existing = {json.loads(line)["change_number"] for line in fh if line.strip()}
    total = 0

    def persist(next_start, records):
        nonlocal total
        total += append_changes([r for r in records if r.change_number not in existing], out_path)
        _write_cursor(cursor_path, {"endpoint": endpoint, "query": query, "start": next_start})

    for _ in fetch_changes(endpoint, query, batch_size, client=client, start=start,
                           concurrency=concurrency, with_diffs=with_diffs, on_batch=persist):
        pass
    return total
