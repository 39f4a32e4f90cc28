from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest

from changedeps.corpus import ChangeRecord, CommentRecord, FileRecord, PatchsetRecord

T0 = datetime(2020, 1, 1, tzinfo=timezone.utc)


def at(hours: float = 0.0) -> datetime:
    return T0 + timedelta(hours=hours)


def make_change(number: int, hours: float = 0.0, *, project: str = "openstack/nova",
                owner: str = "alice", status: str = "merged", subject: str = "Fix things",
                description: str | None = None, files=("nova/api.py",), insertions: int = 10,
                deletions: int = 2, later: tuple = (), comments: tuple = (),
                change_id: str | None = None, added: str = "", deleted: str = "",
                reviewers=()) -> ChangeRecord:
    """A change with one patchset at ``hours``; ``later`` adds (hours, message) patchsets."""
    created = at(hours)
    description = subject if description is None else description
    frs = tuple(FileRecord.from_path(p) for p in files)
    patchsets = [PatchsetRecord(1, created, description, frs, added, deleted)]
    for i, (h, message) in enumerate(later, start=2):
        patchsets.append(PatchsetRecord(i, at(h), message, frs))
    final = patchsets[-1].commit_message
    return ChangeRecord(
        change_number=number, project=project, owner_id=owner, status=status,
        created_at=created, subject=subject, description=final,
        insertions=insertions, deletions=deletions, patchsets=tuple(patchsets),
        comments=tuple(CommentRecord(a, at(h), m) for a, h, m in comments),
        reviewer_ids=frozenset(reviewers),
        change_id=change_id or f"I{number:040x}", branch="master")


@pytest.fixture
def change_factory():
    return make_change


# --- acceptance summary ----------------------------------------------------

_ACCEPTANCE: dict[int, tuple[str, str, float]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    # a broken fixture fails the criterion too, not only a failing body
    if marker is None or not (rep.when == "call" or (rep.when == "setup" and not rep.passed)):
        return
    number, title = marker.args
    status = "PASS" if rep.passed else "SKIP" if rep.skipped else "FAIL"
    _ACCEPTANCE[number] = (title, status, rep.duration)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status, seconds = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d} {status}  {title} ({seconds:.1f} s)")
