"""Synthetic code-review corpora with planted cross-change dependencies.

The generator plants three correlated signals behind every declared
dependency: dependency-prone owners, topic tokens and files shared between
the two changes, and co-changing partner projects. Change sizes carry no
signal, so ``deletions`` serves as a known noise feature.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from .corpus import ChangeRecord, CommentRecord, Corpus, FileRecord, PatchsetRecord

DOMINANT_FEATURE = "pctg_dep_chan_owner"
NOISE_FEATURE = "deletions"

_VERBS = ("Add", "Fix", "Refactor", "Update", "Implement", "Remove", "Support", "Document",
          "Move", "Test")
_FILLER = ("the", "a", "for", "when", "with", "in", "to", "of", "and", "this", "that", "on")
_EXT = (".py", ".py", ".py", ".yaml", ".rst", ".sh", ".json", ".cfg")
_GENERIC = ("import", "return", "self", "value", "result", "config", "logger", "args",
            "kwargs", "data", "item", "key", "none", "true", "false", "raise")


@dataclass
class SyntheticCorpus:
    corpus: Corpus
    planted: list[tuple[int, int]]  # (source, target)
    prone_owners: frozenset[str]
    params: dict = field(default_factory=dict)


def _hex(rng, n=40) -> str:
    return "".join("0123456789abcdef"[i] for i in rng.integers(0, 16, size=n))


class _Generator:
    def __init__(self, n_changes, n_projects, n_owners, days, propensity_shape, p_prone,
                 p_other, window_days, seed):
        self.rng = np.random.default_rng(seed)
        self.n_changes = n_changes
        self.p_integrator = 0.2
        self.window = timedelta(days=window_days)
        self.start = datetime(2018, 1, 1, tzinfo=timezone.utc)
        self.days = days
        rng = self.rng

        self.vocab = [f"w{i:04d}{chr(97 + i % 26)}" for i in range(4000)]
        self.projects = [f"openstack/proj-{i:02d}" for i in range(n_projects)]
        self.partner = {p: self.projects[i ^ 1] for i, p in enumerate(self.projects)
                        if (i ^ 1) < n_projects}
        self.project_words = {p: list(rng.choice(self.vocab, size=25, replace=False))
                              for p in self.projects}
        self.project_files = {}
        for p in self.projects:
            dirs = [f"{p.split('/')[1].replace('-', '_')}/{w}" for w in
                    rng.choice(self.project_words[p], size=5, replace=False)]
            self.project_files[p] = [
                f"{dirs[int(rng.integers(len(dirs)))]}/{rng.choice(self.vocab)}"
                f"{_EXT[int(rng.integers(len(_EXT)))]}" for _ in range(40)]

        self.owners = [f"dev{i:03d}" for i in range(n_owners)]
        weights = 1.0 / np.arange(1, n_owners + 1) ** 0.7
        self.owner_weight = rng.permutation(weights / weights.sum())
        # propensity is continuous, so more past dependencies keep meaning more
        # risk; the most active decile stays low, so the share of dependent
        # changes is not a proxy for raw activity counts
        by_activity = [self.owners[j] for j in np.argsort(-self.owner_weight, kind="stable")]
        busy = set(by_activity[: n_owners // 10])
        a, b = propensity_shape
        self.propensity = {
            o: (p_other * rng.uniform(0.0, 2.0) if o in busy else p_prone * rng.beta(a, b))
            for o in self.owners}
        self.prone = frozenset(o for o, p in self.propensity.items() if p >= 0.25)
        # owners who link across projects, independent of proneness
        self.integrators = frozenset(
            rng.choice(self.owners, size=int(round(0.15 * n_owners)), replace=False).tolist())
        self.owner_projects = {}
        for o in self.owners:
            home = self.projects[int(rng.integers(n_projects))]
            extra = [self.partner.get(home, home)]
            extra += [self.projects[int(j)] for j in rng.integers(n_projects, size=int(rng.integers(1, 4)))]
            self.owner_projects[o] = [home] + extra
        self.reviewers = [f"rev{i:03d}" for i in range(60)]

    def _sentence(self, words, n) -> str:
        rng = self.rng
        out = []
        for _ in range(n):
            out.append(words[int(rng.integers(len(words)))] if rng.random() < 0.6
                       else _FILLER[int(rng.integers(len(_FILLER)))])
        return " ".join(out)

    def _code(self, words, n_lines) -> str:
        rng = self.rng
        lines = []
        for _ in range(n_lines):
            a = words[int(rng.integers(len(words)))]
            b = _GENERIC[int(rng.integers(len(_GENERIC)))]
            lines.append(f"    {a} = {b}({words[int(rng.integers(len(words)))]})")
        return "\n".join(lines)

    def run(self) -> SyntheticCorpus:
        rng = self.rng
        offsets = np.sort(rng.uniform(0, self.days * 86400.0, size=self.n_changes))
        owners = rng.choice(self.owners, size=self.n_changes, p=self.owner_weight)

        recent_owner: dict[str, deque] = defaultdict(deque)
        recent_prone_proj: dict[str, deque] = defaultdict(deque)
        recent_proj: dict[str, deque] = defaultdict(deque)
        info: dict[int, dict] = {}
        planted: list[tuple[int, int]] = []
        extra_patchsets: dict[int, list] = defaultdict(list)

        for i in range(self.n_changes):
            number = 100000 + i
            created = self.start + timedelta(seconds=float(offsets[i]))
            owner = str(owners[i])
            project = self.owner_projects[owner][int(rng.integers(len(self.owner_projects[owner])))]
            partner = self.partner.get(project, project)
            for dq in (recent_owner[owner], recent_prone_proj[project],
                       recent_prone_proj[partner], recent_proj[partner]):
                while dq and created - info[dq[0]]["created"] > self.window:
                    dq.popleft()

            p_dep = self.propensity[owner]
            if owner in self.integrators:
                p_dep = max(p_dep, self.p_integrator)
            sources = []
            if rng.random() < p_dep:
                n_src = 2 if rng.random() < 0.15 else 1
                partner = self.partner.get(project, project)
                for _ in range(n_src):
                    same_owner = [n for n in recent_owner[owner] if info[n]["project"] == project]
                    if owner in self.integrators and rng.random() < 0.7:
                        # cross-project link into the partner project
                        prefs = [recent_proj[partner], recent_owner[owner]]
                    elif rng.random() < 0.6:
                        prefs = [same_owner, recent_owner[owner], recent_prone_proj[project]]
                    elif rng.random() < 0.5:
                        prefs = [recent_prone_proj[project], same_owner]
                    else:
                        prefs = [recent_prone_proj[partner], recent_prone_proj[project]]
                    for pool in prefs:
                        pool = [n for n in pool if n not in sources and
                                created - info[n]["created"] <= timedelta(days=20)]
                        if pool:
                            sources.append(pool[int(rng.integers(len(pool)))])
                            break

            pwords = self.project_words[project]
            topic = list(rng.choice(self.vocab, size=4, replace=False))
            files = list(rng.choice(self.project_files[project],
                                    size=int(rng.integers(1, 5)), replace=False))
            for s in sources:
                src = info[s]
                topic = src["topic"][:3] + topic[:2]
                files += [f for f in src["files"][:2] if f not in files]
            words = topic * 3 + pwords[:8]
            verb = _VERBS[int(rng.integers(len(_VERBS)))]
            subject = " ".join([verb] + topic[:int(rng.integers(1, 4))]
                               + list(rng.choice(_FILLER, size=int(rng.integers(0, 4))))
                               + [project.split("/")[1]])
            body = "\n".join(self._sentence(words, int(rng.integers(8, 25)))
                             for _ in range(int(rng.integers(1, 4))))
            n_ins = int(min(400, max(1, rng.lognormal(2.6, 0.9))))
            n_del = int(rng.poisson(4))
            added = self._code(words, n_ins)
            deleted = self._code(list(_GENERIC), n_del)

            change_id = "I" + _hex(rng)
            tags, late_tags = [], []
            for s in sources:
                ref_kind = rng.random()
                src = info[s]
                if ref_kind < 0.5:
                    ref = src["change_id"]
                elif ref_kind < 0.8:
                    ref = f"https://review.opendev.org/c/{src['project']}/+/{s}"
                else:
                    ref = str(s)
                mode = rng.random()
                if mode < 0.12:
                    # the source announces it instead, in a later patchset
                    extra_patchsets[s].append((created + timedelta(hours=float(rng.uniform(1, 48))),
                                               f"Needed-By: {change_id}"))
                elif mode < 0.4:
                    late_tags.append(f"Depends-On: {ref}")
                else:
                    tags.append(f"Depends-On: {ref}")
                planted.append((s, number))

            footer = tags + [f"Change-Id: {change_id}"]
            message = f"{subject}\n\n{body}\n\n" + "\n".join(footer)
            patchsets = [dict(number=1, created_at=created, commit_message=message)]
            t = created
            failed = False
            comments = []
            if late_tags or rng.random() < 0.4:
                t = t + timedelta(hours=float(rng.uniform(0.5, 72)))
                if rng.random() < 0.5:
                    failed = True
                    comments.append(CommentRecord(
                        "zuul", t - timedelta(minutes=30),
                        "Build failed (check pipeline). For information on how to proceed, "
                        "see the CI documentation."))
                late_msg = f"{subject}\n\n{body}\n\n" + "\n".join(
                    tags + late_tags + [f"Change-Id: {change_id}"])
                patchsets.append(dict(number=2, created_at=t, commit_message=late_msg))
            for _ in range(int(rng.integers(0, 4))):
                t2 = created + timedelta(hours=float(rng.uniform(0.1, 96)))
                comments.append(CommentRecord(
                    self.reviewers[int(rng.integers(len(self.reviewers)))], t2,
                    self._sentence(list(_FILLER) + topic, 8)))
            status = rng.choice(["merged", "abandoned", "open"], p=[0.85, 0.12, 0.03])

            info[number] = dict(
                created=created, owner=owner, project=project, topic=topic, files=files,
                change_id=change_id, subject=subject, body=body, message=message,
                patchsets=patchsets, added=added, deleted=deleted, n_ins=n_ins, n_del=n_del,
                comments=comments, status=str(status), failed=failed)
            recent_owner[owner].append(number)
            recent_proj[project].append(number)
            if owner in self.prone:
                recent_prone_proj[project].append(number)

        changes = []
        for number, d in info.items():
            ps_dicts = list(d["patchsets"])
            for when, tag in sorted(extra_patchsets.get(number, [])):
                last = ps_dicts[-1]
                when = max(when, last["created_at"])
                lines = last["commit_message"].split("\n")
                msg = "\n".join(lines[:-1] + [tag, lines[-1]])
                ps_dicts.append(dict(number=len(ps_dicts) + 1, created_at=when,
                                     commit_message=msg))
            files = tuple(FileRecord.from_path(f) for f in d["files"])
            patchsets = tuple(
                PatchsetRecord(number=p["number"], created_at=p["created_at"],
                               commit_message=p["commit_message"], files=files,
                               added_lines=d["added"], deleted_lines=d["deleted"])
                for p in ps_dicts)
            reviewers = frozenset(c.author_id for c in d["comments"] if c.author_id != "zuul")
            changes.append(ChangeRecord(
                change_number=number, project=d["project"], owner_id=d["owner"],
                status=d["status"], created_at=d["created"], subject=d["subject"],
                description=ps_dicts[-1]["commit_message"], insertions=d["n_ins"],
                deletions=d["n_del"], patchsets=patchsets,
                comments=tuple(sorted(d["comments"], key=lambda c: c.created_at)),
                reviewer_ids=reviewers, change_id=d["change_id"], branch="master"))
        return SyntheticCorpus(Corpus(changes), planted, self.prone)


def generate_corpus(n_changes: int = 5000, seed: int = 0, n_projects: int = 40,
                    n_owners: int = 60, days: int = 730, propensity_shape: tuple = (0.3, 0.6),
                    p_prone: float = 0.7, p_other: float = 0.03,
                    window_days: int = 30) -> SyntheticCorpus:
    """Generate a corpus whose declared dependencies follow the planted signals."""
    params = dict(n_changes=n_changes, seed=seed, n_projects=n_projects, n_owners=n_owners,
                  days=days, propensity_shape=tuple(propensity_shape), p_prone=p_prone,
                  p_other=p_other, window_days=window_days)
    out = _Generator(n_changes, n_projects, n_owners, days, propensity_shape, p_prone,
                     p_other, window_days, seed).run()
    out.params = params
    return out
