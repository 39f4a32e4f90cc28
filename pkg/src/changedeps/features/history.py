"""History-only change features.

Every quantity is answered by a :class:`Timeline` query at an instant ``t``
and counts only events strictly before ``t``: change creations, and the
moment a dependency becomes known (the later of its declaration and both
endpoint creations). Appending future changes cannot alter any answer.
"""

from __future__ import annotations

import posixpath
import statistics
from bisect import bisect_left, insort
from collections import defaultdict
from datetime import datetime, timedelta

import numpy as np

from ..corpus import ChangeRecord, Corpus
from ..deps import DependencyEdge
from .catalog import CHANGE_FEATURES
from .purpose import classify_change_purpose
from .text import change_texts

LAST_MONTH = timedelta(days=30)


def _count(times: list, t) -> int:
    return bisect_left(times, t) if times else 0


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def _line_count(blob: str) -> int:
    return len(blob.splitlines()) if blob else 0


class Timeline:
    """Sorted event lists over a corpus and its edges, queried by instant."""

    def __init__(self, corpus: Corpus, edges: list[DependencyEdge]):
        self.corpus = corpus
        self.created_owner: dict[str, list] = defaultdict(list)
        self.created_owner_proj: dict[tuple, list] = defaultdict(list)
        self.owner_project_first: dict[str, list] = defaultdict(list)
        self.project_first: dict[str, datetime] = {}
        self.file_changes: dict[str, list] = defaultdict(list)  # (created, number)
        self.file_dev_first: dict[str, list] = defaultdict(list)

        owner_proj_seen: set = set()
        file_dev_seen: set = set()
        for c in corpus.by_time:
            t = c.created_at
            self.created_owner[c.owner_id].append(t)
            self.created_owner_proj[c.owner_id, c.project].append(t)
            if (c.owner_id, c.project) not in owner_proj_seen:
                owner_proj_seen.add((c.owner_id, c.project))
                self.owner_project_first[c.owner_id].append(t)
            self.project_first.setdefault(c.project, t)
            for f in {f.path for f in c.first_patchset.files}:
                self.file_changes[f].append((t, c.change_number))
                if (f, c.owner_id) not in file_dev_seen:
                    file_dev_seen.add((f, c.owner_id))
                    self.file_dev_first[f].append(t)

        self.dep_known: dict[int, datetime] = {}
        cross_known: dict[int, datetime] = {}
        within_known: dict[int, datetime] = {}
        self.project_links: dict[str, list] = defaultdict(list)  # (known, other project)
        self.project_pair_known: dict[tuple, list] = defaultdict(list)
        usable = []
        for e in edges:
            s, tg = corpus.get(e.source_change), corpus.get(e.target_change)
            if s is None or tg is None:
                continue
            usable.append((max(e.declared_at, s.created_at, tg.created_at), s, tg))
        usable.sort(key=lambda x: (x[0], x[1].change_number, x[2].change_number))
        for known, s, tg in usable:
            for c, other in ((s, tg), (tg, s)):
                n = c.change_number
                self.dep_known.setdefault(n, known)
                target = cross_known if c.project != other.project else within_known
                target.setdefault(n, known)
            if s.project != tg.project:
                self.project_links[s.project].append((known, tg.project))
                self.project_links[tg.project].append((known, s.project))
            self.project_pair_known[tuple(sorted((s.project, tg.project)))].append(known)

        self.dep_owner: dict[str, list] = defaultdict(list)
        self.dep_owner_proj: dict[tuple, list] = defaultdict(list)
        self.dep_project: dict[str, list] = defaultdict(list)
        self.dep_file: dict[str, list] = defaultdict(list)
        for n, known in self.dep_known.items():
            c = corpus[n]
            insort(self.dep_owner[c.owner_id], known)
            insort(self.dep_owner_proj[c.owner_id, c.project], known)
            insort(self.dep_project[c.project], known)
            for f in {f.path for f in c.first_patchset.files}:
                insort(self.dep_file[f], known)
        self.cross_owner_proj: dict[tuple, list] = defaultdict(list)
        self.cross_project: dict[str, list] = defaultdict(list)  # (known, created)
        for n, known in cross_known.items():
            c = corpus[n]
            insort(self.cross_owner_proj[c.owner_id, c.project], known)
            insort(self.cross_project[c.project], (known, c.created_at))
        self.within_owner_proj: dict[tuple, list] = defaultdict(list)
        self.within_project: dict[str, list] = defaultdict(list)
        self.within_all: list = sorted(within_known.values())
        for n, known in within_known.items():
            c = corpus[n]
            insort(self.within_owner_proj[c.owner_id, c.project], known)
            insort(self.within_project[c.project], known)

    # --- queries (all strictly before t) ---------------------------------

    def owner_changes(self, owner, t) -> int:
        return _count(self.created_owner.get(owner, []), t)

    def owner_project_changes(self, owner, project, t) -> int:
        return _count(self.created_owner_proj.get((owner, project), []), t)

    def owner_dependent(self, owner, t) -> int:
        return _count(self.dep_owner.get(owner, []), t)

    def owner_project_dependent(self, owner, project, t) -> int:
        return _count(self.dep_owner_proj.get((owner, project), []), t)

    def project_co_changes(self, project_a, project_b, t) -> int:
        return _count(self.project_pair_known.get(tuple(sorted((project_a, project_b))), []), t)

    def change_features(self, change: ChangeRecord) -> dict[str, float]:
        t = change.created_at
        o, p = change.owner_id, change.project
        ps = change.first_patchset
        texts = change_texts(change)
        f: dict[str, float] = {}

        if ps.diff_available:
            ins, dels = _line_count(ps.added_lines), _line_count(ps.deleted_lines)
        else:
            ins, dels = change.insertions, change.deletions
        paths = sorted({fr.path for fr in ps.files})
        f["insertions"] = ins
        f["deletions"] = dels
        f["code_churn"] = ins + dels
        f["num_directory_files"] = len({posixpath.dirname(x) for x in paths})
        f.update(classify_change_purpose(texts["message"]))

        n_owner = self.owner_changes(o, t)
        n_owner_proj = self.owner_project_changes(o, p, t)
        n_cross_owner = _count(self.cross_owner_proj.get((o, p), []), t)
        f["num_cro_pro_cha_owner"] = n_cross_owner
        f["num_wthn_pro_cha_owner"] = _count(self.within_owner_proj.get((o, p), []), t)
        f["num_whole_cha_owner"] = n_owner
        f["pctg_cro_pro_cha_owner"] = _ratio(n_cross_owner, n_owner_proj)
        f["num_pro_cont_owner"] = _count(self.owner_project_first.get(o, []), t)
        f["num_pro_cha_owner"] = n_owner_proj
        f["pctg_dep_chan_owner"] = _ratio(self.owner_dependent(o, t), n_owner)

        first = self.project_first.get(p)
        f["project_age"] = (t - first).total_seconds() / 86400.0 if first and first < t else 0.0
        month_ago = t - LAST_MONTH
        links = self.project_links.get(p, [])
        lo, hi = bisect_left(links, (month_ago,)), bisect_left(links, (t,))
        f["num_dep_proj_last_mth"] = len({other for _, other in links[lo:hi]})
        cross = self.cross_project.get(p, [])
        lo, hi = bisect_left(cross, (month_ago,)), bisect_left(cross, (t,))
        f["num_cro_pro_cha_lst_mth"] = sum(1 for _, created in cross[lo:hi] if created >= month_ago)
        n_cross = hi
        f["num_cro_pro_chan"] = n_cross
        f["num_wthn_pro_cha"] = _count(self.within_project.get(p, []), t)
        f["pctg_cro_pro_chan"] = _ratio(n_cross, _count(self.dep_project.get(p, []), t))
        f["num_whole_wthn_pro_cha"] = _count(self.within_all, t)

        touched: set[int] = set()
        devs, dep_counts = [], []
        for path in paths:
            hist = self.file_changes.get(path, [])
            touched.update(n for _, n in hist[: bisect_left(hist, (t,))])
            devs.append(_count(self.file_dev_first.get(path, []), t))
            dep_counts.append(_count(self.dep_file.get(path, []), t))
        f["num_file_changes"] = len(touched)
        f["num_file_types"] = len({fr.file_extension for fr in ps.files})
        f["num_dev_mod_files"] = float(statistics.median(devs)) if devs else 0.0
        f["avg_num_dev_mod_files"] = float(np.mean(devs)) if devs else 0.0
        f["pctg_mod_fil_dep_cha"] = _ratio(sum(1 for d in dep_counts if d > 0), len(dep_counts))
        f["min_mod_fil_dep_cha"] = min(dep_counts) if dep_counts else 0
        f["median_mod_fil_dep_cha"] = float(statistics.median(dep_counts)) if dep_counts else 0.0
        f["max_mod_fil_dep_cha"] = max(dep_counts) if dep_counts else 0

        f["subject_length"] = len(texts["subject"])
        f["description_length"] = len(texts["description"])
        f["subject_word_count"] = len(texts["subject"].split())
        f["description_word_count"] = len(texts["description"].split())
        return {name: float(f[name]) for name in CHANGE_FEATURES}


def compute_change_features(change: ChangeRecord, history: Corpus,
                            edges: list[DependencyEdge]) -> dict[str, float]:
    """The 36 change-level features of ``change`` at its creation time.

    ``history`` may contain later changes too; they are never consulted.
    """
    if change.change_number not in history:
        raise KeyError(f"change {change.change_number} is not in the corpus")
    return Timeline(history, edges).change_features(change)


def change_feature_matrix(corpus: Corpus, edges: list[DependencyEdge],
                          timeline: Timeline | None = None,
                          numbers=None) -> tuple[list[int], np.ndarray]:
    """Feature rows for ``numbers`` (default: every change, in time order)."""
    timeline = timeline or Timeline(corpus, edges)
    numbers = list(numbers) if numbers is not None else corpus.numbers
    rows = np.empty((len(numbers), len(CHANGE_FEATURES)), dtype=np.float64)
    for i, n in enumerate(numbers):
        feats = timeline.change_features(corpus[n])
        rows[i] = [feats[name] for name in CHANGE_FEATURES]
    return numbers, rows
