"""Prevalence, timing and effort statistics over dependency edges."""

from __future__ import annotations

import csv
import json
import logging
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Corpus
from .deps import DependencyEdge, dependent_changes
from .stats import cliffs_delta, cliffs_magnitude, mann_whitney_u

log = logging.getLogger(__name__)

DEFAULT_FAILURE_KEYWORD = "Build failed"


def _hours(delta) -> float:
    return delta.total_seconds() / 3600.0


def _stats(values: Sequence[float]) -> tuple[float, float, float]:
    return (min(values), statistics.median(values), max(values))


@dataclass(frozen=True)
class LagRecord:
    edge: DependencyEdge
    identification_lag_hours: float
    inter_change_lag_hours: float
    changes_between: int
    same_developer: bool
    declared_after_build_failure: bool


def merged_only(edges: Iterable[DependencyEdge], corpus: Corpus) -> list[DependencyEdge]:
    out = []
    for e in edges:
        s, t = corpus.get(e.source_change), corpus.get(e.target_change)
        if s is not None and t is not None and s.status == "merged" and t.status == "merged":
            out.append(e)
    return out


def prevalence_by_year(corpus: Corpus, edges: Iterable[DependencyEdge]) -> dict[int, float]:
    """Fraction of changes created each year that take part in an edge."""
    dependent = dependent_changes(edges)
    totals: Counter = Counter()
    hits: Counter = Counter()
    for c in corpus:
        year = c.created_at.year
        totals[year] += 1
        if c.change_number in dependent:
            hits[year] += 1
    return {year: hits[year] / totals[year] for year in sorted(totals)}


def dependency_degree(edges: Sequence[DependencyEdge]):
    """``(out_stats, in_stats)`` as (min, median, max).

    Out-degree is the number of sources per target (changes it depends on);
    in-degree the number of targets per source (changes depending on it).
    """
    if not edges:
        raise ValueError("no edges")
    sources_of: dict[int, set[int]] = defaultdict(set)
    targets_of: dict[int, set[int]] = defaultdict(set)
    for e in edges:
        sources_of[e.target_change].add(e.source_change)
        targets_of[e.source_change].add(e.target_change)
    return (_stats([len(v) for v in sources_of.values()]),
            _stats([len(v) for v in targets_of.values()]))


def identification_lag(edge: DependencyEdge, corpus: Corpus) -> float:
    """Hours from the later endpoint's creation to the declaring patchset."""
    later = max(corpus[edge.source_change].created_at, corpus[edge.target_change].created_at)
    return max(0.0, _hours(edge.declared_at - later))


def identified_in_review_fraction(edges: Sequence[DependencyEdge], per: str = "edge") -> float:
    """Share of dependencies first declared after the first patchset.

    ``per="edge"`` counts edges; ``per="change"`` counts dependent changes,
    each judged by the earliest declaration touching it.
    """
    if not edges:
        return 0.0
    if per == "edge":
        return sum(e.declared_in_patchset >= 2 for e in edges) / len(edges)
    if per != "change":
        raise ValueError(f"unknown denominator {per!r}")
    earliest: dict[int, DependencyEdge] = {}
    for e in edges:
        for c in (e.source_change, e.target_change):
            cur = earliest.get(c)
            if cur is None or e.declared_at < cur.declared_at:
                earliest[c] = e
    return sum(e.declared_in_patchset >= 2 for e in earliest.values()) / len(earliest)


def inter_change_lag_and_between(edge: DependencyEdge, corpus: Corpus,
                                 per_project: bool = False) -> tuple[float, int]:
    """Creation gap in hours and the number of changes created strictly inside it.

    With ``per_project`` only changes of the target's project are counted.
    """
    s, t = corpus[edge.source_change], corpus[edge.target_change]
    hours = abs(_hours(t.created_at - s.created_at))
    between = corpus.count_created_between(
        s.created_at, t.created_at, project=t.project if per_project else None)
    return hours, between


def _normalize_keyword(text: str) -> str:
    return text.replace("_", " ").lower()


def first_failure(change, keyword: str = DEFAULT_FAILURE_KEYWORD,
                  case_insensitive: bool = True) -> datetime | None:
    """Timestamp of the first comment mentioning a build failure, if any."""
    key = _normalize_keyword(keyword) if case_insensitive else keyword
    times = [
        c.created_at for c in change.comments
        if key in (_normalize_keyword(c.message) if case_insensitive else c.message)
    ]
    return min(times) if times else None


def build_failure_analysis(edges: Sequence[DependencyEdge], corpus: Corpus,
                           keyword: str = DEFAULT_FAILURE_KEYWORD,
                           case_insensitive: bool = True) -> tuple[float, float]:
    """``(fraction_with_failure, fraction_declared_after_failure)``.

    The first fraction is over dependent changes; the second over those with a
    failure, and asks whether the change's earliest dependency declaration
    came after its first failure comment.
    """
    declared: dict[int, datetime] = {}
    for e in edges:
        for c in (e.source_change, e.target_change):
            if c not in declared or e.declared_at < declared[c]:
                declared[c] = e.declared_at
    changes = [n for n in declared if n in corpus]
    if not changes:
        return 0.0, 0.0
    with_failure = after = 0
    for n in changes:
        fail = first_failure(corpus[n], keyword, case_insensitive)
        if fail is None:
            continue
        with_failure += 1
        if declared[n] > fail:
            after += 1
    return with_failure / len(changes), (after / with_failure if with_failure else 0.0)


def lag_records(edges: Iterable[DependencyEdge], corpus: Corpus,
                keyword: str = DEFAULT_FAILURE_KEYWORD, per_project: bool = False,
                report: list | None = None) -> list[LagRecord]:
    out = []
    for e in edges:
        if e.source_change not in corpus or e.target_change not in corpus:
            if report is not None:
                report.append({"source": e.source_change, "target": e.target_change,
                               "reason": "endpoint missing"})
            continue
        hours, between = inter_change_lag_and_between(e, corpus, per_project)
        declaring = corpus[e.declaring_change]
        fail = first_failure(declaring, keyword)
        out.append(LagRecord(
            edge=e,
            identification_lag_hours=identification_lag(e, corpus),
            inter_change_lag_hours=hours,
            changes_between=between,
            same_developer=corpus[e.source_change].owner_id == corpus[e.target_change].owner_id,
            declared_after_build_failure=fail is not None and e.declared_at > fail,
        ))
    return out


def developer_comparison(records: Sequence[LagRecord]) -> dict:
    """Inter-change lag of same- vs different-developer pairs."""
    same = [r.inter_change_lag_hours for r in records if r.same_developer]
    diff = [r.inter_change_lag_hours for r in records if not r.same_developer]
    out = {"n_same": len(same), "n_different": len(diff)}
    if same:
        out["median_same_hours"] = statistics.median(same)
        out["same_over_5_days"] = sum(h > 120 for h in same) / len(same)
    if diff:
        out["median_different_hours"] = statistics.median(diff)
    if same and diff:
        u, p = mann_whitney_u(diff, same)
        delta = cliffs_delta(diff, same)
        out.update({"mann_whitney_u": u, "p_value": p, "cliffs_delta": delta,
                    "cliffs_magnitude": cliffs_magnitude(delta)})
    return out


def study_report(corpus: Corpus, edges: Sequence[DependencyEdge],
                 keyword: str = DEFAULT_FAILURE_KEYWORD, per_project: bool = False) -> dict:
    merged = Corpus(c for c in corpus if c.status == "merged")
    merged_edges = merged_only(edges, corpus)
    records = lag_records(merged_edges, corpus, keyword, per_project)
    report: dict = {
        "n_changes": len(corpus),
        "n_merged": len(merged),
        "n_edges": len(edges),
        "n_dependent_changes": len(dependent_changes(edges)),
        "tag_kinds": dict(sorted(Counter(e.tag_kind for e in edges).items())),
        "prevalence_by_year": {str(y): f for y, f in prevalence_by_year(merged, merged_edges).items()},
    }
    if edges:
        out_deg, in_deg = dependency_degree(edges)
        report["depends_on_degree"] = dict(zip(("min", "median", "max"), out_deg))
        report["depended_upon_degree"] = dict(zip(("min", "median", "max"), in_deg))
    report["identified_in_review"] = {
        "per_edge": identified_in_review_fraction(merged_edges, "edge"),
        "per_change": identified_in_review_fraction(merged_edges, "change"),
    }
    if records:
        for name, attr in (("identification_lag_hours", "identification_lag_hours"),
                           ("inter_change_lag_hours", "inter_change_lag_hours"),
                           ("changes_between", "changes_between")):
            report[name] = dict(zip(("min", "median", "max"),
                                    _stats([getattr(r, attr) for r in records])))
        report["developer_comparison"] = developer_comparison(records)
    with_fail, after = build_failure_analysis(merged_edges, corpus, keyword)
    report["build_failure"] = {"fraction_with_failure": with_fail,
                               "fraction_declared_after_failure": after}
    report["_records"] = records
    return report


def write_study(report: dict, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = report.get("_records", [])
    public = {k: v for k, v in report.items() if not k.startswith("_")}
    (out / "study.json").write_text(json.dumps(public, indent=2, sort_keys=True) + "\n",
                                    encoding="utf-8")
    with open(out / "prevalence_by_year.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "fraction"])
        for year, frac in public["prevalence_by_year"].items():
            w.writerow([year, repr(frac)])
    with open(out / "lags.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source_change", "target_change", "tag_kind", "declared_in_patchset",
                    "identification_lag_hours", "inter_change_lag_hours", "changes_between",
                    "same_developer", "declared_after_build_failure"])
        for r in records:
            w.writerow([r.edge.source_change, r.edge.target_change, r.edge.tag_kind,
                        r.edge.declared_in_patchset, repr(r.identification_lag_hours),
                        repr(r.inter_change_lag_hours), r.changes_between,
                        int(r.same_developer), int(r.declared_after_build_failure)])
    with open(out / "degree_stats.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["degree", "min", "median", "max"])
        for key in ("depends_on_degree", "depended_upon_degree"):
            if key in public:
                d = public[key]
                w.writerow([key, d["min"], d["median"], d["max"]])
