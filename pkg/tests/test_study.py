from __future__ import annotations

import statistics

import pytest

from changedeps.corpus import Corpus
from changedeps.deps import DEPENDS_ON, NEEDED_BY, DependencyEdge, build_edges
from changedeps.study import (
    build_failure_analysis,
    dependency_degree,
    identification_lag,
    identified_in_review_fraction,
    inter_change_lag_and_between,
    lag_records,
    merged_only,
    prevalence_by_year,
    study_report,
    write_study,
)
from conftest import at, make_change

# Fifty changes at irregular times. Each entry: number -> (hours, owner, project,
# tags declared in patchset 1, later patchsets as (hours, tags)).
SPEC = {
    500001: (0.0, "ann", "nova", [], []),
    500002: (1.25, "bob", "nova", ["Depends-On: 500001"], []),
    500003: (2.5, "ann", "cinder", [], [(9.75, ["Needed-By: 500007"])]),
    500004: (3.0, "cid", "nova", [], []),
    500005: (3.0, "dan", "neutron", ["Depends-On: 500004"], []),
    500006: (4.5, "ann", "nova", [], []),
    500007: (5.0, "bob", "cinder", [], [(12.5, ["Depends-On: 500003"])]),
    500008: (6.0, "eve", "nova", [], [(7.0, []), (30.0, ["Depends-On: 500006"])]),
    500009: (6.0, "eve", "nova", [], []),
    500010: (7.5, "cid", "swift", ["Needed-By: 500012", "Needed-By: 500013"], []),
}
_hours = 8.0
for _n in range(500011, 500051):
    SPEC[_n] = (_hours, ["ann", "bob", "cid", "dan", "eve"][_n % 5],
                ["nova", "cinder", "neutron", "swift"][_n % 4], [], [])
    _hours += 0.5 + (_n % 7) * 0.75
SPEC[500012] = (SPEC[500012][0], "cid", "swift", [], [])
SPEC[500013] = (SPEC[500013][0], "ann", "nova", [], [(SPEC[500013][0] + 2.0, [])])
SPEC[500020] = (SPEC[500020][0], "bob", "nova", ["Depends-On: 500002", "Depends-On: 500006"], [])
SPEC[500030] = (SPEC[500030][0], "dan", "neutron", [],
                [(SPEC[500030][0] + 7.5, ["Depends-On: 500020"])])
SPEC[500044] = (SPEC[500044][0], "eve", "swift", [], [(SPEC[500044][0] + 0.5, ["Depends-On: 500010"])])
ABANDONED = {500009, 500033}


def build_corpus() -> Corpus:
    changes = []
    for n, (h, owner, project, tags, later) in SPEC.items():
        desc = "Change %d\n\n%s" % (n, "\n".join(tags))
        msgs = []
        carried = list(tags)
        for lh, ltags in later:
            carried = carried + ltags
            msgs.append((lh, "Change %d\n\n%s" % (n, "\n".join(carried))))
        comments = ()
        if n in (500007, 500030):
            comments = (("zuul", h + 1.0, "Build failed (check pipeline)."),)
        changes.append(make_change(n, h, owner=owner, project="openstack/" + project,
                                   description=desc, later=tuple(msgs), comments=comments,
                                   status="abandoned" if n in ABANDONED else "merged"))
    return Corpus(changes)


# --- brute-force oracles ---------------------------------------------------

def oracle_edges():
    """(source, target, patchset, declared hours) straight from SPEC."""
    out = {}
    for n, (h, _, _, tags, later) in SPEC.items():
        versions = [(1, h, tags)]
        acc = list(tags)
        for i, (lh, ltags) in enumerate(later, start=2):
            acc = acc + ltags
            versions.append((i, lh, list(acc)))
        for ps, when, ts in versions:
            for tag in ts:
                kind, ref = tag.split(": ")
                other = int(ref)
                pair = (other, n) if kind == "Depends-On" else (n, other)
                if pair not in out or when < out[pair][1]:
                    out[pair] = (ps, when)
    return out


def oracle_lag(src, tgt, when):
    return max(0.0, when - max(SPEC[src][0], SPEC[tgt][0]))


def oracle_between(src, tgt):
    lo, hi = sorted((SPEC[src][0], SPEC[tgt][0]))
    return sum(1 for h, *_ in SPEC.values() if lo < h < hi)


def test_fixture_has_fifty_changes_sorted_index():
    corpus = build_corpus()
    assert len(corpus) == 50
    times = [c.created_at for c in corpus.by_time]
    assert times == sorted(at(h) for h, *_ in SPEC.values())


def test_edges_match_oracle():
    corpus = build_corpus()
    edges = build_edges(corpus)
    expected = oracle_edges()
    assert {e.pair for e in edges} == set(expected)
    for e in edges:
        ps, when = expected[e.pair]
        assert e.declared_in_patchset == ps
        assert e.declared_at == at(when)


def test_lags_and_between_match_oracle():
    corpus = build_corpus()
    expected = oracle_edges()
    for e in build_edges(corpus):
        src, tgt = e.pair
        _, when = expected[e.pair]
        assert abs(identification_lag(e, corpus) - oracle_lag(src, tgt, when)) < 1e-9
        hours, between = inter_change_lag_and_between(e, corpus)
        assert abs(hours - abs(SPEC[tgt][0] - SPEC[src][0])) < 1e-9
        assert between == oracle_between(src, tgt)


def test_hand_arithmetic_lag():
    # 500030 created at T, tag added at T + 7h30m
    corpus = build_corpus()
    edge = next(e for e in build_edges(corpus) if e.pair == (500020, 500030))
    assert identification_lag(edge, corpus) == 7.5


def test_simultaneous_creation():
    corpus = build_corpus()
    edge = next(e for e in build_edges(corpus) if e.pair == (500004, 500005))
    assert inter_change_lag_and_between(edge, corpus) == (0.0, 0)
    assert identification_lag(edge, corpus) == 0.0


def test_degree_stats_match_oracle():
    corpus = build_corpus()
    pairs = set(oracle_edges())
    sources_per_target, targets_per_source = {}, {}
    for s, t in pairs:
        sources_per_target.setdefault(t, set()).add(s)
        targets_per_source.setdefault(s, set()).add(t)

    def summary(groups):
        sizes = [len(v) for v in groups.values()]
        return (min(sizes), statistics.median(sizes), max(sizes))

    out_deg, in_deg = dependency_degree(build_edges(corpus))
    assert out_deg == summary(sources_per_target)
    assert in_deg == summary(targets_per_source)
    # 500010 is needed by 500012 and 500013 and depended on by 500044
    assert in_deg[2] == 3
    # 500020 depends on 500002 and 500006
    assert out_deg[2] == 2


def test_star_in_degree():
    edges = [DependencyEdge(1, t, NEEDED_BY, 1, 1, at(0)) for t in range(2, 7)]
    out_deg, in_deg = dependency_degree(edges)
    assert in_deg == (5, 5, 5)
    assert out_deg == (1, 1, 1)
    assert dependency_degree(edges[:1]) == ((1, 1, 1), (1, 1, 1))
    with pytest.raises(ValueError):
        dependency_degree([])


def test_in_review_fraction_matches_oracle():
    corpus = build_corpus()
    edges = merged_only(build_edges(corpus), corpus)
    expected = oracle_edges()
    merged_pairs = [p for p in expected if not set(p) & ABANDONED]
    later = sum(1 for p in merged_pairs if expected[p][0] >= 2)
    assert identified_in_review_fraction(edges) == later / len(merged_pairs)


def test_in_review_fraction_trivial():
    e = [DependencyEdge(1, i, DEPENDS_ON, i, 1, at(i)) for i in range(2, 6)]
    assert identified_in_review_fraction(e) == 0.0
    e[0] = DependencyEdge(1, 2, DEPENDS_ON, 2, 3, at(9))
    assert identified_in_review_fraction(e) == 0.25


def test_prevalence_by_year():
    corpus = build_corpus()
    edges = build_edges(corpus)
    merged = Corpus(c for c in corpus if c.status == "merged")
    dependent = {n for p in oracle_edges() for n in p}
    expect = sum(1 for c in merged if c.change_number in dependent) / len(merged)
    assert prevalence_by_year(merged, merged_only(edges, corpus)) == {2020: pytest.approx(expect)}
    assert prevalence_by_year(merged, []) == {2020: 0.0}


def test_build_failure_fractions():
    corpus = build_corpus()
    edges = build_edges(corpus)
    with_fail, after = build_failure_analysis(edges, corpus)
    dependent = {n for p in oracle_edges() for n in p}
    assert with_fail == pytest.approx(2 / len(dependent))
    # both failing changes first meet a dependency after their failure comment:
    # 500007 via 500003's Needed-By at 9.75 (failure at 6.0), 500030 at T+7.5 (T+1)
    assert after == pytest.approx(1.0)
    assert build_failure_analysis([], corpus) == (0.0, 0.0)


def test_report_and_files(tmp_path):
    corpus = build_corpus()
    report = study_report(corpus, build_edges(corpus))
    assert report["n_changes"] == 50
    assert report["identified_in_review"]["per_edge"] > 0
    write_study(report, tmp_path)
    assert (tmp_path / "study.json").exists()
    assert (tmp_path / "lags.csv").read_text().count("\n") == len(report["_records"]) + 1


def test_changes_between_monotone_in_corpus():
    corpus = build_corpus()
    edge = next(e for e in build_edges(corpus) if e.pair == (500002, 500020))
    _, before = inter_change_lag_and_between(edge, corpus)
    extra = Corpus(list(corpus) + [make_change(600000, SPEC[500002][0] + 0.1)])
    _, after = inter_change_lag_and_between(edge, extra)
    assert after == before + 1


def test_lag_records_skip_missing_endpoint():
    corpus = build_corpus()
    ghost = DependencyEdge(999999, 500002, DEPENDS_ON, 500002, 1, at(2))
    report = []
    assert lag_records([ghost], corpus, report=report) == []
    assert report[0]["reason"] == "endpoint missing"
