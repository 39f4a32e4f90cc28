from __future__ import annotations

import json
from datetime import datetime, timedelta, timezone

import pytest

from changedeps.corpus import (
    CommentRecord,
    Corpus,
    CorpusError,
    PatchsetRecord,
    append_changes,
    change_from_dict,
    change_to_dict,
    file_extension,
    filter_status,
    load_corpus,
    parse_timestamp,
    save_corpus,
)
from conftest import at, make_change


@pytest.mark.parametrize("text, expected", [
    ("2013-02-01 09:59:32.126000000", datetime(2013, 2, 1, 9, 59, 32, 126000, timezone.utc)),
    ("2013-02-01 09:59:32.000000001", datetime(2013, 2, 1, 9, 59, 32, 0, timezone.utc)),
    ("2020-05-01T10:00:00Z", datetime(2020, 5, 1, 10, tzinfo=timezone.utc)),
    ("2020-05-01T12:00:00+02:00", datetime(2020, 5, 1, 10, tzinfo=timezone.utc)),
    ("2020-05-01T10:00:00.5-01:00", datetime(2020, 5, 1, 11, 0, 0, 500000, timezone.utc)),
])
def test_parse_timestamp_forms(text, expected):
    assert parse_timestamp(text) == expected


def test_parse_timestamp_naive_and_epoch():
    assert parse_timestamp(datetime(2020, 1, 1)) == at(0)
    assert parse_timestamp(0) == datetime(1970, 1, 1, tzinfo=timezone.utc)
    with pytest.raises(CorpusError):
        parse_timestamp(None)


@pytest.mark.parametrize("path, ext", [
    ("a/x.py", "py"), ("doc/INDEX.RST", "rst"), ("Makefile", ""), (".gitignore", ""),
    ("a.b/c", ""), ("tar.gz", "gz"),
])
def test_file_extension(path, ext):
    assert file_extension(path) == ext


def test_roundtrip_dict_and_file(tmp_path):
    c = make_change(42, 3.25, later=((5.0, "v2"),), comments=(("zuul", 4, "Build failed."),),
                    added="x = 1\ny = 2", deleted="z = 0", reviewers=("r1", "r2"))
    assert change_from_dict(json.loads(json.dumps(change_to_dict(c)))) == c
    path = tmp_path / "c.ndjson"
    save_corpus([make_change(7, 9.0), c], path)
    loaded = load_corpus(path)
    assert loaded.numbers == [42, 7]
    assert loaded[42] == c
    assert not (tmp_path / "c.ndjson.tmp").exists()


def test_append_then_load(tmp_path):
    path = tmp_path / "c.ndjson"
    assert append_changes([make_change(1, 0)], path) == 1
    assert append_changes([make_change(2, 1), make_change(3, 2)], path) == 2
    assert load_corpus(path).numbers == [1, 2, 3]


def test_load_reports_line_of_bad_record(tmp_path):
    path = tmp_path / "c.ndjson"
    good = json.dumps(change_to_dict(make_change(1, 0)))
    path.write_text(good + "\n\n" + good + "\n", encoding="utf-8")
    with pytest.raises(CorpusError, match=":3: duplicate change_number 1"):
        load_corpus(path)
    path.write_text(good + "\n{not json\n", encoding="utf-8")
    with pytest.raises(CorpusError, match=":2:"):
        load_corpus(path)


def test_unknown_schema_version_rejected():
    d = change_to_dict(make_change(1))
    d["schema_version"] = 99
    with pytest.raises(CorpusError, match="schema_version"):
        change_from_dict(d)
    d = change_to_dict(make_change(1))
    del d["project"]
    with pytest.raises(CorpusError, match="project"):
        change_from_dict(d)


@pytest.mark.parametrize("kwargs", [
    {"number": 0}, {"number": 1, "status": "NEW"}, {"number": 1, "insertions": -1},
])
def test_validation_errors(kwargs):
    with pytest.raises(CorpusError):
        make_change(**kwargs)


def test_patchset_order_enforced():
    c = make_change(1, 5)
    bad = c.patchsets + (PatchsetRecord(2, at(4)),)
    with pytest.raises(CorpusError, match="created before"):
        make_change(1, 5).__class__(**{**c.__dict__, "patchsets": bad})
    with pytest.raises(CorpusError, match="first patchset"):
        c.__class__(**{**c.__dict__, "created_at": at(6)})
    with pytest.raises(CorpusError):
        CommentRecord("a", at(0), "")


def test_corpus_time_index():
    corpus = Corpus([make_change(3, 2), make_change(1, 2), make_change(2, 0)])
    assert corpus.numbers == [2, 1, 3]
    assert corpus.count_created_between(at(0), at(2)) == 0
    assert corpus.count_created_between(at(2), at(-1)) == 1
    assert corpus.created_before(at(2)).numbers == [2]
    assert 3 in corpus and corpus.get(99) is None
    with pytest.raises(CorpusError, match="duplicate"):
        Corpus([make_change(1), make_change(1, 1)])


def test_count_between_per_project():
    corpus = Corpus([make_change(1, 0), make_change(2, 1, project="x"),
                     make_change(3, 2), make_change(4, 3)])
    assert corpus.count_created_between(at(0), at(3)) == 2
    assert corpus.count_created_between(at(0), at(3), project="x") == 1
    assert corpus.count_created_between(at(0), at(3), project="nope") == 0


def test_filter_status():
    corpus = Corpus([make_change(1, status="merged"), make_change(2, 1, status="abandoned"),
                     make_change(3, 2, status="open")])
    assert filter_status(corpus, ["merged", "abandoned"]).numbers == [1, 2]
    with pytest.raises(ValueError):
        filter_status(corpus, ["bogus"])
    with pytest.raises(ValueError):
        filter_status(corpus, [])


def test_patchset_lookup():
    c = make_change(1, 0, later=((1, "two"), (2, "three")))
    assert c.patchset(3).commit_message == "three"
    assert c.first_patchset.created_at == c.created_at
    with pytest.raises(KeyError):
        c.patchset(9)
    assert c.patchsets[-1].created_at - c.created_at == timedelta(hours=2)
