from __future__ import annotations

import json

import pytest

from changedeps import experiment
from changedeps.experiment import ConfigError, StageError, load_config, run_experiment

TINY = {
    "synthetic": {"n_changes": 500, "seed": 3, "n_projects": 6, "n_owners": 15, "days": 90},
    "folds": 3,
    "algorithms": ["random_forest", "gradient_boosted_trees"],
    "test_sample_pct": 1.0,
    "permutation_repeats": 2,
    "embedding": {"dim": 16, "epochs": 2, "window": 3, "min_count": 1},
}


def tables(run_dir):
    return {p.name: p.read_bytes() for p in sorted((run_dir / "tables").iterdir())}


@pytest.fixture(scope="module")
def first_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    return run_experiment(dict(TINY, out=str(out)))


def test_unknown_algorithm_rejected_before_any_work(tmp_path, monkeypatch):
    called = []
    monkeypatch.setattr(experiment, "load_inputs", lambda cfg: called.append(cfg))
    with pytest.raises(ConfigError, match="unknown algorithm"):
        run_experiment(dict(TINY, out=str(tmp_path), algorithms=["random_forest", "svm"]))
    assert called == [] and not any(tmp_path.iterdir())


@pytest.mark.parametrize("bad", [
    {"folds": 1}, {"test_sample_pct": 0}, {"stages": [3]}, {"colour": "blue"},
    {"scott_knott_variant": "fancy"}, {"explain_algorithm": "multilayer_perceptron"},
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        load_config(dict(TINY, **bad))


def test_both_or_neither_input_rejected():
    with pytest.raises(ConfigError, match="exactly one"):
        load_config({"folds": 3})
    with pytest.raises(ConfigError, match="exactly one"):
        load_config(dict(TINY, corpus="c.ndjson"))


def test_config_files_and_overrides(tmp_path):
    (tmp_path / "exp.json").write_text(json.dumps(dict(TINY, seed=4)))
    (tmp_path / "exp.toml").write_text('corpus = "data/c.ndjson"\nfolds = 5\n')
    cfg = load_config(tmp_path / "exp.json", seed=9, folds=None)
    assert cfg.seed == 9 and cfg.folds == 3
    toml = load_config(tmp_path / "exp.toml", window_days=10)
    assert toml.corpus == str(tmp_path / "data" / "c.ndjson") and toml.window_days == 10
    swapped = load_config(tmp_path / "exp.json", corpus="/abs/c.ndjson")
    assert swapped.synthetic is None and swapped.corpus == "/abs/c.ndjson"


def test_run_writes_all_artifacts(first_run):
    names = set(tables(first_run))
    assert {"metrics_stage1.csv", "metrics_stage2.csv", "importance_stage1.csv",
            "importance_stage2.json"} <= names
    manifest = json.loads((first_run / "manifest.json").read_text())
    assert manifest["config"]["folds"] == 3
    header, *rows = (first_run / "tables" / "metrics_stage2.csv").read_text().splitlines()
    assert len(rows) == 2 and "all_top10_recall" in header


def test_same_seed_same_tables(first_run, tmp_path):
    again = run_experiment(dict(TINY, out=str(tmp_path)))
    assert tables(again) == tables(first_run)


def test_stage_failure_is_resumable(first_run, tmp_path, monkeypatch):
    real = experiment.evaluate_stage

    def broken(*args, **kw):
        raise RuntimeError("disk on fire")

    monkeypatch.setattr(experiment, "evaluate_stage", broken)
    with pytest.raises(StageError, match="'train'") as info:
        run_experiment(dict(TINY, out=str(tmp_path)))
    run_dir = info.value.run_dir
    done = {p.stem for p in (run_dir / "checkpoints").glob("*.pkl")}
    assert done == {"extract", "rounds", "prune"}

    monkeypatch.setattr(experiment, "evaluate_stage", real)
    assert run_experiment(dict(TINY, out=str(tmp_path)), resume=run_dir) == run_dir
    assert tables(run_dir) == tables(first_run)
