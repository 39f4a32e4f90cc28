"""End-to-end experiment runner: folds, pruning, training, evaluation, explanation."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import pickle
import platform
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__, _kernels
from .corpus import Corpus, filter_status, load_corpus
from .deps import DependencyEdge, build_edges, dependent_changes, load_edges
from .explain import (
    feature_stats,
    importance_table,
    native_importances,
    permutation_importance,
    perturbation_impact,
    scott_knott_rank,
    write_importance_table,
)
from .features import (
    CHANGE_FEATURES,
    PAIR_VECTOR_FEATURES,
    PairFeaturizer,
    Timeline,
    change_feature_matrix,
    train_embedding,
    training_texts,
)
from .features.catalog import STAGE_DIMENSIONS
from .models import (
    ALGORITHMS,
    GROUPINGS,
    TOP_K,
    ClassifierSpec,
    EvaluationReport,
    ablation_features,
    evaluate_round,
    group_by_target,
    top_k_metrics,
    train,
    write_metric_table,
)
from .pipeline import (
    build_testing_pairs,
    build_training_pairs,
    known_edges,
    prune_across_folds,
    time_ordered_folds,
)

log = logging.getLogger(__name__)

STAGES = ("extract", "featurize", "rounds", "prune", "train", "explain", "tables")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, run_dir: Path, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}; rerun with resume={str(run_dir)!r}")
        self.stage = stage
        self.run_dir = run_dir


@dataclass
class ExperimentConfig:
    corpus: str | None = None
    edges: str | None = None
    synthetic: dict | None = None
    out: str = "runs"
    seed: int = 0
    folds: int = 10
    window_days: int = 30
    test_sample_pct: float = 0.10
    corr_threshold: float = 0.7
    redundancy_threshold: float = 0.9
    statuses: tuple = ("merged", "abandoned")
    algorithms: tuple = ALGORITHMS
    hyperparameters: dict = field(default_factory=dict)
    explain_algorithm: str = "gradient_boosted_trees"
    permutation_repeats: int = 5
    scott_knott_variant: str = "classic"
    embedding: dict = field(default_factory=lambda: {"dim": 100, "window": 5, "epochs": 5,
                                                      "min_count": 2})
    ablation: bool = False
    stages: tuple = (1, 2)
    threshold: float = 0.5
    k: int = 10

    def validate(self) -> None:
        if (self.corpus is None) == (self.synthetic is None):
            raise ConfigError("exactly one of 'corpus' or 'synthetic' must be set")
        for alg in list(self.algorithms) + [self.explain_algorithm]:
            if alg not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {alg!r}; expected one of {ALGORITHMS}")
        if not self.algorithms:
            raise ConfigError("no algorithms configured")
        if self.explain_algorithm not in self.algorithms:
            raise ConfigError("explain_algorithm must be one of the configured algorithms")
        unknown_hp = set(self.hyperparameters) - set(ALGORITHMS)
        if unknown_hp:
            raise ConfigError(f"hyperparameters for unknown algorithms: {sorted(unknown_hp)}")
        if self.folds < 2:
            raise ConfigError("folds must be at least 2")
        if self.window_days <= 0:
            raise ConfigError("window_days must be positive")
        if not 0 < self.test_sample_pct <= 1:
            raise ConfigError("test_sample_pct must lie in (0, 1]")
        for name in ("corr_threshold", "redundancy_threshold"):
            if not 0 < getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in (0, 1]")
        if set(self.stages) - {1, 2} or not self.stages:
            raise ConfigError("stages must be a non-empty subset of {1, 2}")
        if self.permutation_repeats < 1:
            raise ConfigError("permutation_repeats must be at least 1")
        if self.scott_knott_variant not in ("classic", "esd"):
            raise ConfigError("scott_knott_variant must be 'classic' or 'esd'")
        if not 0 <= self.threshold <= 1.01:
            raise ConfigError("threshold must lie in [0, 1.01]")
        if self.k < 1:
            raise ConfigError("k must be positive")
        bad = set(self.statuses) - {"merged", "abandoned", "open"}
        if bad:
            raise ConfigError(f"unknown statuses {sorted(bad)}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("statuses", "algorithms", "stages"):
            d[key] = list(d[key])
        return d


def load_config(source: str | Path | dict, **overrides) -> ExperimentConfig:
    """Read a JSON or TOML config; ``overrides`` with value None are ignored."""
    if isinstance(source, dict):
        data = dict(source)
        base = Path.cwd()
    else:
        path = Path(source)
        text = path.read_text(encoding="utf-8")
        if path.suffix == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib
            data = tomllib.loads(text)
        else:
            data = json.loads(text)
        base = path.parent
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if "corpus" in overrides:
        data.pop("synthetic", None)
    elif "synthetic" in overrides:
        data.pop("corpus", None)
    data.update(overrides)
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("statuses", "algorithms", "stages"):
        if key in data:
            data[key] = tuple(data[key])
    for key in ("corpus", "edges"):
        if data.get(key) and not Path(data[key]).is_absolute():
            data[key] = str(base / data[key])
    cfg = ExperimentConfig(**data)
    cfg.validate()
    return cfg


# --- data preparation ----------------------------------------------------


@dataclass
class StageRound:
    round_id: int
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    test_keys: list  # change numbers (stage 1) or (source, target) pairs (stage 2)
    notes: list = field(default_factory=list)


@dataclass
class ExperimentData:
    corpus: Corpus
    edges: list[DependencyEdge]
    fold_split: Any
    stage1: list[StageRound]
    stage2: list[StageRound]


def load_inputs(cfg: ExperimentConfig) -> tuple[Corpus, list[DependencyEdge]]:
    if cfg.synthetic is not None:
        from .synthetic import generate_corpus

        corpus = generate_corpus(**cfg.synthetic).corpus
    else:
        corpus = load_corpus(cfg.corpus)
    edges = load_edges(cfg.edges) if cfg.edges else build_edges(corpus)
    corpus = filter_status(corpus, cfg.statuses)
    edges = [e for e in edges if e.source_change in corpus and e.target_change in corpus]
    return corpus, edges


def _stage1_rounds(corpus, edges, split, rows) -> list[StageRound]:
    dependent = dependent_changes(edges)
    out = []
    for r, train_nums, test_nums in split.rounds():
        members = set(train_nums)
        cutoff = max(corpus[n].created_at for n in train_nums)
        known = dependent_changes(known_edges(edges, corpus, members, cutoff))
        out.append(StageRound(
            r,
            np.array([rows[n] for n in train_nums]),
            np.array([int(n in known) for n in train_nums]),
            np.array([rows[n] for n in test_nums]),
            np.array([int(n in dependent) for n in test_nums]),
            list(test_nums)))
    return out


def _stage2_rounds(corpus, edges, split, rows, timeline, cfg) -> list[StageRound]:
    dependent_all = dependent_changes(edges)
    pool = [c for c in corpus.by_time if c.change_number in dependent_all]
    out = []
    for r, train_nums, test_nums in split.rounds():
        members = set(train_nums)
        cutoff = max(corpus[n].created_at for n in train_nums)
        train_edges = known_edges(edges, corpus, members, cutoff)
        train_dep = [corpus[n] for n in sorted(dependent_changes(train_edges))]
        seed = cfg.seed * 1000 + r
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            train_ds = build_training_pairs(train_dep, train_edges, cfg.window_days, seed=seed)
            targets = [corpus[n] for n in test_nums if n in dependent_all]
            test_ds = build_testing_pairs(targets, pool, edges, cfg.window_days,
                                          cfg.test_sample_pct, seed=seed)
        emb = train_embedding(training_texts(corpus[n] for n in train_nums), seed=seed,
                              window_id=f"round-{r}", **cfg.embedding)
        feat = PairFeaturizer(timeline, emb, rows)

        def matrix(pairs):
            if not pairs:
                return np.zeros((0, len(PAIR_VECTOR_FEATURES)))
            return feat.matrix([(corpus[s], corpus[t]) for s, t in pairs])

        out.append(StageRound(r, matrix(train_ds.pairs), train_ds.labels,
                              matrix(test_ds.pairs), test_ds.labels, list(test_ds.pairs),
                              train_ds.notes + test_ds.notes))
    return out


def prepare(corpus: Corpus, edges: list[DependencyEdge], cfg: ExperimentConfig) -> ExperimentData:
    """Featurize every change and materialise the per-round matrices of both stages."""
    timeline = Timeline(corpus, edges)
    numbers, X = change_feature_matrix(corpus, edges, timeline)
    rows = dict(zip(numbers, X))
    split = time_ordered_folds(corpus, cfg.folds)
    s1 = _stage1_rounds(corpus, edges, split, rows) if 1 in cfg.stages else []
    s2 = _stage2_rounds(corpus, edges, split, rows, timeline, cfg) if 2 in cfg.stages else []
    return ExperimentData(corpus, edges, split, s1, s2)


def _names(stage: int) -> list[str]:
    return list(CHANGE_FEATURES if stage == 1 else PAIR_VECTOR_FEATURES)


def prune_stage(rounds: list[StageRound], stage: int, cfg: ExperimentConfig):
    mats = [r.X_train for r in rounds if len(r.X_train) >= 2]
    if not mats:
        raise ValueError(f"stage {stage}: no training data to prune")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        kept, removed, _ = prune_across_folds(mats, _names(stage), cfg.corr_threshold,
                                              cfg.redundancy_threshold)
    return kept, removed


def _usable(rnd: StageRound) -> bool:
    return (len(set(rnd.y_train.tolist())) == 2 and len(set(rnd.y_test.tolist())) == 2)


def _columns(stage: int, features: list[str]) -> list[int]:
    index = {n: i for i, n in enumerate(_names(stage))}
    return [index[f] for f in features]


def evaluate_stage(data: ExperimentData, stage: int, algorithm: str, features: list[str],
                   cfg: ExperimentConfig, with_top_k: bool = True):
    """Train one model per round and score it; returns (report, models, rounds used)."""
    rounds = data.stage1 if stage == 1 else data.stage2
    cols = _columns(stage, features)
    spec = ClassifierSpec(algorithm, cfg.hyperparameters.get(algorithm, {}), cfg.seed)
    results, models, used = [], [], []
    ranked_all: dict = {}
    truth: set = set()
    for rnd in rounds:
        if not _usable(rnd):
            log.warning("stage %d round %d skipped: a class is missing", stage, rnd.round_id)
            continue
        model = train(spec, rnd.X_train[:, cols], rnd.y_train, features)
        proba = model.predict_probability(rnd.X_test[:, cols])
        results.append(evaluate_round(rnd.round_id, proba, rnd.y_test))
        models.append(model)
        used.append(rnd)
        if stage == 2 and with_top_k:
            ranked_all.update(group_by_target(rnd.test_keys, proba))
            truth.update(p for p, y in zip(rnd.test_keys, rnd.y_test.tolist()) if y)
    report = EvaluationReport(stage, algorithm, results)
    if stage == 2 and with_top_k and ranked_all:
        owners = {c.change_number: c.owner_id for c in data.corpus}
        for k in TOP_K:
            for g in GROUPINGS:
                report.top_k[(k, g)] = top_k_metrics(ranked_all, truth, k, g, owners)
    return report, models, used


def explain_stage(models, rounds: list[StageRound], stage: int, features: list[str],
                  cfg: ExperimentConfig):
    cols = _columns(stage, features)
    per_round: dict[str, list[float]] = {f: [] for f in features}
    stats = []
    for model, rnd in zip(models, rounds):
        scores = permutation_importance(model, rnd.X_test[:, cols], rnd.y_test,
                                        repeats=cfg.permutation_repeats,
                                        seed=cfg.seed * 1000 + rnd.round_id)
        for f in features:
            per_round[f].append(scores[f])
        stats.append(feature_stats(rnd.X_train[:, cols], features))
    ranking = scott_knott_rank(per_round, variant=cfg.scott_knott_variant)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        impacts = perturbation_impact(models, stats, features)
    return ranking, impacts, native_importances(models)


# --- runner --------------------------------------------------------------


class _Checkpoints:
    def __init__(self, run_dir: Path):
        self.dir = run_dir / "checkpoints"
        self.dir.mkdir(parents=True, exist_ok=True)

    def has(self, name: str) -> bool:
        return (self.dir / f"{name}.pkl").exists()

    def load(self, name: str):
        with open(self.dir / f"{name}.pkl", "rb") as fh:
            return pickle.load(fh)

    def save(self, name: str, obj) -> None:
        tmp = self.dir / f"{name}.pkl.tmp"
        with open(tmp, "wb") as fh:
            pickle.dump(obj, fh, protocol=pickle.HIGHEST_PROTOCOL)
        tmp.replace(self.dir / f"{name}.pkl")


def _new_run_dir(out: str) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    base = Path(out) / f"run-{stamp}"
    path, i = base, 1
    while path.exists():
        path = Path(f"{base}-{i}")
        i += 1
    path.mkdir(parents=True)
    return path


def _json(obj) -> str:
    def clean(v):
        if isinstance(v, float):
            return None if math.isnan(v) else v
        if isinstance(v, dict):
            return {str(k): clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        return v

    return json.dumps(clean(obj), indent=2, sort_keys=True) + "\n"


def run_experiment(config, resume: str | Path | None = None, **overrides) -> Path:
    """Run every stage and write all reports under one run directory.

    ``config`` is a path to a JSON/TOML file, a dict or an ExperimentConfig;
    it is validated before any work starts. Passing ``resume`` reuses the
    checkpoints of an interrupted run and completes it to the same outputs.
    """
    cfg = config if isinstance(config, ExperimentConfig) else load_config(config, **overrides)
    cfg.validate()
    run_dir = Path(resume) if resume else _new_run_dir(cfg.out)
    ckpt = _Checkpoints(run_dir)

    def step(name, fn):
        if ckpt.has(name):
            return ckpt.load(name)
        log.info("stage %s", name)
        try:
            value = fn()
        except Exception as exc:
            raise StageError(name, run_dir, exc) from exc
        ckpt.save(name, value)
        return value

    corpus, edges = step("extract", lambda: load_inputs(cfg))
    data = step("rounds", lambda: prepare(corpus, edges, cfg))

    pruning = step("prune", lambda: {s: prune_stage(data.stage1 if s == 1 else data.stage2, s, cfg)
                                     for s in cfg.stages})

    def train_all():
        out = {}
        for s in cfg.stages:
            kept = pruning[s][0]
            for alg in cfg.algorithms:
                out[s, alg] = evaluate_stage(data, s, alg, kept, cfg)
        return out

    trained = step("train", train_all)

    def explain_all():
        out = {}
        for s in cfg.stages:
            _, models, used = trained[s, cfg.explain_algorithm]
            if len(models) >= 2:
                out[s] = explain_stage(models, used, s, pruning[s][0], cfg)
        return out

    explained = step("explain", explain_all)

    def ablate():
        rows = []
        for s in cfg.stages:
            kept = pruning[s][0]
            for dim in STAGE_DIMENSIONS[s]:
                for mode in ("only", "without"):
                    try:
                        feats = ablation_features(kept, dim, mode, s)
                    except ValueError:
                        rows.append((s, dim, mode, math.nan))
                        continue
                    rep, _, _ = evaluate_stage(data, s, cfg.explain_algorithm, feats, cfg,
                                               with_top_k=False)
                    rows.append((s, dim, mode, rep.mean_auc))
        return rows

    ablation = step("ablation", ablate) if cfg.ablation else None

    tables = run_dir / "tables"
    reports = run_dir / "reports"
    tables.mkdir(exist_ok=True)
    reports.mkdir(exist_ok=True)
    for s in cfg.stages:
        reps = [trained[s, alg][0] for alg in cfg.algorithms]
        write_metric_table(reps, tables / f"metrics_stage{s}.csv")
        for rep in reps:
            rep.write(reports)
        if s in explained:
            ranking, impacts, native = explained[s]
            rows = importance_table(ranking, impacts)
            write_importance_table(rows, tables / f"importance_stage{s}.csv",
                                   tables / f"importance_stage{s}.json")
            (reports / f"ranking_stage{s}.json").write_text(_json({
                "per_round_scores": ranking.per_round_scores,
                "final_rank": ranking.final_rank,
                "native_importance": native,
                "impacts": {r.feature: {"per_round": r.relative_impact, **r.summary}
                            for r in impacts},
            }), encoding="utf-8")
    if ablation is not None:
        with open(tables / "ablation.csv", "w", encoding="utf-8") as fh:
            fh.write("stage,dimension,mode,mean_auc\n")
            for s, dim, mode, value in ablation:
                fh.write(f"{s},{dim},{mode},{'' if math.isnan(value) else f'{value:.6f}'}\n")

    manifest = {
        "package_version": __version__,
        "kernel_backend": _kernels.BACKEND,
        "python": platform.python_version(),
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "window_days": cfg.window_days,
        "thresholds": {"correlation": cfg.corr_threshold,
                       "redundancy": cfg.redundancy_threshold,
                       "gate": cfg.threshold},
        "folds": data.fold_split.to_dict(),
        "n_changes": len(corpus),
        "n_edges": len(edges),
        "features": {str(s): {"kept": pruning[s][0], "removed": pruning[s][1]}
                     for s in cfg.stages},
        "classifiers": {alg: ClassifierSpec(alg, cfg.hyperparameters.get(alg, {}),
                                            cfg.seed).to_dict() for alg in cfg.algorithms},
        "round_notes": {f"stage{s}": {r.round_id: r.notes for r in
                                      (data.stage1 if s == 1 else data.stage2) if r.notes}
                        for s in cfg.stages},
    }
    (run_dir / "manifest.json").write_text(_json(manifest), encoding="utf-8")
    return run_dir
