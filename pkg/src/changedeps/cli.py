"""Command-line entry point: ``changedeps <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from . import __version__

log = logging.getLogger("changedeps")


def _abs(path):
    return None if path is None else str(Path(path).resolve())


def _config(args, **extra):
    """ExperimentConfig from ``--config`` plus flag overrides."""
    from .experiment import load_config

    synthetic = None
    if getattr(args, "synthetic", None):
        synthetic = {"n_changes": args.synthetic, "seed": args.seed or 0}
    algorithm = getattr(args, "algorithm", None)
    overrides = dict(
        corpus=_abs(args.corpus), edges=_abs(getattr(args, "edges", None)), synthetic=synthetic,
        seed=args.seed, window_days=args.window_days, threshold=args.threshold, k=args.k,
        folds=args.folds, out=args.out,
        algorithms=(algorithm,) if algorithm else None,
        explain_algorithm=algorithm)
    overrides.update(extra)
    return load_config(args.config or {}, **overrides)


def _inputs(args):
    from .experiment import load_inputs

    return load_inputs(_config(args))


def _out_dir(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=str))


# --- subcommands ---------------------------------------------------------


def cmd_mine(args) -> int:
    from .mining import mine_to_file

    out = Path(args.out or "corpus.ndjson")
    total = mine_to_file(args.endpoint, args.query, out, batch_size=args.batch_size,
                         concurrency=args.concurrency, with_diffs=args.with_diffs)
    print(f"{total} changes written to {out}")
    return 0


def cmd_synthesize(args) -> int:
    from .corpus import save_corpus
    from .synthetic import generate_corpus

    synth = generate_corpus(n_changes=args.n_changes, seed=args.seed or 0)
    out = Path(args.out or "synthetic.ndjson")
    save_corpus(synth.corpus, out)
    print(f"{len(synth.corpus)} changes, {len(synth.planted)} planted links written to {out}")
    return 0


def cmd_extract_deps(args) -> int:
    from .corpus import load_corpus
    from .deps import (
        dedupe_edges,
        extract_declarations,
        save_edges,
        save_edges_csv,
        save_unresolved_csv,
    )

    corpus = load_corpus(args.corpus)
    result = extract_declarations(corpus, ignore_case=args.ignore_case)
    edges = dedupe_edges(result.declarations)
    out = _out_dir(args, "deps")
    save_edges(edges, out / "edges.ndjson")
    save_edges_csv(edges, out / "edges.csv")
    save_unresolved_csv(result.unresolved + result.self_references, out / "unresolved.csv")
    _emit({"changes": len(corpus), "declarations": len(result.declarations),
           "edges": len(edges), "unresolved": len(result.unresolved),
           "self_references": len(result.self_references), "out": str(out)})
    return 0


def cmd_study(args) -> int:
    from .study import study_report, write_study

    corpus, edges = _inputs(args)
    report = study_report(corpus, edges, keyword=args.keyword, per_project=args.per_project)
    out = _out_dir(args, "study")
    write_study(report, out)
    _emit({k: v for k, v in report.items() if not k.startswith("_")})
    return 0


def cmd_featurize(args) -> int:
    import numpy as np

    from .deps import dependent_changes
    from .features import (
        CHANGE_FEATURES,
        PAIR_VECTOR_FEATURES,
        PairFeaturizer,
        Timeline,
        change_feature_matrix,
        train_embedding,
        training_texts,
        write_feature_csv,
        write_manifest,
    )
    from .pipeline import build_training_pairs

    cfg = _config(args)
    corpus, edges = _inputs(args)
    out = _out_dir(args, "features")
    timeline = Timeline(corpus, edges)
    numbers, X = change_feature_matrix(corpus, edges, timeline)
    dependent = dependent_changes(edges)
    labels = [int(n in dependent) for n in numbers]
    write_feature_csv(out / "stage1.csv", CHANGE_FEATURES, X, ids=numbers, labels=labels)
    write_manifest(out / "stage1.manifest.json", CHANGE_FEATURES, 1)
    summary = {"stage1_rows": len(numbers)}
    if args.stage == 2:
        emb = train_embedding(training_texts(corpus.by_time), seed=cfg.seed, window_id="full",
                              **cfg.embedding)
        pairs = build_training_pairs([corpus[n] for n in sorted(dependent)], edges,
                                     cfg.window_days, cfg.seed)
        feat = PairFeaturizer(timeline, emb, dict(zip(numbers, X)))
        P = (feat.matrix([(corpus[s], corpus[t]) for s, t in pairs.pairs]) if pairs.pairs
             else np.zeros((0, len(PAIR_VECTOR_FEATURES))))
        write_feature_csv(out / "stage2.csv", PAIR_VECTOR_FEATURES, P, ids=pairs.pairs,
                          labels=pairs.labels, id_columns=("source_change", "target_change"))
        write_manifest(out / "stage2.manifest.json", PAIR_VECTOR_FEATURES, 2,
                       extra={"window_days": cfg.window_days, "seed": cfg.seed})
        summary["stage2_rows"] = len(pairs.pairs)
    summary["out"] = str(out)
    _emit(summary)
    return 0


def cmd_folds(args) -> int:
    from .pipeline import time_ordered_folds

    cfg = _config(args)
    corpus, _ = _inputs(args)
    split = time_ordered_folds(corpus, cfg.folds)
    data = split.to_dict()
    data["folds"] = [list(f) for f in split.folds]
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    _emit(split.to_dict())
    return 0


def cmd_train(args) -> int:
    from .predict import train_bundle

    cfg = _config(args)
    corpus, edges = _inputs(args)
    algorithm = args.algorithm or "random_forest"
    bundle = train_bundle(corpus, edges, algorithm, cfg.seed, cfg.window_days, cfg.threshold,
                          cfg.k, cfg.corr_threshold, cfg.redundancy_threshold,
                          cfg.hyperparameters.get(algorithm), cfg.embedding)
    out = Path(args.out or "model.pkl")
    bundle.save(out)
    _emit({"model": str(out), "stage1_features": list(bundle.stage1.feature_names),
           "stage2_features": list(bundle.stage2.feature_names), **bundle.meta})
    return 0


def _run(args, **extra) -> Path:
    from .experiment import run_experiment

    cfg = _config(args, **extra)
    return run_experiment(cfg, resume=args.resume)


def cmd_evaluate(args) -> int:
    from .experiment import StageError

    try:
        run_dir = _run(args, ablation=True if args.ablation else None)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for table in sorted((run_dir / "tables").glob("metrics_stage*.csv")):
        print(f"# {table.name}")
        print(table.read_text(encoding="utf-8"), end="")
    print(f"run directory: {run_dir}")
    return 0


def cmd_explain(args) -> int:
    from .experiment import StageError

    try:
        run_dir = _run(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for table in sorted((run_dir / "tables").glob("importance_stage*.csv")):
        print(f"# {table.name}")
        lines = table.read_text(encoding="utf-8").splitlines()
        print("\n".join(lines[: args.top + 1]))
    print(f"run directory: {run_dir}")
    return 0


def _predictor(args):
    from .experiment import load_inputs
    from .predict import ModelBundle, Predictor

    bundle = ModelBundle.load(args.model)
    corpus, edges = load_inputs(_config(args))
    return Predictor(bundle, corpus, edges)


def cmd_predict(args) -> int:
    from .corpus import change_from_dict

    predictor = _predictor(args)
    text = sys.stdin.read() if args.change == "-" else Path(args.change).read_text(encoding="utf-8")
    changes = [json.loads(line) for line in text.splitlines() if line.strip()] \
        if args.change.endswith(".ndjson") else [json.loads(text)]
    for raw in changes:
        result = predictor.predict(change_from_dict(raw), threshold=args.threshold, k=args.k,
                                   window_days=args.window_days)
        print(json.dumps(result.to_dict()))
    return 0


def cmd_serve(args) -> int:
    from .server import serve

    predictor = _predictor(args)
    if args.threshold is not None:
        predictor.bundle.threshold = args.threshold
    if args.k is not None:
        predictor.bundle.k = args.k
    if args.window_days is not None:
        predictor.bundle.window_days = args.window_days
    serve(predictor, args.host, args.port)
    return 0


# --- parser --------------------------------------------------------------


def _common(p: argparse.ArgumentParser, corpus: bool = True) -> None:
    p.add_argument("--config", help="TOML or JSON experiment config")
    if corpus:
        p.add_argument("--corpus", help="NDJSON corpus file")
        p.add_argument("--edges", help="NDJSON edge file (extracted from the corpus if omitted)")
        p.add_argument("--synthetic", type=int, metavar="N",
                       help="use a generated corpus of N changes instead of --corpus")
    p.add_argument("--seed", type=int)
    p.add_argument("--window-days", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--algorithm")
    p.add_argument("--folds", type=int)
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="changedeps",
                                     description="Mine, study and predict change dependencies.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mine", help="download changes from a Gerrit server")
    p.add_argument("--endpoint", required=True, help="Gerrit base URL")
    p.add_argument("--query", default="status:merged OR status:abandoned")
    p.add_argument("--batch-size", type=int, default=500)
    p.add_argument("--concurrency", type=int, default=1)
    p.add_argument("--with-diffs", action="store_true", help="also fetch first-patchset diffs")
    p.add_argument("--out", help="output NDJSON (default corpus.ndjson)")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("synthesize", help="write a synthetic corpus with planted dependencies")
    p.add_argument("--n-changes", type=int, default=5000)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("extract-deps", help="extract dependency edges from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ignore-case", action="store_true")
    p.add_argument("--out", help="output directory (default deps/)")
    p.set_defaults(func=cmd_extract_deps)

    p = sub.add_parser("study", help="prevalence, lag and effort statistics")
    _common(p)
    p.add_argument("--keyword", default="Build failed")
    p.add_argument("--per-project", action="store_true")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("featurize", help="export feature matrices")
    _common(p)
    p.add_argument("--stage", type=int, choices=(1, 2), default=2)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("folds", help="print the time-ordered fold split")
    _common(p)
    p.set_defaults(func=cmd_folds)

    p = sub.add_parser("train", help="fit both stages on the whole corpus")
    _common(p)
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (("evaluate", cmd_evaluate, "run the cross-validated experiment"),
                                 ("explain", cmd_explain, "rank features and measure impact")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("--resume", help="run directory of an interrupted run")
        if name == "evaluate":
            p.add_argument("--ablation", action="store_true")
        else:
            p.add_argument("--top", type=int, default=15)
        p.set_defaults(func=func)

    p = sub.add_parser("predict", help="score new changes with a trained model")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--change", required=True,
                   help="JSON change file, NDJSON file of changes, or - for stdin")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("serve", help="HTTP prediction endpoint")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    with warnings.catch_warnings():
        if args.verbose == 0:
            warnings.simplefilter("ignore", UserWarning)
        try:
            return args.func(args)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2


if __name__ == "__main__":
    sys.exit(main())
