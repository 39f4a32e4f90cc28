"""CSV feature matrices and their schema manifest."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .catalog import dimension_of
from .purpose import KEYWORD_TABLE_VERSION


def write_feature_csv(path, feature_names, rows, ids=None, labels=None,
                      id_columns=("change_number",)) -> None:
    """Header of canonical names; floats written with ``repr`` (round-trips exactly)."""
    rows = np.asarray(rows, dtype=np.float64)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = list(id_columns) if ids is not None else []
        header += list(feature_names)
        if labels is not None:
            header.append("label")
        w.writerow(header)
        for i, row in enumerate(rows):
            out = []
            if ids is not None:
                ident = ids[i]
                out.extend(ident if isinstance(ident, (tuple, list)) else [ident])
            out.extend(repr(float(v)) for v in row)
            if labels is not None:
                out.append(int(labels[i]))
            w.writerow(out)


def read_feature_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        body = list(r)
    return header, body


def write_manifest(path, feature_names, stage: int, extra=None) -> None:
    manifest = {
        "stage": stage,
        "feature_order": list(feature_names),
        "dimensions": {f: dimension_of(f) for f in feature_names},
        "keyword_table_version": KEYWORD_TABLE_VERSION,
    }
    if extra:
        manifest.update(extra)
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
