"""Pair features linking a target change to an earlier candidate source."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..corpus import ChangeRecord
from .catalog import CHANGE_FEATURES, PAIR_FEATURES, PAIR_VECTOR_FEATURES
from .embedding import EmbeddingModel, cosine
from .history import Timeline, _ratio
from .text import change_texts, jaccard, path_tokens, word_tokens

_SIM_TEXTS = (
    ("desc_sim", "description"),
    ("subject_sim", "subject"),
    ("added_lines_sim", "added_lines"),
    ("deleted_lines_sim", "deleted_lines"),
)


class PairFeaturizer:
    """Computes 82-feature pair vectors, caching per-change work.

    ``change_rows`` maps change number to its 36 stage-1 features (computed
    at that change's own creation time).
    """

    def __init__(self, timeline: Timeline, embedding: EmbeddingModel,
                 change_rows: dict[int, np.ndarray]):
        self.timeline = timeline
        self.embedding = embedding
        self.change_rows = change_rows
        self._cache: dict[int, dict] = {}

    def _info(self, change: ChangeRecord) -> dict:
        info = self._cache.get(change.change_number)
        if info is None:
            texts = change_texts(change)
            info = {key: self.embedding.embed(texts[key]) for _, key in _SIM_TEXTS}
            info["desc_tokens"] = word_tokens(texts["description"])
            info["file_tokens"] = path_tokens(f.path for f in change.first_patchset.files)
            self._cache[change.change_number] = info
        return info

    def pair_features(self, source: ChangeRecord, target: ChangeRecord) -> dict[str, float]:
        """The 10 Pair-dimension features, measured at the target's creation."""
        if not source.created_at <= target.created_at:
            raise ValueError(
                f"source {source.change_number} created after target {target.change_number}")
        s, t = self._info(source), self._info(target)
        tl = self.timeline
        at = target.created_at
        f = {name: cosine(s[key], t[key]) for name, key in _SIM_TEXTS}
        f["pctg_shrd_file_tkns"] = jaccard(s["file_tokens"], t["file_tokens"])
        f["pctg_shrd_desc_tkns"] = jaccard(s["desc_tokens"], t["desc_tokens"])
        f["num_dev_in_src_change"] = tl.owner_project_changes(target.owner_id, source.project, at)
        f["num_dev_in_trgt_change"] = tl.owner_project_changes(source.owner_id, target.project, at)
        f["num_src_trgt_co_changed"] = tl.project_co_changes(source.project, target.project, at)
        f["pctg_inter_dep_cha"] = _ratio(
            tl.owner_project_dependent(target.owner_id, source.project, at),
            tl.owner_dependent(target.owner_id, at))
        return {name: float(f[name]) for name in PAIR_FEATURES}

    def vector(self, source: ChangeRecord, target: ChangeRecord) -> np.ndarray:
        pair = self.pair_features(source, target)
        return np.concatenate([
            self.change_rows[source.change_number],
            self.change_rows[target.change_number],
            np.array([pair[name] for name in PAIR_FEATURES]),
        ])

    def matrix(self, pairs: Sequence[tuple[ChangeRecord, ChangeRecord]]) -> np.ndarray:
        out = np.empty((len(pairs), len(PAIR_VECTOR_FEATURES)), dtype=np.float64)
        for i, (s, t) in enumerate(pairs):
            out[i] = self.vector(s, t)
        return out


def compute_pair_features(source: ChangeRecord, target: ChangeRecord, history,
                          embedding: EmbeddingModel, edges=()) -> dict[str, float]:
    """Full 82-feature dict for one pair (convenience wrapper)."""
    from .history import Timeline as _Timeline

    timeline = history if isinstance(history, _Timeline) else _Timeline(history, list(edges))
    rows = {c.change_number: np.array([timeline.change_features(c)[n] for n in CHANGE_FEATURES])
            for c in (source, target)}
    vec = PairFeaturizer(timeline, embedding, rows).vector(source, target)
    return dict(zip(PAIR_VECTOR_FEATURES, vec.tolist()))
