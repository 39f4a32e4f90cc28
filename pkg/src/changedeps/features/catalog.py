"""Canonical feature names, their dimensions and order."""

from __future__ import annotations

DIMENSIONS: dict[str, tuple[str, ...]] = {
    "Change": (
        "insertions",
        "deletions",
        "code_churn",
        "num_directory_files",
        "is_non_functional",
        "has_feature_addition",
        "is_corrective",
        "is_merge",
        "is_preventive",
        "is_refactoring",
    ),
    "Developer": (
        "num_cro_pro_cha_owner",
        "num_wthn_pro_cha_owner",
        "num_whole_cha_owner",
        "pctg_cro_pro_cha_owner",
        "num_pro_cont_owner",
        "num_pro_cha_owner",
        "pctg_dep_chan_owner",
    ),
    "Project": (
        "project_age",
        "num_dep_proj_last_mth",
        "num_cro_pro_cha_lst_mth",
        "num_cro_pro_chan",
        "num_wthn_pro_cha",
        "pctg_cro_pro_chan",
        "num_whole_wthn_pro_cha",
    ),
    "File": (
        "num_file_changes",
        "num_file_types",
        "num_dev_mod_files",
        "avg_num_dev_mod_files",
        "pctg_mod_fil_dep_cha",
        "min_mod_fil_dep_cha",
        "median_mod_fil_dep_cha",
        "max_mod_fil_dep_cha",
    ),
    "Text": (
        "subject_length",
        "description_length",
        "subject_word_count",
        "description_word_count",
    ),
}

PAIR_FEATURES: tuple[str, ...] = (
    "desc_sim",
    "subject_sim",
    "added_lines_sim",
    "deleted_lines_sim",
    "pctg_shrd_file_tkns",
    "pctg_shrd_desc_tkns",
    "num_dev_in_src_change",
    "num_dev_in_trgt_change",
    "num_src_trgt_co_changed",
    "pctg_inter_dep_cha",
)

CHANGE_FEATURES: tuple[str, ...] = tuple(f for names in DIMENSIONS.values() for f in names)
SOURCE_FEATURES = tuple(f + "_source" for f in CHANGE_FEATURES)
TARGET_FEATURES = tuple(f + "_target" for f in CHANGE_FEATURES)
PAIR_VECTOR_FEATURES: tuple[str, ...] = SOURCE_FEATURES + TARGET_FEATURES + PAIR_FEATURES

BOOLEAN_FEATURES = frozenset({
    "is_non_functional",
    "has_feature_addition",
    "is_corrective",
    "is_merge",
    "is_preventive",
    "is_refactoring",
})

STAGE_DIMENSIONS = {
    1: tuple(DIMENSIONS),
    2: tuple(DIMENSIONS) + ("Pair",),
}

_DIM_OF = {f: d for d, names in DIMENSIONS.items() for f in names}
_DIM_OF.update({f: "Pair" for f in PAIR_FEATURES})

assert len(CHANGE_FEATURES) == 36
assert len(PAIR_VECTOR_FEATURES) == 82


def base_name(feature: str) -> str:
    for suffix in ("_source", "_target"):
        if feature.endswith(suffix) and feature[: -len(suffix)] in _DIM_OF:
            return feature[: -len(suffix)]
    return feature


def dimension_of(feature: str) -> str:
    return _DIM_OF[base_name(feature)]


def is_boolean(feature: str) -> bool:
    return base_name(feature) in BOOLEAN_FEATURES


def features_in_dimension(features, dimension: str) -> list[str]:
    return [f for f in features if dimension_of(f) == dimension]
