"""Concept-token models: training, evaluation, and token surgery.

Thin wrapper over the compiled extension; every public name comes from
the C++ core.
"""

from ._core import (  # noqa: F401
    DisentanglementReport,
    ExperimentConfig,
    RepresentationTable,
    SceneReport,
    StepStats,
    Trainer,
    TrainingRun,
    ari_foreground,
    build_representation_table,
    canonical_config,
    config_hash_hex,
    evaluate_disentanglement,
    evaluate_scene,
    export_miniscene,
    export_minishapes,
    gradcheck,
    interpolate_slot,
    load_config,
    minishapes_labels,
    msc_score,
    parse_config,
    recombine,
    render_miniscene,
    render_minishapes,
    run_training,
    swap_and_decode,
    validate_config,
)

__all__ = [
    "DisentanglementReport",
    "ExperimentConfig",
    "RepresentationTable",
    "SceneReport",
    "StepStats",
    "Trainer",
    "TrainingRun",
    "ari_foreground",
    "build_representation_table",
    "canonical_config",
    "config_hash_hex",
    "evaluate_disentanglement",
    "evaluate_scene",
    "export_miniscene",
    "export_minishapes",
    "gradcheck",
    "interpolate_slot",
    "load_config",
    "minishapes_labels",
    "msc_score",
    "parse_config",
    "recombine",
    "render_miniscene",
    "render_minishapes",
    "run_training",
    "swap_and_decode",
    "validate_config",
]
