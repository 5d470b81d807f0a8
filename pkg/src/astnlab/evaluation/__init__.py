from .metrics import (
    MetricReport,
    RocCurve,
    binary_report,
    check_identities,
    pairwise_auc,
    roc_auc,
    youden_threshold,
)
from .model_eval import (
    TrialPair,
    discriminator_auc,
    evaluate_model,
    level_projections,
    pair_scores,
    predict,
    projection_rows,
    represent,
    sample_pairs,
)
from .pca import Projection, pca_project

__all__ = [
    "MetricReport", "Projection", "RocCurve", "TrialPair", "binary_report", "check_identities",
    "discriminator_auc", "evaluate_model", "level_projections", "pair_scores", "pairwise_auc", "pca_project",
    "predict", "projection_rows", "represent", "roc_auc", "sample_pairs", "youden_threshold",
]
