"""Calibrated alternative explanations triaged by epistemic uncertainty."""
from .calibration import (
    ConformalPredictiveDistribution,
    IsotonicFit,
    ProbabilityInterval,
    VennAbers,
    build_cpd,
    cpd_interval_one_sided,
    cpd_interval_two_sided,
    cpd_median,
    cpd_threshold_prob,
    fit_isotonic,
    regularise,
    va_predict,
)
from .datasets import Dataset, DataSplit, load_csv, split, synth_classification, synth_regression
from .explainer import (
    CalibratedModel,
    Condition,
    Explanation,
    ExplanationMode,
    FeatureRule,
    add_conjunctions,
    calibrated_predict,
    discretize_feature,
    explain_alternatives,
    explain_factual,
    explain_many,
)
from .forest import ExternalScores, ForestParams, RandomForest, load_external_scores, score, train_forest
from .triage import (
    Category,
    TriagedRule,
    categorize,
    feasible,
    filter_category,
    filter_ensured,
    is_ensured,
    predicted_class_prob,
    rank_rules,
    rank_score,
    triage,
)

__version__ = "0.1.0"
