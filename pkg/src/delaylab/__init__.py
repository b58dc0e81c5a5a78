"""Delayed-feedback conversion modeling laboratory.

Synthetic click streams with known conversion rates and delay law,
ingestion policies that trade label freshness against label noise by
duplicating samples, corrected training objectives for the resulting
biased streams, and a streaming harness that scores everything against
ground truth.
"""
from .core import (
    ClickEvent,
    ConfigError,
    DomainError,
    FeatureVector,
    InvalidSampleError,
    ObservedSample,
    SampleKind,
    WindowConfig,
    classify_ingestions,
    correct_label,
)
from .harness import ExperimentConfig, StreamReport, TrainConfig, compare_runs, stream_run
from .ingest import LogSchema, ParseError, QuantileBucketizer, read_log, write_log
from .losses import (
    BaselineRatios,
    CorrectionWeights,
    baseline_coeffs,
    baseline_loss,
    baseline_weights,
    bidefuse_coeffs,
    ce_coeffs,
    defuse_coeffs,
    defuse_loss,
    ideal_loss,
    q_negative,
    q_positive,
    z_from_masses,
    z_from_survival,
    z_oracle,
)
from .metrics import MetricsReport, aggregate, auc, evaluate, nll, pr_auc, relative_improvement
from .pipelines import (
    Mechanism,
    build_bidefuse_table,
    build_observed_stream,
    build_stream_table,
    ingestion_count,
)
from .synthgen import (
    CALIBRATED_DELAY_MIXTURE,
    ClickTable,
    DelayMixture,
    GenConfig,
    GroundTruthModel,
    build_model,
    delay_cdf,
    fit_delay_mixture,
    generate,
    generate_table,
    oracle_rates,
    true_cvr,
)

__version__ = "0.1.0"

__all__ = [
    "BaselineRatios",
    "CALIBRATED_DELAY_MIXTURE",
    "ClickEvent",
    "ClickTable",
    "ConfigError",
    "CorrectionWeights",
    "DelayMixture",
    "DomainError",
    "ExperimentConfig",
    "FeatureVector",
    "GenConfig",
    "GroundTruthModel",
    "InvalidSampleError",
    "LogSchema",
    "Mechanism",
    "MetricsReport",
    "ObservedSample",
    "ParseError",
    "QuantileBucketizer",
    "SampleKind",
    "StreamReport",
    "TrainConfig",
    "WindowConfig",
    "aggregate",
    "auc",
    "baseline_coeffs",
    "baseline_loss",
    "baseline_weights",
    "bidefuse_coeffs",
    "build_bidefuse_table",
    "build_model",
    "build_observed_stream",
    "build_stream_table",
    "ce_coeffs",
    "classify_ingestions",
    "compare_runs",
    "correct_label",
    "defuse_coeffs",
    "defuse_loss",
    "delay_cdf",
    "evaluate",
    "fit_delay_mixture",
    "generate",
    "generate_table",
    "ideal_loss",
    "ingestion_count",
    "nll",
    "oracle_rates",
    "pr_auc",
    "q_negative",
    "q_positive",
    "read_log",
    "relative_improvement",
    "stream_run",
    "true_cvr",
    "write_log",
    "z_from_masses",
    "z_from_survival",
    "z_oracle",
]
