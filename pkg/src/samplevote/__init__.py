"""Sampling-and-voting ensembles for LLM agents, with a synthetic difficulty benchmark."""

from __future__ import annotations

from .backends import (
    BackendConfig,
    BackendError,
    Completion,
    CompletionRequest,
    HttpBackend,
    HttpConfig,
    ReplayBackend,
    SimAgentModel,
    SimulatedBackend,
    build_backend,
)
from .bleu import BleuParams, sentence_bleu
from .core import (
    Answer,
    RunRecord,
    Sample,
    SampleSet,
    SamplingParams,
    Task,
    ValidationError,
    VoteResult,
    canonical_rational,
    iter_records,
    load_tasks,
    validate_task,
    write_records,
    write_tasks,
)
from .ensemble import BLEU, FREQUENCY, SimilarityKind, run_vanilla, sample_phase, vote
from .extract import extract_answer
from .pipelines import (
    ZERO_SHOT_COT,
    ComposedMethod,
    HierarchySpec,
    StepFailure,
    run_composed,
    run_hierarchical,
    run_stepwise,
)
from .stats import curve, one_way_anova, plurality_oracle, relative_gain
from .synth import DegeneratePartition, SyntheticSpec, gain_matrix, generate, partition, sum_distribution

__all__ = [
    "Answer", "BLEU", "BackendConfig", "BackendError", "BleuParams", "ComposedMethod", "Completion",
    "CompletionRequest", "DegeneratePartition", "FREQUENCY", "HierarchySpec", "HttpBackend", "HttpConfig",
    "ReplayBackend", "RunRecord", "Sample", "SampleSet", "SamplingParams", "SimAgentModel", "SimilarityKind",
    "SimulatedBackend", "StepFailure", "SyntheticSpec", "Task", "ValidationError", "VoteResult", "ZERO_SHOT_COT",
    "build_backend", "canonical_rational", "curve", "extract_answer", "gain_matrix", "generate", "iter_records",
    "load_tasks", "one_way_anova", "partition", "plurality_oracle", "relative_gain", "run_composed",
    "run_hierarchical", "run_stepwise", "run_vanilla", "sample_phase", "sentence_bleu", "sum_distribution",
    "validate_task", "vote", "write_records", "write_tasks",
]
