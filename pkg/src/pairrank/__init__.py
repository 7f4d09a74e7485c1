"""Tournament-style document ranking with a pluggable pairwise judge.

Pools of proposals are judged pair by pair (by a remote chat-completion model
or a deterministic simulator), aggregated into a win matrix, and scored with
the Bradley-Terry model. Rankings are evaluated against human orderings and
publication records, costed against traditional review, and complemented by
embedding-based similarity analysis.
"""

from .btmodel import BTScores, WinMatrix, aggregate, log_likelihood, mm_step, predict, solve_bt
from .corpus import (
    Corpus,
    Cycle,
    Proposal,
    PublicationCounts,
    PublicationRecord,
    load_corpus,
    publication_counts,
    text_digest,
    write_manifest,
)
from .costing import (
    CostBreakdown,
    CostParams,
    cost_curve,
    cost_ratios,
    crossover,
    totals,
    unit_costs,
)
from .errors import (
    CacheIntegrityError,
    JudgeUnavailableError,
    ManifestError,
    NotFoundError,
    PairRankError,
    TransportError,
    UndefinedMetricError,
    ValidationError,
    VerdictParseError,
)
from .evaluation import (
    CorrelationCurve,
    CurvePoint,
    CycleReport,
    PublicationMetricResult,
    cycle_report,
    m_dpub,
    outlier_exclusion_curve,
    spearman,
)
from .judge import (
    JudgeConfig,
    JudgeResult,
    Outcome,
    TokenUsage,
    Verdict,
    default_latents,
    judge_pair,
    parse_verdict,
    render_prompts,
    simulate_judge,
)
from .ranking import RankRow, RankTable, rank_cycle
from .similarity import (
    EmbedConfig,
    EmbeddingVector,
    SimilarityMatrix,
    cosine,
    embed_corpus,
    flag_pairs,
    similarity_matrix,
)
from .tournament import (
    ComparisonRecord,
    PairSchedule,
    build_schedule,
    cache_key,
    load_cache,
    run_tournament,
)

__version__ = "0.1.0"

__all__ = [
    "BTScores",
    "CacheIntegrityError",
    "ComparisonRecord",
    "CorrelationCurve",
    "Corpus",
    "CostBreakdown",
    "CostParams",
    "CurvePoint",
    "Cycle",
    "CycleReport",
    "EmbedConfig",
    "EmbeddingVector",
    "JudgeConfig",
    "JudgeResult",
    "JudgeUnavailableError",
    "ManifestError",
    "NotFoundError",
    "Outcome",
    "PairRankError",
    "PairSchedule",
    "Proposal",
    "PublicationCounts",
    "PublicationMetricResult",
    "PublicationRecord",
    "RankRow",
    "RankTable",
    "SimilarityMatrix",
    "TokenUsage",
    "TransportError",
    "UndefinedMetricError",
    "ValidationError",
    "Verdict",
    "VerdictParseError",
    "WinMatrix",
    "aggregate",
    "build_schedule",
    "cache_key",
    "cosine",
    "cost_curve",
    "cost_ratios",
    "crossover",
    "cycle_report",
    "default_latents",
    "embed_corpus",
    "flag_pairs",
    "judge_pair",
    "load_cache",
    "load_corpus",
    "log_likelihood",
    "m_dpub",
    "mm_step",
    "outlier_exclusion_curve",
    "parse_verdict",
    "predict",
    "publication_counts",
    "rank_cycle",
    "render_prompts",
    "run_tournament",
    "similarity_matrix",
    "simulate_judge",
    "solve_bt",
    "spearman",
    "text_digest",
    "totals",
    "unit_costs",
    "write_manifest",
]
