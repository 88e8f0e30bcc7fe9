"""Constrained text decoding with a discrete barrier-style filter."""

from .core import (
    PredictorConfig,
    Text,
    TokenDistribution,
    TokenId,
    Vocabulary,
    concat,
    kl_divergence,
    softmax_with_temperature,
)
from .engine import (
    MODES,
    GenerationRequest,
    GenerationResult,
    TokenSelector,
    TraceEntry,
    TraceRecord,
    generate,
    read_trace,
    select_token,
    write_trace,
)
from .errors import (
    BackendUnavailableError,
    CbfDecodeError,
    InfeasibleConstraintError,
    InfeasibleHorizonError,
    InvalidScoresError,
    InvalidTokenError,
    NumericInputError,
    ProtocolError,
    SpecFormatError,
    TraceFormatError,
    TrainingInputError,
    UnsafeStartError,
)
from .filter import (
    FilterConfig,
    FilterResult,
    filter_full,
    filter_relaxed,
    filter_topk,
    is_allowed,
    relaxed_projection,
    zero_and_renormalize,
)
from .harness import (
    ExperimentResult,
    ExperimentSpec,
    MetricsRow,
    PrefixSelection,
    emit_trajectory_data,
    parse_spec,
    run_experiment,
    select_prefixes,
)
from .lcf import (
    LCF,
    CachedLCF,
    ClassScores,
    ConstantLCF,
    LexiconLCF,
    ScoreLCF,
    from_class_scores,
    load_lexicon,
)
from .multistep import (
    CandidateStats,
    MultiStepConfig,
    TokenBlock,
    block_probability,
    blockwise_best_of_k_step,
    candidate_weights,
    multistep_step,
    sample_block,
)
from .predictor import (
    FixedPredictor,
    NGramModel,
    PagedPrediction,
    TokenPredictor,
    UniformPredictor,
    train_ngram,
)
from .remote import RemoteBackend, RemotePredictor, remote_score_lcf
from .toys import (
    adversarial_predictor,
    toy_lexicon_lcf,
    toy_ngram,
    toy_text,
    toy_vocabulary,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
