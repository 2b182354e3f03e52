"""Semi-supervised co-training toolkit for adverse-drug-reaction span
extraction from short social-media posts."""

from adrx.confidence import (
    DIVIDE_BY_K,
    GEOMETRIC_MEAN,
    ScoredSample,
    score_distribution,
    score_pool,
    score_sample,
)
from adrx.corpus import (
    AnnotatedSequence,
    Corpus,
    Label,
    Lexicon,
    Span,
    labels_to_spans,
    lexicon_filter,
    load_labeled,
    load_lexicon,
    load_unlabeled,
    pad,
    preprocess,
    spans_to_labels,
)
from adrx.cotrain import (
    CotrainConfig,
    CotrainResult,
    CotrainState,
    IterationRecord,
    format_log_table,
    run_cotraining,
)
from adrx.embedding import (
    EmbeddingTable,
    ViewSpec,
    embed_batch,
    embed_tokens,
    load_embedding_table,
)
from adrx.errors import ConfigError, DataFormatError
from adrx.evaluation import (
    FoldSummary,
    MatchReport,
    approx_match,
    adr_spans,
    combine_reports,
    corpus_report,
    evaluate_run,
    exact_match,
    kfold_split,
)
from adrx.synth import SynthConfig, generate, write_synth
from adrx.transducer import (
    TrainConfig,
    TrainResult,
    TransducerParams,
    decode,
    fit,
    forward,
    forward_batch,
    gradient,
    init_params,
    load_checkpoint,
    loss,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
