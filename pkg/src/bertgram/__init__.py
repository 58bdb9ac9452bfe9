"""Compiled reward indices for sequence-level reinforcement learning.

A reference corpus is condensed into two artifacts: a clipped n-gram
max-count table and a per-token-type centroid codebook over contextual
embeddings. Candidates are then scored against the artifacts alone, at a
cost that does not grow with the corpus, and the per-position rewards
drive a REINFORCE trainer with an entropy schedule.
"""

from .analysis import (
    AlignedItem,
    DiversityMetrics,
    NeighborHit,
    Perturbation,
    SensitivityMatrix,
    TTestResult,
    aligned_comparison,
    apply_perturbations,
    diversity_metrics,
    nearest_neighbors,
    perturb_plan,
    pooled_t_test,
    sensitivity_matrix,
)
from .corpus import (
    Corpus,
    LengthDistribution,
    Vocabulary,
    length_distribution,
    load_corpus,
    ngrams,
    save_corpus,
)
from .embeddings import (
    EmbeddedCorpus,
    EmbeddedSequence,
    embed_corpus,
    read_dump,
    synthetic_embed,
    write_dump,
)
from .errors import CorpusError, DataError, FormatError
from .index import (
    BertGramIndex,
    TypeCentroids,
    build_index,
    kmeans,
    nearest_centroid,
    partition_by_type,
    read_index,
    write_index,
)
from .ngram import (
    MaxCountTable,
    bleu,
    build_max_count_table,
    modified_precision,
    read_ngram_table,
    shaped_increments,
    write_ngram_table,
)
from .reward import (
    RewardBreakdown,
    exact_set_reward,
    indexed_reward,
    mixed_reward,
    normalize_length,
    pairwise_reward,
    rbf,
)
from .rl import (
    BOS,
    Episode,
    SampledSequence,
    TabularPolicy,
    TrainConfig,
    TraceRecord,
    entropy_schedule,
    pretrain_ml,
    reinforce_step,
    sample_sequence,
    train,
    write_trace,
)

__version__ = "0.1.0"
