"""textmetric: desk-scale metric learning for text similarity.

Trains a small masked-language encoder so that angular distance between
pooled embeddings reflects item similarity, then ranks catalog items by the
summed element-wise distances and scores rankings against expert annotations.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .data import (
    AnnotationEntry,
    AnnotationSet,
    Item,
    SyntheticSpec,
    Tokenizer,
    generate_synthetic,
    load_annotations,
    load_catalog,
    write_annotations,
    write_catalog,
)
from .encoder import Encoder, EncoderConfig, EncoderOutput, TokenSequence, apply_masking
from .errors import (
    ContractViolationError,
    DegenerateVectorError,
    EvaluationError,
    IngestionError,
    MiningImpossibleError,
    TextMetricError,
    TrainingDivergenceError,
)
from .evaluation import (
    MetricReport,
    VariantResult,
    ablation_configs,
    compare_variants,
    evaluate,
    hit_ratio_at_k,
    mean_percentile_rank,
    mean_reciprocal_rank,
)
from .geometry import (
    ANGULAR,
    HALF_COSINE,
    angular_distance,
    angular_gradient,
    cosine_gradient,
    cosine_similarity,
)
from .inference import (
    CatalogEmbeddings,
    ItemEmbedding,
    RankedCandidate,
    embed_catalog,
    rank,
    rank_all,
    score,
)
from .losses import (
    LossBreakdown,
    PairLossConfig,
    TripletLossConfig,
    mlm_loss,
    pair_loss,
    total_loss,
    triplet_loss,
)
from .mining import BatchEmbeddings, item_of, mine_hard_negatives, sample_random_negatives
from .trainer import (
    LossVariant,
    TrainConfig,
    Trainer,
    TrainReport,
    Triplet,
    TripletBatch,
    load_train_config,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ANGULAR",
    "HALF_COSINE",
    "AnnotationEntry",
    "AnnotationSet",
    "BatchEmbeddings",
    "CatalogEmbeddings",
    "ContractViolationError",
    "DegenerateVectorError",
    "Encoder",
    "EncoderConfig",
    "EncoderOutput",
    "EvaluationError",
    "IngestionError",
    "Item",
    "ItemEmbedding",
    "LossBreakdown",
    "LossVariant",
    "MetricReport",
    "MiningImpossibleError",
    "PairLossConfig",
    "RankedCandidate",
    "SyntheticSpec",
    "TextMetricError",
    "TokenSequence",
    "Tokenizer",
    "TrainConfig",
    "TrainReport",
    "Trainer",
    "TrainingDivergenceError",
    "Triplet",
    "TripletBatch",
    "TripletLossConfig",
    "VariantResult",
    "ablation_configs",
    "angular_distance",
    "angular_gradient",
    "apply_masking",
    "compare_variants",
    "cosine_gradient",
    "cosine_similarity",
    "embed_catalog",
    "evaluate",
    "generate_synthetic",
    "hit_ratio_at_k",
    "item_of",
    "load_annotations",
    "load_catalog",
    "load_checkpoint",
    "load_train_config",
    "mean_percentile_rank",
    "mean_reciprocal_rank",
    "mine_hard_negatives",
    "mlm_loss",
    "pair_loss",
    "rank",
    "rank_all",
    "sample_random_negatives",
    "save_checkpoint",
    "score",
    "total_loss",
    "train",
    "triplet_loss",
    "write_annotations",
    "write_catalog",
]
