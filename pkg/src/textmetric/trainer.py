"""End-to-end training: triplet assembly, masking, a shared forward pass over
all batch elements, negative selection, loss combination, and AdamW updates.

Six loss variants are supported. ``triplet_hard`` is the full method: margin
triplet loss over angular distance with in-batch hard negatives plus the
masked-token loss. The others switch exactly one ingredient: random negatives,
a hinge pair loss in its contrastive or cosine configuration, a cosine-derived
distance metric, or no masked-token loss.

Every source of randomness (parameter init, masking, batch shuffling, random
negatives) derives from the single run seed, so identical configs and inputs
give bit-identical checkpoints.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import math
import os
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import UNK_ID, Item, Tokenizer
from .encoder import BatchEncoding, Encoder, EncoderConfig, TokenSequence, apply_masking
from .errors import ContractViolationError, IngestionError, TrainingDivergenceError
from .geometry import ANGULAR, HALF_COSINE, cosine_gradient, cosine_similarity
from .losses import (
    CONTRASTIVE_PAIR_CONFIG,
    COSINE_PAIR_CONFIG,
    LossBreakdown,
    TripletLossConfig,
    mlm_loss_with_grad,
    pair_loss_with_grads,
    total_loss,
    triplet_loss_with_grads,
)
from .mining import BatchEmbeddings, mine_hard_negatives, sample_random_negatives


class LossVariant(str, enum.Enum):
    TRIPLET_HARD = "triplet_hard"
    TRIPLET_RANDOM = "triplet_random"
    CONTRASTIVE_PAIR = "contrastive_pair"
    COSINE_PAIR = "cosine_pair"
    TRIPLET_COSINE_METRIC = "triplet_cosine_metric"
    TRIPLET_NO_MLM = "triplet_no_mlm"


_PAIR_CONFIGS = {
    LossVariant.CONTRASTIVE_PAIR: CONTRASTIVE_PAIR_CONFIG,
    LossVariant.COSINE_PAIR: COSINE_PAIR_CONFIG,
}


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    steps: int = 2000
    learning_rate: float = 1e-3
    lambda_: float = 1.0
    margin: float = 0.1
    loss_variant: LossVariant = LossVariant.TRIPLET_HARD
    mask_rate: float = 0.15
    seed: int = 42
    encoder: EncoderConfig = EncoderConfig()

    def __post_init__(self) -> None:
        if self.batch_size < 2:
            raise ContractViolationError("batch_size must be >= 2")
        if self.steps < 0:
            raise ContractViolationError("steps must be >= 0")
        if self.learning_rate < 0.0:
            raise ContractViolationError("learning_rate must be >= 0")
        if self.lambda_ < 0.0:
            raise ContractViolationError("lambda_ must be >= 0")
        if not 0.0 <= self.margin <= 1.0:
            raise ContractViolationError("margin must be in [0, 1]")
        if not 0.0 <= self.mask_rate <= 1.0:
            raise ContractViolationError("mask_rate must be in [0, 1]")

    @property
    def mlm_enabled(self) -> bool:
        return self.loss_variant is not LossVariant.TRIPLET_NO_MLM

    @property
    def metric(self):
        if self.loss_variant is LossVariant.TRIPLET_COSINE_METRIC:
            return HALF_COSINE
        return ANGULAR


@dataclass(frozen=True)
class TripletBatch:
    """Anchor/positive token sequences per item; negatives are chosen after the
    forward pass, once pooled embeddings exist to mine against."""

    item_ids: tuple[str, ...]
    anchors: tuple[TokenSequence, ...]
    positives: tuple[TokenSequence, ...]

    def __post_init__(self) -> None:
        if not (len(self.item_ids) == len(self.anchors) == len(self.positives)):
            raise ContractViolationError("item_ids, anchors, and positives must be parallel")

    def __len__(self) -> int:
        return len(self.item_ids)

    def sequences(self) -> list[TokenSequence]:
        """All element sequences, interleaved to match mining's flat indexing."""
        return [s for pair in zip(self.anchors, self.positives) for s in pair]


@dataclass(frozen=True)
class Triplet:
    """A fully assembled training triplet, with the negative's provenance."""

    anchor: TokenSequence
    positive: TokenSequence
    negative: TokenSequence
    negative_source: str  # "mined" or "random"


def assemble_triplets(batch: TripletBatch, negative_indices, source: str) -> list[Triplet]:
    """Materialize Triplet records from a batch plus flat negative indices."""
    seqs = batch.sequences()
    return [
        Triplet(anchor=a, positive=p, negative=seqs[int(j)], negative_source=source)
        for a, p, j in zip(batch.anchors, batch.positives, negative_indices)
    ]


@dataclass
class TrainReport:
    series: list[LossBreakdown]
    checkpoint_path: str | None
    wall_seconds: float


class AdamW:
    """Adam moments with decoupled weight decay.

    Decay applies only to matrices and embeddings (ndim >= 2); biases and
    normalization parameters are left undecayed.
    """

    def __init__(self, learning_rate: float, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.01) -> None:
        self.learning_rate = learning_rate
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            g = grads[name]
            if name not in self._m:
                self._m[name] = np.zeros_like(p)
                self._v[name] = np.zeros_like(p)
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if p.ndim >= 2 and self.weight_decay:
                update = update + self.weight_decay * p
            p -= self.learning_rate * update


class Trainer:
    """Owns the model, tokenizer, optimizer, and RNG streams for one run."""

    def __init__(self, items: Sequence[Item], config: TrainConfig,
                 tokenizer: Tokenizer | None = None) -> None:
        items = list(items)
        if not items:
            raise IngestionError("training dataset is empty")
        if len(items) < config.batch_size:
            raise IngestionError(
                f"dataset has {len(items)} items but batch_size is {config.batch_size}"
            )
        self.items = items
        self.config = config
        if tokenizer is None:
            texts = [t for item in items for t in (item.title, item.description)]
            tokenizer = Tokenizer.fit(texts, config.encoder.vocab_size)
        self.tokenizer = tokenizer

        seed_seq = np.random.SeedSequence(config.seed)
        enc_entropy, mask_ss, shuffle_ss, negative_ss = seed_seq.spawn(4)
        enc_seed = config.encoder.seed
        if enc_seed is None:
            enc_seed = int(enc_entropy.generate_state(1)[0])
        self.encoder_config = dataclasses.replace(
            config.encoder, vocab_size=tokenizer.vocab_size, seed=enc_seed
        )
        self.model = Encoder(self.encoder_config)
        self._mask_rng = np.random.default_rng(mask_ss)
        self._shuffle_rng = np.random.default_rng(shuffle_ss)
        self._negative_rng = np.random.default_rng(negative_ss)
        self.optimizer = AdamW(config.learning_rate)
        self.step_index = 0

    # ------------------------------------------------------------------
    # Batch assembly
    # ------------------------------------------------------------------

    def _element_sequence(self, item: Item, text: str) -> TokenSequence:
        ids = self.tokenizer.encode(text)
        if not ids:
            # A text that normalizes to no words still needs an embedding;
            # a lone unknown token stands in for it.
            ids = [UNK_ID]
        ids = ids[: self.encoder_config.max_seq_len]
        return apply_masking(
            ids, self.config.mask_rate, self._mask_rng, self.encoder_config.vocab_size
        )

    def build_triplets(self, batch_items: Sequence[Item]) -> TripletBatch:
        """Tokenize and mask both elements of each item.

        The anchor is the item's title, the positive its description; the
        negative slot stays open until embeddings exist to select against.
        """
        if len(batch_items) < 2:
            raise ContractViolationError("a triplet batch needs at least 2 items")
        anchors = []
        positives = []
        for item in batch_items:
            if not item.title.strip() or not item.description.strip():
                raise IngestionError(f"item {item.item_id!r} has an empty textual element")
            anchors.append(self._element_sequence(item, item.title))
            positives.append(self._element_sequence(item, item.description))
        return TripletBatch(
            item_ids=tuple(item.item_id for item in batch_items),
            anchors=tuple(anchors),
            positives=tuple(positives),
        )

    # ------------------------------------------------------------------
    # One optimization step
    # ------------------------------------------------------------------

    def _select_negatives(self, embeddings: BatchEmbeddings) -> tuple[np.ndarray, str]:
        if self.config.loss_variant is LossVariant.TRIPLET_RANDOM:
            return sample_random_negatives(embeddings, self._negative_rng), "random"
        return mine_hard_negatives(embeddings, self.config.metric), "mined"

    def loss_and_grads(self, batch: TripletBatch) -> tuple[LossBreakdown, dict[str, np.ndarray]]:
        """Losses and parameter gradients for one batch, without updating."""
        cfg = self.config
        encoding: BatchEncoding = self.model.encode_batch(
            batch.sequences(), compute_mlm=cfg.mlm_enabled, want_cache=True
        )
        pooled = encoding.pooled
        embeddings = BatchEmbeddings(
            anchors=pooled[0::2], positives=pooled[1::2], item_ids=batch.item_ids
        )
        negatives, _ = self._select_negatives(embeddings)

        n_items = len(batch)
        d_pooled = np.zeros_like(pooled)
        per_triplet = np.zeros(n_items)
        pair_cfg = _PAIR_CONFIGS.get(cfg.loss_variant)
        for i in range(n_items):
            a_row, p_row, n_row = 2 * i, 2 * i + 1, int(negatives[i])
            a, p_vec, n_vec = pooled[a_row], pooled[p_row], pooled[n_row]
            if pair_cfg is not None:
                s_p = cosine_similarity(a, p_vec)
                s_n = cosine_similarity(a, n_vec)
                loss_i, d_sp, d_sn = pair_loss_with_grads(s_p, s_n, pair_cfg)
                d_pooled[a_row] += (d_sp * cosine_gradient(a, p_vec)
                                    + d_sn * cosine_gradient(a, n_vec)) / n_items
                d_pooled[p_row] += d_sp * cosine_gradient(p_vec, a) / n_items
                d_pooled[n_row] += d_sn * cosine_gradient(n_vec, a) / n_items
            else:
                loss_i, g_a, g_p, g_n = triplet_loss_with_grads(
                    a, p_vec, n_vec, TripletLossConfig(cfg.margin), cfg.metric
                )
                d_pooled[a_row] += g_a / n_items
                d_pooled[p_row] += g_p / n_items
                d_pooled[n_row] += g_n / n_items
            per_triplet[i] = loss_i
        metric_loss = float(per_triplet.mean())

        if cfg.mlm_enabled:
            mlm, d_scores = mlm_loss_with_grad(encoding.mlm_scores, encoding.mlm_targets)
        else:
            mlm, d_scores = 0.0, np.zeros_like(encoding.mlm_scores)
        breakdown = total_loss(mlm, metric_loss, cfg.lambda_)
        grads = self.model.backward(encoding, cfg.lambda_ * d_pooled, d_scores)
        return breakdown, grads

    def train_step(self, batch: TripletBatch) -> LossBreakdown:
        """One forward/backward/update round on a prepared batch."""
        breakdown, grads = self.loss_and_grads(batch)
        if not math.isfinite(breakdown.total):
            raise TrainingDivergenceError(self.step_index, breakdown)
        self.optimizer.step(self.model.params, grads)
        self.step_index += 1
        return breakdown

    # ------------------------------------------------------------------
    # Full run
    # ------------------------------------------------------------------

    def _batches(self):
        n = len(self.items)
        size = self.config.batch_size
        while True:
            order = self._shuffle_rng.permutation(n)
            for start in range(0, n - size + 1, size):
                yield [self.items[j] for j in order[start : start + size]]

    def run(self, checkpoint_path: str | os.PathLike | None = None,
            metrics_path: str | os.PathLike | None = None) -> TrainReport:
        from .checkpoint import save_checkpoint

        start = time.perf_counter()
        series: list[LossBreakdown] = []
        batches = self._batches()
        for _ in range(self.config.steps):
            series.append(self.train_step(self.build_triplets(next(batches))))
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, self.model, self.tokenizer, self.config.seed)
        if metrics_path is not None:
            write_metrics_csv(series, metrics_path, seed=self.config.seed)
        wall = time.perf_counter() - start
        return TrainReport(
            series=series,
            checkpoint_path=None if checkpoint_path is None else os.fspath(checkpoint_path),
            wall_seconds=wall,
        )


def train(items: Sequence[Item], config: TrainConfig,
          checkpoint_path: str | os.PathLike | None = None,
          metrics_path: str | os.PathLike | None = None) -> TrainReport:
    """Train a fresh model over shuffled batches; see :class:`Trainer`."""
    return Trainer(items, config).run(checkpoint_path, metrics_path)


def write_metrics_csv(series: Sequence[LossBreakdown], path_or_file, seed: int | None = None) -> None:
    """Per-step loss series as CSV (step,mlm,metric,total), seed echoed in a
    leading comment line."""
    lines = []
    if seed is not None:
        lines.append(f"# seed={seed}")
    lines.append("step,mlm,metric,total")
    for i, b in enumerate(series):
        lines.append(f"{i},{b.mlm:.6f},{b.metric:.6f},{b.total:.6f}")
    payload = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(payload)
    else:
        from .checkpoint import atomic_write_bytes

        atomic_write_bytes(path_or_file, payload.encode("utf-8"))


# ---------------------------------------------------------------------------
# Config file round trip
# ---------------------------------------------------------------------------

_TRAIN_KEYS = {
    "batch_size", "steps", "learning_rate", "lambda", "margin",
    "loss_variant", "mask_rate", "seed", "encoder",
}
_ENCODER_KEYS = {
    "vocab_size", "d_model", "n_layers", "n_heads", "max_seq_len", "seed",
    "init_output_bias",
}


def train_config_to_dict(config: TrainConfig) -> dict:
    raw = dataclasses.asdict(config)
    raw["lambda"] = raw.pop("lambda_")
    raw["loss_variant"] = config.loss_variant.value
    return raw


def train_config_from_dict(raw: dict, where: str = "config") -> TrainConfig:
    if not isinstance(raw, dict):
        raise IngestionError(f"{where}: expected a JSON object")
    unknown = set(raw) - _TRAIN_KEYS
    if unknown:
        raise IngestionError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = dict(raw)
    if "lambda" in kwargs:
        kwargs["lambda_"] = kwargs.pop("lambda")
    if "loss_variant" in kwargs:
        try:
            kwargs["loss_variant"] = LossVariant(kwargs["loss_variant"])
        except ValueError:
            valid = ", ".join(v.value for v in LossVariant)
            raise IngestionError(
                f"{where}: unknown loss_variant {kwargs['loss_variant']!r} (expected one of {valid})"
            ) from None
    if "encoder" in kwargs:
        enc = kwargs["encoder"]
        if not isinstance(enc, dict):
            raise IngestionError(f"{where}: encoder must be an object")
        unknown = set(enc) - _ENCODER_KEYS
        if unknown:
            raise IngestionError(f"{where}: unknown encoder keys {sorted(unknown)}")
        try:
            kwargs["encoder"] = EncoderConfig(**enc)
        except ContractViolationError as exc:
            raise IngestionError(f"{where}: invalid encoder config: {exc}") from None
    try:
        return TrainConfig(**kwargs)
    except (TypeError, ContractViolationError) as exc:
        raise IngestionError(f"{where}: invalid config: {exc}") from None


def load_train_config(path: str | os.PathLike) -> TrainConfig:
    """Read a TrainConfig from a JSON file; unknown keys are errors."""
    path = os.fspath(path)
    with open(path, encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as exc:
            raise IngestionError(f"{path}: malformed JSON: {exc}") from exc
    return train_config_from_dict(raw, where=path)
