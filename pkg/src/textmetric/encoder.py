"""A small masked-language encoder: token+position embeddings, a stack of
pre-norm self-attention blocks, mean pooling to one vector per sequence, and a
vocabulary-score head at masked positions.

Forward and backward passes are written directly in numpy. The backward pass
returns a gradient for every trainable parameter (zeros for parameters the
computation never touched), which lets the whole objective be finite-difference
checked without an autograd framework.

Everything is float64 and deterministic: the same config, seed, and input
always produce bit-identical parameters and outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import erf

from .data import MASK_ID, N_SPECIAL, PAD_ID
from .errors import ContractViolationError

LN_EPS = 1e-5
INIT_SCALE = 0.02
_NEG_INF = -1e30  # finite attention mask value; exp() underflows to exactly 0.0


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int = 1000
    d_model: int = 32
    n_layers: int = 2
    n_heads: int = 4
    max_seq_len: int = 64
    # None means "derive from the training run seed"; set explicitly to pin
    # the initialization independently of the run.
    seed: int | None = None
    # Constant added to the final-normalization bias at init. Zero for normal
    # training; a positive value starts all pooled vectors in a common
    # positive-orthant direction, which pins every pairwise cosine above zero.
    init_output_bias: float = 0.0

    def __post_init__(self) -> None:
        if self.vocab_size <= N_SPECIAL:
            raise ContractViolationError(f"vocab_size must exceed {N_SPECIAL}")
        for name in ("d_model", "n_layers", "n_heads", "max_seq_len"):
            if getattr(self, name) <= 0:
                raise ContractViolationError(f"{name} must be positive")
        if self.d_model % self.n_heads != 0:
            raise ContractViolationError(
                f"n_heads ({self.n_heads}) must divide d_model ({self.d_model})"
            )


@dataclass(frozen=True)
class TokenSequence:
    """Tokenized, optionally masked text with the bookkeeping the masked-token
    loss needs: which positions were selected and what they originally held."""

    token_ids: tuple[int, ...]
    mask_positions: tuple[int, ...] = ()
    original_ids: tuple[int, ...] = ()
    attention_length: int = field(default=-1)

    def __post_init__(self) -> None:
        if self.attention_length == -1:
            object.__setattr__(self, "attention_length", len(self.token_ids))
        if self.attention_length != len(self.token_ids) or self.attention_length < 1:
            raise ContractViolationError("attention_length must equal len(token_ids) and be >= 1")
        if len(self.mask_positions) != len(self.original_ids):
            raise ContractViolationError("one original id is required per mask position")
        if list(self.mask_positions) != sorted(set(self.mask_positions)):
            raise ContractViolationError("mask_positions must be sorted and unique")
        if self.mask_positions and not all(0 <= p < self.attention_length for p in self.mask_positions):
            raise ContractViolationError("mask positions must fall inside the attended prefix")

    @classmethod
    def from_ids(cls, ids: Sequence[int]) -> "TokenSequence":
        return cls(token_ids=tuple(int(i) for i in ids))


@dataclass(frozen=True)
class EncoderOutput:
    """Final-layer states, their mean, and vocabulary scores at masked positions."""

    token_states: np.ndarray  # (attention_length, d_model)
    pooled: np.ndarray        # (d_model,)
    mlm_scores: np.ndarray    # (n_masked, vocab_size)


def apply_masking(
    token_ids: Sequence[int],
    mask_rate: float,
    rng: np.random.Generator,
    vocab_size: int,
    replace_probs: tuple[float, float, float] = (0.8, 0.1, 0.1),
) -> TokenSequence:
    """Independently select non-special positions at ``mask_rate`` and perturb them.

    A selected position becomes the mask token, a random regular token, or
    stays unchanged, with the given probabilities; its original id is recorded
    either way so the loss can score it. Random draws are consumed in a fixed
    count regardless of outcomes, so a shared generator stays reproducible.
    """
    if not 0.0 <= mask_rate <= 1.0:
        raise ContractViolationError(f"mask_rate must be in [0, 1], got {mask_rate}")
    p_mask, p_random, p_keep = replace_probs
    if min(p_mask, p_random, p_keep) < 0.0 or abs(p_mask + p_random + p_keep - 1.0) > 1e-12:
        raise ContractViolationError(f"replace_probs must be non-negative and sum to 1, got {replace_probs}")
    ids = np.asarray(list(token_ids), dtype=np.int64)
    n = ids.shape[0]
    select_draw = rng.random(n)
    bucket_draw = rng.random(n)
    random_ids = (
        rng.integers(N_SPECIAL, vocab_size, size=n) if vocab_size > N_SPECIAL
        else np.full(n, MASK_ID, dtype=np.int64)
    )
    selected = (select_draw < mask_rate) & (ids >= N_SPECIAL)
    new_ids = ids.copy()
    positions: list[int] = []
    originals: list[int] = []
    for pos in np.flatnonzero(selected):
        positions.append(int(pos))
        originals.append(int(ids[pos]))
        if bucket_draw[pos] < p_mask:
            new_ids[pos] = MASK_ID
        elif bucket_draw[pos] < p_mask + p_random:
            new_ids[pos] = random_ids[pos]
        # else: keep the original token; the position is still scored.
    return TokenSequence(
        token_ids=tuple(int(i) for i in new_ids),
        mask_positions=tuple(positions),
        original_ids=tuple(originals),
    )


def _param_spec(cfg: EncoderConfig) -> list[tuple[str, tuple[int, ...], str]]:
    """Ordered (name, shape, init kind) for every trainable parameter."""
    d, ff = cfg.d_model, 4 * cfg.d_model
    spec: list[tuple[str, tuple[int, ...], str]] = [
        ("tok_emb", (cfg.vocab_size, d), "normal"),
        ("pos_emb", (cfg.max_seq_len, d), "normal"),
    ]
    for i in range(cfg.n_layers):
        p = f"layers.{i}."
        spec += [
            (p + "ln1.g", (d,), "ones"), (p + "ln1.b", (d,), "zeros"),
            (p + "attn.wq", (d, d), "normal"), (p + "attn.bq", (d,), "zeros"),
            (p + "attn.wk", (d, d), "normal"), (p + "attn.bk", (d,), "zeros"),
            (p + "attn.wv", (d, d), "normal"), (p + "attn.bv", (d,), "zeros"),
            (p + "attn.wo", (d, d), "normal"), (p + "attn.bo", (d,), "zeros"),
            (p + "ln2.g", (d,), "ones"), (p + "ln2.b", (d,), "zeros"),
            (p + "mlp.w1", (d, ff), "normal"), (p + "mlp.b1", (ff,), "zeros"),
            (p + "mlp.w2", (ff, d), "normal"), (p + "mlp.b2", (d,), "zeros"),
        ]
    spec += [
        ("lnf.g", (d,), "ones"), ("lnf.b", (d,), "output_bias"),
        ("mlm.w", (d, cfg.vocab_size), "normal"), ("mlm.b", (cfg.vocab_size,), "zeros"),
    ]
    return spec


def init_params(cfg: EncoderConfig) -> dict[str, np.ndarray]:
    """Seeded scaled-normal initialization (deviation 0.02) of all parameters."""
    if cfg.seed is None:
        raise ContractViolationError("encoder seed is unset; set it explicitly or train via Trainer")
    rng = np.random.default_rng(cfg.seed)
    params: dict[str, np.ndarray] = {}
    for name, shape, kind in _param_spec(cfg):
        if kind == "normal":
            params[name] = rng.normal(0.0, INIT_SCALE, size=shape)
        elif kind == "ones":
            params[name] = np.ones(shape)
        elif kind == "output_bias":
            params[name] = np.full(shape, float(cfg.init_output_bias))
        else:
            params[name] = np.zeros(shape)
    return params


def _layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv)


def _layer_norm_backward(dy, g, cache):
    xhat, inv = cache
    axes = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axis=axes)
    db = dy.sum(axis=axes)
    dxhat = dy * g
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _gelu(x):
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def _gelu_grad(x):
    cdf = 0.5 * (1.0 + erf(x / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return cdf + x * pdf


def _split_heads(x, n_heads):
    b, l, d = x.shape
    return x.reshape(b, l, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, l, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, l, h * dh)


class BatchEncoding:
    """Outputs of one batched forward pass, plus the cache backward() needs.

    ``mlm_scores`` stacks the score rows of every sequence in batch order
    (within a sequence, mask-position order); ``mlm_targets`` holds the
    matching original token ids; ``mlm_slices`` maps each sequence to its row
    range.
    """

    def __init__(self, pooled, token_states, att_lens, mlm_scores, mlm_targets, mlm_slices, cache):
        self.pooled = pooled
        self.token_states = token_states
        self.att_lens = att_lens
        self.mlm_scores = mlm_scores
        self.mlm_targets = mlm_targets
        self.mlm_slices = mlm_slices
        self._cache = cache

    def output_for(self, index: int) -> EncoderOutput:
        length = int(self.att_lens[index])
        lo, hi = self.mlm_slices[index]
        return EncoderOutput(
            token_states=self.token_states[index, :length].copy(),
            pooled=self.pooled[index].copy(),
            mlm_scores=self.mlm_scores[lo:hi].copy(),
        )


class Encoder:
    """The shared model applied to anchors, positives, and negatives alike.

    One parameter set serves every role; whoever needs a triplet encoded runs
    the same instance three times (or once over a batch).
    """

    def __init__(self, config: EncoderConfig, params: dict[str, np.ndarray] | None = None) -> None:
        self.config = config
        if params is None:
            params = init_params(config)
        else:
            expected = {name: shape for name, shape, _ in _param_spec(config)}
            got = {name: arr.shape for name, arr in params.items()}
            if expected != got:
                raise ContractViolationError("parameter set does not match the encoder config")
        self.params = params

    # ------------------------------------------------------------------
    # Forward
    # ------------------------------------------------------------------

    def _validate(self, seqs: Sequence[TokenSequence]) -> None:
        cfg = self.config
        if not seqs:
            raise ContractViolationError("cannot encode an empty batch")
        for i, seq in enumerate(seqs):
            if seq.attention_length > cfg.max_seq_len:
                raise ContractViolationError(
                    f"sequence {i} has length {seq.attention_length} > max_seq_len {cfg.max_seq_len}"
                )
            ids = np.asarray(seq.token_ids)
            if ids.min() < 0 or ids.max() >= cfg.vocab_size:
                raise ContractViolationError(
                    f"sequence {i} contains token ids outside [0, {cfg.vocab_size})"
                )

    def encode(self, seq: TokenSequence) -> EncoderOutput:
        """Encode one sequence; deterministic given (sequence, parameters)."""
        return self.encode_batch([seq]).output_for(0)

    def encode_batch(
        self, seqs: Sequence[TokenSequence], *, compute_mlm: bool = True, want_cache: bool = False
    ) -> BatchEncoding:
        self._validate(seqs)
        p = self.params
        cfg = self.config
        batch = len(seqs)
        att_lens = np.array([s.attention_length for s in seqs], dtype=np.int64)
        length = int(att_lens.max())
        ids = np.full((batch, length), PAD_ID, dtype=np.int64)
        for i, seq in enumerate(seqs):
            ids[i, : att_lens[i]] = seq.token_ids
        valid = np.arange(length)[None, :] < att_lens[:, None]

        x = p["tok_emb"][ids] + p["pos_emb"][:length][None, :, :]
        scale = 1.0 / math.sqrt(cfg.d_model // cfg.n_heads)
        key_mask = valid[:, None, None, :]
        layer_caches = []
        for i in range(cfg.n_layers):
            pref = f"layers.{i}."
            h1, ln1_cache = _layer_norm(x, p[pref + "ln1.g"], p[pref + "ln1.b"])
            q = _split_heads(h1 @ p[pref + "attn.wq"] + p[pref + "attn.bq"], cfg.n_heads)
            k = _split_heads(h1 @ p[pref + "attn.wk"] + p[pref + "attn.bk"], cfg.n_heads)
            v = _split_heads(h1 @ p[pref + "attn.wv"] + p[pref + "attn.bv"], cfg.n_heads)
            scores = np.where(key_mask, q @ k.transpose(0, 1, 3, 2) * scale, _NEG_INF)
            scores -= scores.max(axis=-1, keepdims=True)
            probs = np.exp(scores)
            probs /= probs.sum(axis=-1, keepdims=True)
            ctx = _merge_heads(probs @ v)
            att_out = ctx @ p[pref + "attn.wo"] + p[pref + "attn.bo"]
            x_mid = x + att_out
            h2, ln2_cache = _layer_norm(x_mid, p[pref + "ln2.g"], p[pref + "ln2.b"])
            u = h2 @ p[pref + "mlp.w1"] + p[pref + "mlp.b1"]
            act = _gelu(u)
            x = x_mid + act @ p[pref + "mlp.w2"] + p[pref + "mlp.b2"]
            layer_caches.append((h1, ln1_cache, q, k, v, probs, ctx, h2, ln2_cache, u, act))
        token_states, lnf_cache = _layer_norm(x, p["lnf.g"], p["lnf.b"])
        pooled = (token_states * valid[:, :, None]).sum(axis=1) / att_lens[:, None]

        if compute_mlm:
            rows_b = np.array(
                [i for i, s in enumerate(seqs) for _ in s.mask_positions], dtype=np.int64
            )
            rows_pos = np.array(
                [pos for s in seqs for pos in s.mask_positions], dtype=np.int64
            )
            mlm_targets = np.array(
                [t for s in seqs for t in s.original_ids], dtype=np.int64
            )
            hidden = token_states[rows_b, rows_pos]
            mlm_scores = hidden @ p["mlm.w"] + p["mlm.b"]
        else:
            rows_b = rows_pos = mlm_targets = np.zeros(0, dtype=np.int64)
            hidden = np.zeros((0, cfg.d_model))
            mlm_scores = np.zeros((0, cfg.vocab_size))
        mlm_slices = []
        start = 0
        for s in seqs:
            count = len(s.mask_positions) if compute_mlm else 0
            mlm_slices.append((start, start + count))
            start += count

        cache = None
        if want_cache:
            cache = {
                "ids": ids, "valid": valid, "att_lens": att_lens, "layers": layer_caches,
                "lnf_cache": lnf_cache, "token_states": token_states,
                "rows_b": rows_b, "rows_pos": rows_pos, "hidden": hidden, "scale": scale,
                "length": length, "batch": batch,
            }
        return BatchEncoding(pooled, token_states, att_lens, mlm_scores, mlm_targets, mlm_slices, cache)

    # ------------------------------------------------------------------
    # Backward
    # ------------------------------------------------------------------

    def backward(
        self, encoding: BatchEncoding, d_pooled: np.ndarray, d_mlm_scores: np.ndarray
    ) -> dict[str, np.ndarray]:
        """Gradients of every parameter given upstream gradients on the outputs.

        ``encoding`` must come from ``encode_batch(..., want_cache=True)``.
        Parameters the forward pass never touched get exact zero gradients.
        """
        cache = encoding._cache
        if cache is None:
            raise ContractViolationError("backward requires encode_batch(..., want_cache=True)")
        p = self.params
        cfg = self.config
        d_pooled = np.asarray(d_pooled, dtype=np.float64)
        d_mlm_scores = np.asarray(d_mlm_scores, dtype=np.float64)
        if d_pooled.shape != encoding.pooled.shape:
            raise ContractViolationError(
                f"d_pooled shape {d_pooled.shape} != pooled shape {encoding.pooled.shape}"
            )
        if d_mlm_scores.shape != encoding.mlm_scores.shape:
            raise ContractViolationError(
                f"d_mlm_scores shape {d_mlm_scores.shape} != mlm_scores shape {encoding.mlm_scores.shape}"
            )
        grads = {name: np.zeros_like(arr) for name, arr in p.items()}
        valid = cache["valid"]
        att_lens = cache["att_lens"]

        # Pooling spreads its gradient evenly over the attended prefix.
        d_ts = valid[:, :, None] * (d_pooled / att_lens[:, None])[:, None, :]
        if d_mlm_scores.shape[0]:
            rows_b, rows_pos, hidden = cache["rows_b"], cache["rows_pos"], cache["hidden"]
            grads["mlm.w"] += hidden.T @ d_mlm_scores
            grads["mlm.b"] += d_mlm_scores.sum(axis=0)
            np.add.at(d_ts, (rows_b, rows_pos), d_mlm_scores @ p["mlm.w"].T)

        dx, dg, db = _layer_norm_backward(d_ts, p["lnf.g"], cache["lnf_cache"])
        grads["lnf.g"] += dg
        grads["lnf.b"] += db

        scale = cache["scale"]
        for i in reversed(range(cfg.n_layers)):
            pref = f"layers.{i}."
            (h1, ln1_cache, q, k, v, probs, ctx, h2, ln2_cache, u, act) = cache["layers"][i]
            # MLP sublayer: x = x_mid + gelu(h2 @ w1 + b1) @ w2 + b2
            d_act = dx @ p[pref + "mlp.w2"].T
            grads[pref + "mlp.w2"] += np.einsum("blf,bld->fd", act, dx)
            grads[pref + "mlp.b2"] += dx.sum(axis=(0, 1))
            d_u = d_act * _gelu_grad(u)
            d_h2 = d_u @ p[pref + "mlp.w1"].T
            grads[pref + "mlp.w1"] += np.einsum("bld,blf->df", h2, d_u)
            grads[pref + "mlp.b1"] += d_u.sum(axis=(0, 1))
            d_x_mid, dg, db = _layer_norm_backward(d_h2, p[pref + "ln2.g"], ln2_cache)
            grads[pref + "ln2.g"] += dg
            grads[pref + "ln2.b"] += db
            d_x_mid = d_x_mid + dx
            # Attention sublayer: x_mid = x_in + (softmax(qk^T) v) @ wo + bo
            d_ctx = d_x_mid @ p[pref + "attn.wo"].T
            grads[pref + "attn.wo"] += np.einsum("bld,ble->de", ctx, d_x_mid)
            grads[pref + "attn.bo"] += d_x_mid.sum(axis=(0, 1))
            d_ctx_h = _split_heads(d_ctx, cfg.n_heads)
            d_probs = d_ctx_h @ v.transpose(0, 1, 3, 2)
            d_v = probs.transpose(0, 1, 3, 2) @ d_ctx_h
            d_scores = (d_probs - (d_probs * probs).sum(axis=-1, keepdims=True)) * probs
            d_q = d_scores @ k * scale
            d_k = d_scores.transpose(0, 1, 3, 2) @ q * scale
            d_h1 = np.zeros_like(h1)
            for w_name, b_name, d_head in (
                ("attn.wq", "attn.bq", d_q), ("attn.wk", "attn.bk", d_k), ("attn.wv", "attn.bv", d_v)
            ):
                d_flat = _merge_heads(d_head)
                grads[pref + w_name] += np.einsum("bld,ble->de", h1, d_flat)
                grads[pref + b_name] += d_flat.sum(axis=(0, 1))
                d_h1 += d_flat @ p[pref + w_name].T
            d_x_in, dg, db = _layer_norm_backward(d_h1, p[pref + "ln1.g"], ln1_cache)
            grads[pref + "ln1.g"] += dg
            grads[pref + "ln1.b"] += db
            dx = d_x_in + d_x_mid

        ids = cache["ids"]
        np.add.at(grads["tok_emb"], ids.reshape(-1), dx.reshape(-1, cfg.d_model))
        grads["pos_emb"][: cache["length"]] += dx.sum(axis=0)
        return grads
