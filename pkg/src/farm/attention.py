"""Multi-head attention blocks: self-, cross-, and target-attention.

All three are thin wrappers over one scaled dot-product core. No positional
encoding and no dropout/normalization; temporal signal is carried by the
recency-lag feature of the inputs. Every call site owns its projection
parameters under a distinct prefix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .numerics import Tensor

_MASK_LOGIT = -1e9  # effectively -inf after row-max subtraction


@dataclass(frozen=True)
class AttentionConfig:
    num_heads: int = 4
    model_dim: int = 64

    def __post_init__(self):
        if self.model_dim % self.num_heads != 0:
            raise ValueError(
                f"model_dim {self.model_dim} not divisible by num_heads {self.num_heads}"
            )

    @property
    def head_dim(self):
        return self.model_dim // self.num_heads


@dataclass
class AttentionTrace:
    """Attention weights kept for inspection/export.

    weights: [B, num_heads, Q_len, K_len]; rows over K sum to 1 except for
    queries whose every key is masked (those rows are all zero).
    """

    weights: np.ndarray

    def per_sample(self, i=0):
        return self.weights[i]

    def head_mean(self, i=0):
        return self.weights[i].mean(axis=0)


def add_attention_params(params, prefix, d_q, d_kv, cfg, rng):
    m = cfg.model_dim
    params.add(f"{prefix}.wq", nm.glorot(rng, d_q, m))
    params.add(f"{prefix}.wk", nm.glorot(rng, d_kv, m))
    params.add(f"{prefix}.wv", nm.glorot(rng, d_kv, m))
    params.add(f"{prefix}.wo", nm.glorot(rng, m, m))


def _as_batched(t):
    if len(t.shape) == 2:
        return nm.reshape(t, (1,) + tuple(t.shape)), True
    return t, False


def _split_heads(x, cfg):
    b, length, _ = x.shape
    x = nm.reshape(x, (b, length, cfg.num_heads, cfg.head_dim))
    return nm.transpose(x, (0, 2, 1, 3))  # [B, H, L, hd]


def mh_attention(params, prefix, q_in, k_in, v_in, cfg, key_mask=None):
    """Scaled dot-product attention with per-head 1/sqrt(head_dim) scaling.

    key_mask: optional [B, Lk] 0/1 array; masked keys get -inf logits, and
    samples with no valid key at all produce zero output rows.
    """
    q_in, squeeze = _as_batched(q_in)
    k_in, _ = _as_batched(k_in)
    v_in, _ = _as_batched(v_in)
    if k_in.shape[-2] < 1 or q_in.shape[-2] < 1:
        raise ValueError("attention needs at least one query and one key row")

    q = _split_heads(nm.matmul(q_in, params.get(f"{prefix}.wq")), cfg)
    k = _split_heads(nm.matmul(k_in, params.get(f"{prefix}.wk")), cfg)
    v = _split_heads(nm.matmul(v_in, params.get(f"{prefix}.wv")), cfg)

    scores = nm.mul(nm.matmul(q, nm.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(cfg.head_dim))
    if key_mask is not None:
        key_mask = np.asarray(key_mask, dtype=np.float64)
        bias = (key_mask - 1.0) * -_MASK_LOGIT  # 0 for valid, -1e9 for masked
        scores = nm.add(scores, Tensor(bias[:, None, None, :]))
    weights = nm.softmax_rows(scores)
    if key_mask is not None:
        has_valid = (key_mask.sum(axis=-1) > 0).astype(np.float64)
        weights = nm.mul(weights, Tensor(has_valid[:, None, None, None]))

    mixed = nm.matmul(weights, v)  # [B, H, Lq, hd]
    b, _, lq, _ = mixed.shape
    merged = nm.reshape(nm.transpose(mixed, (0, 2, 1, 3)), (b, lq, cfg.model_dim))
    out = nm.matmul(merged, params.get(f"{prefix}.wo"))
    trace = AttentionTrace(weights.data.copy())
    if squeeze:
        out = nm.reshape(out, tuple(out.shape[1:]))
    return out, trace


def self_attention(params, prefix, x, cfg, key_mask=None):
    return mh_attention(params, prefix, x, x, x, cfg, key_mask=key_mask)


def target_attention(params, prefix, candidate, seq, cfg, key_mask=None):
    """Single-query attention: the candidate item attends over a history."""
    return mh_attention(params, prefix, candidate, seq, seq, cfg, key_mask=key_mask)
