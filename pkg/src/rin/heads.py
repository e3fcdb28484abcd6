"""Task classifiers and their training losses."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ShapeError
from .numerics import (
    Tensor,
    accumulate,
    add,
    clamped_log,
    custom_op,
    gather_rows,
    matmul,
    mul,
    neg,
    relu,
    reshape,
    sigmoid,
    softmax_last,
    sum_all,
    transpose,
)

N_TAGS = 5


@dataclass
class ErParams:
    w_e: Tensor  # 5 x d_h
    b_e: Tensor  # 5


@dataclass
class RcParams:
    w_m: Tensor  # d_m x 2*d_h
    w_r: Tensor  # l x d_m
    b_r: Tensor  # l


def er_predict(h_feat: Tensor, params: ErParams) -> Tensor:
    """Per-word tag distribution: softmax(W_e h + b_e), rows sum to 1."""
    return softmax_last(add(matmul(h_feat, transpose(params.w_e)), params.b_e))


def pair_concat(h: Tensor) -> Tensor:
    """All ordered word pairs: row i*n+j of the output is h_i ++ h_j."""
    if h.ndim != 2:
        raise ShapeError(f"pair_concat expects 2-D features, got {h.shape}")
    n, d = h.shape
    left = np.repeat(h.data, n, axis=0)
    right = np.tile(h.data, (n, 1))

    def bwd(g):
        if h.requires_grad:
            accumulate(h, g[:, :d].reshape(n, n, d).sum(axis=1))
            accumulate(h, g[:, d:].reshape(n, n, d).sum(axis=0))

    return custom_op(np.concatenate((left, right), axis=1), (h,), bwd)


def rc_predict(h_feat: Tensor, params: RcParams) -> Tensor:
    """Per ordered pair (i, j): sigmoid(W_r relu(W_m (h_i ++ h_j)) + b_r),
    returned as an n x n x l grid. Pairs are ordered, so the grid is not
    symmetric; the diagonal (self pairs) is scored but never gold."""
    n = h_feat.shape[0]
    pairs = pair_concat(h_feat)
    m = relu(matmul(pairs, transpose(params.w_m)))
    logits = add(matmul(m, transpose(params.w_r)), params.b_r)
    return reshape(sigmoid(logits), (n, n, params.b_r.shape[0]))


def er_loss(y_e: Tensor, gold_tags: Sequence[int], mask: Sequence[bool]) -> Tensor:
    """Sum over unmasked words of -log y[word, gold_tag], log clamped at
    1e-12. Sum, not mean: totals stay invariant under batch regrouping."""
    picked = gather_rows(y_e, list(gold_tags))
    weights = Tensor(np.asarray(mask, dtype=np.float64))
    return neg(sum_all(mul(clamped_log(picked), weights)))


def rc_loss(y_r: Tensor, gold_pairs: Iterable[tuple[int, int, int]],
            mask: Sequence[bool], positive_weight: float = 1.0) -> Tensor:
    """Binary cross-entropy summed over every unmasked ordered pair and every
    relation type; target 1 exactly on gold (i, j, type) entries.

    positive_weight scales the positive terms (default 1.0 leaves the plain
    sum untouched)."""
    n = y_r.shape[0]
    n_rel = y_r.shape[2]
    target = np.zeros((n, n, n_rel))
    for (i, j, t) in gold_pairs:
        target[i, j, t] = 1.0
    mask_vec = np.asarray(mask, dtype=np.float64)
    pair_mask = np.einsum("i,j->ij", mask_vec, mask_vec)[:, :, None]
    pair_mask = np.broadcast_to(pair_mask, target.shape)
    pos = Tensor(positive_weight * target * pair_mask)
    neg_w = Tensor((1.0 - target) * pair_mask)
    term = add(mul(pos, clamped_log(y_r)),
               mul(neg_w, clamped_log(1.0 - y_r)))
    return neg(sum_all(term))


def total_loss(sentence_losses: Sequence[Tensor]) -> Tensor:
    """Sum of per-sentence (ER + RC) losses; plain sum semantics."""
    if not sentence_losses:
        return Tensor(0.0)
    out = sentence_losses[0]
    for piece in sentence_losses[1:]:
        out = add(out, piece)
    return out
