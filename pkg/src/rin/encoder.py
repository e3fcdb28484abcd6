"""Input representation (word/POS embedding lookup with input dropout) and
the BiLSTM that produces the shared per-word features both tasks consume."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from . import kernels
from .errors import ContractError
from .numerics import (
    Rng,
    Tensor,
    accumulate,
    concat,
    custom_op,
    dropout,
    flip_rows,
    take_rows,
)


@dataclass
class LstmDirParams:
    """One direction's gate parameters; each weight is [h x (d_in + h)] with
    h = d_hidden / 2. Gate order everywhere: input, forget, output, cell."""

    w_i: Tensor
    w_f: Tensor
    w_o: Tensor
    w_g: Tensor
    b_i: Tensor
    b_f: Tensor
    b_o: Tensor
    b_g: Tensor


@dataclass
class EncoderParams:
    word_emb: Tensor  # |V| x d_w
    pos_emb: Tensor | None  # |P| x d_p, None when POS input is disabled
    fw: LstmDirParams
    bw: LstmDirParams

    @property
    def d_in(self) -> int:
        d = self.word_emb.shape[1]
        if self.pos_emb is not None:
            d += self.pos_emb.shape[1]
        return d


def embed(token_ids: Sequence[int], pos_ids: Sequence[int],
          params: EncoderParams, rate: float, mode: str,
          rng: Rng | None) -> Tensor:
    """Per-word embedding rows, word and POS concatenated, then input
    dropout. With pos_emb disabled the POS half is omitted entirely."""
    x = take_rows(params.word_emb, token_ids)
    if params.pos_emb is not None:
        if len(pos_ids) != len(token_ids):
            raise ContractError("token and POS id sequences differ in length")
        x = concat(x, take_rows(params.pos_emb, pos_ids), axis=1)
    return dropout(x, rate, mode, rng)


def _packed(p: LstmDirParams) -> tuple[Tensor, Tensor]:
    w = concat(concat(p.w_i, p.w_f, axis=0), concat(p.w_o, p.w_g, axis=0), axis=0)
    b = concat(concat(p.b_i, p.b_f, axis=0), concat(p.b_o, p.b_g, axis=0), axis=0)
    return w, b


def lstm_direction(x: Tensor, p: LstmDirParams) -> Tensor:
    """One LSTM sweep over x[n, d_in] as a single fused graph node backed by
    the kernel pair on the active backend."""
    w, b = _packed(p)
    h_out, hs, cs, gates, tanhc = kernels.lstm_forward(x.data, w.data, b.data)

    def bwd(g):
        dx, dw, db = kernels.lstm_backward(x.data, w.data, hs, cs, gates,
                                           tanhc, g)
        accumulate(x, dx)
        accumulate(w, dw)
        accumulate(b, db)

    return custom_op(h_out, (x, w, b), bwd)


def bilstm_forward(x: Tensor, params: EncoderParams) -> Tensor:
    """Shared features H[n, d_hidden]: left-to-right and right-to-left LSTM
    passes from zero states, concatenated per position."""
    h_fw = lstm_direction(x, params.fw)
    h_bw = flip_rows(lstm_direction(flip_rows(x), params.bw))
    return concat(h_fw, h_bw, axis=1)
