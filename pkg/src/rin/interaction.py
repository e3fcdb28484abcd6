"""Recurrent interaction layers: each layer feeds the previous predictions of
both tasks back through two gated cells, producing task-specific features and
a residual-fused update of the shared features.

With K = 0 the stack degenerates to the base heads applied directly to the
encoder output (the no-interaction ablation)."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError, ShapeError
from .heads import er_predict, rc_predict
from .numerics import (
    Tensor,
    add,
    concat,
    index_axis0,
    matmul,
    mul,
    reduce_max_rows,
    reshape,
    sigmoid,
    stack,
    tanh,
    transpose,
)


@dataclass
class GruParams:
    """Gate parameters for one interaction cell; each weight is
    [d_h x (d_h + d_y)] where d_y is the prediction width fed back in."""

    w_z: Tensor
    w_u: Tensor
    w_o: Tensor
    b_z: Tensor
    b_u: Tensor
    b_o: Tensor


@dataclass
class LayerState:
    """Recurrence carrier for one layer: shared features, the two task
    features (None at layer 0), and both prediction grids."""

    h: Tensor  # n x d_h
    h_e: Tensor | None
    h_r: Tensor | None
    y_e: Tensor  # n x 5
    y_r: Tensor  # n x n x l


def gru_cell(h: Tensor, y: Tensor, params: GruParams) -> Tensor:
    """z = sig(W_z(h++y)+b_z); u = sig(W_u(h++y)+b_u);
    cand = tanh(W_o((u*h)++y)+b_o); out = (1-z)*h + z*cand.

    Accepts a single row (1-D h and y) or a batch of rows (2-D)."""
    single = h.ndim == 1
    if single:
        h = reshape(h, (1, h.shape[0]))
        y = reshape(y, (1, y.shape[0]))
    if h.ndim != 2 or y.ndim != 2 or h.shape[0] != y.shape[0]:
        raise ShapeError(f"gru_cell row mismatch: h {h.shape} vs y {y.shape}")
    if h.shape[1] + y.shape[1] != params.w_z.shape[1]:
        raise ShapeError(
            f"gru_cell width mismatch: h {h.shape} ++ y {y.shape} "
            f"vs weight {params.w_z.shape}"
        )
    hy = concat(h, y, axis=1)
    z = sigmoid(add(matmul(hy, transpose(params.w_z)), params.b_z))
    u = sigmoid(add(matmul(hy, transpose(params.w_u)), params.b_u))
    uhy = concat(mul(u, h), y, axis=1)
    cand = tanh(add(matmul(uhy, transpose(params.w_o)), params.b_o))
    out = add(mul(1.0 - z, h), mul(z, cand))
    if single:
        out = reshape(out, (out.shape[1],))
    return out


def aggregate_relation_evidence(y_r: Tensor, i: int) -> Tensor:
    """Evidence vector for word i: elementwise max over j of y[i, j, :].
    Only pairs with i in first position participate; gradient flows to the
    argmax entries."""
    row = index_axis0(y_r, i)  # n x l
    out, _ = reduce_max_rows(row)
    return out


def interaction_layer(prev: LayerState, gru_e: GruParams, gru_r: GruParams,
                      interact_er: bool = True,
                      interact_rc: bool = True) -> tuple[Tensor, Tensor, Tensor]:
    """One recurrence step: both task features from the gated cells, then the
    residual fusion h_new = h_r + h_e + h_prev. The ablation flags drop the
    corresponding summand from the fusion (the features themselves are still
    computed and still drive that task's predictions)."""
    n = prev.h.shape[0]
    h_e = gru_cell(prev.h, prev.y_e, gru_e)
    evidence = stack([aggregate_relation_evidence(prev.y_r, i) for i in range(n)])
    h_r = gru_cell(prev.h, evidence, gru_r)
    h_new = prev.h
    if interact_er:
        h_new = add(h_new, h_e)
    if interact_rc:
        h_new = add(h_new, h_r)
    return h_e, h_r, h_new


def run_stack(h0: Tensor, k_layers: int, params, interact_er: bool = True,
              interact_rc: bool = True) -> tuple[Tensor, Tensor, list[LayerState]]:
    """Base predictions from the shared features, then K interaction layers,
    each re-predicting from its task features. Returns the layer-K prediction
    grids plus the full per-layer trace.

    `params` must expose gru_for_layer(k) -> (GruParams, GruParams) and
    heads_for_layer(k) -> (ErParams, RcParams); see training.ModelParams."""
    if k_layers < 0:
        raise ConfigError(f"layer count must be >= 0, got {k_layers}")
    er0, rc0 = params.heads_for_layer(0)
    y_e = er_predict(h0, er0)
    y_r = rc_predict(h0, rc0)
    state = LayerState(h=h0, h_e=None, h_r=None, y_e=y_e, y_r=y_r)
    trace = [state]
    for k in range(1, k_layers + 1):
        gru_e, gru_r = params.gru_for_layer(k)
        h_e, h_r, h_new = interaction_layer(
            state, gru_e, gru_r, interact_er=interact_er, interact_rc=interact_rc
        )
        er_k, rc_k = params.heads_for_layer(k)
        y_e = er_predict(h_e, er_k)
        y_r = rc_predict(h_r, rc_k)
        state = LayerState(h=h_new, h_e=h_e, h_r=h_r, y_e=y_e, y_r=y_r)
        trace.append(state)
    return state.y_e, state.y_r, trace
