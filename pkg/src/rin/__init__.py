"""Joint entity and relation extraction with recurrent task interaction.

A shared BiLSTM encoder feeds entity-recognition and relation-classification
heads; K interaction layers exchange each task's predictions with the other
through gated cells before re-predicting. Everything runs on a self-contained
float64 reverse-mode autodiff core whose hot recurrence kernels are
numba-compiled by default (RIN_BACKEND=numpy selects the pure-numpy path).
"""

from .backend import ACTIVE as active_backend
from .corpus import (
    Batch,
    EntitySpan,
    GoldTriple,
    RelationSchema,
    Sentence,
    Vocabulary,
    bioes_decode,
    bioes_encode,
    build_vocab,
    load_corpus,
    load_pretrained_embeddings,
    make_batches,
    save_corpus,
)
from .encoder import EncoderParams, bilstm_forward, embed
from .errors import (
    ConfigError,
    ContractError,
    DataError,
    NumericError,
    RinError,
    ShapeError,
)
from .evaluation import (
    PRF,
    Prediction,
    decode_entities,
    decode_triples,
    evaluate_corpus,
    exact_match_score,
    micro_aggregate,
    partial_match_score,
    predict_corpus,
    predict_sentence,
)
from .heads import ErParams, RcParams, er_loss, er_predict, rc_loss, rc_predict, total_loss
from .interaction import (
    GruParams,
    LayerState,
    aggregate_relation_evidence,
    gru_cell,
    interaction_layer,
    run_stack,
)
from .numerics import (
    AdamState,
    Rng,
    Tensor,
    adam_step,
    backward,
    dropout,
    grad_check,
    zero_grads,
)
from .training import (
    Checkpoint,
    ModelParams,
    TrainConfig,
    init_params,
    load_checkpoint,
    save_checkpoint,
    sweep_k,
    train,
)

__version__ = "0.1.0"
