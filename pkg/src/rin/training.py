"""End-to-end optimization: configuration, parameter initialization, the
training loop with best-on-dev checkpointing, checkpoint persistence, and the
layer-count sweep harness.

Determinism contract: (seed, config, corpus) fully determines the parameter
trajectory. A single Rng drives, in order, pretrained-row fill-in (when an
embedding file is used), parameter initialization, then per-epoch shuffling
and dropout masks.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import evaluation
from .corpus import (
    Batch,
    RelationSchema,
    Sentence,
    Vocabulary,
    build_vocab,
    load_pretrained_embeddings,
    make_batches,
)
from .encoder import EncoderParams, LstmDirParams
from .errors import ConfigError, DataError, NumericError
from .heads import ErParams, RcParams, N_TAGS, er_loss, rc_loss, total_loss
from .interaction import GruParams
from .numerics import (
    AdamState,
    Rng,
    Tensor,
    adam_step,
    add,
    backward,
    clip_grads,
    zero_grads,
)

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    """All run-controlling knobs. Defaults follow the headline configuration
    for the larger newswire corpus under exact-match selection."""

    k_layers: int = 7
    dropout: float = 0.1
    lr: float = 1e-3
    batch_size: int = 50
    epochs: int = 100
    seed: int = 1
    d_word: int = 100
    d_pos: int = 10
    d_hidden: int = 100
    d_pair: int | None = None  # None: matches d_hidden
    use_pos: bool = True
    interact_er: bool = True
    interact_rc: bool = True
    tie_layers: bool = True
    threshold: float = 0.5
    anchor_policy: str = "last"
    eval_mode: str = "exact"
    min_freq: int = 1
    embeddings_path: str | None = None
    schema_path: str | None = None
    positive_weight: float = 1.0
    clip_norm: float | None = None

    def __post_init__(self):
        if self.d_pair is None:
            self.d_pair = self.d_hidden
        self.validate()

    def validate(self) -> None:
        if self.k_layers < 0:
            raise ConfigError(f"k_layers must be >= 0, got {self.k_layers}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.lr < 0:
            raise ConfigError(f"lr must be non-negative, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        for name in ("d_word", "d_pos", "d_hidden", "d_pair", "min_freq"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.d_hidden % 2 != 0:
            raise ConfigError(f"d_hidden must be even, got {self.d_hidden}")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.anchor_policy not in ("last", "first"):
            raise ConfigError(f"anchor_policy must be 'last' or 'first'")
        if self.eval_mode not in ("partial", "exact"):
            raise ConfigError(f"eval_mode must be 'partial' or 'exact'")
        if self.positive_weight <= 0:
            raise ConfigError("positive_weight must be positive")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive when set")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ModelParams:
    """Every learnable tensor. GRU and head parameters are shared across
    layers when tied (the default); with tie_layers=false each interaction
    layer k=1..K owns a GRU pair and each layer k=0..K owns a head pair."""

    encoder: EncoderParams
    gru_e: list[GruParams]
    gru_r: list[GruParams]
    er: list[ErParams]
    rc: list[RcParams]
    tied: bool = True

    def gru_for_layer(self, k: int) -> tuple[GruParams, GruParams]:
        idx = 0 if self.tied else k - 1
        return self.gru_e[idx], self.gru_r[idx]

    def heads_for_layer(self, k: int) -> tuple[ErParams, RcParams]:
        idx = 0 if self.tied else k
        return self.er[idx], self.rc[idx]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out: list[tuple[str, Tensor]] = [("embed.word", self.encoder.word_emb)]
        if self.encoder.pos_emb is not None:
            out.append(("embed.pos", self.encoder.pos_emb))
        for direction, p in (("fw", self.encoder.fw), ("bw", self.encoder.bw)):
            for gate in ("w_i", "w_f", "w_o", "w_g", "b_i", "b_f", "b_o", "b_g"):
                out.append((f"lstm.{direction}.{gate}", getattr(p, gate)))
        for which, groups in (("gru_e", self.gru_e), ("gru_r", self.gru_r)):
            for layer, g in enumerate(groups):
                prefix = which if self.tied else f"{which}.{layer + 1}"
                for name in ("w_z", "w_u", "w_o", "b_z", "b_u", "b_o"):
                    out.append((f"{prefix}.{name}", getattr(g, name)))
        for layer, e in enumerate(self.er):
            prefix = "er" if self.tied else f"er.{layer}"
            out.append((f"{prefix}.w_e", e.w_e))
            out.append((f"{prefix}.b_e", e.b_e))
        for layer, r in enumerate(self.rc):
            prefix = "rc" if self.tied else f"rc.{layer}"
            out.append((f"{prefix}.w_m", r.w_m))
            out.append((f"{prefix}.w_r", r.w_r))
            out.append((f"{prefix}.b_r", r.b_r))
        return out

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]


def _glorot(rng: Rng, rows: int, cols: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, (rows, cols))


def _param(data, requires_grad=True) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _init_lstm_dir(rng: Rng, half: int, d_in: int) -> LstmDirParams:
    # Forget-gate bias starts at 1.0; a standard aid on tiny corpora.
    ws = {g: _param(_glorot(rng, half, d_in + half)) for g in ("i", "f", "o", "g")}
    return LstmDirParams(
        w_i=ws["i"], w_f=ws["f"], w_o=ws["o"], w_g=ws["g"],
        b_i=_param(np.zeros(half)),
        b_f=_param(np.ones(half)),
        b_o=_param(np.zeros(half)),
        b_g=_param(np.zeros(half)),
    )


def _init_gru(rng: Rng, d_h: int, d_y: int) -> GruParams:
    return GruParams(
        w_z=_param(_glorot(rng, d_h, d_h + d_y)),
        w_u=_param(_glorot(rng, d_h, d_h + d_y)),
        w_o=_param(_glorot(rng, d_h, d_h + d_y)),
        b_z=_param(np.zeros(d_h)),
        b_u=_param(np.zeros(d_h)),
        b_o=_param(np.zeros(d_h)),
    )


def init_params(config: TrainConfig, vocab: Vocabulary, rng: Rng,
                n_relations: int,
                pretrained: Tensor | None = None) -> ModelParams:
    """Glorot-uniform weights, zero biases (LSTM forget gate 1.0), embeddings
    U(-0.1, 0.1) unless pretrained rows are supplied; <pad> rows stay zero.

    Draw order: word embedding (skipped when pretrained), POS embedding,
    forward then backward LSTM gates (i, f, o, g), per-layer GRU pairs
    (entity cell then relation cell; gates z, u, o), then per-layer heads.
    """
    if pretrained is not None:
        if pretrained.shape != (vocab.n_tokens, config.d_word):
            raise ConfigError(
                f"pretrained embeddings shape {pretrained.shape} does not "
                f"match vocabulary {vocab.n_tokens} x d_word {config.d_word}"
            )
        word = pretrained
        word.requires_grad = True
    else:
        mat = rng.uniform(-0.1, 0.1, (vocab.n_tokens, config.d_word))
        mat[0] = 0.0
        word = _param(mat)
    pos_emb = None
    if config.use_pos:
        pmat = rng.uniform(-0.1, 0.1, (vocab.n_pos, config.d_pos))
        pmat[0] = 0.0
        pos_emb = _param(pmat)
    d_in = config.d_word + (config.d_pos if config.use_pos else 0)
    half = config.d_hidden // 2
    encoder = EncoderParams(
        word_emb=word,
        pos_emb=pos_emb,
        fw=_init_lstm_dir(rng, half, d_in),
        bw=_init_lstm_dir(rng, half, d_in),
    )
    # No interaction layers, no interaction parameters (K = 0 is exactly the
    # no-interaction ablation).
    if config.k_layers == 0:
        n_gru = 0
    else:
        n_gru = 1 if config.tie_layers else config.k_layers
    n_heads = 1 if config.tie_layers else config.k_layers + 1
    gru_e = [_init_gru(rng, config.d_hidden, N_TAGS) for _ in range(n_gru)]
    gru_r = [_init_gru(rng, config.d_hidden, n_relations) for _ in range(n_gru)]
    er = [
        ErParams(w_e=_param(_glorot(rng, N_TAGS, config.d_hidden)),
                 b_e=_param(np.zeros(N_TAGS)))
        for _ in range(n_heads)
    ]
    rc = [
        RcParams(w_m=_param(_glorot(rng, config.d_pair, 2 * config.d_hidden)),
                 w_r=_param(_glorot(rng, n_relations, config.d_pair)),
                 b_r=_param(np.zeros(n_relations)))
        for _ in range(n_heads)
    ]
    return ModelParams(encoder=encoder, gru_e=gru_e, gru_r=gru_r, er=er,
                       rc=rc, tied=config.tie_layers)


# ---------------------------------------------------------------------------
# Checkpoint persistence
# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    config: TrainConfig
    vocab: Vocabulary
    schema: RelationSchema
    tensors: dict[str, np.ndarray]  # name -> float64 array, insertion order
    dev_f1: float = -1.0
    epoch: int = 0

    @classmethod
    def snapshot(cls, params: ModelParams, config: TrainConfig,
                 vocab: Vocabulary, schema: RelationSchema,
                 dev_f1: float = -1.0, epoch: int = 0) -> "Checkpoint":
        arrays = {name: t.data.copy() for name, t in params.named_parameters()}
        return cls(config, vocab, schema, arrays, dev_f1, epoch)

    def to_params(self) -> ModelParams:
        params = init_params(self.config, self.vocab, Rng(0),
                             n_relations=self.schema.size)
        named = dict(params.named_parameters())
        if set(named) != set(self.tensors):
            raise DataError("checkpoint tensor names do not match model structure")
        for name, arr in self.tensors.items():
            if named[name].data.shape != arr.shape:
                raise DataError(
                    f"checkpoint tensor {name} has shape {arr.shape}, "
                    f"expected {named[name].data.shape}"
                )
            named[name].data = arr.copy()
        return params


def _vocab_to_lists(vocab: Vocabulary) -> dict:
    tokens = [None] * vocab.n_tokens
    for tok, i in vocab.token_to_id.items():
        tokens[i] = tok
    pos = [None] * vocab.n_pos
    for tag, i in vocab.pos_to_id.items():
        pos[i] = tag
    return {"tokens": tokens, "pos": pos}


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Directory layout: manifest.json (version, config, vocab, schema,
    tensor table) plus params.bin (little-endian float64 payload,
    concatenated in manifest order)."""
    os.makedirs(path, exist_ok=True)
    table = []
    offset = 0
    with open(os.path.join(path, "params.bin"), "wb") as fh:
        for name, arr in ckpt.tensors.items():
            raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
            table.append({"name": name, "shape": list(arr.shape),
                          "offset": offset})
            fh.write(raw)
            offset += len(raw)
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "config": ckpt.config.to_dict(),
        "vocab": _vocab_to_lists(ckpt.vocab),
        "schema": list(ckpt.schema.labels),
        "dev_f1": ckpt.dev_f1,
        "epoch": ckpt.epoch,
        "tensors": table,
    }
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)


def load_checkpoint(path) -> Checkpoint:
    """Bit-exact inverse of save_checkpoint; rejects version mismatches and
    truncated or non-exhaustive payloads."""
    try:
        with open(os.path.join(path, "manifest.json"), encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"unreadable checkpoint manifest: {exc}") from exc
    version = manifest.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise DataError(
            f"checkpoint format version {version} incompatible with "
            f"supported version {CHECKPOINT_VERSION}"
        )
    config = TrainConfig.from_dict(manifest["config"])
    vocab = Vocabulary(
        token_to_id={t: i for i, t in enumerate(manifest["vocab"]["tokens"])},
        pos_to_id={t: i for i, t in enumerate(manifest["vocab"]["pos"])},
    )
    schema = RelationSchema(tuple(manifest["schema"]))
    with open(os.path.join(path, "params.bin"), "rb") as fh:
        payload = fh.read()
    tensors: dict[str, np.ndarray] = {}
    expected = 0
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if entry["offset"] != expected:
            raise DataError("checkpoint tensor table has gaps or overlaps")
        if entry["offset"] + nbytes > len(payload):
            raise DataError("checkpoint payload truncated")
        arr = np.frombuffer(
            payload, dtype="<f8", count=count, offset=entry["offset"]
        ).reshape(shape)
        tensors[entry["name"]] = arr.astype(np.float64)
        expected = entry["offset"] + nbytes
    if expected != len(payload):
        raise DataError("checkpoint payload has trailing bytes")
    return Checkpoint(config, vocab, schema, tensors,
                      dev_f1=manifest.get("dev_f1", -1.0),
                      epoch=manifest.get("epoch", 0))


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def sentence_loss(params: ModelParams, config: TrainConfig, batch: Batch,
                  row: int, mode: str, rng: Rng | None) -> Tensor:
    n = batch.length(row)
    token_ids = batch.token_ids[row, :n].tolist()
    pos_ids = batch.pos_ids[row, :n].tolist()
    y_e, y_r = evaluation.model_outputs(params, config, token_ids, pos_ids,
                                        mode=mode, rng=rng)
    mask = [True] * n
    le = er_loss(y_e, batch.gold_tags[row, :n].tolist(), mask)
    lr = rc_loss(y_r, batch.gold_pair_targets[row], mask,
                 positive_weight=config.positive_weight)
    return add(le, lr)


def corpus_loss(params: ModelParams, config: TrainConfig,
                batches: Sequence[Batch], mode: str = "eval",
                rng: Rng | None = None) -> float:
    """Total loss over pre-built batches without updating anything."""
    total = 0.0
    for batch in batches:
        pieces = [sentence_loss(params, config, batch, r, mode, rng)
                  for r in range(batch.size)]
        total += float(total_loss(pieces).data)
    return total


@dataclass
class TrainResult:
    best: Checkpoint
    log: list[dict] = field(default_factory=list)
    params: ModelParams | None = None


def train(train_corpus: Sequence[Sentence], dev_corpus: Sequence[Sentence],
          schema: RelationSchema, config: TrainConfig,
          log_path=None) -> TrainResult:
    """Optimize on train_corpus, evaluating dev F1 (under config.eval_mode)
    after every epoch and retaining the checkpoint with the highest dev F1
    (ties keep the earlier epoch)."""
    rng = Rng(config.seed)
    vocab = build_vocab_for(train_corpus, config)
    pretrained = None
    if config.embeddings_path:
        pretrained, _ = load_pretrained_embeddings(
            config.embeddings_path, vocab, config.d_word, rng
        )
    params = init_params(config, vocab, rng, n_relations=schema.size,
                         pretrained=pretrained)
    tensors = params.tensors()
    adam = AdamState(tensors)
    best = Checkpoint.snapshot(params, config, vocab, schema)
    log: list[dict] = []
    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, config.epochs + 1):
            batches = make_batches(train_corpus, vocab, schema,
                                   config.batch_size, rng, shuffle=True)
            epoch_loss = 0.0
            for batch in batches:
                pieces = []
                for row in range(batch.size):
                    piece = sentence_loss(params, config, batch, row,
                                          "train", rng)
                    if not np.isfinite(piece.data):
                        raise NumericError(
                            "non-finite loss at sentence index "
                            f"{batch.orig_indices[row]} (epoch {epoch})"
                        )
                    pieces.append(piece)
                batch_total = total_loss(pieces)
                backward(batch_total)
                if config.clip_norm is not None:
                    clip_grads(tensors, config.clip_norm)
                adam_step(tensors, adam, config.lr)
                zero_grads(tensors)
                epoch_loss += float(batch_total.data)
            prf = evaluation.evaluate_corpus(params, config, vocab, schema,
                                             dev_corpus, config.eval_mode)
            entry = {
                "epoch": epoch,
                "train_loss": epoch_loss,
                "dev_p": prf.precision,
                "dev_r": prf.recall,
                "dev_f1": prf.f1,
            }
            log.append(entry)
            if log_fh:
                log_fh.write(json.dumps(entry) + "\n")
                log_fh.flush()
            if prf.f1 > best.dev_f1:
                best = Checkpoint.snapshot(params, config, vocab, schema,
                                           dev_f1=prf.f1, epoch=epoch)
    finally:
        if log_fh:
            log_fh.close()
    return TrainResult(best=best, log=log, params=params)


def build_vocab_for(corpus: Sequence[Sentence], config: TrainConfig) -> Vocabulary:
    return build_vocab(corpus, min_freq=config.min_freq)


def probe_params(config: TrainConfig, vocab: Vocabulary, n_relations: int,
                 seed: int) -> ModelParams:
    """Parameter draw for gradient verification, not training: embeddings and
    biases are redrawn at O(1) scale so that no derivative component sinks
    below the finite-difference noise floor (roughly |loss| * eps_machine /
    (2 * eps)). The training init deliberately starts embeddings at 0.1 scale
    and biases at zero, which leaves a few components with true gradients
    under that floor and makes the relative-error metric meaningless there."""
    params = init_params(config, vocab, Rng(seed), n_relations=n_relations)
    r = Rng(seed + 1_000_003)
    params.encoder.word_emb.data = r.uniform(-1.0, 1.0,
                                             params.encoder.word_emb.shape)
    if params.encoder.pos_emb is not None:
        params.encoder.pos_emb.data = r.uniform(-1.0, 1.0,
                                                params.encoder.pos_emb.shape)
    for name, t in params.named_parameters():
        if name.rsplit(".", 1)[-1].startswith("b"):
            t.data = r.uniform(-0.3, 0.3, t.shape)
    return params


def sweep_k(train_corpus: Sequence[Sentence], dev_corpus: Sequence[Sentence],
            schema: RelationSchema, config: TrainConfig,
            k_values: Sequence[int], seeds: Sequence[int]) -> list[dict]:
    """Train once per (K, seed); report mean and standard deviation of the
    best dev F1 per K."""
    if not k_values or not seeds:
        raise ConfigError("sweep needs at least one K value and one seed")
    rows = []
    for k in k_values:
        f1s = []
        for seed in seeds:
            cfg = dataclasses.replace(config, k_layers=k, seed=seed)
            result = train(train_corpus, dev_corpus, schema, cfg)
            f1s.append(result.best.dev_f1)
        rows.append({
            "k": int(k),
            "mean_f1": float(np.mean(f1s)),
            "std_f1": float(np.std(f1s)),
            "f1s": [float(v) for v in f1s],
        })
    return rows
