"""Decoding model outputs into entities and triples, and scoring them under
the partial-match and exact-match protocols with micro-averaged P/R/F1.

Partial match: a predicted (subj_anchor, relation, obj_anchor) is correct iff
the same anchor triple is gold. Exact match additionally requires the
predicted spans containing both anchors to equal the gold spans exactly; a
predicted anchor lying in no predicted span can never be exact-correct.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import BIOES_TAGS, EntitySpan, RelationSchema, Sentence, Vocabulary, bioes_decode
from .encoder import bilstm_forward, embed
from .errors import ConfigError
from .interaction import run_stack
from .numerics import Rng, Tensor


@dataclass
class Prediction:
    """Decoded spans plus thresholded scored triples keyed
    (subj_anchor, relation, obj_anchor)."""

    spans: list[EntitySpan]
    triples: dict[tuple[int, str, int], float]

    def triple_keys(self) -> set[tuple[int, str, int]]:
        return set(self.triples)

    def span_containing(self, i: int) -> EntitySpan | None:
        for s in self.spans:
            if s.contains(i):
                return s
        return None


@dataclass
class PRF:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2.0 * p * r / (p + r) if (p + r) else 0.0


def decode_entities(y_e, anchor_policy: str = "last") -> list[EntitySpan]:
    """Argmax tag per word (ties resolve to the lowest tag index in the fixed
    B, I, O, E, S order), then span decoding with repair."""
    probs = y_e.data if isinstance(y_e, Tensor) else np.asarray(y_e)
    tags = [BIOES_TAGS[i] for i in np.argmax(probs, axis=1)]
    return bioes_decode(tags, anchor_policy)


def decode_triples(y_r, threshold: float,
                   schema: RelationSchema) -> dict[tuple[int, str, int], float]:
    """Emit (i, rel, j) for every grid entry >= threshold with i != j."""
    if not 0.0 < threshold < 1.0:
        raise ConfigError(f"threshold must lie in (0, 1), got {threshold}")
    grid = y_r.data if isinstance(y_r, Tensor) else np.asarray(y_r)
    out: dict[tuple[int, str, int], float] = {}
    hits = np.argwhere(grid >= threshold)
    for i, j, t in hits:
        if i == j:
            continue
        out[(int(i), schema.labels[int(t)], int(j))] = float(grid[i, j, t])
    return out


def partial_match_score(pred: Prediction, gold: Sentence) -> PRF:
    gold_keys = gold.gold_triple_keys()
    pred_keys = pred.triple_keys()
    tp = len(pred_keys & gold_keys)
    return PRF(tp=tp, fp=len(pred_keys) - tp, fn=len(gold_keys) - tp)


def exact_match_score(pred: Prediction, gold: Sentence) -> PRF:
    """Anchor triple must be gold AND both predicted spans must equal the
    corresponding gold spans (start, end)."""
    gold_keys = gold.gold_triple_keys()
    tp = 0
    for key in pred.triple_keys():
        if key not in gold_keys:
            continue
        subj, _, obj = key
        if _spans_agree(pred, gold, subj) and _spans_agree(pred, gold, obj):
            tp += 1
    return PRF(tp=tp, fp=len(pred.triples) - tp, fn=len(gold_keys) - tp)


def _spans_agree(pred: Prediction, gold: Sentence, anchor: int) -> bool:
    p = pred.span_containing(anchor)
    if p is None:
        return False
    g = gold.span_containing(anchor)
    return g is not None and (p.start, p.end) == (g.start, g.end)


def micro_aggregate(contributions: Sequence[PRF]) -> PRF:
    """Pool counts corpus-wide, then compute P/R/F1 once."""
    return PRF(
        tp=sum(c.tp for c in contributions),
        fp=sum(c.fp for c in contributions),
        fn=sum(c.fn for c in contributions),
    )


# ---------------------------------------------------------------------------
# Inference pipeline (shared by training-time dev evaluation and the CLI)
# ---------------------------------------------------------------------------


def model_outputs(params, config, token_ids: Sequence[int],
                  pos_ids: Sequence[int], mode: str = "eval",
                  rng: Rng | None = None) -> tuple[Tensor, Tensor]:
    """Embed -> BiLSTM -> interaction stack; returns the final prediction
    grids (y_e[n x 5], y_r[n x n x l])."""
    x = embed(token_ids, pos_ids, params.encoder, config.dropout, mode, rng)
    h0 = bilstm_forward(x, params.encoder)
    y_e, y_r, _ = run_stack(
        h0, config.k_layers, params,
        interact_er=config.interact_er, interact_rc=config.interact_rc,
    )
    return y_e, y_r


def predict_sentence(params, config, vocab: Vocabulary, schema: RelationSchema,
                     sentence: Sentence) -> Prediction:
    token_ids = vocab.encode_tokens(sentence.tokens)
    pos_ids = vocab.encode_pos(sentence.pos)
    y_e, y_r = model_outputs(params, config, token_ids, pos_ids, mode="eval")
    return Prediction(
        spans=decode_entities(y_e, config.anchor_policy),
        triples=decode_triples(y_r, config.threshold, schema),
    )


def eval_threads() -> int:
    """Read-only inference fan-out bound; RIN_THREADS, default 1."""
    try:
        return max(1, int(os.environ.get("RIN_THREADS", "1")))
    except ValueError:
        return 1


def predict_corpus(params, config, vocab: Vocabulary, schema: RelationSchema,
                   sentences: Sequence[Sentence]) -> list[Prediction]:
    """Order-preserving predictions; parallel over sentences when
    RIN_THREADS > 1 (parameters are read-only here)."""
    workers = eval_threads()
    if workers == 1 or len(sentences) < 2:
        return [predict_sentence(params, config, vocab, schema, s)
                for s in sentences]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(
            lambda s: predict_sentence(params, config, vocab, schema, s),
            sentences,
        ))


def score_predictions(preds: Sequence[Prediction], golds: Sequence[Sentence],
                      mode: str) -> PRF:
    if mode == "partial":
        scorer = partial_match_score
    elif mode == "exact":
        scorer = exact_match_score
    else:
        raise ConfigError(f"eval mode must be 'partial' or 'exact', got {mode!r}")
    return micro_aggregate([scorer(p, g) for p, g in zip(preds, golds)])


def evaluate_corpus(params, config, vocab: Vocabulary, schema: RelationSchema,
                    sentences: Sequence[Sentence], mode: str) -> PRF:
    preds = predict_corpus(params, config, vocab, schema, sentences)
    return score_predictions(preds, sentences, mode)


def prediction_to_json(pred: Prediction, schema: RelationSchema) -> str:
    """One JSONL line with byte-stable key and element order: spans sorted by
    (start, end); triples by (subj, obj, relation index)."""
    spans = [{"start": s.start, "end": s.end}
             for s in sorted(pred.spans, key=lambda s: (s.start, s.end))]
    order = {label: i for i, label in enumerate(schema.labels)}
    triples = [
        {"subj": i, "rel": rel, "obj": j, "score": score}
        for (i, rel, j), score in sorted(
            pred.triples.items(), key=lambda kv: (kv[0][0], kv[0][2], order[kv[0][1]])
        )
    ]
    return json.dumps({"spans": spans, "triples": triples},
                      separators=(",", ":"))
