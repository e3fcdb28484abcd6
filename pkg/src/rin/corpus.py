"""Corpus ingestion, vocabulary construction, pretrained-embedding loading,
the BIOES span codec, and padded mini-batching.

Corpus files are JSONL, one sentence per line:

    {"tokens": [...], "pos": [...],
     "entities": [{"start": s, "end": e, "anchor": a}, ...],
     "triples": [{"subj": i, "rel": "label", "obj": j}, ...]}

Spans are end-exclusive. The anchor is the single token triples are defined
on (the head of a multi-token entity). The relation schema file lists one
label per line; line order defines relation indices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .numerics import Rng, Tensor

PAD = "<pad>"
UNK = "<unk>"

# Tag order is load-bearing: argmax tie-breaks resolve to the lowest index.
BIOES_TAGS = ("B", "I", "O", "E", "S")
TAG_INDEX = {t: i for i, t in enumerate(BIOES_TAGS)}


@dataclass(frozen=True)
class RelationSchema:
    labels: tuple[str, ...]

    def __post_init__(self):
        if not self.labels:
            raise DataError("relation schema must not be empty")
        if len(set(self.labels)) != len(self.labels):
            raise DataError("relation schema labels must be unique")

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise DataError(f"relation label {label!r} not in schema") from None

    @classmethod
    def from_file(cls, path) -> "RelationSchema":
        with open(path, encoding="utf-8") as fh:
            labels = tuple(line.strip() for line in fh if line.strip())
        return cls(labels)

    def to_file(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for label in self.labels:
                fh.write(label + "\n")


@dataclass(frozen=True)
class EntitySpan:
    start: int  # inclusive
    end: int  # exclusive
    anchor: int

    def validate(self, n: int) -> None:
        if not (0 <= self.start < self.end <= n):
            raise DataError(f"span ({self.start},{self.end}) invalid for n={n}")
        if not (self.start <= self.anchor < self.end):
            raise DataError(
                f"anchor {self.anchor} outside span ({self.start},{self.end})"
            )

    def contains(self, i: int) -> bool:
        return self.start <= i < self.end


@dataclass(frozen=True)
class GoldTriple:
    subj_anchor: int
    rel: str
    obj_anchor: int

    def key(self) -> tuple[int, str, int]:
        return (self.subj_anchor, self.rel, self.obj_anchor)


@dataclass
class Sentence:
    tokens: list[str]
    pos: list[str]
    entities: list[EntitySpan]
    triples: list[GoldTriple]

    @property
    def n(self) -> int:
        return len(self.tokens)

    def validate(self, schema: RelationSchema) -> None:
        if self.n < 1:
            raise DataError("sentence must contain at least one token")
        if len(self.pos) != self.n:
            raise DataError(
                f"POS count {len(self.pos)} != token count {self.n}"
            )
        ordered = sorted(self.entities, key=lambda s: s.start)
        prev_end = 0
        for span in ordered:
            span.validate(self.n)
            if span.start < prev_end:
                raise DataError(f"overlapping entity spans at token {span.start}")
            prev_end = span.end
        for t in self.triples:
            if t.subj_anchor == t.obj_anchor:
                raise DataError("triple subject and object anchors coincide")
            if t.rel not in schema.labels:
                raise DataError(f"relation label {t.rel!r} not in schema")
            for anchor in (t.subj_anchor, t.obj_anchor):
                if not any(s.contains(anchor) for s in self.entities):
                    raise DataError(
                        f"triple anchor {anchor} lies in no entity span"
                    )

    def span_containing(self, i: int) -> EntitySpan | None:
        for s in self.entities:
            if s.contains(i):
                return s
        return None

    def gold_triple_keys(self) -> set[tuple[int, str, int]]:
        return {t.key() for t in self.triples}


def _sentence_from_record(rec: dict) -> Sentence:
    tokens = list(rec["tokens"])
    pos = list(rec["pos"])
    entities = [
        EntitySpan(int(e["start"]), int(e["end"]), int(e["anchor"]))
        for e in rec.get("entities", [])
    ]
    triples = [
        GoldTriple(int(t["subj"]), str(t["rel"]), int(t["obj"]))
        for t in rec.get("triples", [])
    ]
    return Sentence(tokens, pos, entities, triples)


def load_corpus(path, schema: RelationSchema) -> list[Sentence]:
    """Read and validate a JSONL corpus; every Sentence invariant enforced."""
    sentences = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                sent = _sentence_from_record(rec)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: malformed record ({exc})") from exc
            try:
                sent.validate(schema)
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            sentences.append(sent)
    return sentences


def save_corpus(sentences: Iterable[Sentence], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            rec = {
                "tokens": s.tokens,
                "pos": s.pos,
                "entities": [
                    {"start": e.start, "end": e.end, "anchor": e.anchor}
                    for e in s.entities
                ],
                "triples": [
                    {"subj": t.subj_anchor, "rel": t.rel, "obj": t.obj_anchor}
                    for t in s.triples
                ],
            }
            fh.write(json.dumps(rec) + "\n")


@dataclass
class Vocabulary:
    """Token and POS maps with reserved entries: <pad> at index 0 for both,
    <unk> at index 1 for tokens."""

    token_to_id: dict[str, int]
    pos_to_id: dict[str, int]

    @property
    def n_tokens(self) -> int:
        return len(self.token_to_id)

    @property
    def n_pos(self) -> int:
        return len(self.pos_to_id)

    def encode_tokens(self, tokens: Sequence[str]) -> list[int]:
        unk = self.token_to_id[UNK]
        return [self.token_to_id.get(t, unk) for t in tokens]

    def encode_pos(self, tags: Sequence[str]) -> list[int]:
        # Unseen tags map to the <pad> slot; harmless at desk scale.
        return [self.pos_to_id.get(t, 0) for t in tags]


def build_vocab(corpus: Sequence[Sentence], min_freq: int = 1) -> Vocabulary:
    """Index tokens with frequency >= min_freq (others hit <unk> at encode
    time); POS tags are always all indexed. First-occurrence order."""
    freq: dict[str, int] = {}
    for s in corpus:
        for tok in s.tokens:
            freq[tok] = freq.get(tok, 0) + 1
    token_to_id = {PAD: 0, UNK: 1}
    for s in corpus:
        for tok in s.tokens:
            if freq[tok] >= min_freq and tok not in token_to_id:
                token_to_id[tok] = len(token_to_id)
    pos_to_id = {PAD: 0}
    for s in corpus:
        for tag in s.pos:
            if tag not in pos_to_id:
                pos_to_id[tag] = len(pos_to_id)
    return Vocabulary(token_to_id, pos_to_id)


def load_pretrained_embeddings(path, vocab: Vocabulary, dim: int,
                               rng: Rng) -> tuple[Tensor, int]:
    """Load a text embedding file (token then `dim` space-separated reals per
    line). Rows for covered tokens come from the file; everything else —
    including <unk> — is U(-0.1, 0.1), and <pad> stays zero. Returns the
    matrix and the coverage count."""
    matrix = rng.uniform(-0.1, 0.1, (vocab.n_tokens, dim))
    matrix[0] = 0.0
    covered = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) == 1 and not parts[0]:
                continue
            if len(parts) != dim + 1:
                raise DataError(
                    f"{path}:{lineno}: expected token plus {dim} values, "
                    f"got {len(parts) - 1}"
                )
            idx = vocab.token_to_id.get(parts[0])
            if idx is not None and idx > 1:
                matrix[idx] = [float(v) for v in parts[1:]]
                covered += 1
    return Tensor(matrix, requires_grad=True), covered


# ---------------------------------------------------------------------------
# BIOES codec
# ---------------------------------------------------------------------------


def bioes_encode(entities: Sequence[EntitySpan], n: int) -> list[str]:
    """Single-token span -> S; longer span -> B, I..., E; everything else O."""
    tags = ["O"] * n
    occupied = [False] * n
    for span in sorted(entities, key=lambda s: s.start):
        span.validate(n)
        if any(occupied[span.start:span.end]):
            raise DataError(f"overlapping entity spans at token {span.start}")
        for i in range(span.start, span.end):
            occupied[i] = True
        if span.end - span.start == 1:
            tags[span.start] = "S"
        else:
            tags[span.start] = "B"
            for i in range(span.start + 1, span.end - 1):
                tags[i] = "I"
            tags[span.end - 1] = "E"
    return tags


def bioes_decode(tags: Sequence[str], anchor_policy: str = "last") -> list[EntitySpan]:
    """Extract S singletons and maximal B..E runs, repairing invalid input:
    a B without an E before the next B/S/O is dropped, and I/E without a
    preceding B are dropped. Total on any tag sequence."""
    spans = []
    n = len(tags)
    i = 0
    while i < n:
        tag = tags[i]
        if tag == "S":
            spans.append(_make_span(i, i + 1, anchor_policy))
            i += 1
        elif tag == "B":
            j = i + 1
            while j < n and tags[j] == "I":
                j += 1
            if j < n and tags[j] == "E":
                spans.append(_make_span(i, j + 1, anchor_policy))
                i = j + 1
            else:
                # Unterminated run: drop it, re-examine the interrupting tag.
                i = j
        else:
            # O, or an orphan I/E.
            i += 1
    return spans


def _make_span(start: int, end: int, anchor_policy: str) -> EntitySpan:
    if anchor_policy == "first":
        return EntitySpan(start, end, start)
    return EntitySpan(start, end, end - 1)


def encode_tag_ids(entities: Sequence[EntitySpan], n: int) -> list[int]:
    return [TAG_INDEX[t] for t in bioes_encode(entities, n)]


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------


@dataclass
class Batch:
    """Padded id grids plus per-sentence sparse relation targets.

    Padded cells carry index 0 and are masked out of every loss term.
    orig_indices tracks each row's position in the source corpus.
    """

    token_ids: np.ndarray  # bs x n_max, int
    pos_ids: np.ndarray  # bs x n_max, int
    mask: np.ndarray  # bs x n_max, bool
    gold_tags: np.ndarray  # bs x n_max, int (BIOES indices)
    gold_pair_targets: list[set[tuple[int, int, int]]]  # (i, j, rel_index)
    orig_indices: list[int] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.token_ids.shape[0]

    def length(self, row: int) -> int:
        return int(self.mask[row].sum())


def pair_targets(sentence: Sentence, schema: RelationSchema) -> set[tuple[int, int, int]]:
    return {
        (t.subj_anchor, t.obj_anchor, schema.index(t.rel))
        for t in sentence.triples
    }


def make_batches(corpus: Sequence[Sentence], vocab: Vocabulary,
                 schema: RelationSchema, bs: int, rng: Rng | None = None,
                 shuffle: bool = False) -> list[Batch]:
    """Group sentences into ceil(N/bs) batches padded to each batch's max
    length. shuffle=True permutes sentence order via rng first."""
    if bs < 1:
        raise DataError(f"batch size must be >= 1, got {bs}")
    order = list(range(len(corpus)))
    if shuffle:
        if rng is None:
            raise DataError("shuffling requires an Rng")
        order = [int(i) for i in rng.permutation(len(corpus))]
    batches = []
    for lo in range(0, len(order), bs):
        chunk = order[lo:lo + bs]
        sents = [corpus[i] for i in chunk]
        n_max = max(s.n for s in sents)
        token_ids = np.zeros((len(sents), n_max), dtype=np.intp)
        pos_ids = np.zeros((len(sents), n_max), dtype=np.intp)
        mask = np.zeros((len(sents), n_max), dtype=bool)
        gold_tags = np.zeros((len(sents), n_max), dtype=np.intp)
        targets = []
        for r, s in enumerate(sents):
            token_ids[r, :s.n] = vocab.encode_tokens(s.tokens)
            pos_ids[r, :s.n] = vocab.encode_pos(s.pos)
            mask[r, :s.n] = True
            gold_tags[r, :s.n] = encode_tag_ids(s.entities, s.n)
            targets.append(pair_targets(s, schema))
        batches.append(Batch(token_ids, pos_ids, mask, gold_tags, targets, chunk))
    return batches
