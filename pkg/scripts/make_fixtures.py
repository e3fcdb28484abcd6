#!/usr/bin/env python3
"""Regenerate the deterministic test fixtures under tests/fixtures/.

The main fixture is a 32-sentence synthetic corpus over 3 relation types,
built from templates so that a held-out slice stays learnable: every entity
surface form occurs in several templates, while specific entity pairings
differ between sentences. It is heavy on overlapping relations (one entity in
several triples, including two relation types between the same ordered anchor
pair) and multi-token entities, which is exactly what the interaction layers
are supposed to help with.

Run from the repository root:  python3 scripts/make_fixtures.py
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from rin.corpus import (  # noqa: E402
    EntitySpan,
    GoldTriple,
    RelationSchema,
    Sentence,
    load_corpus,
    save_corpus,
)

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), "..", "tests", "fixtures")

RELATIONS = ("works_at", "located_in", "leads")

PERSONS = [
    ("anna", "keller"),
    ("omar", "diaz"),
    ("li", "wei"),
    ("sara",),
    ("tomas",),
    ("ivan", "petrov"),
]
ORGS = [
    ("nova", "labs"),
    ("helix", "corp"),
    ("zenith", "group"),
    ("orbit",),
    ("vertex",),
]
CITIES = [
    ("north", "bay"),
    ("east", "port"),
    ("lakeview",),
    ("marwick",),
]

POS_MAP = {
    "works": "VBZ", "leads": "VBZ", "lives": "VBZ", "is": "VBZ",
    "based": "VBN",
    "at": "IN", "in": "IN",
    "and": "CC",
    "now": "RB", "also": "RB",
    ".": ".",
}


def pos_of(token: str) -> str:
    return POS_MAP.get(token, "NNP")


class Builder:
    """Assemble one sentence from literal tokens and entity mentions."""

    def __init__(self):
        self.tokens: list[str] = []
        self.entities: list[EntitySpan] = []
        self.triples: list[GoldTriple] = []

    def words(self, *tokens: str) -> "Builder":
        self.tokens.extend(tokens)
        return self

    def entity(self, surface: tuple[str, ...]) -> int:
        """Append an entity mention; returns its anchor (last token)."""
        start = len(self.tokens)
        self.tokens.extend(surface)
        end = len(self.tokens)
        self.entities.append(EntitySpan(start, end, end - 1))
        return end - 1

    def triple(self, subj: int, rel: str, obj: int) -> "Builder":
        self.triples.append(GoldTriple(subj, rel, obj))
        return self

    def build(self) -> Sentence:
        return Sentence(
            tokens=list(self.tokens),
            pos=[pos_of(t) for t in self.tokens],
            entities=list(self.entities),
            triples=list(self.triples),
        )


def t_works(p, o, adverb=None) -> Sentence:
    b = Builder()
    pi = b.entity(p)
    if adverb:
        b.words(adverb)
    b.words("works", "at")
    oi = b.entity(o)
    b.words(".")
    return b.triple(pi, "works_at", oi).build()


def t_located(o, c) -> Sentence:
    b = Builder()
    oi = b.entity(o)
    b.words("is", "based", "in")
    ci = b.entity(c)
    b.words(".")
    return b.triple(oi, "located_in", ci).build()


def t_leads(p, o, adverb=None) -> Sentence:
    b = Builder()
    pi = b.entity(p)
    if adverb:
        b.words(adverb)
    b.words("leads")
    oi = b.entity(o)
    b.words(".")
    return b.triple(pi, "leads", oi).build()


def t_lives(p, c) -> Sentence:
    b = Builder()
    pi = b.entity(p)
    b.words("lives", "in")
    ci = b.entity(c)
    b.words(".")
    return b.triple(pi, "located_in", ci).build()


def t_shared_subject(p, o1, o2) -> Sentence:
    """One person in two triples with two different objects."""
    b = Builder()
    pi = b.entity(p)
    b.words("works", "at")
    o1i = b.entity(o1)
    b.words("and", "leads")
    o2i = b.entity(o2)
    b.words(".")
    return (b.triple(pi, "works_at", o1i)
             .triple(pi, "leads", o2i).build())


def t_double_pair(p, o) -> Sentence:
    """Two relation types between the same ordered anchor pair."""
    b = Builder()
    pi = b.entity(p)
    b.words("works", "at", "and", "leads")
    oi = b.entity(o)
    b.words(".")
    return (b.triple(pi, "works_at", oi)
             .triple(pi, "leads", oi).build())


def t_chain(p, o, c) -> Sentence:
    """One org in two triples: employer and location."""
    b = Builder()
    pi = b.entity(p)
    b.words("works", "at")
    oi = b.entity(o)
    b.words("in")
    ci = b.entity(c)
    b.words(".")
    return (b.triple(pi, "works_at", oi)
             .triple(oi, "located_in", ci).build())


def fixture_sentences() -> list[Sentence]:
    P, O, C = PERSONS, ORGS, CITIES
    sentences = [
        # Train block: simple templates covering every entity surface form.
        t_works(P[0], O[0]),
        t_works(P[1], O[1]),
        t_works(P[2], O[2], adverb="now"),
        t_works(P[3], O[3]),
        t_works(P[4], O[4]),
        t_leads(P[5], O[0]),
        t_leads(P[0], O[1], adverb="also"),
        t_leads(P[1], O[2]),
        t_leads(P[2], O[3]),
        t_located(O[0], C[0]),
        t_located(O[1], C[1]),
        t_located(O[2], C[2]),
        t_located(O[3], C[3]),
        t_located(O[4], C[0]),
        t_lives(P[0], C[1]),
        t_lives(P[3], C[2]),
        t_lives(P[5], C[3]),
        # Train block: overlapping relations.
        t_shared_subject(P[3], O[0], O[2]),
        t_shared_subject(P[4], O[1], O[3]),
        t_double_pair(P[0], O[2]),
        t_double_pair(P[2], O[4]),
        t_double_pair(P[5], O[1]),
        t_chain(P[1], O[4], C[2]),
        t_chain(P[5], O[3], C[1]),
        # Dev tail (held out by the layer-sweep harness): same templates,
        # unseen entity pairings.
        t_works(P[5], O[2]),
        t_leads(P[4], O[0]),
        t_located(O[2], C[3]),
        t_lives(P[2], C[0]),
        t_shared_subject(P[1], O[3], O[0]),
        t_double_pair(P[4], O[3]),
        t_double_pair(P[1], O[0]),
        t_chain(P[0], O[1], C[0]),
    ]
    return sentences


def check_fixture(sentences: list[Sentence]) -> dict:
    schema = RelationSchema(RELATIONS)
    for s in sentences:
        s.validate(schema)
    vocab = sorted({t for s in sentences for t in s.tokens})
    mentions = [e for s in sentences for e in s.entities]
    multi = sum(1 for e in mentions if e.end - e.start > 1)
    overlap_sentences = 0
    double_pair_sentences = 0
    for s in sentences:
        anchors = [a for t in s.triples for a in (t.subj_anchor, t.obj_anchor)]
        pairs = [(t.subj_anchor, t.obj_anchor) for t in s.triples]
        if len(s.triples) > 1 and (len(set(anchors)) < len(anchors)):
            overlap_sentences += 1
        if len(pairs) != len(set(pairs)):
            double_pair_sentences += 1
    stats = {
        "sentences": len(sentences),
        "vocab": len(vocab),
        "multi_token_fraction": multi / len(mentions),
        "overlap_sentences": overlap_sentences,
        "double_pair_sentences": double_pair_sentences,
    }
    assert stats["sentences"] == 32, stats
    assert stats["vocab"] <= 60, stats
    assert stats["multi_token_fraction"] >= 0.40, stats
    assert stats["overlap_sentences"] >= 4, stats
    assert stats["double_pair_sentences"] >= 2, stats
    # Every token of the dev tail must be seen in the first 24 sentences.
    train_tokens = {t for s in sentences[:24] for t in s.tokens}
    dev_tokens = {t for s in sentences[24:] for t in s.tokens}
    assert dev_tokens <= train_tokens, dev_tokens - train_tokens
    return stats


def tiny_sentences() -> list[Sentence]:
    """Six hand-picked sentences exercising the corpus format corners."""
    mk = Sentence
    return [
        mk(["hello"], ["UH"], [], []),
        mk(["sara", "leads", "orbit", "."], ["NNP", "VBZ", "NNP", "."],
           [EntitySpan(0, 1, 0), EntitySpan(2, 3, 2)],
           [GoldTriple(0, "leads", 2)]),
        mk(["nova", "labs", "is", "based", "in", "marwick", "."],
           ["NNP", "NNP", "VBZ", "VBN", "IN", "NNP", "."],
           [EntitySpan(0, 2, 1), EntitySpan(5, 6, 5)],
           [GoldTriple(1, "located_in", 5)]),
        mk(["tomas", "works", "at", "helix", "corp", "in", "east", "port", "."],
           ["NNP", "VBZ", "IN", "NNP", "NNP", "IN", "NNP", "NNP", "."],
           [EntitySpan(0, 1, 0), EntitySpan(3, 5, 4), EntitySpan(6, 8, 7)],
           [GoldTriple(0, "works_at", 4), GoldTriple(4, "located_in", 7)]),
        mk(["ivan", "petrov", "works", "at", "and", "leads", "vertex", "."],
           ["NNP", "NNP", "VBZ", "IN", "CC", "VBZ", "NNP", "."],
           [EntitySpan(0, 2, 1), EntitySpan(6, 7, 6)],
           [GoldTriple(1, "works_at", 6), GoldTriple(1, "leads", 6)]),
        mk(["the", "office", "is", "quiet", "."],
           ["DT", "NN", "VBZ", "JJ", "."],
           [EntitySpan(1, 2, 1)], []),
    ]


GLOVE_LINES = [
    "alpha 0.1 0.2 -0.3 0.4",
    "beta -1.5 2.25 0.0 1.0",
    "gamma 3.5 -0.125 0.75 -2.0",
]


def main() -> None:
    os.makedirs(FIXTURE_DIR, exist_ok=True)
    schema = RelationSchema(RELATIONS)
    sentences = fixture_sentences()
    stats = check_fixture(sentences)

    corpus_path = os.path.join(FIXTURE_DIR, "fixture_corpus.jsonl")
    save_corpus(sentences, corpus_path)
    schema.to_file(os.path.join(FIXTURE_DIR, "fixture_schema.txt"))

    tiny_path = os.path.join(FIXTURE_DIR, "tiny_corpus.jsonl")
    save_corpus(tiny_sentences(), tiny_path)

    with open(os.path.join(FIXTURE_DIR, "tiny_glove.txt"), "w") as fh:
        fh.write("\n".join(GLOVE_LINES) + "\n")

    # Round-trip sanity before declaring the fixtures good.
    reloaded = load_corpus(corpus_path, schema)
    assert len(reloaded) == len(sentences)
    load_corpus(tiny_path, schema)

    print(f"wrote fixtures to {FIXTURE_DIR}")
    for key, value in stats.items():
        print(f"  {key}: {value}")


if __name__ == "__main__":
    main()
