"""Deterministic synthetic corpora with parses attached.

Two generators share a small grammar of hand-parsed sentence templates:

* `relation_corpus` builds documents whose relations are recoverable from
  the dependency path between the entities (the verb on the path decides
  the class), for overfit and end-to-end training tests.
* `random_document` builds structurally arbitrary but valid documents
  (random dependency trees, random bracketings, random mention spans) for
  path and distance property tests.

Both are pure functions of their seed.
"""

from __future__ import annotations

import argparse
import os

import numpy as np

from .corpus import (AnnotatedDocument, ConstituencyNode, DependencyParse, Entity,
                     LabelSchema, Mention, RelationFact, Token, save_corpus)

RELATION_NAMES = ("founded", "acquired", "visited", "praised")

_SUBJECTS = ("alder", "birch", "cedar", "dogwood", "elm", "fir", "ginkgo", "hazel")
_OBJECTS = ("ibis", "jay", "kestrel", "lark", "merlin", "nightjar", "osprey", "plover")
_FILLER_WORDS = ("meanwhile", "reports", "kept", "arriving", "slowly", "elsewhere",
                 "quietly", "documents", "waited", "nearby")


def _leaf(label, token: Token):
    return ConstituencyNode(label=label, leaf_token=token.global_index,
                            leaf_surface=token.surface)


def _relation_sentence(sentence_index, offset, subject, verb, object_):
    """`<subject> <verb> <object> .` with the verb as dependency root."""
    words = [subject, verb, object_, "."]
    tokens = tuple(Token(w, sentence_index, p, offset + p) for p, w in enumerate(words))
    parse = DependencyParse(heads=(2, 0, 2, 2), deprels=("nsubj", "root", "obj", "punct"))
    tree = ConstituencyNode(label="S", children=(
        ConstituencyNode(label="NP", children=(_leaf("NN", tokens[0]),)),
        ConstituencyNode(label="VP", children=(
            _leaf("VB", tokens[1]),
            ConstituencyNode(label="NP", children=(_leaf("NN", tokens[2]),)),
        )),
        _leaf("PUNCT", tokens[3]),
    ))
    return tokens, parse, tree


def _filler_sentence(rng, sentence_index, offset):
    length = int(rng.integers(3, 6))
    words = [str(_FILLER_WORDS[rng.integers(0, len(_FILLER_WORDS))]) for _ in range(length)]
    tokens = tuple(Token(w, sentence_index, p, offset + p) for p, w in enumerate(words))
    # Chain heads toward the first token, which is the root.
    heads = tuple(0 if p == 0 else p for p in range(length))
    deprels = tuple("root" if p == 0 else "dep" for p in range(length))
    node = _leaf("X", tokens[-1])
    for token in reversed(tokens[:-1]):
        node = ConstituencyNode(label="X", children=(_leaf("X", token), node))
    tree = ConstituencyNode(label="S", children=(node,))
    return tokens, DependencyParse(heads=heads, deprels=deprels), tree


def relation_document(rng, doc_id, num_relations=2, spread=False):
    """One document with `num_relations` relation-bearing sentences.

    With `spread`, two or three filler sentences follow every
    relation-bearing sentence (plus a leading block), so entities of
    different relation sentences sit at least three sentences apart; the
    adjacent-root chain then costs more hops than the document-node route.
    """
    sentences, parses, trees = [], [], []
    entities, facts = [], []
    offset = 0

    def add_sentence(builder):
        nonlocal offset
        tokens, parse, tree = builder(len(sentences), offset)
        sentences.append(tokens)
        parses.append(parse)
        trees.append(tree)
        offset += len(tokens)
        return tokens

    filler_budget = int(rng.integers(2, 4)) if spread else 0
    for _ in range(filler_budget):
        add_sentence(lambda i, base: _filler_sentence(rng, i, base))

    used = set()
    for _ in range(num_relations):
        relation = int(rng.integers(0, len(RELATION_NAMES)))
        while True:
            subject = str(_SUBJECTS[rng.integers(0, len(_SUBJECTS))])
            object_ = str(_OBJECTS[rng.integers(0, len(_OBJECTS))])
            if (subject, object_) not in used:
                used.add((subject, object_))
                break
        tokens = add_sentence(lambda i, base: _relation_sentence(
            i, base, subject, RELATION_NAMES[relation], object_))
        sentence_index = len(sentences) - 1
        subject_id, object_id = len(entities), len(entities) + 1
        entities.append(Entity(entity_id=subject_id, type_label="ORG", mentions=(
            Mention(entity_id=subject_id, sentence_index=sentence_index,
                    start=tokens[0].global_index, end=tokens[0].global_index + 1),)))
        entities.append(Entity(entity_id=object_id, type_label="ORG", mentions=(
            Mention(entity_id=object_id, sentence_index=sentence_index,
                    start=tokens[2].global_index, end=tokens[2].global_index + 1),)))
        facts.append(RelationFact(subject_entity=subject_id, object_entity=object_id,
                                  relation_label=relation,
                                  evidence_sentences=(sentence_index,)))
        if spread:
            for _ in range(int(rng.integers(2, 4))):
                add_sentence(lambda i, base: _filler_sentence(rng, i, base))

    return AnnotatedDocument(doc_id=doc_id, sentences=tuple(sentences),
                             entities=tuple(entities), gold_facts=tuple(facts),
                             dependency_parses=tuple(parses),
                             constituency_trees=tuple(trees))


def relation_corpus(num_docs, seed, spread=False):
    """Documents plus the fixed four-relation schema."""
    rng = np.random.default_rng(seed)
    docs = [relation_document(rng, f"synth-{i:03d}", num_relations=int(rng.integers(1, 3)),
                              spread=spread)
            for i in range(num_docs)]
    return docs, LabelSchema(RELATION_NAMES)


def layout_document(rng, doc_id, layout):
    """Document with an explicit sentence layout.

    `layout` is a sequence of "filler" / "relation" markers; each relation
    sentence contributes two fresh single-mention entities and one fact.
    """
    sentences, parses, trees = [], [], []
    entities, facts = [], []
    offset = 0
    for kind in layout:
        s_index = len(sentences)
        if kind == "relation":
            relation = int(rng.integers(0, len(RELATION_NAMES)))
            subject = str(_SUBJECTS[rng.integers(0, len(_SUBJECTS))])
            object_ = str(_OBJECTS[rng.integers(0, len(_OBJECTS))])
            tokens, parse, tree = _relation_sentence(
                s_index, offset, subject, RELATION_NAMES[relation], object_)
            subject_id, object_id = len(entities), len(entities) + 1
            entities.append(Entity(entity_id=subject_id, type_label="ORG", mentions=(
                Mention(subject_id, s_index, tokens[0].global_index,
                        tokens[0].global_index + 1),)))
            entities.append(Entity(entity_id=object_id, type_label="ORG", mentions=(
                Mention(object_id, s_index, tokens[2].global_index,
                        tokens[2].global_index + 1),)))
            facts.append(RelationFact(subject_entity=subject_id,
                                      object_entity=object_id,
                                      relation_label=relation,
                                      evidence_sentences=(s_index,)))
        else:
            tokens, parse, tree = _filler_sentence(rng, s_index, offset)
        sentences.append(tokens)
        parses.append(parse)
        trees.append(tree)
        offset += len(tokens)
    return AnnotatedDocument(doc_id=doc_id, sentences=tuple(sentences),
                             entities=tuple(entities), gold_facts=tuple(facts),
                             dependency_parses=tuple(parses),
                             constituency_trees=tuple(trees))


# -- fully randomized documents ---------------------------------------------


def _random_tree_heads(rng, length):
    """A uniform random head assignment that is always a single-rooted tree."""
    order = rng.permutation(length)
    heads = [0] * length
    for rank in range(1, length):
        parent = order[int(rng.integers(0, rank))]
        heads[order[rank]] = parent + 1
    heads[order[0]] = 0
    return tuple(int(h) for h in heads)


def _random_bracketing(rng, tokens):
    nodes = [_leaf("T", token) for token in tokens]
    while len(nodes) > 1:
        index = int(rng.integers(0, len(nodes) - 1))
        merged = ConstituencyNode(label="X", children=(nodes[index], nodes[index + 1]))
        nodes[index:index + 2] = [merged]
    return ConstituencyNode(label="S", children=(nodes[0],))


def random_document(rng, doc_id, max_sentences=6, max_entities=4):
    """A structurally random valid document for graph property tests."""
    sentence_count = int(rng.integers(1, max_sentences + 1))
    sentences, parses, trees = [], [], []
    offset = 0
    for s_index in range(sentence_count):
        length = int(rng.integers(2, 8))
        words = [f"w{int(rng.integers(0, 30))}" for _ in range(length)]
        tokens = tuple(Token(w, s_index, p, offset + p) for p, w in enumerate(words))
        heads = _random_tree_heads(rng, length)
        sentences.append(tokens)
        parses.append(DependencyParse(heads=heads,
                                      deprels=tuple("dep" for _ in range(length))))
        trees.append(_random_bracketing(rng, tokens))
        offset += length

    entity_count = int(rng.integers(2, max_entities + 1))
    entities = []
    for entity_id in range(entity_count):
        mentions = []
        for _ in range(int(rng.integers(1, 3))):
            s_index = int(rng.integers(0, sentence_count))
            sentence = sentences[s_index]
            start_local = int(rng.integers(0, len(sentence)))
            end_local = min(len(sentence), start_local + int(rng.integers(1, 3)))
            mentions.append(Mention(entity_id=entity_id, sentence_index=s_index,
                                    start=sentence[start_local].global_index,
                                    end=sentence[0].global_index + end_local))
        entities.append(Entity(entity_id=entity_id, mentions=tuple(mentions)))

    facts = []
    if entity_count >= 2 and rng.random() < 0.8:
        facts.append(RelationFact(subject_entity=0, object_entity=1,
                                  relation_label=int(rng.integers(0, len(RELATION_NAMES)))))
    return AnnotatedDocument(doc_id=doc_id, sentences=tuple(sentences),
                             entities=tuple(entities), gold_facts=tuple(facts),
                             dependency_parses=tuple(parses),
                             constituency_trees=tuple(trees))


def write_sample_corpus(out_dir, num_docs=20, seed=7, spread=False):
    """Write train/dev/test splits plus the relation schema to a directory."""
    os.makedirs(out_dir, exist_ok=True)
    docs, schema = relation_corpus(num_docs, seed, spread=spread)
    schema.save(os.path.join(out_dir, "relations.json"))
    save_corpus(docs, os.path.join(out_dir, "train.jsonl"), schema)
    dev_docs, _ = relation_corpus(max(2, num_docs // 4), seed + 1, spread=spread)
    renamed = [AnnotatedDocument(doc_id=f"dev-{i:03d}", sentences=d.sentences,
                                 entities=d.entities, gold_facts=d.gold_facts,
                                 dependency_parses=d.dependency_parses,
                                 constituency_trees=d.constituency_trees)
               for i, d in enumerate(dev_docs)]
    save_corpus(renamed, os.path.join(out_dir, "dev.jsonl"), schema)
    save_corpus(renamed, os.path.join(out_dir, "test.jsonl"), schema)
    return out_dir


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="generate a synthetic pre-parsed corpus")
    parser.add_argument("--out", required=True)
    parser.add_argument("--docs", type=int, default=20)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--spread", action="store_true",
                        help="interleave filler sentences to spread entities apart")
    args = parser.parse_args(argv)
    write_sample_corpus(args.out, num_docs=args.docs, seed=args.seed, spread=args.spread)
    print(f"wrote corpus to {args.out}")


if __name__ == "__main__":
    main()
