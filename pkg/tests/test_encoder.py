"""Marker insertion, recurrent encoding, and mention pooling."""

import numpy as np

from fcds import numerics as nm
from fcds.corpus import (AnnotatedDocument, ConstituencyNode, DependencyParse,
                         Entity, Mention, Token)
from fcds.encoder import (MARKER_ID, EncoderParams, Vocabulary, encode_document,
                          entity_vector, insert_markers, mention_embedding)
from fcds.synthetic import relation_corpus


def make_doc(words, mention_spans, doc_id="d"):
    """Single-sentence document with single-entity mentions at given spans."""
    tokens = tuple(Token(w, 0, i, i) for i, w in enumerate(words))
    entities = tuple(
        Entity(entity_id=i, mentions=(Mention(entity_id=i, sentence_index=0,
                                              start=start, end=end),))
        for i, (start, end) in enumerate(mention_spans))
    heads = tuple(0 if i == 0 else 1 for i in range(len(words)))
    node = ConstituencyNode(label="X", leaf_token=len(words) - 1,
                            leaf_surface=words[-1])
    for i in range(len(words) - 2, -1, -1):
        node = ConstituencyNode(label="X", children=(
            ConstituencyNode(label="X", leaf_token=i, leaf_surface=words[i]), node))
    return AnnotatedDocument(
        doc_id=doc_id, sentences=(tokens,), entities=entities, gold_facts=(),
        dependency_parses=(DependencyParse(heads=heads,
                                           deprels=tuple("dep" for _ in words)),),
        constituency_trees=(node,))


class TestInsertMarkers:
    def test_single_mention(self):
        doc = make_doc(["Louis", "Chollet", "was", "born"], [(0, 2)])
        slots, index_map = insert_markers(doc)
        surfaces = ["*" if s is None else s.surface for s in slots]
        assert surfaces == ["*", "Louis", "Chollet", "*", "was", "born"]
        assert index_map == (1, 2, 4, 5)

    def test_no_mentions_identity(self):
        doc = make_doc(["a", "b", "c"], [])
        slots, index_map = insert_markers(doc)
        assert all(s is not None for s in slots)
        assert index_map == (0, 1, 2)

    def test_adjacent_mentions(self):
        doc = make_doc(["a", "b"], [(0, 1), (1, 2)])
        slots, _ = insert_markers(doc)
        surfaces = ["*" if s is None else s.surface for s in slots]
        assert surfaces == ["*", "a", "*", "*", "b", "*"]

    def test_length_identity(self):
        docs, _ = relation_corpus(5, seed=4, spread=True)
        for doc in docs:
            slots, index_map = insert_markers(doc)
            mention_count = sum(len(e.mentions) for e in doc.entities)
            assert len(slots) == doc.token_count() + 2 * mention_count
            assert len(index_map) == doc.token_count()
            assert list(index_map) == sorted(index_map)


class TestEncodeDocument:
    def setup_method(self):
        self.doc = make_doc(["tok"], [(0, 1)])
        self.vocab = Vocabulary.build([self.doc])
        self.params = EncoderParams(np.random.default_rng(0), len(self.vocab), 5, 3)

    def test_single_mention_token_shape(self):
        enc = encode_document(self.doc, self.vocab, self.params)
        assert enc.hidden.shape == (3, 6)  # [*, tok, *] by 2 x hidden
        assert enc.index_map == (1,)

    def test_determinism(self):
        a = encode_document(self.doc, self.vocab, self.params)
        b = encode_document(self.doc, self.vocab, self.params)
        np.testing.assert_array_equal(a.hidden.data, b.hidden.data)

    def test_context_sensitivity(self):
        """Permuting two distinct sentences changes at least one hidden row."""
        docs, _ = relation_corpus(3, seed=9, spread=True)
        doc = docs[0]
        vocab = Vocabulary.build(docs)
        params = EncoderParams(np.random.default_rng(1), len(vocab), 6, 4)
        enc = encode_document(doc, vocab, params)

        swapped = AnnotatedDocument(
            doc_id=doc.doc_id,
            sentences=(doc.sentences[1], doc.sentences[0]) + doc.sentences[2:],
            entities=(), gold_facts=(),
            dependency_parses=(doc.dependency_parses[1], doc.dependency_parses[0])
            + doc.dependency_parses[2:],
            constituency_trees=(doc.constituency_trees[1], doc.constituency_trees[0])
            + doc.constituency_trees[2:])
        base = AnnotatedDocument(
            doc_id=doc.doc_id, sentences=doc.sentences, entities=(), gold_facts=(),
            dependency_parses=doc.dependency_parses,
            constituency_trees=doc.constituency_trees)
        enc_base = encode_document(base, vocab, params)
        enc_swapped = encode_document(swapped, vocab, params)
        assert enc_base.hidden.shape == enc_swapped.hidden.shape
        assert not np.allclose(enc_base.hidden.data, enc_swapped.hidden.data)

    def test_gradient_through_embeddings(self):
        """Analytic embedding-table gradient against direct finite differences."""
        doc = make_doc(["a", "b", "c"], [(0, 1)])
        vocab = Vocabulary.build([doc])
        params = EncoderParams(np.random.default_rng(2), len(vocab), 4, 3)

        params.embeddings.zero_grad()
        enc = encode_document(doc, vocab, params)
        nm.tensor_sum(enc.hidden).backward()
        analytic = params.embeddings.grad.copy()

        h = 1e-5
        flat = params.embeddings.data.reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            hi = nm.tensor_sum(encode_document(doc, vocab, params).hidden).item()
            flat[i] = original - h
            lo = nm.tensor_sum(encode_document(doc, vocab, params).hidden).item()
            flat[i] = original
            numeric = (hi - lo) / (2 * h)
            a = analytic.reshape(-1)[i]
            worst = max(worst, abs(a - numeric) / (abs(a) + abs(numeric) + 1e-12))
        assert worst <= 1e-5


class TestMentionPooling:
    def setup_method(self):
        self.doc = make_doc(["u", "v", "w"], [(0, 1), (0, 2)])
        self.vocab = Vocabulary.build([self.doc])
        self.params = EncoderParams(np.random.default_rng(5), len(self.vocab), 4, 3)
        self.enc = encode_document(self.doc, self.vocab, self.params)

    def test_single_token_mention_is_row(self):
        pooled = mention_embedding(self.enc, self.doc.entities[0].mentions[0])
        row = self.enc.hidden.data[self.enc.index_map[0]]
        np.testing.assert_array_equal(pooled.data, row)

    def test_two_token_mention_is_mean(self):
        pooled = mention_embedding(self.enc, self.doc.entities[1].mentions[0])
        u = self.enc.hidden.data[self.enc.index_map[0]]
        v = self.enc.hidden.data[self.enc.index_map[1]]
        np.testing.assert_allclose(pooled.data, (u + v) / 2.0)

    def test_markers_never_pooled(self):
        """Every pooled row maps back to an original token, never a marker slot."""
        slots, _ = insert_markers(self.doc)
        for entity in self.doc.entities:
            for mention in entity.mentions:
                rows = [self.enc.index_map[i] for i in range(mention.start, mention.end)]
                assert len(rows) == mention.end - mention.start
                assert all(slots[row] is not None for row in rows)

    def test_entity_vector_single_mention_identity(self):
        vec = entity_vector(self.enc, self.doc.entities[0])
        pooled = mention_embedding(self.enc, self.doc.entities[0].mentions[0])
        np.testing.assert_array_equal(vec.data, pooled.data)


class TestVocabulary:
    def test_marker_id_distinct_from_corpus_star(self):
        doc = make_doc(["*", "x"], [])
        vocab = Vocabulary.build([doc])
        assert vocab.id_of("*") != MARKER_ID

    def test_unknown_maps_to_unk(self):
        doc = make_doc(["x"], [])
        vocab = Vocabulary.build([doc])
        assert vocab.id_of("never-seen") == 1

    def test_min_count_filters(self):
        docs, _ = relation_corpus(3, seed=1)
        vocab_all = Vocabulary.build(docs, min_count=1)
        vocab_common = Vocabulary.build(docs, min_count=3)
        assert len(vocab_common) <= len(vocab_all)
