"""Corpus data model, file readers, validators, and round-trips."""

import json
import os

import numpy as np
import pytest

from fcds.corpus import (CorpusError, LabelSchema, dependency_root, format_tree,
                         load_corpus, parse_bracketed_tree, parse_conllu,
                         save_corpus, validate_document)
from fcds.synthetic import random_document, relation_corpus

SCHEMA = LabelSchema(("born_in", "located_in"))


def write_corpus_files(tmp_path, jsonl_lines, conllu, trees, name="train"):
    base = os.path.join(tmp_path, f"{name}.jsonl")
    with open(base, "w", encoding="utf-8") as fh:
        fh.write("\n".join(jsonl_lines) + "\n")
    with open(os.path.join(tmp_path, f"{name}.conllu"), "w", encoding="utf-8") as fh:
        fh.write(conllu)
    with open(os.path.join(tmp_path, f"{name}.trees"), "w", encoding="utf-8") as fh:
        fh.write(trees)
    return base


MINIMAL_RECORD = json.dumps({
    "doc_id": "d1",
    "sentences": [["ada", "met", "bo", "."]],
    "entities": [
        {"id": 0, "type": "PER", "mentions": [{"sent": 0, "start": 0, "end": 1}]},
        {"id": 1, "type": "PER", "mentions": [{"sent": 0, "start": 2, "end": 3}]},
    ],
    "labels": [{"h": 0, "t": 1, "r": "born_in", "evidence": [0]}],
})

MINIMAL_CONLLU = """# newdoc id = d1
1\tada\t_\t_\t_\t_\t2\tnsubj\t_\t_
2\tmet\t_\t_\t_\t_\t0\troot\t_\t_
3\tbo\t_\t_\t_\t_\t2\tobj\t_\t_
4\t.\t_\t_\t_\t_\t2\tpunct\t_\t_
"""

MINIMAL_TREES = """# newdoc id = d1
(S (NP (NN ada)) (VP (VB met) (NP (NN bo))) (PUNCT .))
"""


class TestLoadCorpus:
    def test_minimal_document(self, tmp_path):
        path = write_corpus_files(str(tmp_path), [MINIMAL_RECORD],
                                  MINIMAL_CONLLU, MINIMAL_TREES)
        docs = load_corpus(path, SCHEMA)
        assert len(docs) == 1
        doc = docs[0]
        assert len(doc.sentences) == 1
        assert len(doc.entities) == 2
        assert doc.gold_facts[0].relation_label == 0
        assert validate_document(doc, SCHEMA) == []

    def test_mention_crossing_sentence_boundary(self, tmp_path):
        record = json.loads(MINIMAL_RECORD)
        record["entities"][0]["mentions"][0]["end"] = 9
        path = write_corpus_files(str(tmp_path), [json.dumps(record)],
                                  MINIMAL_CONLLU, MINIMAL_TREES)
        with pytest.raises(CorpusError, match="mention"):
            load_corpus(path, SCHEMA)

    def test_missing_tree_names_doc_and_sentence(self, tmp_path):
        """Three documents; the second lacks its constituency tree."""
        records, conllus, trees = [], [], []
        for i in range(3):
            record = json.loads(MINIMAL_RECORD)
            record["doc_id"] = f"d{i}"
            records.append(json.dumps(record))
            conllus.append(MINIMAL_CONLLU.replace("d1", f"d{i}"))
            if i == 1:
                trees.append(f"# newdoc id = d{i}\n")
            else:
                trees.append(MINIMAL_TREES.replace("d1", f"d{i}"))
        path = write_corpus_files(str(tmp_path), records,
                                  "".join(conllus), "\n".join(trees))
        with pytest.raises(CorpusError, match=r"d1.*sentence 0"):
            load_corpus(path, SCHEMA)

    def test_missing_parse_file(self, tmp_path):
        path = os.path.join(str(tmp_path), "train.jsonl")
        with open(path, "w") as fh:
            fh.write(MINIMAL_RECORD + "\n")
        with pytest.raises(CorpusError, match="missing corpus file"):
            load_corpus(path, SCHEMA)

    def test_malformed_record_names_line_and_field(self, tmp_path):
        record = json.loads(MINIMAL_RECORD)
        del record["entities"]
        path = write_corpus_files(str(tmp_path), [json.dumps(record)],
                                  MINIMAL_CONLLU, MINIMAL_TREES)
        with pytest.raises(CorpusError, match=r"line 1.*entities"):
            load_corpus(path, SCHEMA)

    def test_form_mismatch_rejected(self, tmp_path):
        path = write_corpus_files(str(tmp_path), [MINIMAL_RECORD],
                                  MINIMAL_CONLLU.replace("bo", "zz"), MINIMAL_TREES)
        with pytest.raises(CorpusError, match="FORM"):
            load_corpus(path, SCHEMA)

    def test_unknown_relation_label(self, tmp_path):
        record = json.loads(MINIMAL_RECORD)
        record["labels"][0]["r"] = "mystery"
        path = write_corpus_files(str(tmp_path), [json.dumps(record)],
                                  MINIMAL_CONLLU, MINIMAL_TREES)
        with pytest.raises(CorpusError, match="mystery"):
            load_corpus(path, SCHEMA)


class TestValidateDocument:
    def test_synthetic_documents_are_valid(self):
        docs, schema = relation_corpus(5, seed=2, spread=True)
        for doc in docs:
            assert validate_document(doc, schema) == []

    def test_randomized_documents_are_valid(self):
        rng = np.random.default_rng(8)
        for i in range(25):
            doc = random_document(rng, f"r{i}")
            assert validate_document(doc) == []

    def test_multiple_roots_reported(self):
        docs, _ = relation_corpus(1, seed=2)
        doc = docs[0]
        parse = doc.dependency_parses[0]
        broken = parse.__class__(heads=(0,) + parse.heads[1:], deprels=parse.deprels)
        doc = doc.__class__(**{**doc.__dict__, "dependency_parses":
                               (broken,) + doc.dependency_parses[1:]})
        report = validate_document(doc)
        assert any("root" in entry for entry in report)

    def test_leaf_misalignment_reported(self):
        docs, _ = relation_corpus(1, seed=2)
        doc = docs[0]
        # Swap the first two trees' sentences by reusing tree 0 for both slots.
        if len(doc.constituency_trees) < 2:
            docs, _ = relation_corpus(1, seed=3)
            doc = docs[0]
        trees = (doc.constituency_trees[0], doc.constituency_trees[0])
        doc = doc.__class__(**{**doc.__dict__,
                               "constituency_trees": trees + doc.constituency_trees[2:]})
        report = validate_document(doc)
        assert any("misalignment" in entry or "leaves" in entry or "match" in entry
                   for entry in report)


class TestConllu:
    def test_two_token_sentence(self):
        parses, forms = parse_conllu(
            "1\tdog\t_\t_\t_\t_\t2\tnsubj\t_\t_\n"
            "2\tbarks\t_\t_\t_\t_\t0\troot\t_\t_\n")
        assert len(parses) == 1
        assert parses[0].heads == (2, 0)
        assert dependency_root(parses[0]) == 1
        assert forms[0] == ("dog", "barks")

    def test_head_out_of_range(self):
        text = ("1\ta\t_\t_\t_\t_\t5\tdep\t_\t_\n"
                "2\tb\t_\t_\t_\t_\t0\troot\t_\t_\n"
                "3\tc\t_\t_\t_\t_\t1\tdep\t_\t_\n")
        with pytest.raises(CorpusError, match="out of range"):
            parse_conllu(text)

    def test_cycle_detected(self):
        text = ("1\ta\t_\t_\t_\t_\t2\tdep\t_\t_\n"
                "2\tb\t_\t_\t_\t_\t1\tdep\t_\t_\n")
        with pytest.raises(CorpusError, match="one root"):
            parse_conllu(text)

    def test_cycle_with_root_detected(self):
        text = ("1\ta\t_\t_\t_\t_\t0\troot\t_\t_\n"
                "2\tb\t_\t_\t_\t_\t3\tdep\t_\t_\n"
                "3\tc\t_\t_\t_\t_\t2\tdep\t_\t_\n")
        with pytest.raises(CorpusError, match="cycle"):
            parse_conllu(text)

    def test_multiword_token_rejected(self):
        text = ("1-2\tdel\t_\t_\t_\t_\t_\t_\t_\t_\n"
                "1\tde\t_\t_\t_\t_\t0\troot\t_\t_\n")
        with pytest.raises(CorpusError, match="multiword"):
            parse_conllu(text)

    def test_non_integer_head(self):
        text = "1\ta\t_\t_\t_\t_\tx\tdep\t_\t_\n"
        with pytest.raises(CorpusError, match="non-integer head"):
            parse_conllu(text)


class TestBracketedTrees:
    def test_single_chain(self):
        tree = parse_bracketed_tree("(ROOT (NP (NN dog)))")
        assert tree.label == "ROOT"
        assert tree.children[0].label == "NP"
        leaf = tree.children[0].children[0]
        assert leaf.is_leaf() and leaf.leaf_surface == "dog"

    def test_unbalanced_brackets(self):
        with pytest.raises(CorpusError, match="unbalanced"):
            parse_bracketed_tree("(ROOT (NP (NN dog)")

    def test_empty_node(self):
        with pytest.raises(CorpusError, match="empty node|without a label"):
            parse_bracketed_tree("(ROOT ())")

    def test_leaf_count_mismatch(self):
        with pytest.raises(CorpusError, match="leaves"):
            parse_bracketed_tree("(S (A x) (B y) (C z))", sentence_tokens=["x", "y"])

    def test_leaf_binding(self):
        tree = parse_bracketed_tree("(S (A x) (B y))", sentence_tokens=["x", "y"],
                                    global_offset=10)
        leaves = tree.leaves()
        assert [leaf.leaf_token for leaf in leaves] == [10, 11]

    def test_format_round_trip(self):
        text = "(S (NP (NN dog)) (VP (VB barks)))"
        assert format_tree(parse_bracketed_tree(text)) == text


class TestRoundTrip:
    def test_save_and_reload_structural_equality(self, tmp_path):
        docs, schema = relation_corpus(4, seed=6, spread=True)
        path = os.path.join(str(tmp_path), "train.jsonl")
        save_corpus(docs, path, schema)
        reloaded = load_corpus(path, schema)
        assert reloaded == list(docs)

    def test_randomized_round_trip(self, tmp_path):
        rng = np.random.default_rng(12)
        docs = [random_document(rng, f"r{i}") for i in range(10)]
        schema = LabelSchema(("founded", "acquired", "visited", "praised"))
        path = os.path.join(str(tmp_path), "train.jsonl")
        save_corpus(docs, path, schema)
        assert load_corpus(path, schema) == docs


class TestLabelSchema:
    def test_duplicate_names_rejected(self):
        with pytest.raises(CorpusError):
            LabelSchema(("a", "a"))

    def test_na_reserved(self):
        with pytest.raises(CorpusError):
            LabelSchema(("a", "NA"))

    def test_save_load(self, tmp_path):
        path = os.path.join(str(tmp_path), "relations.json")
        SCHEMA.save(path)
        assert LabelSchema.load(path) == SCHEMA
