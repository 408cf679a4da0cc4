"""Micro-averaged evaluation over relational facts.

A fact is a (doc, subject, object, relation) tuple. Besides plain micro
F1, the report covers: F1 after removing facts whose entity-name pair and
relation already occur in the training split, and F1 restricted to pairs
whose mentions do or do not co-occur within a single sentence.
"""

from __future__ import annotations

from dataclasses import dataclass


class DuplicatePrediction(ValueError):
    """A (doc, subject, object, relation) record was added twice."""


class PredictionSet:
    """Scored predicted facts with duplicate rejection."""

    def __init__(self):
        self._records = []
        self._seen = set()

    def add(self, doc_id, subject, object_, relation, score=0.0):
        key = (doc_id, subject, object_, relation)
        if key in self._seen:
            raise DuplicatePrediction(f"duplicate prediction {key}")
        self._seen.add(key)
        self._records.append({"doc_id": doc_id, "subject": subject,
                              "object": object_, "relation": relation,
                              "score": float(score)})

    def facts(self):
        return set(self._seen)

    def records(self):
        return list(self._records)

    def __len__(self):
        return len(self._records)


@dataclass
class MetricReport:
    precision: float
    recall: float
    f1: float
    ign_f1: float
    intra_f1: float
    inter_f1: float
    counts: dict
    empty_slices: tuple = ()

    def as_dict(self):
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "ign_f1": self.ign_f1, "intra_f1": self.intra_f1,
                "inter_f1": self.inter_f1, "counts": self.counts,
                "empty_slices": list(self.empty_slices)}

    def table(self):
        rows = [("precision", self.precision), ("recall", self.recall),
                ("F1", self.f1), ("Ign F1", self.ign_f1),
                ("Intra F1", self.intra_f1), ("Inter F1", self.inter_f1)]
        lines = ["metric      value", "-----------------"]
        for name, value in rows:
            flag = ""
            if name == "Intra F1" and "intra" in self.empty_slices:
                flag = "  (empty slice)"
            if name == "Inter F1" and "inter" in self.empty_slices:
                flag = "  (empty slice)"
            lines.append(f"{name:<10}  {value:.4f}{flag}")
        return "\n".join(lines)


def _prf(tp, predicted, gold):
    precision = tp / predicted if predicted else 0.0
    recall = tp / gold if gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def micro_f1(pred_facts, gold_facts):
    """Micro precision/recall/F1 over fact sets; 0/0 counts as 0."""
    pred_facts, gold_facts = set(pred_facts), set(gold_facts)
    tp = len(pred_facts & gold_facts)
    return _prf(tp, len(pred_facts), len(gold_facts))


def gold_fact_set(documents):
    return {(doc.doc_id, fact.subject_entity, fact.object_entity, fact.relation_label)
            for doc in documents for fact in doc.gold_facts}


def mention_name(doc, mention):
    return " ".join(token.surface for token in doc.tokens()[mention.start:mention.end])


def entity_names(doc, entity_id):
    entity = doc.entity_by_id(entity_id)
    return {mention_name(doc, mention) for mention in entity.mentions}


def train_fact_names(train_documents, schema=None):
    """Every (subject name, object name, relation) combination in training."""
    combos = set()
    for doc in train_documents:
        for fact in doc.gold_facts:
            for subject_name in entity_names(doc, fact.subject_entity):
                for object_name in entity_names(doc, fact.object_entity):
                    combos.add((subject_name, object_name, fact.relation_label))
    return combos


def _shared_with_train(fact, docs_by_id, train_names):
    # Spurious predictions can reference unknown documents or entities;
    # nothing to key them by, so they are never train-shared.
    doc = docs_by_id.get(fact[0])
    if doc is None:
        return False
    try:
        subject_names = entity_names(doc, fact[1])
        object_names = entity_names(doc, fact[2])
    except KeyError:
        return False
    for subject_name in subject_names:
        for object_name in object_names:
            if (subject_name, object_name, fact[3]) in train_names:
                return True
    return False


def ign_f1(pred_facts, gold_facts, train_names, documents):
    """Micro F1 after dropping train-shared facts from both sides."""
    docs_by_id = {doc.doc_id: doc for doc in documents}
    kept_pred = {f for f in pred_facts if not _shared_with_train(f, docs_by_id, train_names)}
    kept_gold = {f for f in gold_facts if not _shared_with_train(f, docs_by_id, train_names)}
    return micro_f1(kept_pred, kept_gold)


def pair_is_intra(doc, subject_id, object_id):
    """True when some sentence holds mentions of both entities."""
    subject_sentences = {m.sentence_index for m in doc.entity_by_id(subject_id).mentions}
    object_sentences = {m.sentence_index for m in doc.entity_by_id(object_id).mentions}
    return bool(subject_sentences & object_sentences)


def intra_inter_f1(pred_facts, gold_facts, documents):
    """Micro F1 per slice; a fact's slice follows its pair's co-occurrence.

    Returns (intra_f1, inter_f1, empty_slices, slice_counts).
    """
    docs_by_id = {doc.doc_id: doc for doc in documents}

    def slice_of(fact):
        doc = docs_by_id.get(fact[0])
        if doc is None:
            return "inter"
        try:
            return "intra" if pair_is_intra(doc, fact[1], fact[2]) else "inter"
        except KeyError:
            return "inter"

    results, empty, counts = {}, [], {}
    for name in ("intra", "inter"):
        pred_slice = {f for f in pred_facts if slice_of(f) == name}
        gold_slice = {f for f in gold_facts if slice_of(f) == name}
        _, _, f1 = micro_f1(pred_slice, gold_slice)
        tp = len(pred_slice & gold_slice)
        counts[name] = {"tp": tp, "fp": len(pred_slice) - tp,
                        "fn": len(gold_slice) - tp}
        if not gold_slice and not pred_slice:
            empty.append(name)
        results[name] = f1
    return results["intra"], results["inter"], tuple(empty), counts


def evaluate(predictions: PredictionSet, documents, schema, train_docs=None):
    """Full MetricReport for a prediction set against gold documents."""
    pred_facts = predictions.facts()
    gold_facts = gold_fact_set(documents)
    precision, recall, f1 = micro_f1(pred_facts, gold_facts)
    tp = len(pred_facts & gold_facts)

    if train_docs is not None:
        names = train_fact_names(train_docs)
        _, _, ign = ign_f1(pred_facts, gold_facts, names, documents)
    else:
        ign = f1

    intra, inter, empty, slice_counts = intra_inter_f1(pred_facts, gold_facts, documents)
    counts = {"tp": tp, "fp": len(pred_facts) - tp, "fn": len(gold_facts) - tp,
              "intra": slice_counts["intra"], "inter": slice_counts["inter"]}
    return MetricReport(precision=precision, recall=recall, f1=f1, ign_f1=ign,
                        intra_f1=intra, inter_f1=inter, counts=counts,
                        empty_slices=empty)
