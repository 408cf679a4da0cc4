"""Full relation scorer: both syntax heads plus the learnable fusion weight.

One model owns every parameter. A document is encoded once per pass
(recurrent encoder, per-sentence tree folds, entity vectors); each ordered
entity pair then gets its own attention, tree-side scores, pair-specific
graph, and graph-side scores, fused into the final score vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import constituency as ct
from . import depgraph as dg
from . import numerics as nm
from .corpus import AnnotatedDocument, LabelSchema
from .encoder import EncoderParams, Vocabulary, encode_document, entity_vector

LEAKY_SLOPE = 0.01


@dataclass
class RelationScores:
    """Per-pair score vectors over the relation classes plus the NA column."""
    const_scores: nm.Tensor
    dep_scores: nm.Tensor
    final_scores: nm.Tensor


@dataclass
class DocumentState:
    """Pair-independent activations computed once per document."""
    enc: object
    tree_states: list
    bank: ct.SentenceBank
    entity_vectors: dict


def fuse(dep_scores, const_scores, fusion_weight):
    """Final scores: graph head plus the weighted tree head.

    The weight is a learnable scalar, so gradients reach both heads and
    the weight itself.
    """
    if dep_scores.shape != const_scores.shape:
        raise nm.ShapeError(f"score widths differ: {dep_scores.shape} vs "
                            f"{const_scores.shape}")
    return dep_scores + fusion_weight * const_scores


class RelationModel:
    def __init__(self, schema: LabelSchema, vocab: Vocabulary, cfg, seed=None):
        self.schema = schema
        self.vocab = vocab
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        num_scores = schema.num_relations + 1
        self.encoder = EncoderParams(rng, len(vocab), cfg.embedding_dim, cfg.hidden_dim)
        width = self.encoder.width
        self.tree = ct.TreeLstmParams(rng, width, cfg.tree_state_dim)
        self.attention = ct.AttentionParams(rng, width, cfg.tree_state_dim,
                                            cfg.attention_heads)
        self.const_head = ct.ConstScoreParams(rng, width, cfg.tree_state_dim,
                                              cfg.bilinear_dim, num_scores)
        self.dep_head = dg.DepGraphParams(rng, width, cfg.tree_state_dim, cfg, num_scores)
        self.fusion_weight = nm.Parameter("fusion.eta", np.asarray(1.0))

    def parameters(self):
        params = list(self.encoder.parameters())
        params.extend(self.tree.parameters())
        params.extend(self.attention.parameters())
        params.extend(self.const_head.parameters())
        params.extend(self.dep_head.parameters())
        params.append(self.fusion_weight)
        return params

    def zero_grad(self):
        for param in self.parameters():
            param.zero_grad()

    def load_values(self, values):
        for param in self.parameters():
            if param.name not in values:
                raise KeyError(f"checkpoint is missing parameter {param.name!r}")
            stored = values[param.name]
            if stored.shape != param.shape:
                raise ValueError(f"parameter {param.name!r} has shape {param.shape}, "
                                 f"checkpoint has {stored.shape}")
            param.data = stored.copy()

    def encode(self, doc: AnnotatedDocument) -> DocumentState:
        enc = encode_document(doc, self.vocab, self.encoder)

        def leaf_features(global_index):
            row = enc.index_map[global_index]
            return enc.hidden[row:row + 1, :]

        tree_states = [ct.tree_lstm_forward(tree, leaf_features, self.tree)
                       for tree in doc.constituency_trees]
        bank = ct.sentence_vectors(tree_states)
        vectors = {entity.entity_id: entity_vector(enc, entity)
                   for entity in doc.entities}
        return DocumentState(enc=enc, tree_states=tree_states, bank=bank,
                             entity_vectors=vectors)

    def score_pair(self, doc, state: DocumentState, subject_id, object_id):
        subject_vec = state.entity_vectors[subject_id]
        object_vec = state.entity_vectors[object_id]
        attention = ct.pair_attention(subject_vec, object_vec, state.bank, self.attention)
        const_scores = ct.const_score(subject_vec, object_vec, attention.attended,
                                      self.const_head)

        if self.cfg.uniform_attention:
            count = state.bank.sentence_count
            weights = nm.constant(np.full(count, 1.0 / count))
        else:
            weights = attention.weights
        graph = dg.build_graph(doc, state.enc, state.bank, weights, self.dep_head)
        node_features = dg.gcn_forward(graph, self.dep_head)
        pooled_subject = dg.entity_pool(graph, node_features, subject_id)
        pooled_object = dg.entity_pool(graph, node_features, object_id)
        path_rows = dg.path_feature(graph, node_features, subject_id, object_id,
                                    pooled_subject, pooled_object)
        pair_row = dg.pair_transform(pooled_subject, pooled_object, self.dep_head,
                                     slope=LEAKY_SLOPE)
        pair_repr = dg.pair_representation(pooled_subject, pooled_object, pair_row,
                                           path_rows)
        dep_scores = dg.dep_score(pair_repr, self.dep_head)
        final_scores = fuse(dep_scores, const_scores, self.fusion_weight)
        return RelationScores(const_scores=const_scores, dep_scores=dep_scores,
                              final_scores=final_scores)

    def ordered_pairs(self, doc: AnnotatedDocument):
        ids = [entity.entity_id for entity in doc.entities]
        return [(s, o) for s in ids for o in ids if s != o]

    def document_scores(self, doc: AnnotatedDocument):
        """Score every ordered entity pair; the per-document forward pass."""
        state = self.encode(doc)
        return [(pair, self.score_pair(doc, state, *pair))
                for pair in self.ordered_pairs(doc)]
