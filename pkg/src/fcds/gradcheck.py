"""Finite-difference verification for every model component.

Each check builds a tiny fixture at a given seed, computes a scalar loss
through one component (or a chain of them), and compares every checked
parameter's analytic gradient against central differences. The returned
value is the worst relative error across all coordinates, using
|analytic - numeric| / (|analytic| + |numeric| + 1e-12).
"""

from __future__ import annotations

import numpy as np

from . import constituency as ct
from . import depgraph as dg
from . import numerics as nm
from .corpus import LabelSchema
from .encoder import Vocabulary, encode_document
from .model import RelationModel, fuse
from .synthetic import RELATION_NAMES, layout_document, relation_corpus
from .training import TrainConfig, margin_loss

TINY = dict(embedding_dim=5, hidden_dim=3, tree_state_dim=4, attention_heads=2,
            bilinear_dim=4, gcn_layers=3, gcn_dim=5, fusion_hidden_dim=4,
            pair_dim=4, score_hidden_dim=6)
SMALL = dict(embedding_dim=8, hidden_dim=5, tree_state_dim=6, attention_heads=2,
             bilinear_dim=6, gcn_layers=3, gcn_dim=8, fusion_hidden_dim=6,
             pair_dim=6, score_hidden_dim=10)
DIMS = {"tiny": TINY, "small": SMALL}


def tiny_config(seed, dims="tiny"):
    return TrainConfig(seed=seed, **DIMS[dims])


def param_grad_error(loss_fn, params, h=1e-5, max_coords=None):
    """Worst relative error over the coordinates of every given parameter.

    With `max_coords`, large parameters are probed at that many evenly
    strided coordinates instead of all of them (two forward passes per
    coordinate add up quickly on composite losses).
    """
    for param in params:
        param.zero_grad()
    loss = loss_fn()
    loss.backward()
    worst = 0.0
    for param in params:
        analytic = (param.grad if param.grad is not None
                    else np.zeros_like(param.data)).reshape(-1)
        flat = param.data.reshape(-1)
        if max_coords is None or flat.size <= max_coords:
            indices = range(flat.size)
        else:
            indices = sorted(set(np.linspace(0, flat.size - 1, max_coords,
                                             dtype=int).tolist()))
        for i in indices:
            original = flat[i]
            flat[i] = original + h
            hi = loss_fn().item()
            flat[i] = original - h
            lo = loss_fn().item()
            flat[i] = original
            numeric = (hi - lo) / (2.0 * h)
            err = abs(analytic[i] - numeric) / (abs(analytic[i]) + abs(numeric) + 1e-12)
            worst = max(worst, err)
    return worst


def _fixture(seed, compact=False, rescale=0.0, dims="tiny"):
    """Tiny corpus and model; `rescale` re-draws parameters at a larger scale.

    Structurally identical sentences produce near-identical tree roots at
    default init, which drives some attention gradients into the
    finite-difference noise floor; the compact mixed layout (fillers plus
    two relation sentences, so cosine root edges and a cross-sentence pair
    exist) and wider weights keep every checked gradient well above it.
    """
    if compact:
        rng = np.random.default_rng(seed)
        docs = [layout_document(rng, "check-0",
                                ("filler", "relation", "filler", "filler", "relation"))]
        schema = LabelSchema(RELATION_NAMES)
    else:
        docs, schema = relation_corpus(2, seed)
    cfg = tiny_config(seed, dims)
    vocab = Vocabulary.build(docs, 1)
    model = RelationModel(schema, vocab, cfg)
    if rescale:
        rng = np.random.default_rng(seed + 1000)
        for param in model.parameters():
            param.data = rng.normal(0.0, rescale, param.shape)
        model.fusion_weight.data = np.asarray(1.0)
    return docs, schema, model


def check_encoder(seed=7, dims="tiny"):
    docs, _, model = _fixture(seed, dims=dims)
    doc = docs[0]

    def loss_fn():
        enc = encode_document(doc, model.vocab, model.encoder)
        return nm.tensor_sum(enc.hidden)

    params = [model.encoder.embeddings,
              model.encoder.cells["fwd"]["wx"],
              model.encoder.cells["bwd"]["wh"],
              model.encoder.cells["fwd"]["b"]]
    return param_grad_error(loss_fn, params)


def check_tree_lstm(seed=7, dims="tiny"):
    docs, _, model = _fixture(seed, dims=dims)
    doc = docs[0]
    rng = np.random.default_rng(seed + 100)
    table = nm.Parameter("check.leaf_table",
                         rng.normal(0, 0.5, (doc.token_count(), model.encoder.width)))

    def loss_fn():
        total = None
        for tree in doc.constituency_trees:
            states = ct.tree_lstm_forward(
                tree, lambda gi: table[gi:gi + 1, :], model.tree)
            term = nm.tensor_sum(states.root_hidden())
            total = term if total is None else total + term
        return total

    params = [table,
              model.tree.gate("input")[0], model.tree.gate("input")[1],
              model.tree.gate("forget")[1], model.tree.gate("update")[2],
              model.tree.gate("output")[0]]
    return param_grad_error(loss_fn, params)


def check_attention(seed=7, dims="tiny"):
    _, _, model = _fixture(seed, dims=dims)
    rng = np.random.default_rng(seed + 200)
    k = model.cfg.tree_state_dim
    d = model.encoder.width
    bank_param = nm.Parameter("check.bank", rng.normal(0, 0.5, (3, k)))
    subject = nm.Parameter("check.subject", rng.normal(0, 0.5, (d,)))
    object_ = nm.Parameter("check.object", rng.normal(0, 0.5, (d,)))
    probe = nm.constant(rng.normal(0, 1.0, (3,)))

    def loss_fn():
        bank = ct.SentenceBank(vectors=bank_param)
        attn = ct.pair_attention(subject, object_, bank, model.attention)
        return nm.tensor_sum(attn.attended) + nm.tensor_sum(attn.weights * probe)

    params = [bank_param, subject, object_,
              model.attention.w_query, model.attention.w_key,
              model.attention.w_value, model.attention.w_out]
    return param_grad_error(loss_fn, params)


def check_const_score(seed=7, dims="tiny"):
    _, _, model = _fixture(seed, dims=dims)
    rng = np.random.default_rng(seed + 300)
    d = model.encoder.width
    k = model.cfg.tree_state_dim
    subject = nm.Parameter("check.subject", rng.normal(0, 0.5, (d,)))
    object_ = nm.Parameter("check.object", rng.normal(0, 0.5, (d,)))
    attended = nm.Parameter("check.attended", rng.normal(0, 0.5, (1, k)))

    def loss_fn():
        return nm.tensor_sum(ct.const_score(subject, object_, attended, model.const_head))

    params = [subject, object_, attended,
              model.const_head.w_subject, model.const_head.w_object_ctx,
              model.const_head.w_bilinear, model.const_head.b_bilinear]
    return param_grad_error(loss_fn, params)


def check_depgraph(seed=7, dims="tiny"):
    """Graph construction through the graph-side score head, end to end,
    for one intra-sentence and one cross-sentence entity pair."""
    docs, _, model = _fixture(seed, compact=True, rescale=0.6, dims=dims)
    doc = docs[0]
    ids = [entity.entity_id for entity in doc.entities]
    probe_pairs = [(ids[0], ids[1]), (ids[0], ids[3])]

    def score_pair(state, subject_id, object_id):
        attn = ct.pair_attention(state.entity_vectors[subject_id],
                                 state.entity_vectors[object_id],
                                 state.bank, model.attention)
        graph = dg.build_graph(doc, state.enc, state.bank, attn.weights, model.dep_head)
        features = dg.gcn_forward(graph, model.dep_head)
        pooled_s = dg.entity_pool(graph, features, subject_id)
        pooled_o = dg.entity_pool(graph, features, object_id)
        path_rows = dg.path_feature(graph, features, subject_id, object_id,
                                    pooled_s, pooled_o)
        pair_row = dg.pair_transform(pooled_s, pooled_o, model.dep_head)
        rep = dg.pair_representation(pooled_s, pooled_o, pair_row, path_rows)
        return nm.tensor_sum(dg.dep_score(rep, model.dep_head))

    def loss_fn():
        state = model.encode(doc)
        total = None
        for subject_id, object_id in probe_pairs:
            term = score_pair(state, subject_id, object_id)
            total = term if total is None else total + term
        return total

    params = [model.dep_head.w_fuse1, model.dep_head.w_adapt_token,
              model.dep_head.w_adapt_document, model.dep_head.gcn_weights[0],
              model.dep_head.gcn_weights[-1], model.dep_head.w_pair_subject,
              model.dep_head.w_score1, model.dep_head.b_score2]
    # Composite losses run tens of units large; h=1e-4 keeps the difference
    # quotient above the float64 rounding floor at small-gradient coordinates.
    return param_grad_error(loss_fn, params, h=1e-4, max_coords=40)


def check_fuse(seed=7, dims="tiny"):
    rng = np.random.default_rng(seed + 400)
    dep = nm.constant(rng.normal(0, 1.0, (5,)))
    const = nm.constant(rng.normal(0, 1.0, (5,)))

    def loss_fn(eta):
        return nm.tensor_sum(fuse(dep, const, eta))

    return nm.grad_check(loss_fn, nm.Tensor(np.asarray(1.0)))


def check_margin_loss(seed=7, dims="tiny"):
    """Gradient of the hinge w.r.t. the score vector, away from the kinks."""
    rng = np.random.default_rng(seed + 500)
    worst = 0.0
    for _ in range(5):
        scores = rng.normal(0, 1.0, (5,))
        # Keep every margin term at least 0.05 away from its kink.
        while True:
            gaps = np.abs(1.0 - np.abs(scores[:4] - scores[4]))
            if np.all(gaps > 0.05):
                break
            scores = rng.normal(0, 1.5, (5,))
        gold = {int(rng.integers(0, 4))}
        err = nm.grad_check(lambda z: margin_loss(z, gold, 1.0), nm.Tensor(scores))
        worst = max(worst, err)
    return worst


def check_full_model(seed=7, dims="tiny"):
    """Fused final scores through the whole pipeline, one intra- and one
    cross-sentence pair, against a sampled subset of every param group.

    The readout is a fixed random weighting of the fused scores: smooth
    everywhere, unlike the hinge, whose active set flips under coordinate
    perturbations (the hinge has its own check at controlled points).
    """
    docs, _, model = _fixture(seed, compact=True, rescale=0.6, dims=dims)
    doc = docs[0]
    ids = [entity.entity_id for entity in doc.entities]
    probe_pairs = [(ids[0], ids[1]), (ids[2], ids[0])]
    readout = nm.constant(np.random.default_rng(seed + 2000).normal(
        size=model.schema.num_relations + 1))

    def loss_fn():
        state = model.encode(doc)
        total = None
        for pair in probe_pairs:
            scores = model.score_pair(doc, state, *pair)
            term = nm.tensor_sum(scores.final_scores * readout)
            total = term if total is None else total + term
        return total

    params = [model.fusion_weight, model.encoder.cells["fwd"]["wx"],
              model.tree.gate("update")[1], model.attention.w_query,
              model.const_head.w_bilinear, model.dep_head.gcn_weights[1],
              model.dep_head.w_score2]
    return param_grad_error(loss_fn, params, h=1e-4, max_coords=40)


COMPONENT_CHECKS = (
    ("encoder", check_encoder),
    ("tree_lstm", check_tree_lstm),
    ("attention", check_attention),
    ("const_score", check_const_score),
    ("depgraph_to_score", check_depgraph),
    ("fuse", check_fuse),
    ("margin_loss", check_margin_loss),
    ("full_model", check_full_model),
)

_CACHE = {}


def run_all(seed=7, dims="tiny"):
    """Component name -> max relative error. Pure in (seed, dims), so
    repeated in-process calls reuse the first result."""
    key = (seed, dims)
    if key not in _CACHE:
        _CACHE[key] = {name: check(seed, dims) for name, check in COMPONENT_CHECKS}
    return dict(_CACHE[key])
