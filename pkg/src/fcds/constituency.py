"""Constituency-tree encoding and the tree-side relation scores.

Each sentence's phrase-structure tree is folded bottom-up by a child-sum
Tree-LSTM: gates see the sum of the children's hidden states and every
child gets its own forget gate, so sibling order cannot matter. The root
state is the sentence vector; a multi-head attention layer conditioned on
the entity pair picks out the relevant sentences; a bilinear form over the
attended context produces one score per relation class plus the NA column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm


@dataclass
class TreeStates:
    """Hidden and memory state per tree node, keyed by node identity."""
    hidden: dict   # id(node) -> Tensor [1 x k]
    memory: dict   # id(node) -> Tensor [1 x k]
    root: object

    def root_hidden(self):
        return self.hidden[id(self.root)]


@dataclass
class SentenceBank:
    """Stack of sentence root states, one row per sentence."""
    vectors: nm.Tensor  # [I x k]

    @property
    def sentence_count(self):
        return self.vectors.shape[0]

    def sentence_row(self, index):
        return self.vectors[index:index + 1, :]


@dataclass
class PairAttention:
    attended: nm.Tensor  # [1 x k] pair-conditioned sentence summary
    weights: nm.Tensor   # [I] probability vector over sentences


class TreeLstmParams:
    """Child-sum cell: per-gate input, child-state, and bias weights."""

    def __init__(self, rng, input_dim, state_dim):
        self.input_dim = input_dim
        self.state_dim = state_dim
        self._mats = {}
        for gate in ("input", "output", "update", "forget"):
            self._mats[gate] = (
                nm.Parameter(f"tree.{gate}.wx", nm.uniform_init(rng, (input_dim, state_dim))),
                nm.Parameter(f"tree.{gate}.uh", nm.uniform_init(rng, (state_dim, state_dim))),
                nm.Parameter(f"tree.{gate}.b", nm.uniform_init(rng, (state_dim,), input_dim)),
            )

    def gate(self, name):
        return self._mats[name]

    def parameters(self):
        for gate in ("input", "output", "update", "forget"):
            yield from self._mats[gate]


def tree_lstm_forward(tree, leaf_features, params: TreeLstmParams):
    """Fold one constituency tree bottom-up.

    `leaf_features(global_token_index)` supplies the [1 x input_dim] row
    for each leaf; non-leaf inputs are zero, and leaves start from zero
    child state. Children are processed before parents (iterative, so tree
    depth is unbounded).
    """
    k = params.state_dim
    zero_input = nm.constant(np.zeros((1, params.input_dim)))
    hidden, memory = {}, {}

    order = []
    stack = [tree]
    while stack:
        node = stack.pop()
        order.append(node)
        stack.extend(node.children)
    for node in reversed(order):
        x = leaf_features(node.leaf_token) if node.is_leaf() else zero_input
        if node.children:
            child_h = [hidden[id(child)] for child in node.children]
            child_sum = child_h[0]
            for extra in child_h[1:]:
                child_sum = child_sum + extra
        else:
            child_sum = nm.constant(np.zeros((1, k)))

        wx_i, uh_i, b_i = params.gate("input")
        wx_o, uh_o, b_o = params.gate("output")
        wx_u, uh_u, b_u = params.gate("update")
        gate_in = nm.sigmoid(x @ wx_i + child_sum @ uh_i + b_i)
        gate_out = nm.sigmoid(x @ wx_o + child_sum @ uh_o + b_o)
        update = nm.tanh(x @ wx_u + child_sum @ uh_u + b_u)

        cell = gate_in * update
        wx_f, uh_f, b_f = params.gate("forget")
        for child in node.children:
            forget = nm.sigmoid(x @ wx_f + hidden[id(child)] @ uh_f + b_f)
            cell = cell + forget * memory[id(child)]

        hidden[id(node)] = gate_out * nm.tanh(cell)
        memory[id(node)] = cell
    return TreeStates(hidden=hidden, memory=memory, root=tree)


def sentence_vectors(states_per_sentence):
    """Stack each sentence's root hidden state into the document bank."""
    return SentenceBank(vectors=nm.concat(
        [states.root_hidden() for states in states_per_sentence], axis=0))


class AttentionParams:
    def __init__(self, rng, entity_dim, state_dim, heads):
        if state_dim % heads != 0:
            raise ValueError(f"tree_state_dim {state_dim} not divisible by "
                             f"attention_heads {heads}")
        self.heads = heads
        self.state_dim = state_dim
        self.w_query = nm.Parameter("attention.w_query",
                                    nm.uniform_init(rng, (entity_dim, state_dim)))
        self.w_key = nm.Parameter("attention.w_key",
                                  nm.uniform_init(rng, (state_dim, state_dim)))
        self.w_value = nm.Parameter("attention.w_value",
                                    nm.uniform_init(rng, (state_dim, state_dim)))
        self.w_out = nm.Parameter("attention.w_out",
                                  nm.uniform_init(rng, (state_dim, state_dim)))

    def parameters(self):
        yield from (self.w_query, self.w_key, self.w_value, self.w_out)


def pair_attention(subject_vec, object_vec, bank: SentenceBank, params: AttentionParams):
    """Scaled dot-product attention over sentence vectors, queried by the pair.

    The query is a projection of (subject - object); keys and values are
    projections of the sentence bank. Head outputs are concatenated and
    projected back to the state width; the returned weight vector is the
    mean over heads, so it still sums to one.
    """
    entity_dim = subject_vec.shape[0]
    query = nm.reshape(subject_vec - object_vec, (1, entity_dim)) @ params.w_query
    keys = bank.vectors @ params.w_key
    values = bank.vectors @ params.w_value

    head_dim = params.state_dim // params.heads
    scale = 1.0 / np.sqrt(head_dim)
    outputs, weight_rows = [], []
    for head in range(params.heads):
        lo, hi = head * head_dim, (head + 1) * head_dim
        logits = (query[:, lo:hi] @ nm.transpose(keys[:, lo:hi])) * scale
        weights = nm.softmax(logits, axis=1)
        outputs.append(weights @ values[:, lo:hi])
        weight_rows.append(weights)
    attended = nm.concat(outputs, axis=1) @ params.w_out
    mean_weights = nm.reshape(nm.mean(nm.stack(weight_rows, axis=0), axis=0),
                              (bank.sentence_count,))
    return PairAttention(attended=attended, weights=mean_weights)


class ConstScoreParams:
    """Pair/context mixing plus one bilinear form per output class."""

    def __init__(self, rng, entity_dim, state_dim, mix_dim, num_scores):
        self.mix_dim = mix_dim
        self.num_scores = num_scores
        self.w_subject = nm.Parameter("const_score.w_subject",
                                      nm.uniform_init(rng, (entity_dim, mix_dim)))
        self.w_subject_ctx = nm.Parameter("const_score.w_subject_ctx",
                                          nm.uniform_init(rng, (state_dim, mix_dim)))
        self.w_object = nm.Parameter("const_score.w_object",
                                     nm.uniform_init(rng, (entity_dim, mix_dim)))
        self.w_object_ctx = nm.Parameter("const_score.w_object_ctx",
                                         nm.uniform_init(rng, (state_dim, mix_dim)))
        self.w_bilinear = nm.Parameter(
            "const_score.w_bilinear",
            nm.uniform_init(rng, (mix_dim, num_scores * mix_dim)))
        self.b_bilinear = nm.Parameter("const_score.b_bilinear",
                                       nm.uniform_init(rng, (num_scores,), mix_dim))

    def parameters(self):
        yield from (self.w_subject, self.w_subject_ctx, self.w_object,
                    self.w_object_ctx, self.w_bilinear, self.b_bilinear)


def const_score(subject_vec, object_vec, attended, params: ConstScoreParams):
    """Tree-side scores: one bilinear form per relation class plus NA."""
    entity_dim = subject_vec.shape[0]
    subject_row = nm.reshape(subject_vec, (1, entity_dim))
    object_row = nm.reshape(object_vec, (1, entity_dim))
    z_subject = nm.tanh(subject_row @ params.w_subject + attended @ params.w_subject_ctx)
    z_object = nm.tanh(object_row @ params.w_object + attended @ params.w_object_ctx)

    mixed = nm.reshape(z_subject @ params.w_bilinear, (params.num_scores, params.mix_dim))
    scores = nm.reshape(mixed @ nm.transpose(z_object), (params.num_scores,))
    return scores + params.b_bilinear
