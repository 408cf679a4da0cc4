"""Contextualized token representations from a bidirectional recurrent encoder.

A marker symbol is inserted before and after every entity mention, the
augmented token sequence is embedded, and a single-layer bidirectional
LSTM produces one hidden row per augmented position. Mention features are
pooled from the original token rows only; markers shape the context but
never enter a mention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .corpus import AnnotatedDocument, Mention

PAD_ID = 0
UNKNOWN_ID = 1
MARKER_ID = 2
_RESERVED = 3

MARKER_SYMBOL = "*"


class Vocabulary:
    """Token -> id map with reserved ids for padding, unknowns, and the marker.

    The marker id is its own reserved slot, so a corpus token that happens
    to spell "*" still gets a distinct ordinary id.
    """

    def __init__(self, tokens):
        self._ids = {token: _RESERVED + i for i, token in enumerate(tokens)}

    @classmethod
    def build(cls, documents, min_count=1):
        counts = {}
        for doc in documents:
            for token in doc.tokens():
                counts[token.surface] = counts.get(token.surface, 0) + 1
        kept = sorted(t for t, c in counts.items() if c >= min_count)
        return cls(kept)

    def __len__(self):
        return _RESERVED + len(self._ids)

    def id_of(self, surface):
        return self._ids.get(surface, UNKNOWN_ID)

    def tokens(self):
        return sorted(self._ids, key=self._ids.get)


@dataclass
class EncodedDocument:
    hidden: nm.Tensor     # [T_augmented x d]
    index_map: tuple      # original global token index -> augmented row
    augmented_length: int
    width: int


def insert_markers(doc: AnnotatedDocument):
    """Surround every mention span with the marker symbol.

    Returns (slots, index_map): slots is the augmented sequence where a
    None entry is a marker and any other entry is the original Token;
    index_map sends each original global index to its augmented position.
    Overlapping or adjacent mentions each contribute their own markers.
    """
    tokens = doc.tokens()
    opens = [0] * (len(tokens) + 1)
    closes = [0] * (len(tokens) + 1)
    for entity in doc.entities:
        for mention in entity.mentions:
            opens[mention.start] += 1
            closes[mention.end] += 1

    slots, index_map = [], []
    for position, token in enumerate(tokens):
        slots.extend([None] * closes[position])
        slots.extend([None] * opens[position])
        index_map.append(len(slots))
        slots.append(token)
    slots.extend([None] * closes[len(tokens)])
    slots.extend([None] * opens[len(tokens)])
    return slots, tuple(index_map)


class EncoderParams:
    """Embedding table plus one LSTM cell per direction (fused gate weights)."""

    def __init__(self, rng, vocab_size, embedding_dim, hidden_dim):
        self.embedding_dim = embedding_dim
        self.hidden_dim = hidden_dim
        self.embeddings = nm.Parameter(
            "encoder.embeddings", nm.uniform_init(rng, (vocab_size, embedding_dim), embedding_dim))
        self.cells = {}
        for direction in ("fwd", "bwd"):
            self.cells[direction] = {
                "wx": nm.Parameter(f"encoder.{direction}.wx",
                                   nm.uniform_init(rng, (embedding_dim, 4 * hidden_dim))),
                "wh": nm.Parameter(f"encoder.{direction}.wh",
                                   nm.uniform_init(rng, (hidden_dim, 4 * hidden_dim))),
                "b": nm.Parameter(f"encoder.{direction}.b",
                                  nm.uniform_init(rng, (4 * hidden_dim,), embedding_dim)),
            }

    @property
    def width(self):
        return 2 * self.hidden_dim

    def parameters(self):
        yield self.embeddings
        for direction in ("fwd", "bwd"):
            cell = self.cells[direction]
            yield cell["wx"]
            yield cell["wh"]
            yield cell["b"]


def _lstm_pass(rows, cell, hidden_dim, reverse):
    order = range(rows.shape[0] - 1, -1, -1) if reverse else range(rows.shape[0])
    h = nm.constant(np.zeros((1, hidden_dim)))
    c = nm.constant(np.zeros((1, hidden_dim)))
    outputs = [None] * rows.shape[0]
    k = hidden_dim
    for t in order:
        x = rows[t:t + 1, :]
        gates = x @ cell["wx"] + h @ cell["wh"] + cell["b"]
        i = nm.sigmoid(gates[:, 0:k])
        f = nm.sigmoid(gates[:, k:2 * k])
        g = nm.tanh(gates[:, 2 * k:3 * k])
        o = nm.sigmoid(gates[:, 3 * k:4 * k])
        c = f * c + i * g
        h = o * nm.tanh(c)
        outputs[t] = h
    return outputs


def encode_document(doc: AnnotatedDocument, vocab: Vocabulary, params: EncoderParams):
    """Run the marker-augmented document through both recurrent directions.

    Row t of the result is [forward state; backward state] at position t.
    Deterministic given parameters and input.
    """
    slots, index_map = insert_markers(doc)
    ids = [MARKER_ID if slot is None else vocab.id_of(slot.surface) for slot in slots]
    rows = nm.gather(params.embeddings, ids)
    forward = _lstm_pass(rows, params.cells["fwd"], params.hidden_dim, reverse=False)
    backward = _lstm_pass(rows, params.cells["bwd"], params.hidden_dim, reverse=True)
    hidden = nm.concat([nm.concat(forward, axis=0), nm.concat(backward, axis=0)], axis=1)
    return EncodedDocument(hidden=hidden, index_map=index_map,
                           augmented_length=len(slots), width=params.width)


def mention_embedding(enc: EncodedDocument, mention: Mention):
    """Mean of the mention's original token rows; marker rows are excluded."""
    rows = [enc.index_map[i] for i in range(mention.start, mention.end)]
    return nm.mean(nm.gather(enc.hidden, rows), axis=0)


def entity_vector(enc: EncodedDocument, entity):
    """Smooth-maximum pool of an entity's mention embeddings (encoder level)."""
    pooled = [mention_embedding(enc, mention) for mention in entity.mentions]
    if len(pooled) == 1:
        return pooled[0]
    return nm.logsumexp(nm.stack(pooled, axis=0), axis=0)
