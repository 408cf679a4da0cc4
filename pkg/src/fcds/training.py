"""Loss, optimizer, schedule, and the training loop.

The per-pair loss is a hinge against the NA column: every relation class
must clear the margin on the correct side of the NA score. Documents
contribute the sum over their ordered entity pairs; AdamW steps after a
configurable number of documents, under linear warmup followed by linear
decay to zero. Runs are bit-reproducible per seed.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math

import numpy as np

from . import numerics as nm
from .checkpoint import save_checkpoint, write_atomic
from .encoder import Vocabulary
from .metrics import PredictionSet, evaluate
from .model import RelationModel


class NumericFailure(RuntimeError):
    """Raised when training produces a non-finite loss."""


class ConfigError(ValueError):
    """Raised for malformed configuration files or invalid values."""


@dataclasses.dataclass
class TrainConfig:
    seed: int = 13
    epochs: int = 200
    learning_rate: float = 5e-5
    weight_decay: float = 1e-4
    margin: float = 1.0
    warmup_ratio: float = 0.06
    accum_docs: int = 1
    patience: int = 10
    target_f1: float = 1.0
    embedding_dim: int = 32
    hidden_dim: int = 32
    vocab_min_count: int = 1
    tree_state_dim: int = 256
    attention_heads: int = 2
    bilinear_dim: int = 64
    gcn_layers: int = 3
    gcn_dim: int = 128
    fusion_hidden_dim: int = 64
    pair_dim: int = 64
    score_hidden_dim: int = 128
    uniform_attention: bool = False

    def __post_init__(self):
        if not (0.0 < self.warmup_ratio < 1.0):
            raise ConfigError(f"warmup_ratio must be in (0, 1), got {self.warmup_ratio}")
        if self.margin <= 0.0:
            raise ConfigError(f"margin must be positive, got {self.margin}")
        if self.epochs < 1 or self.accum_docs < 1:
            raise ConfigError("epochs and accum_docs must be at least 1")

    @classmethod
    def from_file(cls, path):
        """Flat `key = value` lines; '#' starts a comment."""
        values = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        with open(path, "r", encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path} line {line_no}: expected 'key = value'")
                key, _, raw = line.partition("=")
                key, raw = key.strip(), raw.strip()
                if key not in types:
                    raise ConfigError(f"{path} line {line_no}: unknown key {key!r}")
                values[key] = _parse_value(raw, types[key], path, line_no)
        return cls(**values)

    def to_file(self, path):
        lines = [f"{f.name} = {_format_value(getattr(self, f.name))}"
                 for f in dataclasses.fields(self)]
        write_atomic(path, ("\n".join(lines) + "\n").encode("utf-8"))

    def config_hash(self):
        lines = sorted(f"{f.name}={_format_value(getattr(self, f.name))}"
                       for f in dataclasses.fields(self))
        return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()[:16]

    def with_overrides(self, **overrides):
        return dataclasses.replace(self, **overrides)


def _parse_value(raw, type_name, path, line_no):
    type_name = str(type_name)
    try:
        if "bool" in type_name:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if "int" in type_name:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"{path} line {line_no}: cannot parse {raw!r} as {type_name}") from None


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


# -- loss and prediction ---------------------------------------------------


def margin_loss(final_scores, gold_classes, margin):
    """Hinge over every relation class against the NA column.

    Positive classes must exceed the NA score by the margin; all others
    must trail it by the margin. With a single relation class this reduces
    exactly to the classical hinge loss.
    """
    num_scores = final_scores.shape[0]
    num_classes = num_scores - 1
    signs = np.full(num_classes, -1.0)
    for index in gold_classes:
        if not (0 <= index < num_classes):
            raise ValueError(f"gold class {index} outside [0, {num_classes})")
        signs[index] = 1.0
    relation_scores = final_scores[0:num_classes]
    na_score = final_scores[num_classes]
    violations = nm.max_with_zero(margin - nm.constant(signs) * (relation_scores - na_score))
    return nm.tensor_sum(violations)


def predict(final_scores):
    """Classes scored strictly above NA; the empty set is the NA prediction."""
    values = final_scores.data if isinstance(final_scores, nm.Tensor) else np.asarray(final_scores)
    num_classes = values.shape[0] - 1
    na = values[num_classes]
    return {i for i in range(num_classes) if values[i] > na}


# -- optimizer and schedule -------------------------------------------------


def warmup_linear_lr(step, total_steps, cfg: TrainConfig):
    """Linear warmup to the peak rate, then linear decay to zero.

    `step` counts from 1 to total_steps inclusive.
    """
    warmup_steps = max(1, math.ceil(cfg.warmup_ratio * total_steps))
    if step <= warmup_steps:
        return cfg.learning_rate * step / warmup_steps
    return cfg.learning_rate * (total_steps - step) / (total_steps - warmup_steps)


class AdamW:
    """Adaptive moments with decoupled weight decay."""

    BETA1 = 0.9
    BETA2 = 0.999
    EPS = 1e-8

    def __init__(self, params, weight_decay):
        self.params = list(params)
        self.weight_decay = weight_decay
        self.first = {p.name: np.zeros_like(p.data) for p in self.params}
        self.second = {p.name: np.zeros_like(p.data) for p in self.params}
        self.updates = 0

    def apply(self, lr):
        self.updates += 1
        correction1 = 1.0 - self.BETA1 ** self.updates
        correction2 = 1.0 - self.BETA2 ** self.updates
        for param in self.params:
            grad = param.grad if param.grad is not None else np.zeros_like(param.data)
            m = self.first[param.name]
            v = self.second[param.name]
            m *= self.BETA1
            m += (1.0 - self.BETA1) * grad
            v *= self.BETA2
            v += (1.0 - self.BETA2) * grad * grad
            step_direction = (m / correction1) / (np.sqrt(v / correction2) + self.EPS)
            param.data = param.data - lr * (step_direction + self.weight_decay * param.data)


def optimizer_step(optimizer: AdamW, step, total_steps, cfg: TrainConfig):
    """One scheduled update; gradients must already be accumulated."""
    optimizer.apply(warmup_linear_lr(step, total_steps, cfg))


# -- training loop -----------------------------------------------------------


def gold_pair_map(doc):
    """Ordered pair -> set of gold relation indices."""
    mapping = {}
    for fact in doc.gold_facts:
        mapping.setdefault((fact.subject_entity, fact.object_entity),
                           set()).add(fact.relation_label)
    return mapping


def document_loss(model: RelationModel, doc, margin):
    """Sum of per-pair hinge losses; None when the document has no pairs."""
    pairs = model.ordered_pairs(doc)
    if not pairs:
        return None
    gold = gold_pair_map(doc)
    state = model.encode(doc)
    total = None
    for pair in pairs:
        scores = model.score_pair(doc, state, *pair)
        pair_loss = margin_loss(scores.final_scores, gold.get(pair, set()), margin)
        if not np.isfinite(pair_loss.data):
            raise NumericFailure(f"non-finite loss at doc {doc.doc_id} pair {pair}")
        total = pair_loss if total is None else total + pair_loss
    return total


def generate_predictions(model: RelationModel, documents, schema):
    """Decode every ordered pair of every document, without recording graphs."""
    predictions = PredictionSet()
    with nm.no_grad():
        for doc in documents:
            for (subject, object_), scores in model.document_scores(doc):
                values = scores.final_scores.data
                na = values[schema.num_relations]
                for relation in predict(scores.final_scores):
                    predictions.add(doc.doc_id, subject, object_, relation,
                                    float(values[relation] - na))
    return predictions


def train(train_docs, dev_docs, schema, cfg: TrainConfig, ckpt_path, log_path):
    """Fit the model; write the checkpoint and a JSON-lines metric log.

    Early-stops on dev F1 with the configured patience, and immediately
    once dev F1 reaches `target_f1`. The saved checkpoint holds the best
    dev-F1 parameters seen.
    """
    vocab = Vocabulary.build(train_docs, cfg.vocab_min_count)
    model = RelationModel(schema, vocab, cfg)
    optimizer = AdamW(model.parameters(), cfg.weight_decay)
    shuffle_rng = np.random.default_rng(cfg.seed + 1)

    docs_per_epoch = max(1, math.ceil(len(train_docs) / cfg.accum_docs))
    total_steps = cfg.epochs * docs_per_epoch
    step = 0
    records = []
    best_f1 = -1.0
    best_state = {p.name: p.data.copy() for p in model.parameters()}
    best_epoch = 0

    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(len(train_docs))
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.accum_docs):
            model.zero_grad()
            for index in order[start:start + cfg.accum_docs]:
                loss = document_loss(model, train_docs[index], cfg.margin)
                if loss is None:
                    continue
                epoch_loss += loss.item()
                loss.backward()
            step += 1
            optimizer_step(optimizer, step, total_steps, cfg)

        preds = generate_predictions(model, dev_docs, schema)
        report = evaluate(preds, dev_docs, schema, train_docs=train_docs)
        records.append({"epoch": epoch, "loss": epoch_loss,
                        "dev_f1": report.f1, "dev_ign_f1": report.ign_f1,
                        "eta": float(model.fusion_weight.data)})
        if report.f1 > best_f1:
            best_f1 = report.f1
            best_epoch = epoch
            best_state = {p.name: p.data.copy() for p in model.parameters()}
        if report.f1 >= cfg.target_f1:
            break
        if epoch - best_epoch >= cfg.patience:
            break

    model.load_values(best_state)
    save_checkpoint(ckpt_path, model.parameters(), cfg.seed, step, cfg.config_hash())
    log_payload = "\n".join(json.dumps(r, sort_keys=True) for r in records) + "\n"
    write_atomic(log_path, log_payload.encode("utf-8"))
    return {"model": model, "records": records, "best_f1": best_f1,
            "best_epoch": best_epoch, "steps": step}
