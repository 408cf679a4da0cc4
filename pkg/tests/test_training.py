"""Loss identities, prediction rule, optimizer schedule, and training loop."""

import json
import math
import os

import numpy as np
import pytest

from fcds import numerics as nm
from fcds.checkpoint import load_checkpoint
from fcds.encoder import Vocabulary
from fcds.gradcheck import tiny_config
from fcds.model import RelationModel, fuse
from fcds.synthetic import relation_corpus
from fcds.training import (AdamW, ConfigError, TrainConfig, document_loss,
                           margin_loss, optimizer_step, predict, train,
                           warmup_linear_lr)


class TestFuse:
    def test_simple_sum(self):
        out = fuse(nm.Tensor(np.array([0.3])), nm.Tensor(np.array([0.2])),
                   nm.Tensor(np.array(1.0)))
        assert out.data[0] == pytest.approx(0.5)

    def test_zero_weight_passthrough(self):
        dep = nm.Tensor(np.array([1.0, -2.0, 0.5]))
        out = fuse(dep, nm.Tensor(np.array([9.0, 9.0, 9.0])), nm.Tensor(np.array(0.0)))
        np.testing.assert_array_equal(out.data, dep.data)

    def test_weight_gradient_is_const_scores(self):
        """d z_final / d eta sums to the tree-head scores, per finite differences."""
        rng = np.random.default_rng(0)
        const = nm.Tensor(rng.normal(size=4))
        dep = nm.Tensor(rng.normal(size=4))
        err = nm.grad_check(lambda eta: nm.tensor_sum(fuse(dep, const, eta)),
                            nm.Tensor(np.array(1.0)))
        assert err <= 1e-8
        eta = nm.Tensor(np.array(1.0), requires_grad=True)
        nm.tensor_sum(fuse(dep, const, eta)).backward()
        assert eta.grad == pytest.approx(const.data.sum())

    def test_width_mismatch(self):
        with pytest.raises(nm.ShapeError):
            fuse(nm.Tensor(np.zeros(3)), nm.Tensor(np.zeros(4)),
                 nm.Tensor(np.array(1.0)))

    def test_exact_coordinate_identity(self):
        """final = dep + eta * const holds bitwise, coordinate by coordinate."""
        rng = np.random.default_rng(11)
        for _ in range(20):
            dep = rng.normal(size=6)
            const = rng.normal(size=6)
            eta = float(rng.normal())
            out = fuse(nm.Tensor(dep), nm.Tensor(const), nm.Tensor(np.array(eta)))
            np.testing.assert_array_equal(out.data, dep + eta * const)


class TestMarginLoss:
    def test_margin_satisfied(self):
        scores = nm.Tensor(np.array([2.0, 0.0]))  # z0 - zNA = 2
        assert margin_loss(scores, {0}, 1.0).item() == 0.0

    def test_partial_violation(self):
        scores = nm.Tensor(np.array([0.5, 0.0]))
        assert margin_loss(scores, {0}, 1.0).item() == pytest.approx(0.5)

    def test_negative_class_violation(self):
        scores = nm.Tensor(np.array([0.5, 0.0]))
        assert margin_loss(scores, set(), 1.0).item() == pytest.approx(1.5)

    def test_nonnegative_and_zero_iff_satisfied(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            scores = nm.Tensor(rng.normal(scale=2.0, size=5))
            gold = {int(i) for i in rng.choice(4, rng.integers(0, 3), replace=False)}
            loss = margin_loss(scores, gold, 1.0).item()
            assert loss >= 0.0
            diffs = scores.data[:4] - scores.data[4]
            signs = np.array([1.0 if i in gold else -1.0 for i in range(4)])
            satisfied = np.all(signs * diffs >= 1.0)
            assert (loss == 0.0) == satisfied

    def test_binary_reduction_is_exact_hinge(self):
        """With one class the loss equals max(0, margin - c (z1 - zNA)) bitwise."""
        rng = np.random.default_rng(2)
        for _ in range(1000):
            z = rng.normal(scale=3.0, size=2)
            positive = bool(rng.integers(0, 2))
            c = 1.0 if positive else -1.0
            expected = max(0.0, 1.0 - c * (z[0] - z[1]))
            got = margin_loss(nm.Tensor(z), {0} if positive else set(), 1.0).item()
            assert got == expected

    def test_invalid_gold_index(self):
        with pytest.raises(ValueError):
            margin_loss(nm.Tensor(np.zeros(3)), {5}, 1.0)


class TestPredict:
    def test_positive_class(self):
        assert predict(np.array([2.0, -1.0, 0.0])) == {0}

    def test_all_below_na(self):
        assert predict(np.array([-1.0, -2.0, 0.0])) == set()

    def test_shift_invariance(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            scores = rng.normal(size=6)
            shift = rng.normal() * 10
            assert predict(scores) == predict(scores + shift)


class TestSchedule:
    CFG = TrainConfig(warmup_ratio=0.06, learning_rate=5e-5)

    def test_warmup_point(self):
        # total 100 -> warmup 6 steps; step 3 is halfway up.
        assert warmup_linear_lr(3, 100, self.CFG) == pytest.approx(2.5e-5)

    def test_decay_endpoint(self):
        assert warmup_linear_lr(100, 100, self.CFG) == 0.0

    def test_monotone_up_then_down(self):
        total = 200
        warmup = math.ceil(0.06 * total)
        values = [warmup_linear_lr(s, total, self.CFG) for s in range(1, total + 1)]
        for i in range(warmup - 1):
            assert values[i] < values[i + 1]
        for i in range(warmup, total - 1):
            assert values[i] > values[i + 1]
        assert max(values) == pytest.approx(5e-5)


class TestAdamW:
    def test_zero_gradient_zero_decay_is_identity(self):
        param = nm.Parameter("p", np.array([1.0, -2.0]))
        optimizer = AdamW([param], weight_decay=0.0)
        param.grad = np.zeros(2)
        before = param.data.copy()
        optimizer.apply(1e-3)
        np.testing.assert_array_equal(param.data, before)

    def test_descends_quadratic(self):
        param = nm.Parameter("p", np.array([5.0]))
        optimizer = AdamW([param], weight_decay=0.0)
        for _ in range(300):
            param.zero_grad()
            loss = nm.tensor_sum(param * param)
            loss.backward()
            optimizer.apply(0.05)
        assert abs(param.data[0]) < 0.2

    def test_decoupled_decay_shrinks_without_gradient(self):
        param = nm.Parameter("p", np.array([4.0]))
        optimizer = AdamW([param], weight_decay=0.1)
        param.grad = np.zeros(1)
        optimizer.apply(0.5)
        assert param.data[0] == pytest.approx(4.0 - 0.5 * 0.1 * 4.0)

    def test_optimizer_step_uses_schedule(self):
        cfg = TrainConfig(learning_rate=1.0, warmup_ratio=0.5, weight_decay=0.0)
        param = nm.Parameter("p", np.array([1.0]))
        optimizer = AdamW([param], cfg.weight_decay)
        param.grad = np.array([1.0])
        optimizer_step(optimizer, 1, 2, cfg)
        # After one step with lr=1.0 the Adam direction is sign(grad).
        assert param.data[0] == pytest.approx(0.0, abs=1e-6)


class TestTrainConfig:
    def test_published_defaults(self):
        """Stock hyperparameters: 5e-5 rate, 1e-4 decay, unit margin, 0.06
        warmup, 3 GCN layers at width 128, tree states at 256."""
        cfg = TrainConfig()
        assert cfg.learning_rate == 5e-5
        assert cfg.weight_decay == 1e-4
        assert cfg.margin == 1.0
        assert cfg.warmup_ratio == 0.06
        assert cfg.gcn_layers == 3
        assert cfg.gcn_dim == 128
        assert cfg.tree_state_dim == 256

    def test_round_trip(self, tmp_path):
        cfg = TrainConfig(seed=5, learning_rate=3e-3, uniform_attention=True,
                          gcn_dim=16)
        path = os.path.join(str(tmp_path), "cfg.txt")
        cfg.to_file(path)
        assert TrainConfig.from_file(path) == cfg

    def test_hash_stable_and_sensitive(self):
        a = TrainConfig()
        b = TrainConfig()
        c = TrainConfig(seed=99)
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != c.config_hash()

    def test_invalid_warmup(self):
        with pytest.raises(ConfigError):
            TrainConfig(warmup_ratio=1.5)

    def test_invalid_margin(self):
        with pytest.raises(ConfigError):
            TrainConfig(margin=0.0)

    def test_unknown_key_rejected(self, tmp_path):
        path = os.path.join(str(tmp_path), "cfg.txt")
        with open(path, "w") as fh:
            fh.write("mystery = 3\n")
        with pytest.raises(ConfigError):
            TrainConfig.from_file(path)


def small_cfg(**overrides):
    base = dict(tiny_config(3).__dict__)
    base.update(epochs=2, learning_rate=1e-3, patience=50)
    base.update(overrides)
    return TrainConfig(**base)


class TestTrainLoop:
    def test_documents_without_pairs_contribute_nothing(self):
        """Zero or one entity means no candidate pairs and no loss term."""
        from fcds.corpus import AnnotatedDocument
        docs, schema = relation_corpus(2, seed=40)
        cfg = small_cfg()
        model = RelationModel(schema, Vocabulary.build(docs), cfg)
        base = docs[0]
        for entities in ((), base.entities[:1]):
            bare = AnnotatedDocument(
                doc_id="bare", sentences=base.sentences, entities=entities,
                gold_facts=(), dependency_parses=base.dependency_parses,
                constituency_trees=base.constituency_trees)
            assert document_loss(model, bare, cfg.margin) is None

    def test_eta_receives_gradient_and_moves(self):
        """One step on a violated margin moves the fusion weight off 1.0."""
        docs, schema = relation_corpus(2, seed=41)
        cfg = small_cfg(learning_rate=1e-2)
        model = RelationModel(schema, Vocabulary.build(docs), cfg)
        assert float(model.fusion_weight.data) == 1.0
        model.zero_grad()
        loss = document_loss(model, docs[0], cfg.margin)
        assert loss.item() > 0.0
        loss.backward()
        assert model.fusion_weight.grad is not None
        assert float(model.fusion_weight.grad) != 0.0
        optimizer = AdamW(model.parameters(), cfg.weight_decay)
        optimizer.apply(1e-2)
        assert float(model.fusion_weight.data) != 1.0

    def test_train_writes_checkpoint_and_log(self, tmp_path):
        docs, schema = relation_corpus(4, seed=43)
        cfg = small_cfg()
        ckpt = os.path.join(str(tmp_path), "model.ckpt")
        log = os.path.join(str(tmp_path), "model.log")
        result = train(docs, docs, schema, cfg, ckpt, log)
        assert os.path.exists(ckpt) and os.path.exists(log)
        header, values = load_checkpoint(ckpt)
        assert header["seed"] == cfg.seed
        assert header["config_hash"] == cfg.config_hash()
        assert set(values) == {p.name for p in result["model"].parameters()}
        with open(log) as fh:
            records = [json.loads(line) for line in fh]
        assert len(records) == len(result["records"])
        assert set(records[0]) == {"epoch", "loss", "dev_f1", "dev_ign_f1", "eta"}

    def test_same_seed_bit_identical(self, tmp_path):
        docs, schema = relation_corpus(3, seed=45)
        cfg = small_cfg()
        paths = []
        for run in ("a", "b"):
            ckpt = os.path.join(str(tmp_path), f"{run}.ckpt")
            log = os.path.join(str(tmp_path), f"{run}.log")
            train(docs, docs, schema, cfg, ckpt, log)
            paths.append((ckpt, log))
        with open(paths[0][0], "rb") as fh:
            first_ckpt = fh.read()
        with open(paths[1][0], "rb") as fh:
            second_ckpt = fh.read()
        assert first_ckpt == second_ckpt
        with open(paths[0][1], "rb") as fh:
            first_log = fh.read()
        with open(paths[1][1], "rb") as fh:
            second_log = fh.read()
        assert first_log == second_log

    def test_different_seed_differs(self, tmp_path):
        docs, schema = relation_corpus(3, seed=45)
        a = os.path.join(str(tmp_path), "a.ckpt")
        b = os.path.join(str(tmp_path), "b.ckpt")
        train(docs, docs, schema, small_cfg(seed=1), a, a + ".log")
        train(docs, docs, schema, small_cfg(seed=2), b, b + ".log")
        with open(a, "rb") as fh:
            first = fh.read()
        with open(b, "rb") as fh:
            second = fh.read()
        assert first != second

    def test_checkpoint_reload_reproduces_scores(self, tmp_path):
        docs, schema = relation_corpus(3, seed=47)
        cfg = small_cfg()
        ckpt = os.path.join(str(tmp_path), "m.ckpt")
        result = train(docs, docs, schema, cfg, ckpt, ckpt + ".log")
        model = result["model"]
        _, values = load_checkpoint(ckpt)
        clone = RelationModel(schema, Vocabulary.build(docs, cfg.vocab_min_count), cfg)
        clone.load_values(values)
        with nm.no_grad():
            original = model.document_scores(docs[0])
            reloaded = clone.document_scores(docs[0])
        for (_, a), (_, b) in zip(original, reloaded):
            np.testing.assert_array_equal(a.final_scores.data, b.final_scores.data)
