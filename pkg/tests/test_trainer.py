"""Initialization, optimizers, and the training loop."""

import numpy as np
import pytest

from mrscene.dataset import Sample
from mrscene.errors import ConfigError, TrainingDivergedError
from mrscene.kbranch import BranchSpec, ConvLayerSpec
from mrscene.model import Model, ModelConfig
from mrscene.tensor import Tensor
from mrscene.trainer import Adam, Sgd, TrainConfig, evaluate_model, moving_average, train, xavier_init


class TestXavierInit:
    def test_bound_for_100x100(self):
        t = xavier_init((100, 100), seed=0, name="w")
        bound = 0.17320508075688773  # sqrt(6 / 200)
        assert t.data.max() <= bound and t.data.min() >= -bound
        assert t.data.max() > 0.9 * bound  # actually fills the range

    def test_mean_near_zero(self):
        t = xavier_init((1000, 1000), seed=1, name="big")
        bound = np.sqrt(6 / 2000)
        sigma = bound / np.sqrt(3) / 1000  # std of the mean of 1e6 uniforms
        assert abs(t.data.mean()) < 3 * sigma

    def test_deterministic_per_seed_and_name(self):
        a = xavier_init((4, 7), seed=3, name="layer.w")
        b = xavier_init((4, 7), seed=3, name="layer.w")
        c = xavier_init((4, 7), seed=3, name="other.w")
        d = xavier_init((4, 7), seed=4, name="layer.w")
        np.testing.assert_array_equal(a.data, b.data)
        assert not np.array_equal(a.data, c.data)
        assert not np.array_equal(a.data, d.data)

    def test_biases_start_at_zero(self):
        np.testing.assert_array_equal(xavier_init((16,), seed=0, name="b").data, 0.0)

    def test_conv_fan_uses_receptive_field(self):
        t = xavier_init((8, 4, 3, 3), seed=0, name="k")
        bound = np.sqrt(6 / (4 * 9 + 8 * 9))
        assert np.abs(t.data).max() <= bound

    def test_requires_grad(self):
        assert xavier_init((3, 3), seed=0, name="w").requires_grad


class TestOptimizers:
    def param(self, value):
        t = Tensor(np.asarray(value, dtype=np.float32), requires_grad=True)
        return t

    def test_adam_first_step_magnitude_is_learning_rate(self):
        # bias-corrected ratio on step one is g / (|g| + eps) ~= sign(g)
        for g in (0.004, 2.7, -31.0):
            p = self.param([1.0])
            p.grad = np.asarray([g], dtype=np.float32)
            Adam(learning_rate=1e-3).step({"p": p})
            np.testing.assert_allclose(abs(1.0 - p.data[0]), 1e-3, rtol=1e-4)

    def test_sgd_zero_gradient_leaves_parameters(self):
        p = self.param([1.0, -2.0])
        p.grad = np.zeros(2, np.float32)
        Sgd(learning_rate=0.5).step({"p": p})
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_zero_learning_rate_never_moves_parameters(self):
        for opt in (Adam(learning_rate=0.0), Sgd(learning_rate=0.0)):
            p = self.param([3.0])
            for _ in range(5):
                p.grad = np.asarray([1.7], dtype=np.float32)
                opt.step({"p": p})
            np.testing.assert_array_equal(p.data, [3.0])

    def test_missing_gradient_is_an_error(self):
        p = self.param([1.0])
        with pytest.raises(RuntimeError, match="no gradient"):
            Adam(learning_rate=1e-3).step({"p": p})

    def test_sgd_matches_closed_form(self):
        p = self.param([2.0])
        p.grad = np.asarray([0.5], dtype=np.float32)
        Sgd(learning_rate=0.1).step({"p": p})
        np.testing.assert_allclose(p.data, [1.95], rtol=1e-6)

    def test_adam_state_round_trip(self):
        opt = Adam(learning_rate=1e-3)
        p = self.param([1.0, 2.0])
        p.grad = np.asarray([0.1, -0.2], dtype=np.float32)
        opt.step({"p": p})
        entries = opt.state_entries()
        fresh = Adam(learning_rate=1e-3)
        fresh.load_state_entries(entries)
        assert fresh.step_count == 1
        np.testing.assert_array_equal(fresh.m["p"], opt.m["p"])
        np.testing.assert_array_equal(fresh.v["p"], opt.v["p"])


def tiny_model_and_samples(n=8, seed=0):
    cfg = ModelConfig(
        n_classes=3,
        subset_shapes=[(2, 8, 8)],
        branches=[BranchSpec(["a", "b"], [ConvLayerSpec(3, 4, pool=True), ConvLayerSpec(3, 3)], fc_out=5)],
        n_patches=4,
        descriptor_width=6,
        hidden_width=5,
        attention_heads=2,
        attention_width=4,
    )
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n):
        labels = np.zeros(3, np.uint8)
        labels[rng.integers(0, 3)] = 1
        samples.append(Sample(
            subsets=[rng.normal(size=(2, 8, 8)).astype(np.float32)],
            labels=labels,
            id=f"s{i}",
        ))
    return Model(cfg, seed=seed), samples


class TestTrainLoop:
    def test_trajectory_length_equals_epochs(self):
        model, samples = tiny_model_and_samples()
        result = train(model, samples, TrainConfig(epochs=4, batch_size=4, seed=0))
        assert len(result.loss_trajectory) == 4

    def test_loss_log_and_checkpoints_written(self, tmp_path):
        model, samples = tiny_model_and_samples()
        cfg = TrainConfig(epochs=3, batch_size=4, seed=0, checkpoint_every=2)
        result = train(model, samples, cfg, out_dir=tmp_path)
        log = (tmp_path / "loss_log.txt").read_text().splitlines()
        assert len(log) == 3
        assert all(len(line.split("\t")) == 2 for line in log)
        assert (tmp_path / "checkpoint-0002.mac").exists()
        assert result.final_checkpoint.endswith("checkpoint-final.mac")

    def test_training_reduces_loss(self):
        model, samples = tiny_model_and_samples(n=4)
        result = train(model, samples, TrainConfig(epochs=15, batch_size=4, seed=0))
        assert result.loss_trajectory[-1] < result.loss_trajectory[0]

    def test_divergence_guard_names_the_batch(self):
        model, samples = tiny_model_and_samples(n=4)
        samples[2].subsets[0][0, 0, 0] = np.nan
        with pytest.raises(TrainingDivergedError, match=r"epoch 1, batch \d"):
            train(model, samples, TrainConfig(epochs=1, batch_size=2, seed=0))

    def test_invalid_configs_rejected(self):
        model, samples = tiny_model_and_samples(n=2)
        for bad in (TrainConfig(learning_rate=0.0), TrainConfig(epochs=0),
                    TrainConfig(batch_size=0), TrainConfig(optimizer="lion"),
                    TrainConfig(threshold=1.0)):
            with pytest.raises(ConfigError):
                train(model, samples, bad)

    def test_evaluate_model_reports_example_metrics(self):
        model, samples = tiny_model_and_samples(n=6)
        report = evaluate_model(model, samples, threshold=0.5)
        assert report.n_samples == 6
        assert 0.0 <= report.f1 <= 1.0

    def test_epoch_order_is_seeded(self):
        from mrscene.trainer import _epoch_order

        a = _epoch_order(50, seed=3, epoch=2, shuffle=True)
        b = _epoch_order(50, seed=3, epoch=2, shuffle=True)
        c = _epoch_order(50, seed=3, epoch=3, shuffle=True)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)
        np.testing.assert_array_equal(_epoch_order(5, 0, 0, shuffle=False), np.arange(5))

    def test_single_sample_overfit_scores_perfectly_on_train_split(self):
        # hotter learning rate: this test model is far smaller than the default
        model, samples = tiny_model_and_samples(n=1, seed=4)
        cfg = TrainConfig(learning_rate=3e-2, epochs=120, batch_size=1, seed=0, shuffle=False)
        result = train(model, samples, cfg)
        assert min(result.loss_trajectory) < 0.01
        report = evaluate_model(model, samples, threshold=0.5)
        assert (report.recall, report.f1, report.f2) == (1.0, 1.0, 1.0)


class TestMovingAverage:
    def test_values(self):
        ma = moving_average([4, 3, 2, 1, 0, 5], window=5)
        np.testing.assert_allclose(ma, [2.0, 2.2])

    def test_needs_enough_points(self):
        with pytest.raises(ConfigError):
            moving_average([1, 2], window=5)
