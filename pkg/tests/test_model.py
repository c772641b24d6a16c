"""Model assembly: config validation, forward wiring, batching consistency."""

import numpy as np
import pytest

from mrscene import tensor as T
from mrscene.attention import attention_scores, pool_descriptors
from mrscene.birnn import bidirectional_pass
from mrscene.errors import ConfigError, ShapeError
from mrscene.head import classify
from mrscene.kbranch import BranchSpec, ConvLayerSpec, branch_forward, fuse_descriptors, split_patches
from mrscene.model import Model, ModelConfig
from mrscene.tensor import Tensor


def small_config(per_position=False) -> ModelConfig:
    return ModelConfig(
        n_classes=3,
        subset_shapes=[(2, 8, 8), (1, 4, 4)],
        branches=[
            BranchSpec(["a", "b"], [ConvLayerSpec(3, 4, pool=True), ConvLayerSpec(3, 3)], fc_out=5),
            BranchSpec(["c"], [ConvLayerSpec(2, 3), ConvLayerSpec(2, 2)], fc_out=4),
        ],
        n_patches=4,
        descriptor_width=6,
        hidden_width=5,
        attention_heads=2,
        attention_width=4,
        per_position_lstm=per_position,
    )


class TestModelConfig:
    def test_default_branches_for_three_subsets(self):
        cfg = ModelConfig(n_classes=8, subset_shapes=[(4, 24, 24), (6, 12, 12), (2, 4, 4)])
        cfg.validate()
        assert len(cfg.branches) == 3
        assert cfg.sequence_width == 256
        assert cfg.patch_shape(0) == (4, 6, 6)

    def test_round_trip_through_dict(self):
        cfg = small_config()
        back = ModelConfig.from_dict(cfg.to_dict())
        assert back.to_dict() == cfg.to_dict()

    def test_rejects_non_square_patch_count(self):
        cfg = small_config()
        cfg.n_patches = 3
        with pytest.raises(ConfigError):
            cfg.validate(strict_filters=False)

    def test_rejects_indivisible_geometry(self):
        cfg = small_config()
        cfg.subset_shapes[0] = (2, 9, 9)
        with pytest.raises(ConfigError):
            cfg.validate(strict_filters=False)

    def test_rejects_band_count_mismatch(self):
        cfg = small_config()
        cfg.branches[0].band_indices = ["a"]
        with pytest.raises(ConfigError):
            cfg.validate(strict_filters=False)

    def test_rejects_pooling_in_last_branch(self):
        cfg = small_config()
        cfg.branches[-1].layers[0].pool = True
        with pytest.raises(ConfigError):
            cfg.validate(strict_filters=False)

    def test_strict_filter_regime(self):
        cfg = small_config()
        with pytest.raises(ConfigError):
            cfg.validate(strict_filters=True)  # shrunken filters violate the regime
        cfg.validate(strict_filters=False)


class TestModelForward:
    def test_output_shapes(self):
        cfg = small_config()
        model = Model(cfg, seed=0)
        rng = np.random.default_rng(0)
        arrays = [rng.normal(size=(3,) + tuple(s)).astype(np.float32) for s in cfg.subset_shapes]
        result = model.forward(arrays)
        assert result.scores.shape == (3, 3)
        assert result.attention.shape == (3, 2, 4)
        np.testing.assert_allclose(result.attention.data.sum(axis=-1), 1.0, atol=1e-5)

    def test_rejects_wrong_subset_shape(self):
        model = Model(small_config(), seed=0)
        with pytest.raises(ShapeError):
            model.forward([np.zeros((2, 2, 8, 8)), np.zeros((2, 1, 6, 6))])

    def test_batch_matches_spec_op_pipeline(self):
        """The batched forward agrees with the sample-at-a-time composition
        of the public building blocks."""
        cfg = small_config()
        model = Model(cfg, seed=1, dtype=np.float64)
        rng = np.random.default_rng(1)
        arrays = [rng.normal(size=(2,) + tuple(s)) for s in cfg.subset_shapes]
        batch = model.forward(arrays)

        for b in range(2):
            patches = split_patches([arr[b] for arr in arrays], cfg.n_patches)
            descriptors = []
            for r in range(cfg.n_patches):
                outs = [
                    branch_forward(Tensor(patches.patch(r, k)), spec, model.branch_params[k])
                    for k, spec in enumerate(cfg.branches)
                ]
                descriptors.append(fuse_descriptors(outs, model.fusion))
            enriched = bidirectional_pass(descriptors, model.lstm_fwd, model.lstm_bwd)
            omega = T.concat([T.reshape(phi, (-1, 1)) for phi in enriched], axis=1)
            attn = attention_scores(omega, model.attn_hidden, model.attn_heads)
            pooled = pool_descriptors(omega, attn)
            scores = classify(pooled, model.clf_weight, model.clf_bias)
            np.testing.assert_allclose(batch.scores.data[b], scores.data, rtol=1e-9, atol=1e-9)
            np.testing.assert_allclose(batch.attention.data[b], attn.data, rtol=1e-9, atol=1e-9)

    def test_per_position_lstm_has_more_parameters(self):
        shared = Model(small_config(), seed=0)
        per_pos = Model(small_config(per_position=True), seed=0)
        assert per_pos.n_parameters() > shared.n_parameters()
        lstm_names = [n for n in per_pos.parameters if n.startswith("lstm.fwd.pos")]
        assert len(lstm_names) == 4 * 12  # one set of 12 tensors per patch position

    def test_parameter_names_unique_and_deterministic(self):
        m1 = Model(small_config(), seed=5)
        m2 = Model(small_config(), seed=5)
        assert list(m1.parameters) == list(m2.parameters)
        for name, p in m1.parameters.items():
            np.testing.assert_array_equal(p.data, m2.parameters[name].data)

    def test_k1_r1_reduces_to_plain_cnn(self):
        """One branch, one patch: the whole pipeline is a CNN over the image
        followed by the LSTM/attention glue on a single descriptor."""
        cfg = ModelConfig(
            n_classes=2,
            subset_shapes=[(3, 6, 6)],
            branches=[BranchSpec(["r", "g", "b"], [ConvLayerSpec(3, 4)], fc_out=5)],
            n_patches=1,
            descriptor_width=6,
            hidden_width=4,
            attention_heads=2,
            attention_width=3,
        )
        model = Model(cfg, seed=2, dtype=np.float64)
        rng = np.random.default_rng(2)
        image = rng.normal(size=(3, 6, 6))
        result = model.forward([image[None]])
        assert result.scores.shape == (1, 2)
        # descriptor of the single patch equals a plain CNN pass over the image
        direct = fuse_descriptors(
            [branch_forward(Tensor(image), cfg.branches[0], model.branch_params[0])], model.fusion
        )
        patches = split_patches([image], 1)
        via_split = fuse_descriptors(
            [branch_forward(Tensor(patches.patch(0, 0)), cfg.branches[0], model.branch_params[0])],
            model.fusion,
        )
        np.testing.assert_array_equal(direct.data, via_split.data)
