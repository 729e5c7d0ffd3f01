"""Encoder/projection head: init, forward contracts, checkpoints, gradients."""

import numpy as np
import pytest

from rankcontrast import augment, model as model_mod, rankloss
from rankcontrast.exceptions import CheckpointError, DimensionError, NumericError
from rankcontrast.model import (EncoderConfig, encode, encode_backward,
                                encode_forward, init_model, load_checkpoint,
                                load_checkpoint_norm_stats, parameter_count,
                                project, project_backward, project_forward,
                                save_checkpoint)
from rankcontrast.rng import seeded_rng

from helpers import numerical_gradient, rel_error

TINY = EncoderConfig(in_features=2, conv_channels=(4, 4, 4), kernel_sizes=(8, 5, 3), repr_dim=6)


def tiny_model(seed=0, dtype=np.float64):
    return init_model(TINY, seed=seed, dtype=dtype)


class TestInit:
    def test_same_seed_is_bitwise_identical(self):
        a = init_model(TINY, seed=11)
        b = init_model(TINY, seed=11)
        for name in a.parameter_names():
            np.testing.assert_array_equal(a.get_param(name), b.get_param(name))

    def test_different_seeds_differ(self):
        a = init_model(TINY, seed=0)
        b = init_model(TINY, seed=1)
        assert any(not np.array_equal(a.get_param(n), b.get_param(n))
                   for n in a.parameter_names())

    def test_parameter_count_matches_closed_form(self):
        config = EncoderConfig(in_features=1)
        m = init_model(config, seed=0)
        # independently recomputed from the layer shapes
        expected = 0
        c_prev = 1
        for c_out, k in zip((128, 256, 128), (8, 5, 3)):
            expected += c_out * c_prev * k + c_out      # conv weight + bias
            expected += 2 * c_out                       # bn gamma + beta
            c_prev = c_out
        expected += 320 * 128 + 320                     # repr dense
        expected += 2 * (320 * 320 + 320)               # projection head
        assert parameter_count(m) == expected

    def test_bn_starts_at_identity(self):
        m = init_model(TINY, seed=3)
        for bn in m.bn:
            np.testing.assert_array_equal(bn.gamma, 1.0)
            np.testing.assert_array_equal(bn.beta, 0.0)


class TestEncodeProject:
    def test_output_shape_default_config(self):
        m = init_model(EncoderConfig(in_features=1), seed=0)
        x = np.random.default_rng(0).normal(size=(2, 1, 16)).astype(np.float32)
        assert encode(m, x).shape == (2, 320)

    def test_eval_mode_is_bitwise_deterministic(self):
        m = tiny_model()
        x = np.random.default_rng(1).normal(size=(3, 2, 12))
        np.testing.assert_array_equal(encode(m, x), encode(m, x))

    def test_zero_input_fresh_stats_is_finite(self):
        m = tiny_model()
        r = encode(m, np.zeros((2, 2, 10)))
        assert np.all(np.isfinite(r))

    def test_nan_input_rejected(self):
        m = tiny_model()
        x = np.zeros((1, 2, 8))
        x[0, 0, 0] = np.nan
        with pytest.raises(NumericError):
            encode(m, x)

    def test_feature_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            encode(tiny_model(), np.zeros((1, 3, 8)))

    def test_train_mode_updates_running_stats(self):
        m = tiny_model()
        before = [bn.running_mean.copy() for bn in m.bn]
        encode(m, np.random.default_rng(2).normal(size=(4, 2, 10)), mode="train")
        assert any(not np.array_equal(b, bn.running_mean)
                   for b, bn in zip(before, m.bn))

    def test_projection_rows_are_unit_norm(self):
        m = tiny_model()
        r = encode(m, np.random.default_rng(3).normal(size=(5, 2, 16)))
        z = project(m, r)
        np.testing.assert_allclose(np.linalg.norm(z, axis=1), 1.0, atol=1e-5)

    def test_pooled_representation_config(self):
        # repr_dense=False drops the dense layer: r is the pooled conv output
        config = EncoderConfig(in_features=2, conv_channels=(4, 4, 8),
                               kernel_sizes=(3, 3, 3), repr_dense=False)
        m = init_model(config, seed=0)
        x = np.random.default_rng(0).normal(size=(3, 2, 10)).astype(np.float32)
        assert encode(m, x).shape == (3, 8)
        assert "repr.weight" not in m.params

    def test_permuting_rows_permutes_outputs(self):
        m = tiny_model()
        x = np.random.default_rng(4).normal(size=(6, 2, 12))
        perm = np.random.default_rng(5).permutation(6)
        r = encode(m, x)
        r_perm = encode(m, x[perm])
        np.testing.assert_array_equal(r_perm, r[perm])
        z = project(m, r)
        np.testing.assert_array_equal(project(m, r[perm]), z[perm])


class TestGradients:
    def test_projection_backward_matches_finite_differences(self):
        m = tiny_model()
        rng = np.random.default_rng(6)
        r = rng.normal(size=(4, 6))
        upstream = rng.normal(size=(4, 6))
        _, caches = project_forward(m, r)
        grad_r, grads = project_backward(m, upstream, caches)

        assert rel_error(grad_r, numerical_gradient(
            lambda v: (project_forward(m, v)[0] * upstream).sum(), r)) < 1e-6
        for name in ("proj1.weight", "proj1.bias", "proj2.weight", "proj2.bias"):
            original = m.get_param(name)

            def f(v, name=name, original=original):
                m.set_param(name, v)
                out = (project_forward(m, r)[0] * upstream).sum()
                m.set_param(name, original)
                return out

            assert rel_error(grads[name], numerical_gradient(f, original.copy())) < 1e-6

    def test_encoder_backward_matches_finite_differences(self):
        m = tiny_model()
        rng = np.random.default_rng(7)
        x = rng.normal(size=(3, 2, 10))
        upstream = rng.normal(size=(3, 6))
        r, caches, _ = encode_forward(m, x, train=True)
        grad_x, grads = encode_backward(m, upstream, caches)

        def loss_for_input(v):
            rr, _, _ = encode_forward(m, v, train=True)
            return (rr * upstream).sum()

        assert rel_error(grad_x, numerical_gradient(loss_for_input, x)) < 1e-6
        for name in ("conv1.weight", "bn2.gamma", "conv3.bias", "repr.weight"):
            original = m.get_param(name)

            def f(v, name=name, original=original):
                m.set_param(name, v)
                rr, _, _ = encode_forward(m, x, train=True)
                out = (rr * upstream).sum()
                m.set_param(name, original)
                return out

            assert rel_error(grads[name], numerical_gradient(f, original.copy())) < 1e-6


def full_composition_loss(m, x, labels, num_augments=2):
    """encode -> project -> expand(m copies) -> rank loss, fixed noise seed."""
    r, _, _ = encode_forward(m, x, train=True)
    z, _ = project_forward(m, r)
    cfg = augment.AugmentConfig(num_augments_per_instance=num_augments,
                                scales=(0.03, 0.05), rng_seed=99)
    batch = augment.expand_batch(z, labels, cfg, seeded_rng(99))
    return rankloss.rank_loss(batch.z, batch.labels,
                              rankloss.RankLossConfig(compute_ranks=False)).loss


def full_composition_grads(m, x, labels, num_augments=2):
    r, enc_caches, _ = encode_forward(m, x, train=True)
    z, proj_caches = project_forward(m, r)
    cfg = augment.AugmentConfig(num_augments_per_instance=num_augments,
                                scales=(0.03, 0.05), rng_seed=99)
    batch, aug_cache = augment.expand_batch(z, labels, cfg, seeded_rng(99), with_cache=True)
    result = rankloss.rank_loss(batch.z, batch.labels,
                                rankloss.RankLossConfig(compute_ranks=False))
    g = augment.expand_backward(result.grad_z, aug_cache)
    g, proj_grads = project_backward(m, g, proj_caches)
    _, enc_grads = encode_backward(m, g, enc_caches)
    return {**enc_grads, **proj_grads}


class TestEndToEndGradient:
    def test_full_composition_matches_finite_differences(self):
        m = tiny_model(seed=5)
        rng = np.random.default_rng(8)
        x = rng.normal(size=(6, 2, 16))
        labels = np.array([0, 0, 1, 1, 2, 2])
        grads = full_composition_grads(m, x, labels)
        for name in m.parameter_names():
            original = m.get_param(name)

            def f(v, name=name, original=original):
                m.set_param(name, v)
                out = full_composition_loss(m, x, labels)
                m.set_param(name, original)
                return out

            fd = numerical_gradient(f, original.copy(), h=1e-6)
            assert rel_error(grads[name], fd) < 1e-4, name


class TestCheckpoint:
    def test_round_trip_is_bitwise_lossless(self, tmp_path):
        m = init_model(TINY, seed=9, dtype=np.float32)
        # perturb state so the round trip is non-trivial
        encode(m, np.random.default_rng(0).normal(size=(4, 2, 12)).astype(np.float32),
               mode="train")
        m.adam["proj1.weight"].m += 0.5
        m.adam["proj1.weight"].step_count = 7
        path = tmp_path / "model.ckpt"
        save_checkpoint(m, path, norm_stats={"mean": [0.25], "std": [2.0]})
        loaded = load_checkpoint(path)

        assert loaded.config == m.config
        assert loaded.rng_seed == m.rng_seed
        for name in m.parameter_names():
            np.testing.assert_array_equal(loaded.get_param(name), m.get_param(name))
        for bn_a, bn_b in zip(loaded.bn, m.bn):
            np.testing.assert_array_equal(bn_a.running_mean, bn_b.running_mean)
            np.testing.assert_array_equal(bn_a.running_var, bn_b.running_var)
        for name in m.parameter_names():
            np.testing.assert_array_equal(loaded.adam[name].m, m.adam[name].m)
            np.testing.assert_array_equal(loaded.adam[name].v, m.adam[name].v)
            assert loaded.adam[name].step_count == m.adam[name].step_count
        assert load_checkpoint_norm_stats(path) == {"mean": [0.25], "std": [2.0]}

    def test_round_trip_preserves_eval_outputs_bitwise(self, tmp_path):
        m = init_model(TINY, seed=10, dtype=np.float32)
        x = np.random.default_rng(1).normal(size=(3, 2, 16)).astype(np.float32)
        path = tmp_path / "model.ckpt"
        save_checkpoint(m, path)
        np.testing.assert_array_equal(encode(load_checkpoint(path), x), encode(m, x))

    def test_truncated_file_rejected(self, tmp_path):
        m = init_model(TINY, seed=11, dtype=np.float32)
        path = tmp_path / "model.ckpt"
        save_checkpoint(m, path)
        data = path.read_bytes()
        path.write_bytes(data[:len(data) - 40])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_bad_magic_names_the_field(self, tmp_path):
        path = tmp_path / "model.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_bad_version_rejected(self, tmp_path):
        m = init_model(TINY, seed=12, dtype=np.float32)
        path = tmp_path / "model.ckpt"
        save_checkpoint(m, path)
        data = bytearray(path.read_bytes())
        data[4:8] = (99).to_bytes(4, "little")
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)

    def test_float64_state_refuses_to_serialize(self, tmp_path):
        with pytest.raises(CheckpointError, match="float32"):
            save_checkpoint(tiny_model(dtype=np.float64), tmp_path / "m.ckpt")

    def test_feature_mismatch_before_inference(self, tmp_path):
        m = init_model(TINY, seed=13, dtype=np.float32)
        path = tmp_path / "model.ckpt"
        save_checkpoint(m, path)
        loaded = load_checkpoint(path)
        with pytest.raises(DimensionError):
            model_mod.check_input_features(loaded, 5)
