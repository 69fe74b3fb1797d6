"""Backbone architecture, checkpoints, and whole-model gradient checks."""
import numpy as np
import pytest

import vibfault.model as model_mod
from vibfault.autodiff import Tensor
from vibfault.gradcheck import finite_difference_check
from vibfault.model import (backbone_parameter_count, build_backbone, build_cnn,
                            load_checkpoint, save_checkpoint)

# Closed-form count for the 8-class backbone, computed independently:
# (1*64*3 + 64) + 14*(64*64*3 + 64) + (64*8 + 8)
BACKBONE_8_PARAMS = 173_704


class TestArchitecture:
    def test_parameter_count_by_summation(self):
        m = build_backbone(8, seed=0)
        total = sum(p.data.size for p in m.parameters())
        assert total == BACKBONE_8_PARAMS
        assert m.parameter_count() == BACKBONE_8_PARAMS
        assert backbone_parameter_count(8) == BACKBONE_8_PARAMS

    def test_parameter_count_formula_any_head(self):
        for m_classes in (2, 3, 5, 11):
            model = build_backbone(m_classes, seed=1)
            expected = 256 + 14 * 12_352 + 65 * m_classes
            assert model.parameter_count() == expected

    def test_layer_shapes(self):
        m = build_backbone(4, seed=0)
        assert len(m.conv_layers) == 15
        assert m.conv_layers[0].weight.shape == (64, 1, 3)
        for layer in m.conv_layers[1:]:
            assert layer.weight.shape == (64, 64, 3)
        assert m.head.weight.shape == (4, 64)
        assert len(m.trainable_mask()) == 17  # 15 conv + gap + head

    def test_same_seed_same_init(self):
        a = build_backbone(8, seed=42)
        b = build_backbone(8, seed=42)
        for p, q in zip(a.parameters(), b.parameters()):
            assert p.data.tobytes() == q.data.tobytes()

    def test_different_seed_different_init(self):
        a = build_backbone(8, seed=1)
        b = build_backbone(8, seed=2)
        assert any(p.data.tobytes() != q.data.tobytes()
                   for p, q in zip(a.parameters(), b.parameters()))

    def test_fingerprint_differs_only_in_head(self):
        a = build_backbone(4, seed=0).fingerprint()
        b = build_backbone(8, seed=0).fingerprint()
        assert a != b
        assert a.split("|")[0] == b.split("|")[0]

    def test_too_few_classes_rejected(self):
        with pytest.raises(ValueError, match="num_classes"):
            build_backbone(1, seed=0)

    def test_head_length_independent_of_window(self):
        m = build_backbone(5, seed=0)
        for L in (64, 512, 2048):
            logits = m.forward(np.random.default_rng(L).normal(size=(2, L)))
            assert logits.data.shape == (2, 5)

    def test_minimum_window_length(self):
        m = build_backbone(2, seed=0)
        logits = m.forward(np.zeros((1, 3)))
        assert logits.data.shape == (1, 2)


class TestCheckpoint:
    def test_roundtrip_bitwise(self, tmp_path):
        m = build_backbone(3, seed=7, label_map={"a": 0, "b": 1, "c": 2})
        m.conv_layers[5].trainable = False
        path = tmp_path / "model.ckpt"
        save_checkpoint(m, path)
        loaded = load_checkpoint(path)
        for p, q in zip(m.parameters(), loaded.parameters()):
            assert p.data.tobytes() == q.data.tobytes()
        assert loaded.label_map == {"a": 0, "b": 1, "c": 2}
        assert loaded.trainable_mask() == m.trainable_mask()
        assert loaded.fingerprint() == m.fingerprint()
        assert loaded.alpha == m.alpha

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"not a checkpoint at all, sorry")
        with pytest.raises(ValueError, match="magic"):
            load_checkpoint(path)

    def test_reduced_model_roundtrip(self, tmp_path):
        m = build_cnn(2, n_conv=2, filters=8, seed=3)
        path = tmp_path / "small.ckpt"
        save_checkpoint(m, path)
        loaded = load_checkpoint(path)
        assert loaded.parameter_count() == m.parameter_count()


class TestGradCheck:
    def test_linear_single_layer_near_exact(self):
        # alpha = 1 removes the activation kink, so the network itself is
        # linear and central differences see only the loss curvature
        m = build_cnn(2, n_conv=1, filters=4, alpha=1.0, seed=0)
        x = np.random.default_rng(0).normal(size=24)
        report = finite_difference_check(m, x, label=1, step=1e-4, tolerance=1e-6)
        assert report.ok, report.format_lines()

    def test_two_conv_model_passes_at_1e3(self):
        m = build_cnn(3, n_conv=2, filters=8, seed=5)
        x = np.random.default_rng(5).normal(size=32)
        report = finite_difference_check(m, x, label=2, step=1e-4, tolerance=1e-3)
        assert report.ok, "\n".join(report.format_lines())
        # every parameter block is covered
        assert len(report.blocks) == 2 * 2 + 2

    def test_corrupted_backward_is_reported_not_thrown(self, monkeypatch):
        import vibfault.autodiff as ad

        true_lrelu = ad.leaky_relu

        def broken_lrelu(x, alpha=0.01, tape=None):
            out = true_lrelu(x, alpha, tape=None)
            if tape is not None:
                # wrong backward rule: pretends the slope is 1 everywhere
                tape.record(out, (x,), lambda g: (g * 1.0,))
            return out

        monkeypatch.setattr(model_mod, "leaky_relu", broken_lrelu)
        m = build_cnn(2, n_conv=2, filters=8, seed=6)
        x = np.random.default_rng(6).normal(size=24)
        report = finite_difference_check(m, x, label=0, step=1e-4, tolerance=1e-3)
        assert not report.ok
        assert any(not b.ok for b in report.blocks)

    def test_invalid_step_rejected(self):
        m = build_cnn(2, n_conv=1, filters=4, seed=0)
        with pytest.raises(ValueError, match="step"):
            finite_difference_check(m, np.zeros(8), 0, step=0.0)

    def test_frozen_blocks_are_skipped(self):
        m = build_cnn(2, n_conv=2, filters=8, seed=7)
        m.conv_layers[1].trainable = False
        x = np.random.default_rng(7).normal(size=16)
        report = finite_difference_check(m, x, label=1)
        names = [b.name for b in report.blocks]
        assert "conv02.weight" not in names and "conv01.weight" in names
