"""Architecture tests: layer counts, head layout, shapes, init behavior."""

import numpy as np
import pytest

from maskbench.net.blocks import RcbChain, ResConvBlock
from maskbench.net.models import (
    NetConfig,
    ResUNet,
    UNet,
    build_resunet143,
    build_unet33,
    count_conv_layers,
    split_heads,
)

WIDTH_CONFIGS = [
    (4, 4, 4, 4, 4, 4),
    (4, 8, 8, 12, 12, 16),
    (8, 16, 24, 32, 48, 64),
]


class TestLayerCounts:
    @pytest.mark.parametrize("widths", WIDTH_CONFIGS)
    def test_unet_is_33(self, widths):
        model = build_unet33(widths=widths, freq_bins=64)
        assert count_conv_layers(model) == 33

    @pytest.mark.parametrize("widths", WIDTH_CONFIGS)
    def test_resunet_is_143(self, widths):
        model = build_resunet143(widths=widths, freq_bins=64)
        assert count_conv_layers(model) == 143

    def test_count_is_width_independent_but_params_grow(self):
        small = build_unet33(widths=(2,) * 6, freq_bins=64)
        large = build_unet33(widths=(8,) * 6, freq_bins=64)
        assert count_conv_layers(small) == count_conv_layers(large) == 33
        assert large.parameter_count() > small.parameter_count()

    def test_wrong_depth_rejected(self):
        with pytest.raises(ValueError, match="depth 6"):
            build_unet33(widths=(4, 4, 4), freq_bins=8)
        with pytest.raises(ValueError, match="4 RCBs"):
            build_resunet143(widths=(4,) * 6, freq_bins=64, rcb_per_block=2)


class TestHeadLayout:
    @pytest.mark.parametrize("variant,heads", [("mask", 1), ("decouple", 3), ("decouple_plus", 4)])
    def test_output_channels_stereo(self, variant, heads):
        cfg = NetConfig(variant=variant, in_channels=2, widths=(2,) * 6, freq_bins=64)
        assert cfg.out_channels == 2 * heads

    def test_expected_j_values(self):
        # stereo: mask-only 2, decoupled 6, decoupled + direct prediction 8
        for variant, expected in (("mask", 2), ("decouple", 6), ("decouple_plus", 8)):
            assert NetConfig(variant=variant, in_channels=2).out_channels == expected

    def test_split_heads_neutral_constants(self, rng):
        cfg = NetConfig(variant="mask", in_channels=2, widths=(2, 2), freq_bins=8)
        raw = rng.standard_normal((1, 2, 8, 8))
        heads = split_heads(raw, cfg)
        assert np.all((heads.m_mag > 0) & (heads.m_mag < 1))
        assert np.all(heads.q == 0)
        assert np.all(heads.p_r == 1)
        assert np.all(heads.p_i == 0)

    def test_split_heads_decouple_plus_slices(self, rng):
        cfg = NetConfig(variant="decouple_plus", in_channels=1, widths=(2, 2), freq_bins=8)
        raw = rng.standard_normal((1, 4, 8, 8))
        heads = split_heads(raw, cfg)
        np.testing.assert_allclose(heads.m_mag, 1 / (1 + np.exp(-raw[:, 0:1])))
        np.testing.assert_array_equal(heads.q, raw[:, 1:2])
        np.testing.assert_array_equal(heads.p_r, raw[:, 2:3])
        np.testing.assert_array_equal(heads.p_i, raw[:, 3:4])

    def test_unknown_variant_rejected(self):
        with pytest.raises(ValueError, match="variant"):
            NetConfig(variant="phase_only")


class TestForward:
    def test_shape_preserved(self, rng):
        for cls in (UNet, ResUNet):
            cfg = NetConfig(variant="decouple_plus", in_channels=2, widths=(2, 3),
                            freq_bins=8, rcb_per_block=1, intermediate_blocks=1)
            model = cls(cfg)
            out = model.forward(rng.standard_normal((2, 2, 12, 8)).astype(np.float32))
            assert out.shape == (2, 8, 12, 8)

    def test_finite_outputs_and_sigmoid_range_on_zero_input(self):
        cfg = NetConfig(variant="decouple_plus", in_channels=1, widths=(2, 2), freq_bins=8)
        model = UNet(cfg)
        raw = model.forward(np.zeros((1, 1, 8, 8), dtype=np.float32))
        assert np.all(np.isfinite(raw))
        heads = split_heads(raw, cfg)
        assert np.all((heads.m_mag > 0) & (heads.m_mag < 1))

    def test_batch_repetition_invariance_in_eval(self, rng):
        cfg = NetConfig(in_channels=2, widths=(2, 3), freq_bins=8,
                        rcb_per_block=1, intermediate_blocks=1)
        model = ResUNet(cfg)
        x = rng.standard_normal((1, 2, 8, 8)).astype(np.float32)
        single = model.forward(x, training=False)
        doubled = model.forward(np.concatenate([x, x]), training=False)
        np.testing.assert_allclose(doubled[0], single[0], atol=1e-6)
        np.testing.assert_allclose(doubled[1], single[0], atol=1e-6)

    def test_input_validation(self, rng):
        cfg = NetConfig(in_channels=2, widths=(2, 2), freq_bins=8)
        model = UNet(cfg)
        with pytest.raises(ValueError, match="channels"):
            model.forward(rng.standard_normal((1, 3, 8, 8)))
        with pytest.raises(ValueError, match="frequency bins"):
            model.forward(rng.standard_normal((1, 2, 8, 12)))
        with pytest.raises(ValueError, match="divisible"):
            model.forward(rng.standard_normal((1, 2, 10, 8)))

    def test_deterministic_initialization(self):
        a = build_unet33(widths=(2,) * 6, freq_bins=64, seed=3)
        b = build_unet33(widths=(2,) * 6, freq_bins=64, seed=3)
        for (name_a, pa), (name_b, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert name_a == name_b
            np.testing.assert_array_equal(pa, pb)
        c = build_unet33(widths=(2,) * 6, freq_bins=64, seed=4)
        assert any(not np.array_equal(pa, pc) for (_, pa), (_, pc)
                   in zip(a.named_parameters(), c.named_parameters()))


class TestResidualIdentityInit:
    def test_zero_residual_rcb_is_identity(self, rng):
        block = ResConvBlock(3, 3, np.random.default_rng(0), np.float64, zero_residual=True)
        x = rng.standard_normal((2, 3, 8, 8))
        np.testing.assert_allclose(block.forward(x), x, atol=1e-7)

    def test_zero_residual_chain_is_identity(self, rng):
        chain = RcbChain(4, 4, 4, np.random.default_rng(0), np.float64, zero_residual=True)
        x = rng.standard_normal((1, 4, 8, 8))
        np.testing.assert_allclose(chain.forward(x), x, atol=1e-6)

    def test_projection_shortcut_when_widths_differ(self):
        block = ResConvBlock(2, 5, np.random.default_rng(0), np.float64)
        assert block.shortcut is not None
        assert block.shortcut.tally is False
