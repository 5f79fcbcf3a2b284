"""Network shape contracts, sizing, and gradient flow."""

import math

import numpy as np
import pytest
import torch

from nerv360.conditioning import AffineParams, PEConfig
from nerv360.geometry import ViewState, ViewportSpec
from nerv360.model import (
    ChannelExpansion,
    Encoder,
    ModelConfig,
    NeRV360,
    SnervBlock,
    decoder_param_count,
    plan_decoder_stages,
    solve_decoder_width,
    stat,
)

HFOV = math.radians(78.1)


def toy_config(**overrides):
    base = dict(
        strides=(3, 2, 2, 2),
        encoder_width=8,
        embed_channels=2,
        expanded_channels=16,
        pe=PEConfig(base=1.25, levels=8),
    )
    base.update(overrides)
    return ModelConfig(**base)


class TestEncoder:
    def test_paper_scale_shape(self):
        cfg = ModelConfig(encoder_width=4, embed_channels=1, expanded_channels=8)
        enc = Encoder(cfg)
        with torch.no_grad():
            y = enc(torch.zeros(3, 3072, 6144))
        assert y.shape == (1, 128, 256)

    def test_toy_shape(self):
        enc = Encoder(toy_config())
        with torch.no_grad():
            y = enc(torch.zeros(3, 384, 768))
        assert y.shape == (2, 16, 32)

    def test_indivisible_rejected(self):
        enc = Encoder(toy_config())
        with pytest.raises(ValueError, match="divisible"):
            enc(torch.zeros(3, 100, 100))


class TestSnervBlock:
    def test_stride1_shape(self):
        block = SnervBlock(4, 6, 1)
        assert block(torch.randn(4, 8, 8)).shape == (6, 8, 8)

    def test_stride2_shape(self):
        block = SnervBlock(4, 6, 2)
        assert block(torch.randn(4, 8, 8)).shape == (6, 16, 16)

    def test_output_bounded_by_sine(self):
        block = SnervBlock(4, 6, 3)
        out = block(10.0 * torch.randn(4, 8, 8))
        assert out.min() >= -1.0
        assert out.max() <= 1.0

    def test_bad_stride(self):
        with pytest.raises(ValueError):
            SnervBlock(4, 6, 4)


class TestStat:
    def test_identity(self):
        f = torch.randn(5, 3, 4)
        p = AffineParams(torch.ones(5), torch.zeros(5))
        assert torch.equal(stat(f, p), f)

    def test_constant_map(self):
        f = torch.randn(3, 2, 2)
        p = AffineParams(torch.zeros(3), torch.tensor([1.0, -2.0, 0.5]))
        out = stat(f, p)
        for c, b in enumerate([1.0, -2.0, 0.5]):
            assert torch.allclose(out[c], torch.full((2, 2), b))

    def test_direct_arithmetic(self):
        f = torch.full((1, 1, 1), 2.0)
        p = AffineParams(torch.tensor([3.0]), torch.tensor([-1.0]))
        assert stat(f, p).item() == pytest.approx(5.0)

    def test_channel_mismatch(self):
        with pytest.raises(ValueError):
            stat(torch.zeros(4, 2, 2), AffineParams(torch.ones(3), torch.zeros(3)))


class TestChannelExpansion:
    def test_preserves_space(self):
        cfg = toy_config()
        exp = ChannelExpansion(cfg, 16)
        with torch.no_grad():
            out = exp(torch.randn(2, 16, 32), t_hat=0.3)
        assert out.shape == (16, 16, 32)

    def test_identity_modulation_matches_bare_block(self):
        cfg = toy_config()
        exp = ChannelExpansion(cfg, 16)
        y = torch.randn(2, 8, 8)
        with torch.no_grad():
            # freshly constructed generators emit (gamma=1, beta=0)
            assert torch.allclose(exp(y, 0.7), exp.block(y))


class TestDecoderPlan:
    def test_reduction_and_floor(self):
        cfg = toy_config(expanded_channels=32, channel_reduction=1.2)
        plan = plan_decoder_stages(32, cfg)
        chans = [s[1] for s in plan.stages]
        assert chans == [27, 22, 18, 15]
        assert [s[2] for s in plan.stages] == [3, 2, 2, 2]

        tiny = plan_decoder_stages(8, cfg)
        assert all(s[1] == 8 for s in tiny.stages)

    def test_param_count_matches_built_model(self):
        for c2 in (8, 16, 33):
            cfg = toy_config(expanded_channels=c2)
            model = NeRV360(cfg, num_frames=4)
            assert model.decoder_side_parameters() == decoder_param_count(c2, cfg)

    def test_param_count_matches_time_only_variant(self):
        cfg = toy_config(expanded_channels=24, stat_view_inputs=False)
        model = NeRV360(cfg, num_frames=4)
        assert model.decoder_side_parameters() == decoder_param_count(24, cfg)


class TestSolveDecoderWidth:
    def test_monotone_in_width(self):
        cfg = toy_config()
        counts = [decoder_param_count(c2, cfg) for c2 in range(8, 80)]
        assert all(a <= b for a, b in zip(counts, counts[1:]))

    def test_infeasible_below_floor(self):
        cfg = toy_config()
        with pytest.raises(ValueError, match="floor"):
            solve_decoder_width(1000, cfg)

    def test_paper_scale_budget(self):
        cfg = ModelConfig()  # defaults: d=1, r=1.2, full-size encodings
        c2 = solve_decoder_width(2_200_000, cfg)
        count = decoder_param_count(c2, cfg)
        assert 0.95 * 2_200_000 <= count <= 2_200_000
        # smallest such width: one less channel falls out of the window
        assert decoder_param_count(c2 - 1, cfg) < 0.95 * 2_200_000

    def test_unset_width_resolved_at_build(self):
        cfg = toy_config(expanded_channels=None, param_target=120_000)
        model = NeRV360(cfg, num_frames=2)
        count = model.decoder_side_parameters()
        assert 0.95 * 120_000 <= count <= 120_000


class TestForward:
    def test_toy_shapes(self):
        model = NeRV360(toy_config(), num_frames=8)
        frame = torch.rand(3, 384, 768)
        spec = ViewportSpec(HFOV, 120, 240)
        with torch.no_grad():
            out = model(frame, ViewState(3, 0.4, -0.2), spec)
        assert out.shape == (3, 120, 240)
        assert out.min() >= 0.0
        assert out.max() <= 1.0

    def test_embedding_viewport_dims(self):
        model = NeRV360(toy_config(), num_frames=8)
        frame = torch.rand(3, 384, 768)
        with torch.no_grad():
            y = model.encode(frame)
            expanded = model.expansion(y, 0.0)
        assert expanded.shape == (16, 16, 32)
        spec = ViewportSpec(HFOV, 120, 240).scaled(24)
        assert (spec.out_h, spec.out_w) == (5, 10)

    def test_indivisible_viewport_rejected(self):
        model = NeRV360(toy_config(), num_frames=2)
        with pytest.raises(ValueError):
            model(torch.rand(3, 384, 768), ViewState(0, 0, 0), ViewportSpec(HFOV, 100, 200))

    def test_determinism_double(self):
        model = NeRV360(toy_config(), num_frames=4).double()
        frame = torch.rand(3, 96, 144, dtype=torch.float64)
        spec = ViewportSpec(HFOV, 48, 48)
        with torch.no_grad():
            a = model(frame, ViewState(1, 0.9, 0.3), spec)
            b = model(frame, ViewState(1, 0.9, 0.3), spec)
        assert torch.equal(a, b)

    def test_stat_identity_at_init_then_broken_by_training(self):
        torch.manual_seed(0)
        model = NeRV360(toy_config(), num_frames=4)
        y_vp = torch.rand(16, 5, 10)
        with torch.no_grad():
            a = model.decoder(y_vp, (0.2, 0.1, 0.9))
            b = model.decoder(y_vp, (0.2, 0.8, 0.2))
        assert torch.equal(a, b), "zero-initialized generators must ignore the view"

        # one gradient step on view-dependent targets breaks the independence
        target = torch.rand(3, 120, 240)
        out = model.decoder(y_vp, (0.2, 0.1, 0.9))
        loss = ((out - target) ** 2).mean()
        loss.backward()
        with torch.no_grad():
            for p in model.parameters():
                if p.grad is not None:
                    p -= 0.5 * p.grad
            a2 = model.decoder(y_vp, (0.2, 0.1, 0.9))
            b2 = model.decoder(y_vp, (0.2, 0.8, 0.2))
        assert not torch.allclose(a2, b2)

    def test_expand_after_extract_variant(self):
        model = NeRV360(toy_config(expand_before_extract=False), num_frames=4)
        frame = torch.rand(3, 384, 768)
        with torch.no_grad():
            out = model(frame, ViewState(0, 0.3, 0.1), ViewportSpec(HFOV, 120, 240))
        assert out.shape == (3, 120, 240)

    def test_time_only_decoder_ignores_view_given_same_viewport(self):
        torch.manual_seed(1)
        model = NeRV360(toy_config(stat_view_inputs=False), num_frames=4)
        for p in model.decoder.generators.parameters():
            with torch.no_grad():
                p.normal_(0, 0.1)
        y_vp = torch.rand(16, 5, 10)
        with torch.no_grad():
            a = model.decoder(y_vp, (0.2, 0.1, 0.9))
            b = model.decoder(y_vp, (0.2, 0.8, 0.2))
        assert torch.equal(a, b)

    def test_gradient_flow_everywhere(self):
        torch.manual_seed(2)
        model = NeRV360(toy_config(), num_frames=4)
        with torch.no_grad():
            for p in model.parameters():
                p.add_(0.05 * torch.randn_like(p))
        frame = torch.rand(3, 96, 144)
        out = model(frame, ViewState(1, 0.7, -0.4), ViewportSpec(HFOV, 48, 96))
        out.sum().backward()
        for name, p in model.named_parameters():
            assert p.grad is not None, name
            assert p.grad.abs().sum() > 0, f"dead branch: {name}"

    def test_full_frame_decode_shape(self):
        model = NeRV360(toy_config(), num_frames=4)
        with torch.no_grad():
            y = model.encode(torch.rand(3, 96, 192))
            full = model.decode_full_frame(y, ViewState(0, 0.0, 0.0))
        assert full.shape == (3, 96, 192)

    def test_end_to_end_gradient_matches_finite_differences(self):
        torch.manual_seed(3)
        cfg = ModelConfig(
            strides=(2, 2),
            encoder_width=4,
            embed_channels=2,
            expanded_channels=8,
            pe=PEConfig(base=1.3, levels=3),
        )
        model = NeRV360(cfg, num_frames=2).double()
        with torch.no_grad():
            for p in model.parameters():
                p.add_(0.05 * torch.randn_like(p))
        frame = torch.rand(3, 12, 16, dtype=torch.float64)
        spec = ViewportSpec(1.4, 8, 8)
        state = ViewState(1, 0.5, -0.3)
        target = torch.rand(3, 8, 8, dtype=torch.float64)

        def loss_value():
            return ((model(frame, state, spec) - target) ** 2).mean()

        model.zero_grad()
        loss_value().backward()

        rng = np.random.default_rng(5)
        params = dict(model.named_parameters())
        names = sorted(params)
        eps = 1e-6
        for _ in range(10):
            name = names[int(rng.integers(0, len(names)))]
            p = params[name]
            flat = p.detach().view(-1)
            idx = int(rng.integers(0, flat.numel()))
            with torch.no_grad():
                orig = flat[idx].item()
                flat[idx] = orig + eps
                f_plus = loss_value().item()
                flat[idx] = orig - eps
                f_minus = loss_value().item()
                flat[idx] = orig
            fd = (f_plus - f_minus) / (2 * eps)
            an = p.grad.view(-1)[idx].item()
            denom = max(abs(fd), abs(an), 1e-10)
            assert abs(fd - an) / denom <= 1e-3, f"{name}[{idx}]: fd={fd}, an={an}"
