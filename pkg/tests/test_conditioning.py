"""Positional encoding and affine-generator contracts."""

import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from nerv360.conditioning import (
    AffineGenerator,
    AffineParams,
    PEConfig,
    normalize_view,
    positional_encode,
    stat_generator,
    tat_generator,
)
from nerv360.geometry import ViewState


class TestPositionalEncode:
    def test_zero_input_alternates(self):
        out = positional_encode(0.0, PEConfig(base=1.25, levels=5))
        expected = torch.tensor([0.0, 1.0] * 5)
        assert torch.allclose(out, expected)

    def test_paper_scale_length(self):
        out = positional_encode(0.37, PEConfig(base=1.25, levels=80))
        assert out.shape == (160,)

    def test_hand_case(self):
        out = positional_encode(0.5, PEConfig(base=2.0, levels=2))
        expected = torch.tensor([1.0, 0.0, 0.0, -1.0])
        assert torch.allclose(out, expected, atol=1e-7)

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            PEConfig(base=1.0, levels=4)
        with pytest.raises(ValueError):
            PEConfig(base=2.0, levels=0)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            positional_encode(float("nan"), PEConfig())

    @given(st.floats(-3, 3), st.floats(1.01, 4), st.integers(1, 40))
    @settings(max_examples=60)
    def test_bounded(self, v, base, levels):
        out = positional_encode(v, PEConfig(base=base, levels=levels))
        assert out.abs().max() <= 1.0 + 1e-6


class TestNormalizeView:
    def test_minima(self):
        assert normalize_view(ViewState(0, -math.pi, -math.pi / 2), 5) == (0.0, 0.0, 0.0)

    def test_maxima(self):
        t, th, ph = normalize_view(ViewState(4, math.pi - 1e-9, math.pi / 2), 5)
        assert t == 1.0
        assert th == pytest.approx(1.0, abs=1e-9)
        assert ph == 1.0

    def test_midpoints(self):
        assert normalize_view(ViewState(1, 0.0, 0.0), 3) == (0.5, 0.5, 0.5)

    def test_single_frame(self):
        assert normalize_view(ViewState(0, 0.0, 0.0), 1) == (0.0, 0.5, 0.5)

    def test_out_of_range_frame(self):
        with pytest.raises(ValueError):
            normalize_view(ViewState(3, 0.0, 0.0), 3)


class TestAffineGenerator:
    def test_identity_at_init(self):
        gen = AffineGenerator(num_inputs=3, channels=12, pe=PEConfig(levels=8))
        p = stat_generator(0.3, 0.7, 0.1, gen)
        assert torch.allclose(p.gamma, torch.ones(12))
        assert torch.allclose(p.beta, torch.zeros(12))

    def test_output_length(self):
        gen = AffineGenerator(num_inputs=3, channels=21, pe=PEConfig(levels=4))
        p = gen((0.1, 0.2, 0.3))
        assert p.gamma.shape == (21,)
        assert p.beta.shape == (21,)

    def test_viewpoint_sensitivity_with_seeded_weights(self):
        torch.manual_seed(42)
        gen = AffineGenerator(num_inputs=3, channels=6, pe=PEConfig(levels=8))
        with torch.no_grad():
            gen.net[2].weight.normal_(0, 0.1)
            gen.net[2].bias.normal_(0, 0.1)
        a = gen((0.5, 0.2, 0.8))
        b = gen((0.5, 0.9, 0.1))
        assert not torch.allclose(a.gamma, b.gamma)
        assert not torch.allclose(a.beta, b.beta)

    def test_phi_only_change_with_seeded_weights(self):
        torch.manual_seed(1)
        gen = AffineGenerator(num_inputs=3, channels=6, pe=PEConfig(levels=8))
        with torch.no_grad():
            gen.net[2].weight.normal_(0, 0.1)
        a = gen((0.5, 0.5, 0.25))
        b = gen((0.5, 0.5, 0.75))
        assert not torch.allclose(a.gamma, b.gamma)

    def test_deterministic(self):
        torch.manual_seed(2)
        gen = AffineGenerator(num_inputs=3, channels=5, pe=PEConfig(levels=6))
        with torch.no_grad():
            gen.net[2].weight.normal_()
        a = gen((0.4, 0.1, 0.6))
        b = gen((0.4, 0.1, 0.6))
        assert torch.equal(a.gamma, b.gamma)
        assert torch.equal(a.beta, b.beta)

    def test_time_only_ignores_gaze(self):
        gen = AffineGenerator(num_inputs=1, channels=7, pe=PEConfig(levels=6))
        p = tat_generator(0.25, gen)
        assert p.gamma.shape == (7,)
        with pytest.raises(ValueError):
            stat_generator(0.1, 0.2, 0.3, gen)

    def test_gradient_matches_finite_differences(self):
        torch.manual_seed(3)
        gen = AffineGenerator(num_inputs=3, channels=4, pe=PEConfig(levels=5)).double()
        with torch.no_grad():
            for p in gen.parameters():
                p.normal_(0, 0.2)
        probe = torch.randn(8, dtype=torch.float64)

        def loss_value():
            p = gen((0.3, 0.6, 0.9))
            return (torch.cat([p.gamma, p.beta]) * probe).sum()

        gen.zero_grad()
        loss_value().backward()

        rng = np.random.default_rng(4)
        eps = 1e-6
        params = list(gen.parameters())
        for _ in range(12):
            pi = int(rng.integers(0, len(params)))
            p = params[pi]
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
            denom = max(abs(fd), abs(an), 1e-8)
            assert abs(fd - an) / denom <= 1e-4

    def test_affine_params_validation(self):
        with pytest.raises(ValueError):
            AffineParams(torch.ones(3), torch.ones(4))
        with pytest.raises(ValueError):
            AffineParams(torch.tensor([float("inf")]), torch.tensor([0.0]))
