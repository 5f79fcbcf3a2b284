"""Optimizer oracle, learning-rate schedule, and training-loop behavior."""

import math
import random

import pytest
import torch

from nerv360.conditioning import PEConfig
from nerv360.geometry import ViewportSpec
from nerv360.model import ModelConfig
from nerv360.objective import LossConfig
from nerv360.trainer import (
    Adan,
    TrainConfig,
    TrainingDiverged,
    lr_at,
    restore_model,
    sample_viewpoint,
    train,
)
from nerv360.synthetic import make_synthetic_video

from oracles import adan_reference


def tiny_train_config(**overrides):
    base = dict(
        epochs=3,
        base_lr=2e-3,
        seed=11,
        viewport_spec=ViewportSpec(math.radians(78.1), 24, 48),
        loss=LossConfig(spatial_weight=5.0),
        checkpoint_every=0,
    )
    base.update(overrides)
    return TrainConfig(**base)


def tiny_model_config(**overrides):
    base = dict(
        strides=(3, 2, 2, 2),
        encoder_width=6,
        embed_channels=2,
        expanded_channels=12,
        pe=PEConfig(base=1.25, levels=6),
    )
    base.update(overrides)
    return ModelConfig(**base)


class TestLrSchedule:
    CFG = TrainConfig(epochs=10, base_lr=1e-4, warmup_frac=0.1)

    def test_warmup_start_is_zero(self):
        assert lr_at(0, 1000, self.CFG) == 0.0

    def test_warmup_end_hits_base(self):
        assert lr_at(100, 1000, self.CFG) == pytest.approx(1e-4)

    def test_terminal_zero(self):
        assert lr_at(1000, 1000, self.CFG) == pytest.approx(0.0, abs=1e-20)

    def test_junction_continuity(self):
        # both branches evaluate to base_lr at the warmup boundary
        before = lr_at(99, 1000, self.CFG)
        at = lr_at(100, 1000, self.CFG)
        after = lr_at(101, 1000, self.CFG)
        assert before == pytest.approx(1e-4 * 0.99)
        assert at == pytest.approx(1e-4)
        assert after < at
        assert at - after < 1e-4 * 0.01

    def test_midpoint_half(self):
        assert lr_at(550, 1000, self.CFG) == pytest.approx(0.5e-4)

    def test_no_warmup(self):
        cfg = TrainConfig(warmup_frac=0.0, base_lr=1e-3)
        assert lr_at(0, 100, cfg) == pytest.approx(1e-3)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            lr_at(-1, 100, self.CFG)
        with pytest.raises(ValueError):
            lr_at(101, 100, self.CFG)


class TestAdan:
    def test_zero_gradients_no_move(self):
        p = torch.nn.Parameter(torch.tensor([1.0, -2.0]))
        opt = Adan([p], lr=0.1)
        p.grad = torch.zeros_like(p)
        assert opt.step() is True
        assert torch.equal(p.detach(), torch.tensor([1.0, -2.0]))

    def test_zero_lr_no_move(self):
        p = torch.nn.Parameter(torch.tensor([1.0, -2.0]))
        opt = Adan([p], lr=0.0)
        p.grad = torch.tensor([0.3, -0.7])
        assert opt.step() is True
        assert torch.equal(p.detach(), torch.tensor([1.0, -2.0]))

    def test_descends_quadratic(self):
        p = torch.nn.Parameter(torch.tensor([1.0]))
        opt = Adan([p], lr=0.05)
        p.grad = torch.tensor([2.0])  # d/dw of w^2 at w=1
        opt.step()
        assert p.item() < 1.0

    def test_nonfinite_gradient_rejected(self):
        p = torch.nn.Parameter(torch.tensor([1.0]))
        opt = Adan([p], lr=0.1)
        p.grad = torch.tensor([float("nan")])
        assert opt.step() is False
        assert opt.rejected_steps == 1
        assert p.item() == 1.0
        assert len(opt.state) == 0  # state untouched by the rejected step

    def test_matches_scalar_reference_200_steps(self):
        coeffs = [0.5 + 0.35 * i for i in range(10)]
        offsets = [(-1) ** i * (0.5 + 0.1 * i) for i in range(10)]
        start = [0.0] * 10
        lr = 0.2

        ref_history = adan_reference(
            start,
            grad_fn=lambda w: [2 * a * (wi - o) for a, wi, o in zip(coeffs, w, offsets)],
            lr_fn=lambda k: lr,
            steps=200,
        )

        p = torch.nn.Parameter(torch.tensor(start, dtype=torch.float64))
        a = torch.tensor(coeffs, dtype=torch.float64)
        o = torch.tensor(offsets, dtype=torch.float64)
        opt = Adan([p], lr=lr)
        for k in range(200):
            opt.zero_grad()
            loss = (a * (p - o) ** 2).sum()
            loss.backward()
            opt.step()
            ref = torch.tensor(ref_history[k], dtype=torch.float64)
            assert torch.allclose(p.detach(), ref, atol=1e-6), f"diverged at step {k}"

        final_loss = (a * (p.detach() - o) ** 2).sum().item()
        assert final_loss <= 1e-3


class TestSampleViewpoint:
    def test_reproducible(self):
        a = [sample_viewpoint(random.Random(5)) for _ in range(1)][0]
        b = [sample_viewpoint(random.Random(5)) for _ in range(1)][0]
        assert a == b
        seq1 = [sample_viewpoint(rng) for rng in [random.Random(6)] for _ in range(4)]
        rng = random.Random(6)
        seq2 = [sample_viewpoint(rng) for _ in range(4)]
        assert seq1[0] == seq2[0]

    def test_support(self):
        rng = random.Random(0)
        for _ in range(2000):
            theta, phi = sample_viewpoint(rng)
            assert -math.pi <= theta < math.pi
            assert -math.pi / 2 <= phi < math.pi / 2

    def test_mean_near_zero(self):
        rng = random.Random(1)
        draws = [sample_viewpoint(rng) for _ in range(10_000)]
        mean_theta = sum(d[0] for d in draws) / len(draws)
        mean_phi = sum(d[1] for d in draws) / len(draws)
        assert abs(mean_theta) < 0.1
        assert abs(mean_phi) < 0.1


class TestTrainLoop:
    def test_smoke_loss_decreases(self, tmp_path):
        video = make_synthetic_video(num_frames=4, height=48, width=96, seed=3)
        result = train(video, tiny_model_config(), tiny_train_config(epochs=12))
        assert len(result.history) == 12
        first = result.history[0]["loss"]
        last = result.history[-1]["loss"]
        assert last < first

    def test_seed_determinism_epoch0(self):
        video = make_synthetic_video(num_frames=3, height=48, width=96, seed=4)
        r1 = train(video, tiny_model_config(), tiny_train_config(epochs=1))
        r2 = train(video, tiny_model_config(), tiny_train_config(epochs=1))
        assert r1.history[0]["loss"] == r2.history[0]["loss"]
        assert r1.history[0]["psnr"] == r2.history[0]["psnr"]

    def test_divergence_reports_step(self):
        video = make_synthetic_video(num_frames=2, height=48, width=96, seed=5)
        video.frames[1, 0, 0, 0] = float("nan")
        with pytest.raises(TrainingDiverged) as exc_info:
            train(video, tiny_model_config(), tiny_train_config(epochs=1))
        assert exc_info.value.frame == 1

    def test_writes_log_and_checkpoints(self, tmp_path):
        video = make_synthetic_video(num_frames=2, height=48, width=96, seed=6)
        cfg = tiny_train_config(epochs=4, checkpoint_every=2)
        result = train(video, tiny_model_config(), cfg, out_dir=tmp_path)
        assert (tmp_path / "train_log.jsonl").exists()
        assert (tmp_path / "epoch_00002.ckpt").exists()
        assert (tmp_path / "epoch_00004.ckpt").exists()
        assert result.checkpoint_path == tmp_path / "final.ckpt"

        from nerv360.data_io import load_checkpoint, read_train_log

        records = read_train_log(tmp_path / "train_log.jsonl")
        assert len(records) == 4
        assert {"epoch", "loss", "psnr", "lr"} <= set(records[0])

        ckpt = load_checkpoint(result.checkpoint_path)
        assert ckpt.embeddings is not None
        assert ckpt.embeddings.shape[0] == 2

    def test_final_checkpoint_restores_identically(self, tmp_path):
        from nerv360.data_io import load_checkpoint
        from nerv360.geometry import ViewState

        video = make_synthetic_video(num_frames=2, height=48, width=96, seed=7)
        cfg = tiny_train_config(epochs=2)
        result = train(video, tiny_model_config(), cfg, out_dir=tmp_path)
        restored = restore_model(load_checkpoint(result.checkpoint_path))

        spec = cfg.viewport_spec
        state = ViewState(1, 0.8, -0.2)
        with torch.no_grad():
            a = result.model(video.frames[1], state, spec)
            b = restored(video.frames[1], state, spec)
        assert torch.equal(a, b)
