"""Shared fixtures: a small trained checkpoint reused across service/bench tests."""

import math

import pytest

from nerv360.conditioning import PEConfig
from nerv360.geometry import ViewportSpec
from nerv360.model import ModelConfig
from nerv360.objective import LossConfig
from nerv360.synthetic import make_synthetic_video
from nerv360.trainer import TrainConfig, train


@pytest.fixture(scope="session")
def toy_checkpoint_path(tmp_path_factory):
    """Final checkpoint (with embedding cache) of a briefly trained toy model."""
    out = tmp_path_factory.mktemp("toy_run")
    video = make_synthetic_video(num_frames=4, height=96, width=192, seed=1)
    model_cfg = ModelConfig(
        strides=(3, 2, 2, 2),
        encoder_width=6,
        embed_channels=2,
        expanded_channels=12,
        pe=PEConfig(base=1.25, levels=6),
    )
    train_cfg = TrainConfig(
        epochs=2,
        base_lr=2e-3,
        seed=0,
        viewport_spec=ViewportSpec(math.radians(78.1), 48, 96),
        loss=LossConfig(spatial_weight=5.0),
        checkpoint_every=0,
    )
    result = train(video, model_cfg, train_cfg, out_dir=out)
    return result.checkpoint_path
