"""Viewport-decoding implicit neural representation for 360-degree video.

A network is overfit to one equirect video; the weights plus per-frame
embeddings are the compressed video. Decoding cuts the user-selected viewport
out of the embedding and reconstructs only those pixels, conditioned on the
frame index and gaze direction.
"""

from .conditioning import AffineGenerator, AffineParams, PEConfig, positional_encode
from .geometry import (
    SamplingGrid,
    ViewState,
    ViewportSpec,
    bilinear_sample,
    extract_viewport,
    viewport_grid,
)
from .model import ModelConfig, NeRV360, solve_decoder_width
from .objective import LossConfig, distortion_loss, frequency_l1, ms_ssim, psnr
from .trainer import Adan, TrainConfig, lr_at, restore_model, sample_viewpoint, train

__version__ = "0.1.0"

__all__ = [
    "AffineGenerator",
    "AffineParams",
    "Adan",
    "LossConfig",
    "ModelConfig",
    "NeRV360",
    "PEConfig",
    "SamplingGrid",
    "TrainConfig",
    "ViewState",
    "ViewportSpec",
    "bilinear_sample",
    "distortion_loss",
    "extract_viewport",
    "frequency_l1",
    "lr_at",
    "ms_ssim",
    "positional_encode",
    "psnr",
    "restore_model",
    "sample_viewpoint",
    "solve_decoder_width",
    "train",
    "viewport_grid",
]
