"""Procedural equirect test videos: smooth, seam-continuous, strongly moving.

Each video carries a random bandlimited field on the sphere: a sum of cosine
components with integer longitude frequencies (hence seam-continuous), random
phases, and per-component temporal drift. The three color channels share the
field through fixed gains, and two counter-phased bright blobs orbit the
scene. Every component moves over the frame cycle, so the per-pixel temporal
mean is a poor reconstruction (the baseline the overfit smoke test compares
against), while the random phases make the content impossible to predict
from the view direction alone — reconstruction has to flow through the
embedding.
"""

from __future__ import annotations

import math

import numpy as np
import torch

from .data_io import VideoDataset

CHANNEL_GAINS = (1.0, 0.75, 0.55)


def make_synthetic_video(
    num_frames: int = 8,
    height: int = 384,
    width: int = 768,
    seed: int = 0,
    components: int = 8,
    max_freq: int = 2,
    amplitude: float = 0.30,
) -> VideoDataset:
    rng = np.random.default_rng(seed)
    lon = ((np.arange(width) + 0.5) / width * 2.0 - 1.0) * math.pi
    lat = (0.5 - (np.arange(height) + 0.5) / height) * math.pi
    lon, lat = np.meshgrid(lon, lat)

    kx = rng.integers(0, max_freq + 1, size=components)
    ky = rng.integers(0, max_freq + 1, size=components)
    weight = rng.uniform(0.4, 1.0, size=components) * rng.choice([-1, 1], components)
    phase = rng.uniform(0.0, 2.0 * math.pi, size=components)
    # nonzero integer drift speeds: every component averages out over a cycle
    speed = rng.choice([-2, -1, 1, 2], size=components)
    norm = np.sqrt((weight**2).sum() / 2.0)

    def orbiting_blob(t: int, lon_offset: float, lat_swing: float, width_param: float):
        cycle = 2.0 * math.pi * t / num_frames
        blob_lon = cycle - math.pi + lon_offset
        blob_lat = lat_swing * math.sin(cycle) * (math.pi / 3.0)
        cos_dist = np.sin(lat) * math.sin(blob_lat) + np.cos(lat) * math.cos(
            blob_lat
        ) * np.cos(lon - blob_lon)
        return np.exp((cos_dist - 1.0) / width_param)

    frames = np.empty((num_frames, 3, height, width), dtype=np.float32)
    for t in range(num_frames):
        cycle = 2.0 * math.pi * t / num_frames
        field = np.zeros_like(lon)
        for j in range(components):
            field += weight[j] * np.cos(
                kx[j] * lon + 2.0 * ky[j] * lat + phase[j] + speed[j] * cycle
            )
        field /= norm
        blobs = 0.3 * orbiting_blob(t, 0.0, 0.5, 0.12) + 0.25 * orbiting_blob(
            t, math.pi, -0.8, 0.05
        )
        for c, gain in enumerate(CHANNEL_GAINS):
            frames[t, c] = 0.5 + amplitude * gain * field + blobs
    np.clip(frames, 0.02, 0.98, out=frames)
    return VideoDataset(torch.from_numpy(frames), fps=8.0, source=f"synthetic(seed={seed})")


def mean_frame_baseline(video: VideoDataset) -> torch.Tensor:
    """The static per-pixel temporal mean frame (3, H, W)."""
    return video.frames.mean(dim=0)
