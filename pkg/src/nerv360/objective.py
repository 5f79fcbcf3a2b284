"""Distortion loss and image-quality metrics.

The training loss combines a frequency-domain L1 term with spatially weighted
L1 and multi-scale structural similarity:

    loss = freq_l1 + w * a * L1 + w * (1 - a) * (1 - MS-SSIM)

All reductions are means so the weights transfer across resolutions. Inputs
are channels-first (C, H, W) with values in [0, 1] for the metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_WINDOW_SIZE = 11
_WINDOW_SIGMA = 1.5


@dataclass(frozen=True)
class LossConfig:
    """Weights of the distortion loss.

    ``spatial_weight`` scales the combined L1 / MS-SSIM contribution;
    ``l1_fraction`` splits it between plain L1 and (1 - MS-SSIM).
    ``fft_mode`` selects how the frequency term compares spectra:
    "complex" takes L1 over real and imaginary parts jointly, "magnitude"
    over spectral magnitudes.
    """

    spatial_weight: float = 60.0
    l1_fraction: float = 0.7
    fft_mode: str = "complex"

    def __post_init__(self) -> None:
        if self.spatial_weight < 0:
            raise ValueError(f"spatial_weight must be >= 0, got {self.spatial_weight}")
        if not 0.0 <= self.l1_fraction <= 1.0:
            raise ValueError(f"l1_fraction must be in [0, 1], got {self.l1_fraction}")
        if self.fft_mode not in ("complex", "magnitude"):
            raise ValueError(f"unknown fft_mode {self.fft_mode!r}")


def _check_shapes(x: torch.Tensor, y: torch.Tensor) -> None:
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    if x.ndim != 3:
        raise ValueError(f"expected (C, H, W) arrays, got {tuple(x.shape)}")


def frequency_l1(x: torch.Tensor, y: torch.Tensor, mode: str = "complex") -> torch.Tensor:
    """Mean absolute spectral difference of the per-channel 2D DFTs.

    In "complex" mode, real and imaginary parts are compared jointly and the
    sum is normalized by the number of spectral bins, which cancels the DFT's
    size scaling for constant images.
    """
    _check_shapes(x, y)
    fx = torch.fft.fft2(x, dim=(-2, -1))
    fy = torch.fft.fft2(y, dim=(-2, -1))
    if mode == "complex":
        d = fx - fy
        return d.real.abs().mean() + d.imag.abs().mean()
    if mode == "magnitude":
        return (fx.abs() - fy.abs()).abs().mean()
    raise ValueError(f"unknown fft_mode {mode!r}")


def _gaussian_window(dtype: torch.dtype, device: torch.device) -> torch.Tensor:
    half = (_WINDOW_SIZE - 1) / 2.0
    coords = torch.arange(_WINDOW_SIZE, dtype=dtype, device=device) - half
    g = torch.exp(-(coords**2) / (2.0 * _WINDOW_SIGMA**2))
    g = g / g.sum()
    return torch.outer(g, g)


def num_ms_ssim_scales(h: int, w: int, max_scales: int = 5) -> int:
    """Largest usable scale count: each halving must keep room for the window."""
    scales = 0
    m = min(h, w)
    while scales < max_scales and m >= _WINDOW_SIZE * 2**scales:
        scales += 1
    return scales


def _ssim_components(x: torch.Tensor, y: torch.Tensor, win: torch.Tensor):
    c1 = 0.01**2
    c2 = 0.03**2
    channels = x.shape[1]
    kernel = win.expand(channels, 1, -1, -1)
    mu_x = F.conv2d(x, kernel, groups=channels)
    mu_y = F.conv2d(y, kernel, groups=channels)
    sxx = F.conv2d(x * x, kernel, groups=channels) - mu_x**2
    syy = F.conv2d(y * y, kernel, groups=channels) - mu_y**2
    sxy = F.conv2d(x * y, kernel, groups=channels) - mu_x * mu_y
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    ssim = ((2 * mu_x * mu_y + c1) / (mu_x**2 + mu_y**2 + c1)) * cs
    return ssim.mean(), cs.mean()


def ms_ssim(x: torch.Tensor, y: torch.Tensor, scales: int | None = None) -> torch.Tensor:
    """Multi-scale structural similarity in [0, 1]; differentiable.

    Uses an 11x11 Gaussian window (sigma 1.5) and the canonical five scale
    weights, renormalized when the image only supports fewer scales.
    """
    _check_shapes(x, y)
    _, h, w = x.shape
    if scales is None:
        scales = num_ms_ssim_scales(h, w)
    if scales < 1 or min(h, w) < _WINDOW_SIZE * 2 ** (scales - 1):
        raise ValueError(
            f"image {h}x{w} too small for {max(scales, 1)} MS-SSIM scale(s)"
        )
    weights = torch.tensor(MS_SSIM_WEIGHTS[:scales], dtype=x.dtype, device=x.device)
    weights = weights / weights.sum()

    win = _gaussian_window(x.dtype, x.device)
    xb = x.unsqueeze(0)
    yb = y.unsqueeze(0)
    value = torch.ones((), dtype=x.dtype, device=x.device)
    for s in range(scales):
        ssim_val, cs_val = _ssim_components(xb, yb, win)
        if s < scales - 1:
            value = value * F.relu(cs_val) ** weights[s]
            xb = F.avg_pool2d(xb, kernel_size=2)
            yb = F.avg_pool2d(yb, kernel_size=2)
        else:
            value = value * F.relu(ssim_val) ** weights[s]
    return value


def psnr(x: torch.Tensor, y: torch.Tensor) -> float:
    """Peak signal-to-noise ratio in dB for [0, 1] images, capped at 100 dB."""
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    mse = float(((x - y) ** 2).mean())
    if mse < 1e-10:
        return 100.0
    return 10.0 * math.log10(1.0 / mse)


def distortion_loss(
    x: torch.Tensor, x_hat: torch.Tensor, cfg: LossConfig | None = None
) -> torch.Tensor:
    """Training loss between a ground-truth viewport and its reconstruction."""
    cfg = cfg or LossConfig()
    _check_shapes(x, x_hat)
    loss = frequency_l1(x, x_hat, cfg.fft_mode)
    loss = loss + cfg.spatial_weight * cfg.l1_fraction * (x - x_hat).abs().mean()
    if cfg.l1_fraction < 1.0:
        loss = loss + cfg.spatial_weight * (1.0 - cfg.l1_fraction) * (1.0 - ms_ssim(x, x_hat))
    return loss
