"""Sinusoidal encodings of (t, theta, phi) and the affine-parameter generators.

The decoder is conditioned through per-channel affine transforms whose scale
and shift are produced by small perceptrons from positional encodings of the
normalized frame index and gaze direction. The temporal-only variant feeds the
channel-expansion layer; the full spatial-temporal variant feeds the decoder
stages. One independent generator per conditioned stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .geometry import ViewState


@dataclass(frozen=True)
class PEConfig:
    """Geometric sin/cos frequency ladder: base ``b`` and ``levels`` rungs.

    Output dimension is exactly 2 * levels.
    """

    base: float = 1.25
    levels: int = 80

    def __post_init__(self) -> None:
        if not self.base > 1.0:
            raise ValueError(f"frequency base must be > 1, got {self.base}")
        if self.levels < 1:
            raise ValueError(f"need at least one frequency level, got {self.levels}")

    @property
    def dim(self) -> int:
        return 2 * self.levels


def positional_encode(v: torch.Tensor | float, cfg: PEConfig) -> torch.Tensor:
    """Encode a normalized scalar as [sin(b^0 pi v), cos(b^0 pi v), ..., cos(b^(l-1) pi v)].

    Values are expected in [0, 1]; out-of-range inputs are encoded as-is.
    """
    val = torch.as_tensor(v, dtype=torch.get_default_dtype() if not torch.is_tensor(v) else None)
    if not torch.isfinite(val).all():
        raise ValueError("positional_encode requires finite input")
    freqs = cfg.base ** torch.arange(cfg.levels, dtype=val.dtype) * math.pi
    angles = freqs * val
    out = torch.empty(2 * cfg.levels, dtype=val.dtype)
    out[0::2] = torch.sin(angles)
    out[1::2] = torch.cos(angles)
    return out


def normalize_view(state: ViewState, num_frames: int) -> tuple[float, float, float]:
    """Map (t, theta, phi) to the unit cube used by the encodings."""
    if num_frames < 1:
        raise ValueError(f"num_frames must be >= 1, got {num_frames}")
    if state.t >= num_frames:
        raise ValueError(f"frame index {state.t} out of range for {num_frames} frames")
    t_hat = state.t / max(num_frames - 1, 1)
    theta_hat = (state.theta + math.pi) / (2.0 * math.pi)
    phi_hat = (state.phi + math.pi / 2.0) / math.pi
    return t_hat, theta_hat, phi_hat


@dataclass
class AffineParams:
    """Per-channel scale and shift applied inside the decoder."""

    gamma: torch.Tensor
    beta: torch.Tensor

    def __post_init__(self) -> None:
        if self.gamma.shape != self.beta.shape:
            raise ValueError("gamma and beta must have matching shapes")
        if not (torch.isfinite(self.gamma).all() and torch.isfinite(self.beta).all()):
            raise ValueError("affine parameters must be finite")


class AffineGenerator(nn.Module):
    """Two-layer perceptron mapping a condition encoding to (gamma, beta).

    The final layer is zero-initialized and the network emits a residual scale
    g with gamma = 1 + g, so freshly constructed generators are the identity
    transform. ``num_inputs`` counts the conditioning scalars (1 for
    time-only, 3 for time + gaze).
    """

    def __init__(self, num_inputs: int, channels: int, pe: PEConfig, hidden: int = 128):
        super().__init__()
        if num_inputs not in (1, 3):
            raise ValueError(f"num_inputs must be 1 or 3, got {num_inputs}")
        self.num_inputs = num_inputs
        self.channels = channels
        self.pe = pe
        self.net = nn.Sequential(
            nn.Linear(num_inputs * pe.dim, hidden),
            nn.GELU(),
            nn.Linear(hidden, 2 * channels),
        )
        nn.init.zeros_(self.net[2].weight)
        nn.init.zeros_(self.net[2].bias)

    def encode(self, values: tuple[float, ...]) -> torch.Tensor:
        if len(values) != self.num_inputs:
            raise ValueError(f"expected {self.num_inputs} condition values, got {len(values)}")
        parts = [positional_encode(torch.tensor(v, dtype=self.net[0].weight.dtype), self.pe)
                 for v in values]
        return torch.cat(parts)

    def forward(self, values: tuple[float, ...]) -> AffineParams:
        raw = self.net(self.encode(values))
        g, beta = raw.split(self.channels)
        return AffineParams(gamma=1.0 + g, beta=beta)


def stat_generator(
    t_hat: float, theta_hat: float, phi_hat: float, generator: AffineGenerator
) -> AffineParams:
    """Affine parameters conditioned on time and gaze direction."""
    if generator.num_inputs != 3:
        raise ValueError("generator was not built for (t, theta, phi) inputs")
    return generator((t_hat, theta_hat, phi_hat))


def tat_generator(t_hat: float, generator: AffineGenerator) -> AffineParams:
    """Affine parameters conditioned on time only."""
    if generator.num_inputs != 1:
        raise ValueError("generator was not built for time-only input")
    return generator((t_hat,))
