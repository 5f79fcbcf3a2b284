"""The viewport-decoding network.

Pipeline: a strided convolutional encoder squeezes an equirect frame into a
compact embedding; a stride-1 upsampling block widens the embedding channels
(with time-conditioned affine modulation) before the viewport is cut out in
embedding space; a stack of upsampling blocks interleaved with affine residual
blocks decodes only that viewport back to pixels. The decoder is fully
convolutional, so the same weights can also decode the entire frame (the
baseline the benchmark compares against).

All public entry points take unbatched channels-first tensors; training runs
one frame at a time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import torch
import torch.nn.functional as F
from torch import nn

from .conditioning import AffineGenerator, AffineParams, PEConfig, normalize_view
from .geometry import ViewState, ViewportSpec, extract_viewport

MIN_STAGE_CHANNELS = 8
GENERATOR_HIDDEN = 128


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    ``expanded_channels`` may be left unset, in which case it is solved from
    ``param_target`` so the decoder side lands within 5% under the budget.
    The two boolean switches exist for ablations: widening after viewport
    extraction instead of before, and conditioning the decoder on time only.
    """

    strides: tuple[int, ...] = (3, 2, 2, 2)
    encoder_width: int = 64
    embed_channels: int = 1
    expanded_channels: int | None = None
    channel_reduction: float = 1.2
    param_target: int = 2_200_000
    pe: PEConfig = field(default_factory=PEConfig)
    stat_view_inputs: bool = True
    expand_before_extract: bool = True

    def __post_init__(self) -> None:
        if not self.strides or any(s not in (1, 2, 3) for s in self.strides):
            raise ValueError(f"strides must be a non-empty tuple of 1/2/3, got {self.strides}")
        if self.encoder_width < 1 or self.embed_channels < 1:
            raise ValueError("encoder_width and embed_channels must be >= 1")
        if self.expanded_channels is not None and self.expanded_channels < self.embed_channels:
            raise ValueError("expanded_channels must be >= embed_channels")
        if not self.channel_reduction > 1.0:
            raise ValueError(f"channel_reduction must be > 1, got {self.channel_reduction}")

    @property
    def stride_product(self) -> int:
        return math.prod(self.strides)

    def to_dict(self) -> dict:
        return {
            "strides": list(self.strides),
            "encoder_width": self.encoder_width,
            "embed_channels": self.embed_channels,
            "expanded_channels": self.expanded_channels,
            "channel_reduction": self.channel_reduction,
            "param_target": self.param_target,
            "pe_base": self.pe.base,
            "pe_levels": self.pe.levels,
            "stat_view_inputs": self.stat_view_inputs,
            "expand_before_extract": self.expand_before_extract,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            strides=tuple(d["strides"]),
            encoder_width=d["encoder_width"],
            embed_channels=d["embed_channels"],
            expanded_channels=d.get("expanded_channels"),
            channel_reduction=d["channel_reduction"],
            param_target=d.get("param_target", 2_200_000),
            pe=PEConfig(base=d["pe_base"], levels=d["pe_levels"]),
            stat_view_inputs=d.get("stat_view_inputs", True),
            expand_before_extract=d.get("expand_before_extract", True),
        )


@dataclass(frozen=True)
class DecoderStagePlan:
    """Per-stage (in_channels, out_channels, upsample factor) of the decoder."""

    stages: tuple[tuple[int, int, int], ...]

    @property
    def head_in_channels(self) -> int:
        return self.stages[-1][1]


def plan_decoder_stages(expanded_channels: int, cfg: ModelConfig) -> DecoderStagePlan:
    """Shrink channels by the reduction factor per stage, floored at 8."""
    stages = []
    in_c = expanded_channels
    for stride in cfg.strides:
        out_c = max(round(in_c / cfg.channel_reduction), MIN_STAGE_CHANNELS)
        stages.append((in_c, out_c, stride))
        in_c = out_c
    return DecoderStagePlan(tuple(stages))


def _generator_params(num_inputs: int, channels: int, pe: PEConfig) -> int:
    in_dim = num_inputs * pe.dim
    return (in_dim * GENERATOR_HIDDEN + GENERATOR_HIDDEN) + (
        GENERATOR_HIDDEN * 2 * channels + 2 * channels
    )


def decoder_param_count(expanded_channels: int, cfg: ModelConfig) -> int:
    """Exact parameter count of expansion + decoder + affine generators."""
    plan = plan_decoder_stages(expanded_channels, cfg)
    stat_inputs = 3 if cfg.stat_view_inputs else 1
    total = 9 * cfg.embed_channels * expanded_channels + expanded_channels  # expansion conv
    total += _generator_params(1, expanded_channels, cfg.pe)  # expansion TAT
    for in_c, out_c, stride in plan.stages:
        total += 9 * in_c * out_c * stride**2 + out_c * stride**2  # upsample conv
        total += 9 * out_c * out_c + out_c  # residual conv
        total += _generator_params(stat_inputs, out_c, cfg.pe)
    total += 9 * plan.head_in_channels * 3 + 3  # output head
    return total


def solve_decoder_width(param_target: int, cfg: ModelConfig) -> int:
    """Smallest expanded width whose decoder side lands in [0.95, 1.0] x target."""
    if param_target < 1:
        raise ValueError(f"param_target must be positive, got {param_target}")
    floor_count = decoder_param_count(MIN_STAGE_CHANNELS, cfg)
    if floor_count > param_target:
        raise ValueError(
            f"param_target {param_target} below the {MIN_STAGE_CHANNELS}-channel "
            f"floor ({floor_count} params)"
        )
    c2 = MIN_STAGE_CHANNELS
    while True:
        count = decoder_param_count(c2, cfg)
        if count > param_target:
            raise ValueError(
                f"no width lands within 5% of {param_target}: "
                f"count jumps past the window at c2={c2} ({count} params)"
            )
        if count >= 0.95 * param_target:
            return c2
        c2 += 1


class ChannelLayerNorm(nn.LayerNorm):
    """LayerNorm over the channel axis of (C, H, W) feature maps."""

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return super().forward(x.movedim(-3, -1)).movedim(-1, -3)


class Encoder(nn.Module):
    """Strided conv stages squeezing (3, H, W) to (d, H/s, W/s)."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.stride_product = cfg.stride_product
        layers: list[nn.Module] = []
        in_c = 3
        for stride in cfg.strides:
            layers += [
                nn.Conv2d(in_c, cfg.encoder_width, 3, stride=stride, padding=1),
                ChannelLayerNorm(cfg.encoder_width),
                nn.GELU(),
            ]
            in_c = cfg.encoder_width
        layers.append(nn.Conv2d(cfg.encoder_width, cfg.embed_channels, 1))
        self.net = nn.Sequential(*layers)

    def forward(self, frame: torch.Tensor) -> torch.Tensor:
        if frame.ndim != 3 or frame.shape[0] != 3:
            raise ValueError(f"expected (3, H, W) frame, got {tuple(frame.shape)}")
        _, h, w = frame.shape
        if h % self.stride_product or w % self.stride_product:
            raise ValueError(
                f"frame {h}x{w} not divisible by stride product {self.stride_product}"
            )
        return self.net(frame)


class SnervBlock(nn.Module):
    """3x3 conv emitting out_c * stride^2 channels, depth-to-space, then sin."""

    def __init__(self, in_c: int, out_c: int, stride: int):
        super().__init__()
        if stride not in (1, 2, 3):
            raise ValueError(f"stride must be 1, 2 or 3, got {stride}")
        self.conv = nn.Conv2d(in_c, out_c * stride**2, 3, padding=1)
        self.shuffle = nn.PixelShuffle(stride)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sin(self.shuffle(self.conv(x)))


def stat(f: torch.Tensor, params: AffineParams) -> torch.Tensor:
    """Per-channel broadcast affine: out[c] = gamma[c] * f[c] + beta[c]."""
    if f.shape[0] != params.gamma.numel():
        raise ValueError(
            f"feature has {f.shape[0]} channels but affine params have {params.gamma.numel()}"
        )
    return params.gamma.view(-1, 1, 1) * f + params.beta.view(-1, 1, 1)


class StatResidualBlock(nn.Module):
    """x + Conv(GELU(affine(x))) with externally supplied affine parameters."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x: torch.Tensor, params: AffineParams) -> torch.Tensor:
        return x + self.conv(F.gelu(stat(x, params)))


class ChannelExpansion(nn.Module):
    """Stride-1 widening block (d -> c2) with time-conditioned modulation."""

    def __init__(self, cfg: ModelConfig, expanded_channels: int):
        super().__init__()
        self.block = SnervBlock(cfg.embed_channels, expanded_channels, stride=1)
        self.tat = AffineGenerator(num_inputs=1, channels=expanded_channels, pe=cfg.pe)

    def forward(self, y: torch.Tensor, t_hat: float) -> torch.Tensor:
        return stat(self.block(y), self.tat((t_hat,)))


class ViewportDecoder(nn.Module):
    """Upsampling blocks alternating with affine residual blocks, sigmoid head.

    Each stage owns an independent affine generator; conditioning uses
    (t, theta, phi) or time only depending on the config switch.
    """

    def __init__(self, plan: DecoderStagePlan, cfg: ModelConfig):
        super().__init__()
        self.stat_view_inputs = cfg.stat_view_inputs
        self.blocks = nn.ModuleList()
        self.residuals = nn.ModuleList()
        self.generators = nn.ModuleList()
        num_inputs = 3 if cfg.stat_view_inputs else 1
        for in_c, out_c, stride in plan.stages:
            self.blocks.append(SnervBlock(in_c, out_c, stride))
            self.residuals.append(StatResidualBlock(out_c))
            self.generators.append(
                AffineGenerator(num_inputs=num_inputs, channels=out_c, pe=cfg.pe)
            )
        self.head = nn.Conv2d(plan.head_in_channels, 3, 3, padding=1)

    def forward(self, y_vp: torch.Tensor, cond: tuple[float, float, float]) -> torch.Tensor:
        x = y_vp
        gen_cond = cond if self.stat_view_inputs else (cond[0],)
        for block, residual, generator in zip(self.blocks, self.residuals, self.generators):
            x = block(x)
            x = residual(x, generator(gen_cond))
        return torch.sigmoid(self.head(x))


class NeRV360(nn.Module):
    """Full model bound to one video's frame count."""

    def __init__(self, cfg: ModelConfig, num_frames: int):
        super().__init__()
        if num_frames < 1:
            raise ValueError(f"num_frames must be >= 1, got {num_frames}")
        if cfg.expanded_channels is None:
            cfg = replace(cfg, expanded_channels=solve_decoder_width(cfg.param_target, cfg))
        self.cfg = cfg
        self.num_frames = num_frames
        self.plan = plan_decoder_stages(cfg.expanded_channels, cfg)
        self.encoder = Encoder(cfg)
        self.expansion = ChannelExpansion(cfg, cfg.expanded_channels)
        self.decoder = ViewportDecoder(self.plan, cfg)

    @property
    def stride_product(self) -> int:
        return self.cfg.stride_product

    def encode(self, frame: torch.Tensor) -> torch.Tensor:
        return self.encoder(frame)

    def decode_from_embedding(
        self, y: torch.Tensor, state: ViewState, spec: ViewportSpec
    ) -> torch.Tensor:
        """Viewport decode of a cached embedding; never touches the encoder."""
        t_hat, theta_hat, phi_hat = normalize_view(state, self.num_frames)
        embed_spec = spec.scaled(self.stride_product)
        if self.cfg.expand_before_extract:
            expanded = self.expansion(y, t_hat)
            y_vp = extract_viewport(expanded, state.theta, state.phi, embed_spec)
        else:
            y_vp = extract_viewport(y, state.theta, state.phi, embed_spec)
            y_vp = self.expansion(y_vp, t_hat)
        return self.decoder(y_vp, (t_hat, theta_hat, phi_hat))

    def decode_full_frame(self, y: torch.Tensor, state: ViewState) -> torch.Tensor:
        """Decode the entire panorama from its embedding (baseline path)."""
        t_hat, theta_hat, phi_hat = normalize_view(state, self.num_frames)
        expanded = self.expansion(y, t_hat)
        return self.decoder(expanded, (t_hat, theta_hat, phi_hat))

    def forward(
        self, frame: torch.Tensor, state: ViewState, spec: ViewportSpec
    ) -> torch.Tensor:
        return self.decode_from_embedding(self.encode(frame), state, spec)

    def decoder_side_parameters(self) -> int:
        return sum(
            p.numel()
            for m in (self.expansion, self.decoder)
            for p in m.parameters()
        )
