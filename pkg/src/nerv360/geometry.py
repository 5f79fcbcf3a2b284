"""Perspective projection between equirectangular panoramas and rectilinear viewports.

Coordinate conventions:
    - Pixel centers sit at half-integer offsets: output pixel (i, j) is sampled
      at (i + 0.5, j + 0.5).
    - Longitude ``lon`` in [-pi, pi) maps to ``u = (lon / (2*pi) + 0.5) * W - 0.5``,
      so u = -0.5 and u = W - 0.5 name the same seam point and horizontal
      sampling wraps modulo W.
    - Latitude ``lat`` in [-pi/2, pi/2] maps to ``v = (0.5 - lat/pi) * H - 0.5``
      (north pole at the top row); vertical sampling clamps to the edge rows.
    - Viewing direction: yaw(theta) about the vertical axis, then pitch(phi)
      about the camera's right axis. No roll.
    - Vertical field of view is derived from the aspect ratio:
      ``tan(vfov/2) = tan(hfov/2) * out_h / out_w``.

The same projection is used for ground-truth pixel viewports and for
embedding-space viewports (at the embedding's reduced resolution). Everything
here is a pure function of its arguments; sampling is differentiable with
respect to the source values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch

TWO_PI = 2.0 * math.pi


def wrap_longitude(theta: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    wrapped = math.fmod(theta + math.pi, TWO_PI)
    if wrapped < 0:
        wrapped += TWO_PI
    return wrapped - math.pi


def clamp_latitude(phi: float) -> float:
    """Clamp an angle into [-pi/2, pi/2] (poles clamp, never wrap)."""
    return min(max(phi, -math.pi / 2), math.pi / 2)


@dataclass(frozen=True)
class ViewState:
    """A viewing request: frame index plus gaze longitude/latitude in radians."""

    t: int
    theta: float
    phi: float

    def __post_init__(self) -> None:
        if self.t < 0:
            raise ValueError(f"frame index must be >= 0, got {self.t}")
        if not (math.isfinite(self.theta) and math.isfinite(self.phi)):
            raise ValueError(f"non-finite view angles: theta={self.theta}, phi={self.phi}")
        object.__setattr__(self, "theta", wrap_longitude(self.theta))
        object.__setattr__(self, "phi", clamp_latitude(self.phi))


@dataclass(frozen=True)
class ViewportSpec:
    """Rectilinear viewport camera: horizontal FOV in radians and output size.

    The vertical FOV is derived from the aspect ratio, never stored.
    """

    hfov: float
    out_h: int
    out_w: int

    def __post_init__(self) -> None:
        if not math.isfinite(self.hfov) or not (0.0 < self.hfov < math.pi):
            raise ValueError(f"hfov must be in (0, pi), got {self.hfov}")
        if self.out_h < 1 or self.out_w < 1:
            raise ValueError(f"output dims must be >= 1, got {self.out_h}x{self.out_w}")

    def scaled(self, factor: int) -> "ViewportSpec":
        """Same camera at 1/factor resolution (used for embedding-space grids)."""
        if self.out_h % factor or self.out_w % factor:
            raise ValueError(
                f"viewport {self.out_h}x{self.out_w} not divisible by {factor}"
            )
        return ViewportSpec(self.hfov, self.out_h // factor, self.out_w // factor)


@dataclass
class SamplingGrid:
    """Continuous (u, v) source coordinates per output pixel, in source-pixel units.

    ``coords`` has shape (out_h, out_w, 2) with u in channel 0 and v in
    channel 1. v is clamped into [-0.5, src_h - 0.5]; u is interpreted modulo
    src_w at sampling time.
    """

    coords: torch.Tensor
    src_h: int
    src_w: int

    out_h: int = field(init=False)
    out_w: int = field(init=False)

    def __post_init__(self) -> None:
        if self.coords.ndim != 3 or self.coords.shape[-1] != 2:
            raise ValueError(f"coords must be (out_h, out_w, 2), got {tuple(self.coords.shape)}")
        self.out_h, self.out_w = int(self.coords.shape[0]), int(self.coords.shape[1])


def viewport_grid(
    theta: float,
    phi: float,
    spec: ViewportSpec,
    src_h: int,
    src_w: int,
) -> SamplingGrid:
    """Build the sampling grid of a rectilinear viewport over an equirect source.

    Each output pixel center is lifted to a camera ray through an image plane
    at unit focal distance with half-width tan(hfov/2), rotated by yaw(theta)
    then pitch(phi), and converted back to (lon, lat) then (u, v) source
    coordinates. Computed in float64 for stable downstream interpolation.
    """
    if not (math.isfinite(theta) and math.isfinite(phi)):
        raise ValueError(f"non-finite view angles: theta={theta}, phi={phi}")
    if src_h < 1 or src_w < 1:
        raise ValueError(f"source dims must be >= 1, got {src_h}x{src_w}")

    tan_h = math.tan(spec.hfov / 2.0)
    tan_v = tan_h * spec.out_h / spec.out_w

    jj = (torch.arange(spec.out_w, dtype=torch.float64) + 0.5) / spec.out_w
    ii = (torch.arange(spec.out_h, dtype=torch.float64) + 0.5) / spec.out_h
    x = (2.0 * jj - 1.0) * tan_h            # right, (out_w,)
    y = (1.0 - 2.0 * ii) * tan_v            # up, (out_h,)

    x = x.unsqueeze(0).expand(spec.out_h, spec.out_w)
    y = y.unsqueeze(1).expand(spec.out_h, spec.out_w)

    cos_p, sin_p = math.cos(phi), math.sin(phi)
    cos_t, sin_t = math.cos(theta), math.sin(theta)

    # pitch about the camera's right axis: forward (0,0,1) -> (0, sin phi, cos phi)
    yp = cos_p * y + sin_p
    zp = -sin_p * y + cos_p
    # yaw about the vertical axis: forward -> (sin theta, 0, cos theta)
    xw = cos_t * x + sin_t * zp
    zw = -sin_t * x + cos_t * zp

    lat = torch.atan2(yp, torch.hypot(xw, zw))
    lon = torch.atan2(xw, zw)

    u = (lon / TWO_PI + 0.5) * src_w - 0.5
    v = (0.5 - lat / math.pi) * src_h - 0.5
    v = v.clamp(-0.5, src_h - 0.5)

    return SamplingGrid(torch.stack([u, v], dim=-1), src_h=src_h, src_w=src_w)


def bilinear_sample(source: torch.Tensor, grid: SamplingGrid) -> torch.Tensor:
    """Sample ``source`` (C, H, W) at grid coordinates with bilinear weights.

    The four nearest source pixels are blended; the horizontal coordinate
    wraps modulo W (seam continuity), the vertical coordinate clamps to the
    edge rows. Differentiable with respect to ``source``.
    """
    if source.ndim != 3:
        raise ValueError(f"source must be (C, H, W), got {tuple(source.shape)}")
    c, h, w = source.shape
    if (h, w) != (grid.src_h, grid.src_w):
        raise ValueError(
            f"grid built for {grid.src_h}x{grid.src_w} but source is {h}x{w}"
        )

    u = grid.coords[..., 0]
    v = grid.coords[..., 1].clamp(-0.5, h - 0.5)

    u0 = torch.floor(u)
    v0 = torch.floor(v)
    au = (u - u0).to(source.dtype)
    av = (v - v0).to(source.dtype)

    u0i = u0.long()
    v0i = v0.long()
    u0w = torch.remainder(u0i, w)
    u1w = torch.remainder(u0i + 1, w)
    v0c = v0i.clamp(0, h - 1)
    v1c = (v0i + 1).clamp(0, h - 1)

    tl = source[:, v0c, u0w]
    tr = source[:, v0c, u1w]
    bl = source[:, v1c, u0w]
    br = source[:, v1c, u1w]

    top = tl + au * (tr - tl)
    bot = bl + au * (br - bl)
    return top + av * (bot - top)


def extract_viewport(
    frame: torch.Tensor,
    theta: float,
    phi: float,
    spec: ViewportSpec,
) -> torch.Tensor:
    """Extract a rectilinear viewport from an equirect array (pixels or embedding).

    Composition of :func:`viewport_grid` and :func:`bilinear_sample`; works on
    any channel count, so it serves both ground-truth pixel viewports and
    embedding-space viewports.
    """
    _, h, w = frame.shape
    grid = viewport_grid(theta, phi, spec, src_h=h, src_w=w)
    return bilinear_sample(frame, grid)
