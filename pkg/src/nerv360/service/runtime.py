"""Checkpoint runtime: cached embeddings in, encoded viewport images out.

The encoder never runs here; decode-only deployment works from the per-frame
embedding cache stored in the checkpoint. A runtime is immutable once built,
so any number of sessions can share it read-only while a newly loaded
checkpoint swaps in atomically.
"""

from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass
from pathlib import Path

import torch
from PIL import Image

from ..data_io import load_checkpoint
from ..geometry import ViewState
from ..trainer import restore_model, viewport_spec_from_config


@dataclass
class DecodeResult:
    image: bytes
    decode_ms: float
    format: str


class CheckpointRuntime:
    def __init__(self, checkpoint_path: str | Path, image_format: str = "png"):
        if image_format not in ("png", "jpeg"):
            raise ValueError(f"image_format must be 'png' or 'jpeg', got {image_format!r}")
        ckpt = load_checkpoint(checkpoint_path)
        if ckpt.embeddings is None:
            raise ValueError(
                f"{checkpoint_path}: no embedding cache; serve a final training "
                "checkpoint (saved with embeddings)"
            )
        self.model = restore_model(ckpt).eval()
        self.embeddings = torch.from_numpy(ckpt.embeddings)
        self.spec = viewport_spec_from_config(ckpt.config)
        self.fps = float(ckpt.config.get("fps", 30.0))
        self.digest = ckpt.digest
        self.config = ckpt.config
        self.image_format = image_format

    @property
    def frame_count(self) -> int:
        return int(self.embeddings.shape[0])

    def meta(self) -> dict:
        vp = self.config["viewport"]
        return {
            "frame_count": self.frame_count,
            "fps": self.fps,
            "viewport": {
                "hfov_deg": vp["hfov_deg"],
                "height": vp["height"],
                "width": vp["width"],
            },
            "model_summary": {
                **self.config["model"],
                "decoder_side_parameters": self.model.decoder_side_parameters(),
            },
            "checkpoint_digest": self.digest,
            "image_format": self.image_format,
        }

    def decode(self, t: int, theta_deg: float, phi_deg: float) -> DecodeResult:
        """Decode one viewport and encode it as PNG or JPEG (quality 90)."""
        if not 0 <= t < self.frame_count:
            raise IndexError(
                f"frame {t} out of range; valid frames are 0..{self.frame_count - 1}"
            )
        state = ViewState(t, math.radians(theta_deg), math.radians(phi_deg))
        start = time.perf_counter()
        with torch.no_grad():
            vp = self.model.decode_from_embedding(self.embeddings[t], state, self.spec)
        arr = (vp.clamp(0, 1) * 255.0).round().to(torch.uint8).permute(1, 2, 0).numpy()
        buf = io.BytesIO()
        if self.image_format == "png":
            Image.fromarray(arr).save(buf, format="PNG")
        else:
            Image.fromarray(arr).save(buf, format="JPEG", quality=90)
        decode_ms = (time.perf_counter() - start) * 1e3
        return DecodeResult(image=buf.getvalue(), decode_ms=decode_ms, format=self.image_format)
