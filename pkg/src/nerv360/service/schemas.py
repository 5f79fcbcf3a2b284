"""Pydantic models for the HTTP endpoints and the WebSocket message channel.

The WebSocket schema is the wire contract the browser viewer speaks:

    client -> server  {"type": "view", "t": int, "theta_deg": float,
                       "phi_deg": float, "req_id": int}
    server -> client  {"type": "frame", "req_id": int, "decode_ms": float,
                       "image_b64": str, "format": "png" | "jpeg"}
                      {"type": "superseded", "req_id": int}
                      {"type": "error", "req_id": int, "message": str}
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class ViewMessage(BaseModel):
    type: Literal["view"]
    t: int
    theta_deg: float
    phi_deg: float
    req_id: int


class FrameMessage(BaseModel):
    type: Literal["frame"] = "frame"
    req_id: int
    decode_ms: float
    image_b64: str
    format: Literal["png", "jpeg"]


class SupersededMessage(BaseModel):
    type: Literal["superseded"] = "superseded"
    req_id: int


class ErrorMessage(BaseModel):
    type: Literal["error"] = "error"
    req_id: int
    message: str


class ViewportInfo(BaseModel):
    hfov_deg: float
    height: int
    width: int


class MetaResponse(BaseModel):
    frame_count: int
    fps: float
    viewport: ViewportInfo
    model_summary: dict
    checkpoint_digest: str
    image_format: Literal["png", "jpeg"]

    model_config = {"protected_namespaces": ()}


class CheckpointLoadRequest(BaseModel):
    path: str = Field(min_length=1)


class CheckpointLoadResponse(BaseModel):
    loaded: bool
    checkpoint_digest: str
    frame_count: int
