"""Live decode service: HTTP for metadata/checkpoint management, a WebSocket
channel for navigation, newest-wins coalescing per session."""

from .app import create_app
from .runtime import CheckpointRuntime

__all__ = ["create_app", "CheckpointRuntime"]
