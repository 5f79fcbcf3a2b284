"""FastAPI application: metadata + checkpoint management over HTTP, navigation
and frames over a WebSocket with per-session newest-wins coalescing."""

from __future__ import annotations

import asyncio
import base64
import logging
import uuid
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from pydantic import ValidationError

from .runtime import CheckpointRuntime
from .schemas import (
    CheckpointLoadRequest,
    CheckpointLoadResponse,
    ErrorMessage,
    FrameMessage,
    MetaResponse,
    SupersededMessage,
    ViewMessage,
)

log = logging.getLogger("nerv360.service")


def coalesce_policy(pending: list[ViewMessage]) -> tuple[ViewMessage, list[ViewMessage]]:
    """Newest wins: decode only the most recent request, drop the rest.

    Freshness over completeness; superseded requests are acknowledged, never
    silently lost. Applied per session, so one client's queue never drops
    another's requests.
    """
    if not pending:
        raise ValueError("no pending requests")
    return pending[-1], list(pending[:-1])


@dataclass
class Session:
    """One WebSocket client: a single pending slot plus rolling latency stats."""

    session_id: str
    checkpoint_digest: str
    pending: ViewMessage | None = None
    closed: bool = False
    decode_ms_window: deque = field(default_factory=lambda: deque(maxlen=120))


class ServiceState:
    def __init__(self, image_format: str = "png"):
        self.image_format = image_format
        self.runtime: CheckpointRuntime | None = None
        self._swap_lock = asyncio.Lock()

    async def load(self, path: str) -> CheckpointRuntime:
        # exclusive writer: one load at a time; readers keep their reference
        async with self._swap_lock:
            loop = asyncio.get_running_loop()
            runtime = await loop.run_in_executor(
                None, lambda: CheckpointRuntime(path, self.image_format)
            )
            self.runtime = runtime
            return runtime


def create_app(
    checkpoint: str | Path | None = None,
    image_format: str = "png",
    static_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="nerv360 viewport decode service")
    state = ServiceState(image_format=image_format)
    app.state.service = state
    if checkpoint is not None:
        state.runtime = CheckpointRuntime(checkpoint, image_format)

    @app.get("/meta", response_model=MetaResponse)
    def get_meta() -> MetaResponse:
        runtime = state.runtime
        if runtime is None:
            raise HTTPException(status_code=503, detail="no checkpoint loaded")
        return MetaResponse(**runtime.meta())

    @app.post("/checkpoint", response_model=CheckpointLoadResponse)
    async def load_checkpoint_endpoint(req: CheckpointLoadRequest) -> CheckpointLoadResponse:
        try:
            runtime = await state.load(req.path)
        except FileNotFoundError:
            raise HTTPException(status_code=404, detail=f"checkpoint not found: {req.path}")
        except (ValueError, RuntimeError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return CheckpointLoadResponse(
            loaded=True, checkpoint_digest=runtime.digest, frame_count=runtime.frame_count
        )

    @app.websocket("/ws")
    async def ws_channel(ws: WebSocket) -> None:
        await ws.accept()
        runtime = state.runtime
        if runtime is None:
            await ws.send_text(
                ErrorMessage(req_id=-1, message="no checkpoint loaded").model_dump_json()
            )
            await ws.close(code=1013)
            return

        session = Session(session_id=uuid.uuid4().hex, checkpoint_digest=runtime.digest)
        cond = asyncio.Condition()
        send_lock = asyncio.Lock()

        async def send(model) -> None:
            async with send_lock:
                if session.closed:
                    return
                try:
                    await ws.send_text(model.model_dump_json())
                except RuntimeError:  # client went away mid-send
                    session.closed = True

        async def decode_worker() -> None:
            loop = asyncio.get_running_loop()
            while True:
                async with cond:
                    await cond.wait_for(lambda: session.pending or session.closed)
                    if session.closed:
                        return
                    msg = session.pending
                    session.pending = None
                try:
                    result = await loop.run_in_executor(
                        None, runtime.decode, msg.t, msg.theta_deg, msg.phi_deg
                    )
                except IndexError as exc:
                    await send(ErrorMessage(req_id=msg.req_id, message=str(exc)))
                    continue
                except Exception:
                    incident = uuid.uuid4().hex[:12]
                    log.exception("decode failed (incident %s)", incident)
                    await send(
                        ErrorMessage(
                            req_id=msg.req_id,
                            message=f"decode failed (incident {incident})",
                        )
                    )
                    continue
                session.decode_ms_window.append(result.decode_ms)
                await send(
                    FrameMessage(
                        req_id=msg.req_id,
                        decode_ms=result.decode_ms,
                        image_b64=base64.b64encode(result.image).decode("ascii"),
                        format=result.format,
                    )
                )

        worker = asyncio.create_task(decode_worker())
        try:
            while True:
                text = await ws.receive_text()
                try:
                    msg = ViewMessage.model_validate_json(text)
                except ValidationError as exc:
                    await send(
                        ErrorMessage(req_id=-1, message=f"malformed message: {exc.errors()[0]['msg']}")
                    )
                    continue
                async with cond:
                    queue = [session.pending, msg] if session.pending else [msg]
                    session.pending, dropped = coalesce_policy(queue)
                    cond.notify()
                for stale in dropped:
                    await send(SupersededMessage(req_id=stale.req_id))
        except WebSocketDisconnect:
            pass
        finally:
            async with cond:
                session.closed = True
                cond.notify()
            try:
                await asyncio.wait_for(worker, timeout=10)
            except asyncio.TimeoutError:
                worker.cancel()

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="viewer")

    return app
