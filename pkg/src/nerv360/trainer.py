"""Overfitting loop: one network per video, random gaze per frame per epoch.

The optimizer is an adaptive Nesterov-momentum method with three moment
buffers (gradient, gradient difference, squared lookahead gradient), all
bias-corrected. The learning rate ramps linearly from zero over the first
tenth of training, then follows a cosine decay to zero.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data_io import Checkpoint, TrainLogWriter, VideoDataset, save_checkpoint
from .geometry import ViewState, ViewportSpec, extract_viewport
from .model import ModelConfig, NeRV360
from .objective import LossConfig, distortion_loss, psnr

ADAN_BETAS = (0.98, 0.92, 0.99)
ADAN_EPS = 1e-8


class TrainingDiverged(RuntimeError):
    """Raised when the loss turns non-finite; carries the offending step."""

    def __init__(self, step: int, frame: int, theta: float, phi: float):
        super().__init__(
            f"non-finite loss at step {step} (frame {frame}, "
            f"theta {theta:.4f}, phi {phi:.4f})"
        )
        self.step = step
        self.frame = frame
        self.theta = theta
        self.phi = phi


class Adan(torch.optim.Optimizer):
    """Adaptive Nesterov momentum with bias-corrected moments.

    Per parameter, with gradient g and previous gradient g_prev:

        m = b1*m + (1-b1)*g
        v = b2*v + (1-b2)*(g - g_prev)
        n = b3*n + (1-b3)*(g + b2*(g - g_prev))^2
        p -= lr * (m/(1-b1^k) + b2*v/(1-b2^k)) / (sqrt(n/(1-b3^k)) + eps)

    The gradient-difference term starts at zero on the first step. Steps with
    any non-finite gradient are rejected wholesale: no state or parameter is
    touched and :meth:`step` returns False.
    """

    def __init__(
        self,
        params,
        lr: float = 1e-4,
        betas: tuple[float, float, float] = ADAN_BETAS,
        eps: float = ADAN_EPS,
        weight_decay: float = 0.0,
    ):
        if lr < 0:
            raise ValueError(f"invalid learning rate {lr}")
        if any(not 0.0 <= b < 1.0 for b in betas):
            raise ValueError(f"betas must be in [0, 1), got {betas}")
        defaults = dict(lr=lr, betas=betas, eps=eps, weight_decay=weight_decay)
        super().__init__(params, defaults)
        self.rejected_steps = 0

    @torch.no_grad()
    def step(self, closure=None) -> bool:
        if closure is not None:
            raise ValueError("closures are not supported")
        grads = [
            (group, p)
            for group in self.param_groups
            for p in group["params"]
            if p.grad is not None
        ]
        if any(not torch.isfinite(p.grad).all() for _, p in grads):
            self.rejected_steps += 1
            return False

        for group, p in grads:
            b1, b2, b3 = group["betas"]
            lr, eps, wd = group["lr"], group["eps"], group["weight_decay"]
            g = p.grad
            state = self.state[p]
            if not state:
                state["step"] = 0
                state["m"] = torch.zeros_like(p)
                state["v"] = torch.zeros_like(p)
                state["n"] = torch.zeros_like(p)
                state["prev_grad"] = g.clone()
            state["step"] += 1
            k = state["step"]

            diff = g - state["prev_grad"]
            state["m"].mul_(b1).add_(g, alpha=1 - b1)
            state["v"].mul_(b2).add_(diff, alpha=1 - b2)
            lookahead = g + b2 * diff
            state["n"].mul_(b3).addcmul_(lookahead, lookahead, value=1 - b3)

            denom = (state["n"] / (1 - b3**k)).sqrt_().add_(eps)
            update = state["m"] / (1 - b1**k) + b2 * state["v"] / (1 - b2**k)
            p.addcdiv_(update, denom, value=-lr)
            if wd:
                p.div_(1 + lr * wd)
            state["prev_grad"].copy_(g)
        return True


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 1
    base_lr: float = 1e-4
    warmup_frac: float = 0.1
    seed: int = 0
    precision: str = "full"  # "full" or "mixed"
    viewport_spec: ViewportSpec = field(
        default_factory=lambda: ViewportSpec(math.radians(78.1), 1080, 1920)
    )
    loss: LossConfig = field(default_factory=LossConfig)
    checkpoint_every: int = 50

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0.0 <= self.warmup_frac < 1.0:
            raise ValueError(f"warmup_frac must be in [0, 1), got {self.warmup_frac}")
        if self.precision not in ("full", "mixed"):
            raise ValueError(f"precision must be 'full' or 'mixed', got {self.precision}")


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Linear warmup to base_lr, then cosine decay to zero at total_steps."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    warmup = cfg.warmup_frac * total_steps
    if step < warmup:
        return cfg.base_lr * step / warmup
    if total_steps == warmup:
        return cfg.base_lr
    progress = (step - warmup) / (total_steps - warmup)
    return cfg.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def sample_viewpoint(rng: random.Random) -> tuple[float, float]:
    """Gaze direction: longitude uniform on [-pi, pi), latitude on [-pi/2, pi/2)."""
    theta = (rng.random() - 0.5) * 2.0 * math.pi
    phi = (rng.random() - 0.5) * math.pi
    return theta, phi


@dataclass
class TrainResult:
    model: NeRV360
    history: list[dict]
    checkpoint_path: Path | None = None


def _frames_tensor(video) -> tuple[torch.Tensor, float]:
    if isinstance(video, VideoDataset):
        return video.frames, video.fps
    frames = torch.as_tensor(video)
    if frames.ndim != 4 or frames.shape[1] != 3:
        raise ValueError(f"expected (N, 3, H, W) video, got {tuple(frames.shape)}")
    return frames, 30.0


def compute_embeddings(model: NeRV360, frames: torch.Tensor) -> np.ndarray:
    """Per-frame embedding cache used for decode-only deployment."""
    with torch.no_grad():
        stacked = torch.stack([model.encode(f) for f in frames])
    return stacked.numpy().astype(np.float32)


def checkpoint_from_model(
    model: NeRV360,
    extra_config: dict | None = None,
    embeddings: np.ndarray | None = None,
    optimizer: Adan | None = None,
) -> Checkpoint:
    config = {"model": model.cfg.to_dict(), "num_frames": model.num_frames}
    if extra_config:
        config.update(extra_config)
    weights = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    opt_state = None
    opt_meta = None
    if optimizer is not None:
        names = {id(p): n for n, p in model.named_parameters()}
        opt_state = {}
        opt_meta = {"steps": {}}
        for p, st in optimizer.state.items():
            name = names[id(p)]
            for slot in ("m", "v", "n", "prev_grad"):
                opt_state[f"{name}.{slot}"] = st[slot].detach().cpu().numpy()
            opt_meta["steps"][name] = st["step"]
    return Checkpoint(
        config=config,
        weights=weights,
        opt_state=opt_state,
        opt_meta=opt_meta,
        embeddings=embeddings,
    )


def restore_model(ckpt: Checkpoint) -> NeRV360:
    """Rebuild a model from a checkpoint; weights round-trip bit-identically."""
    cfg = ModelConfig.from_dict(ckpt.config["model"])
    model = NeRV360(cfg, num_frames=ckpt.config["num_frames"])
    state = {k: torch.from_numpy(v.copy()) for k, v in ckpt.weights.items()}
    model.load_state_dict(state)
    return model


def viewport_spec_from_config(config: dict) -> ViewportSpec:
    vp = config["viewport"]
    return ViewportSpec(math.radians(vp["hfov_deg"]), vp["height"], vp["width"])


def train(
    video,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
) -> TrainResult:
    """Overfit a model to one video; returns the model and per-epoch history.

    Each epoch walks the frames in order with a fresh gaze sample per frame.
    Ground-truth viewports are cut from the frame in pixel space with the same
    projection the model applies in embedding space.
    """
    frames, fps = _frames_tensor(video)
    num_frames = frames.shape[0]
    spec = cfg.viewport_spec

    torch.manual_seed(cfg.seed)
    model = NeRV360(model_cfg, num_frames=num_frames)
    optimizer = Adan(model.parameters(), lr=cfg.base_lr)
    rng = random.Random(cfg.seed)

    total_steps = cfg.epochs * math.ceil(num_frames / cfg.batch_size)
    extra_config = {
        "viewport": {
            "hfov_deg": math.degrees(spec.hfov),
            "height": spec.out_h,
            "width": spec.out_w,
        },
        "fps": fps,
    }

    out_dir = Path(out_dir) if out_dir is not None else None
    log = TrainLogWriter(out_dir / "train_log.jsonl") if out_dir else None
    checkpoint_path = None

    history: list[dict] = []
    global_step = 0
    try:
        for epoch in range(cfg.epochs):
            losses: list[float] = []
            psnrs: list[float] = []
            rejected_before = optimizer.rejected_steps
            pending = 0
            optimizer.zero_grad()
            for t in range(num_frames):
                theta, phi = sample_viewpoint(rng)
                state = ViewState(t, theta, phi)
                target = extract_viewport(frames[t], theta, phi, spec)

                lr = lr_at(global_step, total_steps, cfg)
                for group in optimizer.param_groups:
                    group["lr"] = lr

                if cfg.precision == "mixed":
                    with torch.autocast("cpu", dtype=torch.bfloat16):
                        pred = model(frames[t], state, spec)
                        loss = distortion_loss(target, pred.float(), cfg.loss)
                else:
                    pred = model(frames[t], state, spec)
                    loss = distortion_loss(target, pred, cfg.loss)

                if not torch.isfinite(loss):
                    raise TrainingDiverged(global_step, t, theta, phi)

                (loss / cfg.batch_size).backward()
                pending += 1
                if pending == cfg.batch_size or t == num_frames - 1:
                    optimizer.step()
                    optimizer.zero_grad()
                    pending = 0
                    global_step += 1

                losses.append(loss.item())
                psnrs.append(psnr(target, pred.detach()))

            record = {
                "epoch": epoch,
                "loss": sum(losses) / len(losses),
                "psnr": sum(psnrs) / len(psnrs),
                "lr": lr_at(min(global_step, total_steps), total_steps, cfg),
            }
            rejected = optimizer.rejected_steps - rejected_before
            if rejected:
                record["rejected_steps"] = rejected
            history.append(record)
            if log:
                log.write(record)

            if out_dir and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
                ckpt = checkpoint_from_model(model, extra_config, optimizer=optimizer)
                save_checkpoint(ckpt, out_dir / f"epoch_{epoch + 1:05d}.ckpt")
    finally:
        if log:
            log.close()

    if out_dir:
        ckpt = checkpoint_from_model(
            model, extra_config, embeddings=compute_embeddings(model, frames)
        )
        checkpoint_path = out_dir / "final.ckpt"
        save_checkpoint(ckpt, checkpoint_path)

    return TrainResult(model=model, history=history, checkpoint_path=checkpoint_path)
