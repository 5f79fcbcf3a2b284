"""Command-line entry points; thin wrappers over the library and the service."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import data_io
from .geometry import ViewportSpec
from .model import ModelConfig
from .objective import LossConfig


def _add_synth(sub) -> None:
    p = sub.add_parser("synth", help="generate a synthetic equirect test video (PNG frames)")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--frames", type=int, default=8)
    p.add_argument("--height", type=int, default=384)
    p.add_argument("--width", type=int, default=768)
    p.add_argument("--seed", type=int, default=0)


def _add_train(sub) -> None:
    p = sub.add_parser("train", help="overfit a model to one video")
    p.add_argument("--video", required=True, type=Path, help="PNG directory or .y4m file")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--config", type=Path, help="JSON config (defaults used when omitted)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--viewport", type=int, nargs=2, metavar=("H", "W"))
    p.add_argument("--param-target", type=int)
    p.add_argument("--expanded-channels", type=int)
    p.add_argument("--encoder-width", type=int)


def _add_eval(sub) -> None:
    p = sub.add_parser("eval", help="PSNR / MS-SSIM of a checkpoint along a trajectory")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--video", required=True, type=Path)
    p.add_argument("--trajectory", required=True, type=Path)
    p.add_argument("--report", type=Path)


def _add_bench(sub) -> None:
    p = sub.add_parser("bench", help="decode FPS and peak-memory benchmark")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--trajectory", required=True, type=Path)
    p.add_argument("--mode", required=True, choices=["viewport", "fullframe"])
    p.add_argument("--report", type=Path)
    p.add_argument("--warmup-iters", type=int, default=10)
    p.add_argument("--timed-iters", type=int, default=50)
    p.add_argument("--device", default="cpu")


def _add_serve(sub) -> None:
    p = sub.add_parser("serve", help="run the live viewport decode service")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--port", type=int, default=8360)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--image-format", choices=["png", "jpeg"], default="png")
    p.add_argument(
        "--static",
        type=Path,
        help="directory with the built browser viewer (default: ./frontend/dist if present)",
    )


def cmd_synth(args) -> int:
    from .synthetic import make_synthetic_video

    video = make_synthetic_video(args.frames, args.height, args.width, args.seed)
    written = data_io.save_video_png(video, args.out)
    print(f"wrote {len(written)} frames to {args.out}")
    return 0


def _build_configs(args):
    cfg = data_io.load_config(args.config) if args.config else data_io.default_config()
    model_section = dict(cfg["model"])
    if args.param_target is not None:
        model_section["param_target"] = args.param_target
        model_section["expanded_channels"] = None
    if args.expanded_channels is not None:
        model_section["expanded_channels"] = args.expanded_channels
    if args.encoder_width is not None:
        model_section["encoder_width"] = args.encoder_width
    model_cfg = ModelConfig.from_dict(model_section)

    from .trainer import TrainConfig

    train_section = cfg["train"]
    vp = cfg["viewport"]
    out_h, out_w = (args.viewport if args.viewport else (vp["height"], vp["width"]))
    train_cfg = TrainConfig(
        epochs=args.epochs if args.epochs is not None else train_section["epochs"],
        batch_size=train_section["batch_size"],
        base_lr=train_section["base_lr"],
        warmup_frac=train_section["warmup_frac"],
        seed=args.seed if args.seed is not None else train_section["seed"],
        precision=train_section["precision"],
        viewport_spec=ViewportSpec(math.radians(vp["hfov_deg"]), out_h, out_w),
        loss=LossConfig(**cfg["loss"]),
        checkpoint_every=train_section["checkpoint_every"],
    )
    return model_cfg, train_cfg


def cmd_train(args) -> int:
    from .trainer import train

    model_cfg, train_cfg = _build_configs(args)
    video = data_io.load_video(args.video, stride_product=model_cfg.stride_product)
    print(
        f"training on {video.num_frames} frames {video.frame_size[0]}x{video.frame_size[1]}, "
        f"{train_cfg.epochs} epochs, viewport "
        f"{train_cfg.viewport_spec.out_h}x{train_cfg.viewport_spec.out_w}"
    )
    result = train(video, model_cfg, train_cfg, out_dir=args.out)
    last = result.history[-1]
    print(f"done: epoch {last['epoch']} loss {last['loss']:.4f} psnr {last['psnr']:.2f} dB")
    print(f"checkpoint: {result.checkpoint_path}")
    return 0


def cmd_eval(args) -> int:
    import torch

    from .geometry import ViewState, extract_viewport
    from .objective import ms_ssim, psnr
    from .trainer import restore_model, viewport_spec_from_config

    ckpt = data_io.load_checkpoint(args.checkpoint)
    model = restore_model(ckpt).eval()
    spec = viewport_spec_from_config(ckpt.config)
    video = data_io.load_video(args.video, stride_product=model.stride_product)
    trajectory = data_io.load_trajectory(args.trajectory)

    rows = []
    with torch.no_grad():
        for entry in trajectory:
            state = ViewState(entry.frame, entry.theta, entry.phi)
            gt = extract_viewport(video.frames[entry.frame], entry.theta, entry.phi, spec)
            pred = model(video.frames[entry.frame], state, spec)
            rows.append(
                {
                    "frame": entry.frame,
                    "psnr": psnr(gt, pred),
                    "ms_ssim": float(ms_ssim(gt, pred)),
                }
            )
    mean_psnr = sum(r["psnr"] for r in rows) / len(rows)
    mean_ssim = sum(r["ms_ssim"] for r in rows) / len(rows)
    print(f"{len(rows)} viewports: PSNR {mean_psnr:.2f} dB, MS-SSIM {mean_ssim:.4f}")
    if args.report:
        report = {"entries": rows, "psnr": mean_psnr, "ms_ssim": mean_ssim}
        args.report.write_text(json.dumps(report, indent=2) + "\n")
    return 0


def cmd_bench(args) -> int:
    from .bench import format_report_table, run_benchmark, write_report

    trajectory = data_io.load_trajectory(args.trajectory)
    try:
        report = run_benchmark(
            args.checkpoint,
            trajectory,
            mode=args.mode,
            warmup_iters=args.warmup_iters,
            timed_iters=args.timed_iters,
            device=args.device,
        )
    except RuntimeError as exc:
        print(f"benchmark unavailable: {exc}", file=sys.stderr)
        return 2
    print(format_report_table([report]))
    if args.report:
        write_report(report, args.report)
        print(f"report written to {args.report}")
    return 0 if report["status"] == "ok" else 1


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    static = args.static
    if static is None:
        candidate = Path("frontend/dist")
        static = candidate if candidate.is_dir() else None
    app = create_app(
        checkpoint=args.checkpoint, image_format=args.image_format, static_dir=static
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nerv360",
        description="viewport-decoding neural video representation for 360-degree video",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_synth(sub)
    _add_train(sub)
    _add_eval(sub)
    _add_bench(sub)
    _add_serve(sub)
    args = parser.parse_args(argv)
    handler = {
        "synth": cmd_synth,
        "train": cmd_train,
        "eval": cmd_eval,
        "bench": cmd_bench,
        "serve": cmd_serve,
    }[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
