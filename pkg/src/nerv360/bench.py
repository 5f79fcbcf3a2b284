"""Decode benchmark: viewport path versus full-frame-then-crop baseline.

Both paths run the same trained weights; the baseline decodes the entire
panorama through the (fully convolutional) decoder and crops the viewport in
pixel space afterwards. The benchmark reports throughput over timed
iterations after a warmup, and peak memory from the best counter the platform
offers: the CUDA peak-allocation counter, the torch CPU allocation timeline,
or sampled process RSS as a last resort.
"""

from __future__ import annotations

import json
import statistics
import tempfile
import threading
import time
from pathlib import Path

import torch
from filelock import FileLock

from .data_io import Checkpoint, Trajectory, load_checkpoint
from .geometry import ViewState, ViewportSpec, extract_viewport
from .model import NeRV360
from .objective import psnr
from .trainer import restore_model, viewport_spec_from_config

BENCH_MODES = ("viewport", "fullframe")


def decode_fullframe_baseline(
    model: NeRV360, y: torch.Tensor, state: ViewState, spec: ViewportSpec
) -> torch.Tensor:
    """Decode the whole panorama, then cut the viewport out in pixel space."""
    full = model.decode_full_frame(y, state)
    return extract_viewport(full, state.theta, state.phi, spec)


def _rss_peak(fn) -> int:
    import psutil

    proc = psutil.Process()
    baseline = proc.memory_info().rss
    peak = baseline
    stop = threading.Event()

    def sampler():
        nonlocal peak
        while not stop.is_set():
            rss = proc.memory_info().rss
            if rss > peak:
                peak = rss
            time.sleep(0.001)

    thread = threading.Thread(target=sampler, daemon=True)
    thread.start()
    try:
        fn()
    finally:
        stop.set()
        thread.join()
    return max(peak - baseline, 0)


def _torch_profiler_peak(fn) -> int | None:
    from torch.profiler import ProfilerActivity, profile

    try:
        with profile(
            activities=[ProfilerActivity.CPU],
            profile_memory=True,
            record_shapes=True,
            with_stack=True,
        ) as prof:
            fn()
        from torch.profiler._memory_profiler import Action

        timeline = prof._memory_profile().timeline
    except Exception:
        return None
    current = peak = 0
    for _, action, _, size in timeline:
        if action in (Action.CREATE, Action.PREEXISTING):
            current += size
        elif action == Action.DESTROY:
            current -= size
        peak = max(peak, current)
    return peak if timeline else None


def measure_peak_memory(fn, device: str = "cpu") -> tuple[int, str]:
    """Run ``fn`` once and return (peak bytes, backend name)."""
    if device == "cuda":
        torch.cuda.reset_peak_memory_stats()
        fn()
        return torch.cuda.max_memory_allocated(), "cuda-max-allocated"
    peak = _torch_profiler_peak(fn)
    if peak is not None:
        return peak, "torch-cpu-alloc-timeline"
    return _rss_peak(fn), "rss-sampling"


def _bench_lock(device: str) -> FileLock:
    return FileLock(Path(tempfile.gettempdir()) / f"nerv360-bench-{device}.lock")


def run_benchmark(
    checkpoint: Checkpoint | str | Path,
    trajectory: Trajectory,
    mode: str,
    warmup_iters: int = 10,
    timed_iters: int = 50,
    device: str = "cpu",
    memory_iters: int = 3,
) -> dict:
    """Time one decode mode along a trajectory and measure its peak memory.

    Out-of-memory during decode is reported as a benchmark outcome
    (status "memory_exhausted"), not raised. Exactly one benchmark runs per
    device at a time, enforced by a cross-process lock.
    """
    if mode not in BENCH_MODES:
        raise ValueError(f"mode must be one of {BENCH_MODES}, got {mode!r}")
    if device == "cuda" and not torch.cuda.is_available():
        raise RuntimeError("mode unavailable: CUDA device requested but not present")
    if len(trajectory) == 0:
        raise ValueError("trajectory is empty")

    if not isinstance(checkpoint, Checkpoint):
        checkpoint = load_checkpoint(checkpoint)
    if checkpoint.embeddings is None:
        raise ValueError(
            "checkpoint has no embedding cache; benchmark needs a final "
            "training checkpoint (saved with embeddings)"
        )

    model = restore_model(checkpoint).eval()
    spec = viewport_spec_from_config(checkpoint.config)
    embeddings = torch.from_numpy(checkpoint.embeddings)
    num_frames = embeddings.shape[0]

    states = [ViewState(e.frame, e.theta, e.phi) for e in trajectory]
    for s in states:
        if s.t >= num_frames:
            raise ValueError(f"trajectory frame {s.t} out of range ({num_frames} frames)")

    def decode(i: int) -> torch.Tensor:
        state = states[i % len(states)]
        y = embeddings[state.t]
        if mode == "viewport":
            return model.decode_from_embedding(y, state, spec)
        return decode_fullframe_baseline(model, y, state, spec)

    report = {
        "mode": mode,
        "status": "ok",
        "device": device,
        "viewport": [spec.out_h, spec.out_w],
        "embedding_shape": list(embeddings.shape[1:]),
        "num_frames": num_frames,
        "warmup_iters": warmup_iters,
        "timed_iters": timed_iters,
        "checkpoint_digest": checkpoint.digest,
    }

    with _bench_lock(device), torch.no_grad():
        try:
            for i in range(warmup_iters):
                decode(i)

            latencies = []
            for i in range(timed_iters):
                t0 = time.perf_counter()
                decode(i)
                latencies.append(time.perf_counter() - t0)

            def memory_section():
                for i in range(memory_iters):
                    decode(i)

            peak_bytes, backend = measure_peak_memory(memory_section, device)

            # informational fidelity gap between the two decode paths
            state0 = states[0]
            y0 = embeddings[state0.t]
            vp = model.decode_from_embedding(y0, state0, spec)
            full = decode_fullframe_baseline(model, y0, state0, spec)
            report["cross_mode_psnr"] = psnr(vp, full)
        except (torch.cuda.OutOfMemoryError, MemoryError) as exc:
            report["status"] = "memory_exhausted"
            report["error"] = str(exc)
            return report

    fps = [1.0 / dt for dt in latencies]
    report.update(
        {
            "fps_mean": statistics.fmean(fps),
            "fps_median": statistics.median(fps),
            "latency_ms_median": statistics.median(latencies) * 1e3,
            "peak_memory_bytes": peak_bytes,
            "memory_backend": backend,
        }
    )
    return report


def format_report_table(reports: list[dict]) -> str:
    """Aligned text table, one row per report."""
    cols = [
        ("mode", "mode", "{}"),
        ("status", "status", "{}"),
        ("FPS (median)", "fps_median", "{:.2f}"),
        ("FPS (mean)", "fps_mean", "{:.2f}"),
        ("latency ms", "latency_ms_median", "{:.2f}"),
        ("peak mem MiB", "peak_memory_bytes", "mib"),
        ("x-mode PSNR", "cross_mode_psnr", "{:.2f}"),
    ]
    rows = [[title for title, _, _ in cols]]
    for rep in reports:
        row = []
        for _, key, fmt in cols:
            value = rep.get(key)
            if value is None:
                row.append("-")
            elif fmt == "mib":
                row.append(f"{value / 2**20:.1f}")
            else:
                row.append(fmt.format(value))
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(cols))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def write_report(report: dict | list[dict], path: str | Path) -> None:
    Path(path).write_text(json.dumps(report, indent=2) + "\n")
