"""Benchmark plumbing: baseline path, memory meters, report contents."""

import math

import pytest
import torch

from nerv360.bench import (
    decode_fullframe_baseline,
    format_report_table,
    measure_peak_memory,
    run_benchmark,
    write_report,
)
from nerv360.data_io import Trajectory, TrajectoryEntry, load_checkpoint
from nerv360.geometry import ViewState, ViewportSpec
from nerv360.trainer import restore_model, viewport_spec_from_config


def short_trajectory(n=4):
    return Trajectory([TrajectoryEntry(i, (i - 1) * 0.5, 0.1 * i) for i in range(n)])


class TestFullframeBaseline:
    def test_output_shape_matches_viewport_path(self, toy_checkpoint_path):
        ckpt = load_checkpoint(toy_checkpoint_path)
        model = restore_model(ckpt).eval()
        spec = viewport_spec_from_config(ckpt.config)
        y = torch.from_numpy(ckpt.embeddings[0])
        state = ViewState(0, 0.4, -0.1)
        with torch.no_grad():
            vp = model.decode_from_embedding(y, state, spec)
            base = decode_fullframe_baseline(model, y, state, spec)
        assert base.shape == vp.shape

    def test_fullframe_intermediate_is_whole_panorama(self, toy_checkpoint_path):
        ckpt = load_checkpoint(toy_checkpoint_path)
        model = restore_model(ckpt).eval()
        y = torch.from_numpy(ckpt.embeddings[0])
        with torch.no_grad():
            full = model.decode_full_frame(y, ViewState(0, 0.0, 0.0))
        assert full.shape == (3, 96, 192)


class TestPeakMemoryMeter:
    def test_detects_large_allocation(self):
        def work():
            blocks = [torch.zeros(64, 256, 1024) for _ in range(2)]  # 2 x 64 MiB
            return sum(b.sum() for b in blocks)

        peak, backend = measure_peak_memory(work)
        assert backend in ("torch-cpu-alloc-timeline", "rss-sampling", "cuda-max-allocated")
        assert peak >= 100 * 2**20

    def test_small_vs_large_ordering(self):
        def small():
            return torch.zeros(16, 64, 64).sum()

        def large():
            return torch.zeros(256, 512, 512).sum()  # 256 MiB

        small_peak, _ = measure_peak_memory(small)
        large_peak, _ = measure_peak_memory(large)
        assert large_peak > small_peak


class TestRunBenchmark:
    def test_report_fields(self, toy_checkpoint_path):
        report = run_benchmark(
            toy_checkpoint_path,
            short_trajectory(),
            mode="viewport",
            warmup_iters=2,
            timed_iters=5,
        )
        assert report["status"] == "ok"
        assert report["fps_median"] > 0
        assert report["fps_mean"] > 0
        assert report["latency_ms_median"] > 0
        assert report["peak_memory_bytes"] >= 0
        assert "cross_mode_psnr" in report
        assert report["viewport"] == [48, 96]

    def test_fullframe_mode_runs(self, toy_checkpoint_path):
        report = run_benchmark(
            toy_checkpoint_path,
            short_trajectory(),
            mode="fullframe",
            warmup_iters=1,
            timed_iters=3,
        )
        assert report["status"] == "ok"
        assert report["mode"] == "fullframe"

    def test_bad_mode(self, toy_checkpoint_path):
        with pytest.raises(ValueError, match="mode"):
            run_benchmark(toy_checkpoint_path, short_trajectory(), mode="both")

    def test_trajectory_out_of_range(self, toy_checkpoint_path):
        traj = Trajectory([TrajectoryEntry(99, 0.0, 0.0)])
        with pytest.raises(ValueError, match="out of range"):
            run_benchmark(toy_checkpoint_path, traj, mode="viewport", timed_iters=1)

    def test_cuda_unavailable_reported(self, toy_checkpoint_path):
        if torch.cuda.is_available():
            pytest.skip("CUDA present on this machine")
        with pytest.raises(RuntimeError, match="unavailable"):
            run_benchmark(toy_checkpoint_path, short_trajectory(), mode="viewport", device="cuda")

    def test_table_and_json(self, toy_checkpoint_path, tmp_path):
        report = run_benchmark(
            toy_checkpoint_path,
            short_trajectory(),
            mode="viewport",
            warmup_iters=1,
            timed_iters=3,
        )
        table = format_report_table([report])
        assert "viewport" in table
        assert "FPS" in table
        out = tmp_path / "report.json"
        write_report(report, out)
        import json

        assert json.loads(out.read_text())["mode"] == "viewport"
