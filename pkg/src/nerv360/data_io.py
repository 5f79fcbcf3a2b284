"""File formats: frame sequences, viewpoint trajectories, configs, checkpoints, logs.

Frames load from a directory of numerically ordered PNGs or a single Y4M
file. Trajectories are CSV with a ``frame,theta_deg,phi_deg`` header (degrees
on disk, radians in memory). Checkpoints are a single-file container:

    magic (8 bytes) | u32 container version | u64 header length |
    header JSON (config + array manifest + payload digest) | raw arrays

Arrays are stored little-endian and verified against a SHA-256 digest on
load, so a truncated or corrupted file never half-loads.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np
import torch
from PIL import Image

CHECKPOINT_MAGIC = b"NV360CKP"
CHECKPOINT_VERSION = 1
CONFIG_VERSION = 1

FRAME_PATTERN = "frame_%06d.png"


class ChecksumError(RuntimeError):
    """Checkpoint payload does not match its recorded digest."""


class VersionError(RuntimeError):
    """File was written by an incompatible format version."""


# ---------------------------------------------------------------------------
# video frames


@dataclass
class VideoDataset:
    """An ordered stack of equirect frames (N, 3, H, W), float32 in [0, 1]."""

    frames: torch.Tensor
    fps: float = 30.0
    source: str = ""

    def __post_init__(self) -> None:
        if self.frames.ndim != 4 or self.frames.shape[1] != 3:
            raise ValueError(f"frames must be (N, 3, H, W), got {tuple(self.frames.shape)}")

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def frame_size(self) -> tuple[int, int]:
        return int(self.frames.shape[2]), int(self.frames.shape[3])

    def __iter__(self) -> Iterator[torch.Tensor]:
        return iter(self.frames)


def _numeric_key(path: Path) -> int:
    digits = re.findall(r"\d+", path.stem)
    if not digits:
        raise ValueError(f"frame file {path.name} has no numeric index")
    return int(digits[-1])


def _check_divisible(h: int, w: int, stride_product: int, origin: str) -> None:
    if h % stride_product or w % stride_product:
        raise ValueError(
            f"{origin}: {h}x{w} not divisible by stride product {stride_product}"
        )


def load_video(path: str | Path, stride_product: int = 24) -> VideoDataset:
    """Load a PNG directory or a single Y4M file into a VideoDataset."""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.png"), key=_numeric_key)
        if not files:
            raise FileNotFoundError(f"no PNG frames in {path}")
        frames = []
        shape = None
        for f in files:
            with Image.open(f) as img:
                arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
            if shape is None:
                shape = arr.shape
            elif arr.shape != shape:
                raise ValueError(
                    f"frame {f.name} is {arr.shape[1]}x{arr.shape[0]}, "
                    f"expected {shape[1]}x{shape[0]}"
                )
            frames.append(torch.from_numpy(arr.astype(np.float32) / 255.0).permute(2, 0, 1))
        stacked = torch.stack(frames)
        _check_divisible(stacked.shape[2], stacked.shape[3], stride_product, str(path))
        return VideoDataset(stacked, fps=30.0, source=str(path))
    if path.suffix.lower() == ".y4m":
        return _load_y4m(path, stride_product)
    raise ValueError(f"unsupported video source {path} (need a PNG directory or .y4m)")


def save_video_png(video: VideoDataset, out_dir: str | Path) -> list[Path]:
    """Write frames as 8-bit PNGs readable by :func:`load_video`."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for t, frame in enumerate(video.frames):
        arr = (frame.clamp(0, 1) * 255.0).round().to(torch.uint8)
        img = Image.fromarray(arr.permute(1, 2, 0).numpy())
        p = out_dir / (FRAME_PATTERN % t)
        img.save(p)
        written.append(p)
    return written


def _load_y4m(path: Path, stride_product: int) -> VideoDataset:
    data = path.read_bytes()
    nl = data.index(b"\n")
    header = data[:nl].decode("ascii", errors="replace")
    if not header.startswith("YUV4MPEG2"):
        raise ValueError(f"{path}: not a Y4M file")
    width = height = 0
    fps = 30.0
    chroma = "420"
    for tag in header.split()[1:]:
        if tag[0] == "W":
            width = int(tag[1:])
        elif tag[0] == "H":
            height = int(tag[1:])
        elif tag[0] == "F":
            num, den = tag[1:].split(":")
            fps = int(num) / int(den)
        elif tag[0] == "C":
            chroma = tag[1:]
    if width <= 0 or height <= 0:
        raise ValueError(f"{path}: missing W/H in Y4M header")
    if chroma.startswith("444"):
        sub = 1
    elif chroma.startswith("420"):
        sub = 2
    else:
        raise ValueError(f"{path}: unsupported chroma mode C{chroma}")
    _check_divisible(height, width, stride_product, str(path))

    y_size = width * height
    c_size = (width // sub) * (height // sub)
    frames = []
    pos = nl + 1
    while pos < len(data):
        line_end = data.index(b"\n", pos)
        if not data[pos:line_end].startswith(b"FRAME"):
            raise ValueError(f"{path}: malformed frame marker at byte {pos}")
        pos = line_end + 1
        need = y_size + 2 * c_size
        if pos + need > len(data):
            raise ValueError(f"{path}: truncated frame payload")
        y = np.frombuffer(data, np.uint8, y_size, pos).reshape(height, width)
        u = np.frombuffer(data, np.uint8, c_size, pos + y_size).reshape(
            height // sub, width // sub
        )
        v = np.frombuffer(data, np.uint8, c_size, pos + y_size + c_size).reshape(
            height // sub, width // sub
        )
        pos += need
        if sub > 1:
            u = u.repeat(sub, axis=0).repeat(sub, axis=1)
            v = v.repeat(sub, axis=0).repeat(sub, axis=1)
        frames.append(_ycbcr_to_rgb(y, u, v))
    if not frames:
        raise ValueError(f"{path}: no frames")
    return VideoDataset(torch.stack(frames), fps=fps, source=str(path))


def _ycbcr_to_rgb(y: np.ndarray, cb: np.ndarray, cr: np.ndarray) -> torch.Tensor:
    # BT.601 limited range
    yf = (y.astype(np.float32) - 16.0) * (1.0 / 219.0)
    cbf = (cb.astype(np.float32) - 128.0) * (1.0 / 224.0)
    crf = (cr.astype(np.float32) - 128.0) * (1.0 / 224.0)
    r = yf + 1.402 * crf
    g = yf - 0.344136 * cbf - 0.714136 * crf
    b = yf + 1.772 * cbf
    rgb = np.stack([r, g, b]).clip(0.0, 1.0)
    return torch.from_numpy(rgb)


# ---------------------------------------------------------------------------
# trajectories


class TrajectoryEntry(NamedTuple):
    frame: int
    theta: float  # radians
    phi: float  # radians


@dataclass
class Trajectory:
    entries: list[TrajectoryEntry] = field(default_factory=list)

    def __post_init__(self) -> None:
        for prev, cur in zip(self.entries, self.entries[1:]):
            if cur.frame <= prev.frame:
                raise ValueError(
                    f"trajectory frames must be strictly increasing: "
                    f"{prev.frame} then {cur.frame}"
                )
        for e in self.entries:
            if not (math.isfinite(e.theta) and math.isfinite(e.phi)):
                raise ValueError(f"non-finite angles at frame {e.frame}")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[TrajectoryEntry]:
        return iter(self.entries)


TRAJECTORY_HEADER = ["frame", "theta_deg", "phi_deg"]


def load_trajectory(path: str | Path) -> Trajectory:
    """Parse a trajectory CSV; angles are degrees on disk, radians in memory."""
    import csv

    path = Path(path)
    entries = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty trajectory file") from None
        if [h.strip() for h in header] != TRAJECTORY_HEADER:
            raise ValueError(
                f"{path}: expected header {','.join(TRAJECTORY_HEADER)}, got {','.join(header)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            try:
                frame = int(row[0])
                theta = math.radians(float(row[1]))
                phi = math.radians(float(row[2]))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: unparseable row {row!r}") from exc
            entries.append(TrajectoryEntry(frame, theta, phi))
    try:
        return Trajectory(entries)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def save_trajectory(traj: Trajectory, path: str | Path) -> None:
    import csv

    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_HEADER)
        for e in traj.entries:
            writer.writerow([e.frame, repr(math.degrees(e.theta)), repr(math.degrees(e.phi))])


# ---------------------------------------------------------------------------
# configuration


def default_config() -> dict:
    """The shipped defaults; single source of truth for all hyperparameters."""
    return {
        "version": CONFIG_VERSION,
        "model": {
            "strides": [3, 2, 2, 2],
            "encoder_width": 64,
            "embed_channels": 1,
            "expanded_channels": None,
            "channel_reduction": 1.2,
            "param_target": 2_200_000,
            "pe_base": 1.25,
            "pe_levels": 80,
            "stat_view_inputs": True,
            "expand_before_extract": True,
        },
        "loss": {
            "spatial_weight": 60.0,
            "l1_fraction": 0.7,
            "fft_mode": "complex",
        },
        "train": {
            "epochs": 300,
            "batch_size": 1,
            "base_lr": 1.0e-4,
            "warmup_frac": 0.1,
            "seed": 0,
            "precision": "full",
            "checkpoint_every": 50,
        },
        "viewport": {
            "hfov_deg": 78.1,
            "height": 1080,
            "width": 1920,
        },
    }


def _deep_merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: str | Path) -> dict:
    """Read a config file, check its version, and fill unset keys with defaults."""
    raw = json.loads(Path(path).read_text())
    if "version" not in raw:
        raise VersionError(f"{path}: config missing required 'version' key")
    if raw["version"] != CONFIG_VERSION:
        raise VersionError(
            f"{path}: config version {raw['version']} unsupported (need {CONFIG_VERSION})"
        )
    return _deep_merge(default_config(), raw)


def save_config(cfg: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg, indent=2) + "\n")


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    """Everything needed to rebuild a trained model (and optionally resume)."""

    config: dict
    weights: dict[str, np.ndarray]
    opt_state: dict[str, np.ndarray] | None = None
    opt_meta: dict | None = None
    embeddings: np.ndarray | None = None
    version: int = CHECKPOINT_VERSION
    digest: str = ""


def _array_bytes(arr: np.ndarray) -> bytes:
    le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
    return np.ascontiguousarray(le).tobytes()


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> str:
    """Write the single-file container; returns the payload digest."""
    named: list[tuple[str, np.ndarray]] = []
    for key, arr in ckpt.weights.items():
        named.append((f"weights/{key}", arr))
    if ckpt.opt_state:
        for key, arr in ckpt.opt_state.items():
            named.append((f"opt/{key}", arr))
    if ckpt.embeddings is not None:
        named.append(("embeddings", ckpt.embeddings))

    manifest = []
    chunks = []
    offset = 0
    for name, arr in named:
        data = _array_bytes(np.asarray(arr))
        manifest.append(
            {
                "name": name,
                "dtype": np.asarray(arr).dtype.str.lstrip("<>=|"),
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(data),
            }
        )
        chunks.append(data)
        offset += len(data)
    payload = b"".join(chunks)
    digest = hashlib.sha256(payload).hexdigest()

    header = {
        "version": CHECKPOINT_VERSION,
        "config": ckpt.config,
        "arrays": manifest,
        "payload_sha256": digest,
        "opt_meta": ckpt.opt_meta,
    }
    header_bytes = json.dumps(header).encode()

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)
    return digest


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Read and verify a checkpoint container. Refuses corrupt or alien files."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 20 or blob[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (file_version,) = struct.unpack_from("<I", blob, 8)
    if file_version != CHECKPOINT_VERSION:
        raise VersionError(
            f"{path}: checkpoint version {file_version} unsupported "
            f"(this build reads version {CHECKPOINT_VERSION})"
        )
    (header_len,) = struct.unpack_from("<Q", blob, 12)
    header_end = 20 + header_len
    if header_end > len(blob):
        raise ChecksumError(f"{path}: truncated header")
    header = json.loads(blob[20:header_end].decode())

    payload = blob[header_end:]
    digest = hashlib.sha256(payload).hexdigest()
    if digest != header["payload_sha256"]:
        raise ChecksumError(f"{path}: payload digest mismatch, file is corrupt")

    weights: dict[str, np.ndarray] = {}
    opt_state: dict[str, np.ndarray] = {}
    embeddings = None
    for entry in header["arrays"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        arr = np.frombuffer(payload, dtype="<" + entry["dtype"], count=-1, offset=start)
        arr = arr[: np.prod(entry["shape"], dtype=int) if entry["shape"] else 1]
        arr = arr.reshape(entry["shape"]).copy()
        name = entry["name"]
        if name.startswith("weights/"):
            weights[name[len("weights/"):]] = arr
        elif name.startswith("opt/"):
            opt_state[name[len("opt/"):]] = arr
        elif name == "embeddings":
            embeddings = arr
    return Checkpoint(
        config=header["config"],
        weights=weights,
        opt_state=opt_state or None,
        opt_meta=header.get("opt_meta"),
        embeddings=embeddings,
        version=file_version,
        digest=digest,
    )


# ---------------------------------------------------------------------------
# training log


class TrainLogWriter:
    """Line-delimited JSON, one record per epoch, flushed eagerly."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("a")

    def write(self, record: dict) -> None:
        self._fh.write(json.dumps(record) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "TrainLogWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_train_log(path: str | Path) -> list[dict]:
    records = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            records.append(json.loads(line))
    return records
