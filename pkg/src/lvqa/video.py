"""Raw video tensors and the planar binary frame format.

Frame files carry a header of four little-endian u32 (T, C, H, W) plus one
little-endian f32 (fps), followed by the frames as little-endian 32-bit
floats in (T, C, H, W) order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError


@dataclass
class VideoTensor:
    """Frame sequence shaped (C, T, H, W) with its frame rate."""

    data: np.ndarray
    fps: float

    def __post_init__(self):
        if self.data.ndim != 4:
            raise ConfigError(f"video must be 4-D (C,T,H,W), got {self.data.shape}")
        if self.fps <= 0:
            raise ConfigError(f"fps must be positive, got {self.fps}")
        self.data = np.asarray(self.data, dtype=np.float64)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def frames(self) -> int:
        return self.data.shape[1]

    def select_frames(self, indices) -> "VideoTensor":
        """New video from 1-based frame indices, preserving fps."""
        idx = np.asarray(indices, dtype=np.intp) - 1
        return VideoTensor(self.data[:, idx], self.fps)


def write_frames(path, video: VideoTensor) -> None:
    c, t, h, w = video.data.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<IIIIf", t, c, h, w, video.fps))
        f.write(video.data.transpose(1, 0, 2, 3).astype("<f4").tobytes())


def read_frames(path) -> VideoTensor:
    blob = Path(path).read_bytes()
    t, c, h, w, fps = struct.unpack_from("<IIIIf", blob, 0)
    n = t * c * h * w
    arr = np.frombuffer(blob, dtype="<f4", count=n, offset=20)
    if arr.size != n:
        raise ConfigError(f"{path}: expected {n} values")
    data = arr.astype(np.float64).reshape(t, c, h, w).transpose(1, 0, 2, 3)
    return VideoTensor(data, float(fps))


def truncate_to_divisible(video: VideoTensor, patch_t: int, patch_s: int) -> VideoTensor:
    """Trim trailing frames/pixels so every extent divides its patch size.

    Explicit truncation instead of implicit padding keeps timestamp
    arithmetic exact.
    """
    c, t, h, w = video.data.shape
    t2 = (t // patch_t) * patch_t
    h2 = (h // patch_s) * patch_s
    w2 = (w // patch_s) * patch_s
    if t2 == 0 or h2 == 0 or w2 == 0:
        raise ConfigError(f"video {video.data.shape} smaller than one patch")
    if (t2, h2, w2) == (t, h, w):
        return video
    return VideoTensor(video.data[:, :t2, :h2, :w2], video.fps)
