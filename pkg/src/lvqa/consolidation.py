"""Temporal token consolidation: block partition, conv stack, timestamps.

A video (C,T,H,W) is cut into non-overlapping blocks of p_t frames by
p_s x p_s pixels, giving N = (T/p_t)(H/p_s)(W/p_s) blocks in temporal-major,
then row-major spatial order.  Layer 1 of the stack is a conv whose kernel
and stride equal the block extents (a blockwise embedding of the raw
frames); later layers are 1x1x1 token-mixing convs, so the token count is
preserved.  The post-activation output of layer 1 is retained as the
retrieval target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nd
from .errors import (ConfigError, EmptySequenceError, NonDivisibleError,
                     ParseError)
from .nd import GradTape, Tensor
from .tokenizer import Tokenizer
from .video import VideoTensor


@dataclass(frozen=True)
class FtcConfig:
    """Consolidation hyperparameters.

    ``mask_fraction`` may be zero (masking disabled, retrieval loss
    degenerates to 0) but never one.
    """

    patch_t: int = 2
    patch_s: int = 8
    layers: int = 2
    channels: tuple[int, ...] = (32, 32)
    embed_dim: int = 32
    mask_fraction: float = 0.3
    sample_fraction: float = 0.25

    def __post_init__(self):
        if self.patch_t < 1 or self.patch_s < 1:
            raise ConfigError("patch sizes must be >= 1")
        if self.layers < 1:
            raise ConfigError("need at least one conv layer")
        if len(self.channels) != self.layers:
            raise ConfigError(
                f"channels {self.channels} does not match layer count {self.layers}")
        if self.channels[-1] != self.embed_dim:
            raise ConfigError("last channel width must equal embed_dim")
        if not 0.0 <= self.mask_fraction < 1.0:
            raise ConfigError("mask_fraction must lie in [0, 1)")
        if not 0.0 < self.sample_fraction <= 1.0:
            raise ConfigError("sample_fraction must lie in (0, 1]")


@dataclass
class BlockGrid:
    """Blocked view of one video: (N, C, p_t, p_s, p_s) plus grid extents."""

    blocks: np.ndarray
    n_temporal: int
    n_h: int
    n_w: int
    patch_t: int
    patch_s: int
    fps: float

    @property
    def n_spatial(self) -> int:
        return self.n_h * self.n_w

    @property
    def n_blocks(self) -> int:
        return self.n_temporal * self.n_spatial


def partition_blocks(video: VideoTensor, cfg: FtcConfig) -> BlockGrid:
    """Cut a video into non-overlapping 3-D blocks.

    Extents must divide exactly; use ``truncate_to_divisible`` first if
    they do not (no implicit padding).
    """
    c, t, h, w = video.data.shape
    pt, ps = cfg.patch_t, cfg.patch_s
    if t % pt:
        raise NonDivisibleError("temporal", t, pt)
    if h % ps:
        raise NonDivisibleError("height", h, ps)
    if w % ps:
        raise NonDivisibleError("width", w, ps)
    nt, nh, nw = t // pt, h // ps, w // ps
    blocks = (video.data
              .reshape(c, nt, pt, nh, ps, nw, ps)
              .transpose(1, 3, 5, 0, 2, 4, 6)
              .reshape(nt * nh * nw, c, pt, ps, ps))
    return BlockGrid(blocks, n_temporal=nt, n_h=nh, n_w=nw,
                     patch_t=pt, patch_s=ps, fps=video.fps)


def _recompose(grid: BlockGrid, channels: int) -> np.ndarray:
    """Exact inverse of the partition reshape (back to C,T,H,W)."""
    nt, nh, nw = grid.n_temporal, grid.n_h, grid.n_w
    pt, ps = grid.patch_t, grid.patch_s
    return (grid.blocks
            .reshape(nt, nh, nw, channels, pt, ps, ps)
            .transpose(3, 0, 4, 1, 5, 2, 6)
            .reshape(channels, nt * pt, nh * ps, nw * ps))


@dataclass
class ConsolidatedRep:
    """Per-unit visual tokens plus the retained layer-1 targets."""

    tokens: Tensor              # (n_units, n_spatial, embed_dim)
    z1: Tensor                  # (N, channels[0]) post-activation layer-1 tokens
    unit_start_frames: list[int]  # 0-based first source frame of each unit
    unit_times: list[float]       # start time of each unit in seconds
    patch_t: int
    fps: float

    @property
    def n_units(self) -> int:
        return self.tokens.shape[0]

    @property
    def n_spatial(self) -> int:
        return self.tokens.shape[1]


class ConvStack:
    """The consolidation stack: blockwise embedding plus 1x1x1 mixing layers."""

    def __init__(self, cfg: FtcConfig, in_channels: int, tape: GradTape,
                 rng: np.random.Generator, prefix: str = "conv"):
        self.cfg = cfg
        self.in_channels = in_channels
        self.kernels: list[Tensor] = []
        self.biases: list[Tensor] = []
        prev = in_channels
        for layer, width in enumerate(cfg.channels):
            if layer == 0:
                shape = (width, prev, cfg.patch_t, cfg.patch_s, cfg.patch_s)
            else:
                shape = (width, prev, 1, 1, 1)
            fan_in = prev * shape[2] * shape[3] * shape[4]
            init = rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=shape)
            self.kernels.append(tape.parameter(f"{prefix}.k{layer}", init))
            self.biases.append(tape.parameter(f"{prefix}.b{layer}", np.zeros(width)))
            prev = width

    def consolidate(self, grid: BlockGrid, tape: GradTape | None = None,
                    unit_start_frames: list[int] | None = None) -> ConsolidatedRep:
        """Run the stack over a block grid.

        ``unit_start_frames`` overrides the source frame of each temporal
        unit; resampled sequences pass the original frame indices so that
        timestamps keep referring to the source video.
        """
        cfg = self.cfg
        video = Tensor(_recompose(grid, self.in_channels))
        h = nd.silu(nd.conv3d(video, self.kernels[0], self.biases[0],
                              stride=(cfg.patch_t, cfg.patch_s, cfg.patch_s),
                              tape=tape), tape)
        nt, nh, nw = h.shape[1], h.shape[2], h.shape[3]
        z1 = nd.reshape(nd.permute(h, (1, 2, 3, 0), tape),
                        (nt * nh * nw, cfg.channels[0]), tape)
        for layer in range(1, cfg.layers):
            h = nd.silu(nd.conv3d(h, self.kernels[layer], self.biases[layer],
                                  tape=tape), tape)
        tokens = nd.reshape(nd.permute(h, (1, 2, 3, 0), tape),
                            (nt, nh * nw, cfg.embed_dim), tape)
        if unit_start_frames is None:
            unit_start_frames = [i * cfg.patch_t for i in range(nt)]
        if len(unit_start_frames) != nt:
            raise ConfigError(f"{len(unit_start_frames)} start frames for {nt} units")
        times = [f / grid.fps for f in unit_start_frames]
        return ConsolidatedRep(tokens=tokens, z1=z1,
                               unit_start_frames=list(unit_start_frames),
                               unit_times=times, patch_t=cfg.patch_t, fps=grid.fps)


@dataclass
class InterleavedSequence:
    """Alternating timestamp token groups and per-unit visual tokens."""

    token_ids: list[int]
    tags: list[str]             # "timestamp" | "visual", parallel to token_ids
    visual_tokens: Tensor       # (n_units, n_spatial, embed_dim)
    unit_spans: list[tuple[int, int]]  # token index range of each unit
    unit_start_frames: list[int]
    patch_t: int
    fps: float

    @property
    def n_units(self) -> int:
        return len(self.unit_spans)

    def __len__(self) -> int:
        return len(self.token_ids)


def _unit_seconds(start_frame: int, fps: float) -> int:
    if fps == int(fps):
        return start_frame // int(fps)
    return math.floor(start_frame / fps)


def interleave_timestamps(rep: ConsolidatedRep, fps: float,
                          vocab: Tokenizer) -> InterleavedSequence:
    """Build [T_1; V_1; ...; T_n; V_n] with "timestamp: {t} seconds" groups.

    Unit i (1-based) renders t_i = floor(first source frame / fps), i.e.
    floor((i-1) * p_t / fps) for a contiguous video.
    """
    if fps <= 0:
        raise ConfigError(f"fps must be positive, got {fps}")
    if rep.n_units == 0:
        raise EmptySequenceError("cannot interleave a representation with zero units")
    ids: list[int] = []
    tags: list[str] = []
    spans: list[tuple[int, int]] = []
    for i in range(rep.n_units):
        start = len(ids)
        seconds = _unit_seconds(rep.unit_start_frames[i], fps)
        stamp = vocab.encode(f"timestamp: {seconds} seconds")
        ids.extend(stamp)
        tags.extend(["timestamp"] * len(stamp))
        ids.extend([vocab.vis_id] * rep.n_spatial)
        tags.extend(["visual"] * rep.n_spatial)
        spans.append((start, len(ids)))
    return InterleavedSequence(token_ids=ids, tags=tags, visual_tokens=rep.tokens,
                               unit_spans=spans,
                               unit_start_frames=list(rep.unit_start_frames),
                               patch_t=rep.patch_t, fps=fps)


def parse_timestamps(seq: InterleavedSequence, vocab: Tokenizer) -> list[tuple[int, int]]:
    """Read back (unit index, seconds) pairs from the timestamp tokens.

    Seconds must be non-decreasing; repeated values are legal because
    integer rendering can coarsen sub-second units.
    """
    stamp_id = vocab.id_of("timestamp:")
    seconds_id = vocab.id_of("seconds")
    out: list[tuple[int, int]] = []
    i = 0
    unit = 0
    prev = None
    n = len(seq.token_ids)
    while i < n:
        if seq.token_ids[i] != stamp_id:
            raise ParseError("expected timestamp group", token_index=i)
        i += 1
        digits = []
        while i < n and vocab.is_digit_id(seq.token_ids[i]):
            digits.append(vocab.decode([seq.token_ids[i]]))
            i += 1
        if not digits:
            raise ParseError("timestamp group has no digits", token_index=i)
        if i >= n or seq.token_ids[i] != seconds_id:
            raise ParseError("timestamp group missing 'seconds'", token_index=i)
        i += 1
        value = int("".join(digits))
        if prev is not None and value < prev:
            raise ParseError(f"non-monotonic timestamp {value} after {prev}",
                             token_index=i - 1)
        prev = value
        unit += 1
        out.append((unit, value))
        while i < n and seq.tags[i] == "visual":
            i += 1
    if not out:
        raise ParseError("sequence contains no timestamp groups", token_index=0)
    return out
