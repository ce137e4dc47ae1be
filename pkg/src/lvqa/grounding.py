"""Query grounding: anchors, temporal windows, and the learned unit scorer.

Oracle modes read (optionally jittered) ground-truth intervals straight
from the QA instance.  Learned mode scores each temporal unit by the dot
product between a trained question embedding and the unit's mean visual
token, keeps the top units, merges adjacent ones, and recovers their frame
extents by reading the interleaved timestamp tokens back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nd
from .consolidation import InterleavedSequence, parse_timestamps
from .errors import ConfigError, UntrainedGrounderError
from .nd import GradTape, Tensor
from .tokenizer import Tokenizer

GROUNDER_MODES = ("oracle", "noisy_oracle", "learned")


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def interval_center(lo: int, hi: int) -> int:
    return _round_half_up((lo + hi) / 2)


@dataclass
class GroundingResult:
    anchors: list[int]
    intervals: list[tuple[int, int]]
    source: str


@dataclass(frozen=True)
class TemporalWindow:
    """Inclusive frame interval around an anchor, clamped to the video."""

    lo: int
    hi: int
    anchor: int
    half_width: int

    @property
    def length(self) -> int:
        return self.hi - self.lo + 1


def build_windows(anchors: list[int], w: int, total_frames: int) -> list[TemporalWindow]:
    """Clamped per-anchor windows, merged when they overlap or touch.

    A merged window is re-anchored at the centre of the merged span.
    """
    if w < 0:
        raise ConfigError(f"half-width {w} < 0")
    if not anchors:
        return []
    spans: list[list] = []
    for mu in sorted(anchors):
        if not 1 <= mu <= total_frames:
            raise ConfigError(f"anchor {mu} outside [1, {total_frames}]")
        lo, hi = max(1, mu - w), min(total_frames, mu + w)
        if spans and lo <= spans[-1][1] + 1:
            spans[-1][1] = max(spans[-1][1], hi)
            spans[-1][2].append(mu)
        else:
            spans.append([lo, hi, [mu]])
    out = []
    for lo, hi, mus in spans:
        anchor = mus[0] if len(mus) == 1 else interval_center(lo, hi)
        out.append(TemporalWindow(lo=lo, hi=hi, anchor=anchor,
                                  half_width=max(anchor - lo, hi - anchor)))
    return out


class UnitScorer:
    """Trainable question-embedding table scoring temporal units."""

    def __init__(self, vocab_size: int, embed_dim: int, rng: np.random.Generator):
        self.tape = GradTape()
        self.table = self.tape.parameter("grounder.qemb", rng.normal(
            0.0, 1.0 / math.sqrt(embed_dim), size=(vocab_size, embed_dim)))
        self.trained = False

    def scores(self, unit_means: np.ndarray, question_ids: list[int]) -> np.ndarray:
        eq = self.table.data[question_ids].mean(axis=0)
        return unit_means @ eq

    def fit(self, examples: list[tuple[np.ndarray, list[int], np.ndarray]],
            steps: int = 300, lr: float = 5e-2) -> float:
        """Least-squares fit of unit scores to +/-1 relevance targets.

        ``examples`` holds (unit mean tokens, question ids, unit targets).
        Returns the final mean loss per example.
        """
        opt = nd.AdamW(self.tape, lr=lr, weight_decay=0.0)
        last = 0.0
        for step in range(steps):
            self.tape.zero_grad()
            total = 0.0
            for unit_means, qids, targets in examples:
                eq = nd.mean_rows(nd.gather_rows(self.table, qids, self.tape), self.tape)
                scores = nd.matmul(Tensor(unit_means),
                                   nd.reshape(eq, (eq.size, 1), self.tape), self.tape)
                loss = nd.mse(scores, Tensor(targets.reshape(-1, 1)), self.tape)
                self.tape.backward(loss)
                total += loss.item()
            opt.step()
            last = total / max(len(examples), 1)
        self.trained = True
        return last


def _units_to_intervals(selected: list[int], parsed: list[tuple[int, int]],
                        patch_t: int, fps: float,
                        total_frames: int) -> list[tuple[int, int]]:
    """Merge adjacent selected units and map them to 1-based frame spans."""
    runs: list[list[int]] = []
    for u in sorted(selected):
        if runs and u == runs[-1][-1] + 1:
            runs[-1].append(u)
        else:
            runs.append([u])
    seconds = {unit: sec for unit, sec in parsed}
    out = []
    for run in runs:
        start = int(seconds[run[0] + 1] * fps) + 1
        end = min(int(seconds[run[-1] + 1] * fps) + patch_t, total_frames)
        out.append((min(start, total_frames), end))
    return out


def ground_query(seq: InterleavedSequence, qa, mode: str,
                 rng: np.random.Generator, vocab: Tokenizer,
                 total_frames: int, delta: int = 4,
                 scorer: UnitScorer | None = None,
                 top_units: int = 3) -> GroundingResult:
    """Produce interval anchors for one question under the given mode."""
    if mode not in GROUNDER_MODES:
        raise ConfigError(f"unknown grounder mode {mode!r}")
    if mode in ("oracle", "noisy_oracle"):
        intervals = []
        for lo, hi in qa.intervals:
            if mode == "noisy_oracle":
                lo = lo + int(rng.integers(-delta, delta + 1))
                hi = hi + int(rng.integers(-delta, delta + 1))
                lo = min(max(lo, 1), total_frames)
                hi = min(max(hi, 1), total_frames)
                if lo > hi:
                    lo, hi = hi, lo
            intervals.append((lo, hi))
        anchors = [interval_center(lo, hi) for lo, hi in intervals]
        return GroundingResult(anchors=anchors, intervals=intervals, source=mode)

    if scorer is None or not scorer.trained:
        raise UntrainedGrounderError("learned grounding requires a trained unit scorer")
    question_ids = vocab.encode(qa.question)
    unit_means = seq.visual_tokens.data.mean(axis=1)
    scores = scorer.scores(unit_means, question_ids)
    k = min(top_units, len(scores))
    selected = np.argsort(-scores, kind="stable")[:k].tolist()
    parsed = parse_timestamps(seq, vocab)
    intervals = _units_to_intervals(selected, parsed, seq.patch_t, seq.fps,
                                    total_frames)
    anchors = [interval_center(lo, hi) for lo, hi in intervals]
    return GroundingResult(anchors=anchors, intervals=intervals, source="learned")
