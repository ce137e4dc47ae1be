"""Deterministic frame-sampling policies and budgeted window resampling.

Policies place frames by inverse-CDF quantiles instead of drawing random
samples, so a (window, budget) pair always maps to the same indices:

* uniform  - evenly spaced across the window, round half up;
* gaussian - quantiles of N(anchor, w/2), collisions pushed to the nearest
  unused frame;
* dense    - one contiguous run centred on the anchor;
* ushape   - quantiles of a density rising quadratically toward the window
  edges with a small floor, collisions resolved as for gaussian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .errors import BudgetError, ConfigError
from .grounding import TemporalWindow

POLICY_KINDS = ("gaussian", "uniform", "dense", "ushape")


@dataclass(frozen=True)
class SamplingPolicy:
    kind: str
    sigma_ratio: float = 0.5     # gaussian: sigma = sigma_ratio * half width
    edge_exponent: float = 2.0   # ushape rise
    edge_floor: float = 0.05     # ushape density floor

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ConfigError(f"unknown policy kind {self.kind!r}")

    @property
    def index(self) -> int:
        return POLICY_KINDS.index(self.kind)


def policy_from_index(index: int, **kw) -> SamplingPolicy:
    return SamplingPolicy(POLICY_KINDS[index], **kw)


@dataclass
class ResampledSequence:
    """Query-adaptive frame selection (sorted, unique, 1-based indices)."""

    frame_indices: list[int]
    provenance: list[tuple[int, str]]   # (window id, policy kind) per window
    k_total: int


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def _dedup_toward_unused(candidates: list[int], lo: int, hi: int) -> list[int]:
    used: set[int] = set()
    for c in candidates:
        if c not in used:
            used.add(c)
            continue
        for d in range(1, hi - lo + 1):
            if c - d >= lo and c - d not in used:
                used.add(c - d)
                break
            if c + d <= hi and c + d not in used:
                used.add(c + d)
                break
    return sorted(used)


def sample_policy_frames(window: TemporalWindow, policy: SamplingPolicy,
                         k: int) -> list[int]:
    """Exactly min(k, window length) unique frame indices inside the window."""
    if k < 1:
        raise BudgetError(f"budget {k} < 1")
    lo, hi, mu = window.lo, window.hi, window.anchor
    length = hi - lo + 1
    n = min(k, length)
    if n == length:
        return list(range(lo, hi + 1))
    if n == 1:
        return [min(max(mu, lo), hi)]

    if policy.kind == "uniform":
        step = (length - 1) / (n - 1)
        return sorted({lo + _round_half_up(j * step) for j in range(n)})

    if policy.kind == "dense":
        start = mu - (n - 1) // 2
        start = min(max(start, lo), hi - n + 1)
        return list(range(start, start + n))

    if policy.kind == "gaussian":
        sigma = policy.sigma_ratio * max(window.half_width, 1)
        dist = NormalDist(mu, sigma)
        raw = [min(max(_round_half_up(dist.inv_cdf((j + 0.5) / n)), lo), hi)
               for j in range(n)]
        return _dedup_toward_unused(raw, lo, hi)

    # ushape: discrete quantiles of the edge-rising density
    w = max(window.half_width, 1)
    frames = np.arange(lo, hi + 1)
    density = (np.abs(frames - mu) / w) ** policy.edge_exponent + policy.edge_floor
    cum = np.cumsum(density)
    targets = (np.arange(n) + 0.5) / n * cum[-1]
    raw = [int(frames[np.searchsorted(cum, t)]) for t in targets]
    return _dedup_toward_unused(raw, lo, hi)


def allocate_budget(lengths: list[int], k_total: int) -> list[int]:
    """Largest-remainder split of k_total proportional to window lengths.

    Every window receives at least one frame; k_total must cover that.
    """
    n = len(lengths)
    if k_total < n:
        raise BudgetError(f"budget {k_total} below window count {n}")
    total = sum(lengths)
    quotas = [k_total * l / total for l in lengths]
    base = [math.floor(q) for q in quotas]
    remainder = k_total - sum(base)
    order = sorted(range(n), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order[:remainder]:
        base[i] += 1
    while any(b == 0 for b in base):
        taker = base.index(0)
        donor = max(range(n), key=lambda i: (base[i], -i))
        base[donor] -= 1
        base[taker] += 1
    return base


def resample(total_frames: int, windows: list[TemporalWindow],
             policies: list[SamplingPolicy], k_total: int) -> ResampledSequence:
    """Budgeted multi-window resampling; no windows means global uniform."""
    if k_total < 1:
        raise BudgetError(f"budget {k_total} < 1")
    if not windows:
        full = TemporalWindow(lo=1, hi=total_frames,
                              anchor=_round_half_up((1 + total_frames) / 2),
                              half_width=(total_frames - 1) // 2)
        indices = sample_policy_frames(full, SamplingPolicy("uniform"), k_total)
        return ResampledSequence(indices, [], k_total)
    if len(policies) != len(windows):
        raise ConfigError(f"{len(policies)} policies for {len(windows)} windows")
    budgets = allocate_budget([w.length for w in windows], k_total)
    chosen: set[int] = set()
    provenance = []
    for wid, (window, policy, k) in enumerate(zip(windows, policies, budgets)):
        chosen.update(sample_policy_frames(window, policy, k))
        provenance.append((wid, policy.kind))
    return ResampledSequence(sorted(chosen), provenance, k_total)
