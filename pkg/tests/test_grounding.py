import numpy as np
import pytest

from lvqa.consolidation import ConvStack, FtcConfig, interleave_timestamps, partition_blocks
from lvqa.errors import UntrainedGrounderError
from lvqa.grounding import UnitScorer, ground_query, interval_center
from lvqa.nd import GradTape
from lvqa.tokenizer import Tokenizer
from lvqa.video import VideoTensor


class FakeQA:
    def __init__(self, intervals, question="when does the fluid event happen"):
        self.intervals = intervals
        self.question = question


VOCAB = Tokenizer(["when", "does", "the", "fluid", "event", "happen"])
RNG0 = np.random.default_rng(0)


def dummy_seq(n_units=8):
    from lvqa.consolidation import ConsolidatedRep
    from lvqa.nd import Tensor
    rep = ConsolidatedRep(tokens=Tensor(np.zeros((n_units, 2, 4))),
                          z1=Tensor(np.zeros((n_units * 2, 4))),
                          unit_start_frames=[i * 2 for i in range(n_units)],
                          unit_times=[i * 0.5 for i in range(n_units)],
                          patch_t=2, fps=4.0)
    return interleave_timestamps(rep, 4.0, VOCAB)


def test_oracle_returns_interval_midpoints():
    res = ground_query(dummy_seq(), FakeQA([(40, 60)]), "oracle",
                       np.random.default_rng(0), VOCAB, total_frames=100)
    assert res.anchors == [50]
    assert res.intervals == [(40, 60)]
    assert res.source == "oracle"


def test_noisy_oracle_with_zero_delta_matches_oracle():
    qa = FakeQA([(10, 20), (50, 64)])
    a = ground_query(dummy_seq(), qa, "oracle", np.random.default_rng(1),
                     VOCAB, total_frames=100)
    b = ground_query(dummy_seq(), qa, "noisy_oracle", np.random.default_rng(1),
                     VOCAB, total_frames=100, delta=0)
    assert a.anchors == b.anchors
    assert a.intervals == b.intervals


def test_noisy_oracle_stays_in_bounds():
    qa = FakeQA([(1, 4), (95, 100)])
    for seed in range(30):
        res = ground_query(dummy_seq(), qa, "noisy_oracle",
                           np.random.default_rng(seed), VOCAB,
                           total_frames=100, delta=6)
        for lo, hi in res.intervals:
            assert 1 <= lo <= hi <= 100


def test_learned_mode_requires_trained_scorer():
    with pytest.raises(UntrainedGrounderError):
        ground_query(dummy_seq(), FakeQA([(1, 2)]), "learned",
                     np.random.default_rng(0), VOCAB, total_frames=16)
    scorer = UnitScorer(len(VOCAB), 4, np.random.default_rng(0))
    with pytest.raises(UntrainedGrounderError):
        ground_query(dummy_seq(), FakeQA([(1, 2)]), "learned",
                     np.random.default_rng(0), VOCAB, total_frames=16,
                     scorer=scorer)


def _event_episode(rng, t=64, amp=2.0, length=6):
    """Video with one elevated-channel event; returns (video, lo, hi)."""
    data = rng.normal(0.0, 0.05, size=(3, t, 16, 16))
    lo = int(rng.integers(1, t - length + 1))
    hi = lo + length - 1
    data[1, lo - 1:hi] += amp
    return VideoTensor(data, 4.0), lo, hi


def _encode(stack, cfg, video):
    grid = partition_blocks(video, cfg)
    rep = stack.consolidate(grid)
    return rep, interleave_timestamps(rep, video.fps, VOCAB)


def test_learned_grounding_hits_event_centers():
    cfg = FtcConfig(patch_t=2, patch_s=8, layers=2, channels=(8, 8), embed_dim=8)
    stack = ConvStack(cfg, 3, GradTape(), np.random.default_rng(7))
    scorer = UnitScorer(len(VOCAB), cfg.embed_dim, np.random.default_rng(8))
    qids = VOCAB.encode("when does the fluid event happen")

    train_rng = np.random.default_rng(100)
    examples = []
    for _ in range(30):
        video, lo, hi = _event_episode(train_rng)
        rep, seq = _encode(stack, cfg, video)
        means = seq.visual_tokens.data.mean(axis=1)
        targets = np.full(rep.n_units, -1.0)
        for u in range(rep.n_units):
            ulo, uhi = u * cfg.patch_t + 1, (u + 1) * cfg.patch_t
            if not (uhi < lo or ulo > hi):
                targets[u] = 1.0
        examples.append((means, qids, targets))
    scorer.fit(examples, steps=150, lr=5e-2)

    hits = 0
    w = 8
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        video, lo, hi = _event_episode(rng)
        _, seq = _encode(stack, cfg, video)
        res = ground_query(seq, FakeQA([(lo, hi)]), "learned",
                           np.random.default_rng(0), VOCAB,
                           total_frames=video.frames, scorer=scorer, top_units=3)
        true_center = interval_center(lo, hi)
        if any(abs(a - true_center) <= w for a in res.anchors):
            hits += 1
    assert hits >= 90
