"""Lightweight classifier choosing a sampling policy per grounded window.

Features are deliberately detached from the consolidation stack: a
bag-of-words question embedding plus three window statistics (normalized
length, per-frame intensity variance over the window, anchor offset
ratio).  A two-layer head maps them to logits over the four policies;
training adds a cross-entropy term against oracle policy labels.
"""

from __future__ import annotations

import math

import numpy as np

from . import nd
from .errors import FeatureError
from .grounding import TemporalWindow
from .nd import GradTape, Tensor
from .policies import POLICY_KINDS, SamplingPolicy, policy_from_index
from .video import VideoTensor


class PolicyInstructor:
    N_POLICIES = len(POLICY_KINDS)

    def __init__(self, vocab_size: int, tape: GradTape, rng: np.random.Generator,
                 embed_dim: int = 16, hidden: int = 32, prefix: str = "instructor"):
        self.embed_dim = embed_dim
        in_dim = embed_dim + 3
        self.emb = tape.parameter(f"{prefix}.emb", rng.normal(
            0.0, 1.0 / math.sqrt(embed_dim), size=(vocab_size, embed_dim)))
        self.w1 = tape.parameter(f"{prefix}.w1", rng.normal(
            0.0, 1.0 / math.sqrt(in_dim), size=(in_dim, hidden)))
        self.b1 = tape.parameter(f"{prefix}.b1", np.zeros(hidden))
        self.w2 = tape.parameter(f"{prefix}.w2", rng.normal(
            0.0, 1.0 / math.sqrt(hidden), size=(hidden, self.N_POLICIES)))
        self.b2 = tape.parameter(f"{prefix}.b2", np.zeros(self.N_POLICIES))

    @staticmethod
    def window_stats(window: TemporalWindow, video: VideoTensor) -> np.ndarray:
        total = video.frames
        frames = video.data[:, window.lo - 1:window.hi].mean(axis=(0, 2, 3))
        variance = float(frames.var()) if frames.size > 1 else 0.0
        return np.array([window.length / total, variance, window.anchor / total])

    def logits(self, window: TemporalWindow, question_ids: list[int],
               video: VideoTensor, tape: GradTape | None = None) -> Tensor:
        if not question_ids:
            raise FeatureError("question produced no tokens")
        bow = nd.mean_rows(nd.gather_rows(self.emb, question_ids, tape), tape)
        x = nd.reshape(nd.concat([bow, Tensor(self.window_stats(window, video))],
                                 tape), (1, self.embed_dim + 3), tape)
        h = nd.silu(nd.linear(x, self.w1, self.b1, tape), tape)
        return nd.linear(h, self.w2, self.b2, tape)

    def instruct(self, window: TemporalWindow, question_ids: list[int],
                 video: VideoTensor, label: int | None = None,
                 tape: GradTape | None = None):
        """Pick a policy; with a label, also return the cross-entropy term.

        Returns (policy, probability vector over the K policies, loss or None).
        """
        logits = self.logits(window, question_ids, video, tape)
        flat = nd.reshape(logits, (self.N_POLICIES,), tape)
        probs = nd.softmax(Tensor(flat.data.copy())).data
        policy = policy_from_index(int(np.argmax(probs)))
        loss = None
        if label is not None:
            loss = nd.softmax_cross_entropy(flat, label, tape)
        return policy, probs, loss


def oracle_policy(kind: str) -> SamplingPolicy:
    return SamplingPolicy(kind)
