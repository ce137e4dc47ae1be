"""Masked-unit retrieval loss preserving pre-compression fidelity.

A fraction of temporal units is zeroed in the consolidated representation;
a lightweight per-token head (linear expansion, SiLU, linear) then predicts
layer-1 tokens at indices sampled only inside the masked units, so the
prediction can never copy its own unmasked input.  The loss is the summed
squared error over the sampled indices and is differentiable with respect
to both the head and the consolidation stack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nd
from .consolidation import ConsolidatedRep, FtcConfig
from .nd import GradTape, Tensor


class RetrievalHead:
    """Per-token predictor g(.) mapping compressed tokens back to layer-1 tokens.

    The hidden width is p_t times the target width, mirroring the number of
    source frames folded into each temporal unit.
    """

    def __init__(self, cfg: FtcConfig, tape: GradTape, rng: np.random.Generator,
                 prefix: str = "retriever"):
        target_dim = cfg.channels[0]
        hidden = cfg.patch_t * target_dim
        self.w1 = tape.parameter(f"{prefix}.w1", rng.normal(
            0.0, 1.0 / math.sqrt(cfg.embed_dim), size=(cfg.embed_dim, hidden)))
        self.b1 = tape.parameter(f"{prefix}.b1", np.zeros(hidden))
        self.w2 = tape.parameter(f"{prefix}.w2", rng.normal(
            0.0, 1.0 / math.sqrt(hidden), size=(hidden, target_dim)))
        self.b2 = tape.parameter(f"{prefix}.b2", np.zeros(target_dim))

    def forward(self, tokens: Tensor, tape: GradTape | None = None) -> Tensor:
        h = nd.silu(nd.linear(tokens, self.w1, self.b1, tape), tape)
        return nd.linear(h, self.w2, self.b2, tape)


@dataclass
class RetrievalResult:
    loss: Tensor
    sampled_indices: np.ndarray   # indices into the flat (N,) token order
    masked_units: np.ndarray      # temporal units whose tokens were zeroed

    @property
    def empty(self) -> bool:
        return self.sampled_indices.size == 0


def retrieval_loss(rep: ConsolidatedRep, head: RetrievalHead, cfg: FtcConfig,
                   rng: np.random.Generator,
                   tape: GradTape | None = None) -> RetrievalResult:
    """Sampled reconstruction error of layer-1 tokens under unit masking.

    Masking operates on whole temporal units (all spatial tokens of a
    masked unit are zeroed) and the sampled index set is restricted to
    masked units.  An empty sample set is a valid degenerate batch and
    yields a zero loss.
    """
    n_units, n_spatial = rep.tokens.shape[0], rep.tokens.shape[1]
    n_masked = math.ceil(cfg.mask_fraction * n_units)
    if n_masked == 0:
        return RetrievalResult(Tensor(np.zeros(())),
                               np.empty(0, dtype=np.intp), np.empty(0, dtype=np.intp))
    masked_units = np.sort(rng.choice(n_units, size=n_masked, replace=False))
    allowed = (masked_units[:, None] * n_spatial + np.arange(n_spatial)).reshape(-1)
    n_sampled = math.ceil(cfg.sample_fraction * allowed.size)
    sampled = np.sort(rng.choice(allowed, size=n_sampled, replace=False))

    mask = np.ones((n_units, n_spatial, rep.tokens.shape[2]))
    mask[masked_units] = 0.0
    masked_tokens = nd.mul(rep.tokens, Tensor(mask), tape)
    flat = nd.reshape(masked_tokens, (n_units * n_spatial, rep.tokens.shape[2]), tape)
    pred = head.forward(flat, tape)
    loss = nd.mse(nd.gather_rows(pred, sampled, tape),
                  nd.gather_rows(rep.z1, sampled, tape), tape)
    return RetrievalResult(loss, sampled, masked_units)
