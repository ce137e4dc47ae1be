"""Toy answerer over interleaved sequences, plus the composite objective.

Question tokens cross-attend over the (resampled) interleaved sequence;
the pooled context conditions a greedy autoregressive head over the
vocabulary.  The QA loss is the teacher-forced sum of per-token
cross-entropies over the answer tokens (terminal end-of-sequence token
included); question and visual positions contribute no loss terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nd
from .consolidation import InterleavedSequence
from .errors import ConfigError, EmptyInputError, NumericError
from .nd import GradTape, Tensor
from .tokenizer import Tokenizer


@dataclass(frozen=True)
class LossWeights:
    lambda_ret: float = 0.5
    lambda_policy: float = 0.5

    def __post_init__(self):
        if self.lambda_ret < 0 or self.lambda_policy < 0:
            raise ConfigError("loss weights must be non-negative")


class AnswererModel:
    def __init__(self, vocab: Tokenizer, tape: GradTape, rng: np.random.Generator,
                 embed_dim: int = 32, hidden: int = 64, prefix: str = "answerer"):
        self.vocab = vocab
        self.embed_dim = embed_dim
        v = len(vocab)
        d = embed_dim

        def init(shape, fan_in):
            return rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=shape)

        p = tape.parameter
        self.emb = p(f"{prefix}.emb", init((v, d), d))
        self.wq = p(f"{prefix}.wq", init((d, d), d))
        self.bq = p(f"{prefix}.bq", np.zeros(d))
        self.wk = p(f"{prefix}.wk", init((d, d), d))
        self.bk = p(f"{prefix}.bk", np.zeros(d))
        self.wv = p(f"{prefix}.wv", init((d, d), d))
        self.bv = p(f"{prefix}.bv", np.zeros(d))
        self.w_prev = p(f"{prefix}.w_prev", init((d, hidden), d))
        self.w_ctx = p(f"{prefix}.w_ctx", init((d, hidden), d))
        self.b_h = p(f"{prefix}.b_h", np.zeros(hidden))
        self.w_out = p(f"{prefix}.w_out", init((hidden, v), hidden))
        self.b_out = p(f"{prefix}.b_out", np.zeros(v))
        # step-position embeddings let the decoder disambiguate repeated
        # words inside one answer phrase
        self.max_positions = 32
        self.pos = p(f"{prefix}.pos", init((self.max_positions, d), d))
        self._names = [f"{prefix}.{n}" for n in
                       ("emb", "wq", "bq", "wk", "bk", "wv", "bv",
                        "w_prev", "w_ctx", "b_h", "w_out", "b_out", "pos")]
        self.param_count = sum(tape.params[n].size for n in self._names)

    def _sequence_embeddings(self, seq: InterleavedSequence,
                             tape: GradTape | None) -> Tensor:
        """Embed the interleaved sequence in token order.

        Text tokens come from the embedding table; visual tokens use their
        consolidated payload rows directly (same width by construction).
        """
        text_ids = [tid for tid, tag in zip(seq.token_ids, seq.tags)
                    if tag == "timestamp"]
        n_vis = seq.visual_tokens.shape[0] * seq.visual_tokens.shape[1]
        text = nd.gather_rows(self.emb, text_ids, tape) if text_ids else None
        vis = nd.reshape(seq.visual_tokens, (n_vis, self.embed_dim), tape)
        combined = vis if text is None else nd.concat([text, vis], tape)
        order = []
        t_at, v_at = 0, len(text_ids)
        for tag in seq.tags:
            if tag == "timestamp":
                order.append(t_at)
                t_at += 1
            else:
                order.append(v_at)
                v_at += 1
        return nd.gather_rows(combined, order, tape)

    def _pooled_context(self, seq: InterleavedSequence, question_ids: list[int],
                        tape: GradTape | None) -> Tensor:
        tokens = self._sequence_embeddings(seq, tape)
        q_emb = nd.gather_rows(self.emb, question_ids, tape)
        q = nd.linear(q_emb, self.wq, self.bq, tape)
        k = nd.linear(tokens, self.wk, self.bk, tape)
        v = nd.linear(tokens, self.wv, self.bv, tape)
        scores = nd.scale(nd.matmul(q, nd.transpose(k, tape), tape),
                          1.0 / math.sqrt(self.embed_dim), tape)
        attended = nd.matmul(nd.softmax(scores, tape), v, tape)
        # residual keeps the question itself visible to the answer head
        return nd.mean_rows(nd.add(q_emb, attended, tape), tape)

    def _step_logits(self, prev_ids: list[int], first_step: int, pooled: Tensor,
                     tape: GradTape | None) -> Tensor:
        n = len(prev_ids)
        if first_step + n > self.max_positions:
            raise ConfigError(f"answer length {first_step + n} exceeds the "
                              f"{self.max_positions}-step decoder limit")
        prev = nd.add(nd.gather_rows(self.emb, prev_ids, tape),
                      nd.gather_rows(self.pos, range(first_step, first_step + n),
                                     tape), tape)
        ctx = nd.matmul(Tensor(np.ones((n, 1))),
                        nd.reshape(pooled, (1, self.embed_dim), tape), tape)
        h = nd.silu(nd.add(nd.linear(prev, self.w_prev, self.b_h, tape),
                           nd.matmul(ctx, self.w_ctx, tape), tape), tape)
        return nd.linear(h, self.w_out, self.b_out, tape)

    def answer_with_probs(self, seq: InterleavedSequence, question_ids: list[int],
                          max_len: int = 12) -> tuple[str, list[np.ndarray]]:
        """Greedy decode; also returns the per-step output distributions."""
        if len(seq) == 0:
            raise EmptyInputError("cannot answer over an empty sequence")
        pooled = self._pooled_context(seq, question_ids, None)
        out_ids: list[int] = []
        step_probs: list[np.ndarray] = []
        prev = self.vocab.bos_id
        for step in range(max_len):
            logits = self._step_logits([prev], step, pooled, None)
            probs = nd.softmax(logits).data[0]
            step_probs.append(probs)
            nxt = int(np.argmax(probs))
            if nxt == self.vocab.eos_id:
                break
            out_ids.append(nxt)
            prev = nxt
        return self.vocab.decode(out_ids), step_probs

    def answer(self, seq: InterleavedSequence, question_ids: list[int],
               max_len: int = 12) -> str:
        return self.answer_with_probs(seq, question_ids, max_len)[0]

    def qa_loss(self, seq: InterleavedSequence, question_ids: list[int],
                reference: str, tape: GradTape | None = None) -> Tensor:
        """Teacher-forced cross-entropy summed over answer tokens plus EOS."""
        if len(seq) == 0:
            raise EmptyInputError("cannot score an empty sequence")
        ref_ids = self.vocab.encode(reference)
        prev_ids = [self.vocab.bos_id] + ref_ids
        targets = np.array(ref_ids + [self.vocab.eos_id])
        pooled = self._pooled_context(seq, question_ids, tape)
        logits = self._step_logits(prev_ids, 0, pooled, tape)
        return nd.softmax_cross_entropy(logits, targets, tape)


def total_loss(l_qa: Tensor, l_ret: Tensor, l_policy: Tensor,
               weights: LossWeights, tape: GradTape | None = None) -> Tensor:
    """Weighted sum of the three branches; rejects non-finite components."""
    for name, term in (("qa", l_qa), ("retrieval", l_ret), ("policy", l_policy)):
        if not np.isfinite(term.data).all():
            raise NumericError(f"{name} loss is not finite")
    return nd.add(l_qa, nd.add(nd.scale(l_ret, weights.lambda_ret, tape),
                               nd.scale(l_policy, weights.lambda_policy, tape),
                               tape), tape)
