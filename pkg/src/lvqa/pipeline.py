"""End-to-end wiring: model bundle, training loop, inference, evaluation.

Inference always runs the representation stage (consolidate + interleave)
over the full video, grounds the question, picks a policy per window,
resamples, re-encodes the selected frames with their source timestamps,
and decodes an answer.  Training adds the retrieval and policy terms and
accumulates gradients over micro-batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nd, synthbench
from .answerer import AnswererModel, total_loss
from .config import RunConfig
from .consolidation import (ConvStack, interleave_timestamps, partition_blocks)
from .errors import ConfigError, VocabError
from .grounding import UnitScorer, build_windows, ground_query
from .instructor import PolicyInstructor
from .metrics import EvalReport, score_answer
from .nd import AdamW, GradTape, SGD, Tensor, load_params, save_params
from .policies import SamplingPolicy, resample
from .retrieval import RetrievalHead, retrieval_loss
from .synthbench import Instance, QAInstance, SPARSE_TYPES, oracle_answer
from .tokenizer import Tokenizer
from .video import VideoTensor, truncate_to_divisible


@dataclass
class Pipeline:
    cfg: RunConfig
    vocab: Tokenizer
    tape: GradTape
    stack: ConvStack
    head: RetrievalHead
    instructor: PolicyInstructor
    answerer: AnswererModel
    scorer: UnitScorer

    @classmethod
    def build(cls, cfg: RunConfig) -> "Pipeline":
        rng = np.random.default_rng([cfg["run.seed"], 0])
        vocab = Tokenizer(synthbench.vocabulary_words())
        ftc = cfg.ftc_config()
        tape = GradTape()
        stack = ConvStack(ftc, cfg["synthbench.channels"], tape, rng)
        head = RetrievalHead(ftc, tape, rng)
        instructor = PolicyInstructor(len(vocab), tape, rng,
                                      embed_dim=cfg["tms.instructor_embed"],
                                      hidden=cfg["tms.instructor_hidden"])
        answerer = AnswererModel(vocab, tape, rng, embed_dim=ftc.embed_dim,
                                 hidden=cfg["answerer.hidden"])
        scorer = UnitScorer(len(vocab), ftc.embed_dim, rng)
        return cls(cfg=cfg, vocab=vocab, tape=tape, stack=stack, head=head,
                   instructor=instructor, answerer=answerer, scorer=scorer)

    def save(self, path) -> None:
        params: dict[str, object] = {
            "meta.vocab_size": np.array(float(len(self.vocab))),
            "meta.grounder_trained": np.array(1.0 if self.scorer.trained else 0.0),
        }
        params.update(self.tape.params)
        params.update(self.scorer.tape.params)
        save_params(path, params)

    @classmethod
    def load(cls, path, cfg: RunConfig) -> "Pipeline":
        pipe = cls.build(cfg)
        loaded = load_params(path)
        vocab_size = int(loaded.pop("meta.vocab_size", -1))
        if vocab_size != len(pipe.vocab):
            raise VocabError(f"checkpoint vocabulary size {vocab_size} does not "
                             f"match dataset vocabulary {len(pipe.vocab)}")
        trained = loaded.pop("meta.grounder_trained", np.zeros(())).item() > 0.5
        for name, arr in loaded.items():
            target = pipe.tape.params.get(name) or pipe.scorer.tape.params.get(name)
            if target is None:
                raise ConfigError(f"checkpoint parameter {name!r} has no slot")
            if target.data.shape != arr.shape:
                raise ConfigError(
                    f"checkpoint parameter {name!r} has shape {arr.shape}, "
                    f"expected {target.data.shape} (config mismatch?)")
            target.data[...] = arr
        pipe.scorer.trained = trained
        return pipe

    def make_policy(self, kind: str) -> SamplingPolicy:
        return SamplingPolicy(kind, sigma_ratio=self.cfg["tms.sigma_ratio"],
                              edge_exponent=self.cfg["tms.ushape_exponent"],
                              edge_floor=self.cfg["tms.ushape_floor"])

    # encoding -----------------------------------------------------------

    def encode_full(self, video: VideoTensor, tape: GradTape | None = None):
        ftc = self.stack.cfg
        vid = truncate_to_divisible(video, ftc.patch_t, ftc.patch_s)
        rep = self.stack.consolidate(partition_blocks(vid, ftc), tape)
        return rep, interleave_timestamps(rep, video.fps, self.vocab)

    def encode_resampled(self, video: VideoTensor, indices: list[int],
                         tape: GradTape | None = None):
        ftc = self.stack.cfg
        keep = len(indices) - (len(indices) % ftc.patch_t)
        if keep == 0:
            raise ConfigError(f"budget {len(indices)} below one temporal unit")
        idx = indices[:keep]
        sub = video.select_frames(idx)
        starts = [idx[u * ftc.patch_t] - 1 for u in range(keep // ftc.patch_t)]
        rep = self.stack.consolidate(partition_blocks(sub, ftc), tape,
                                     unit_start_frames=starts)
        return interleave_timestamps(rep, video.fps, self.vocab)

    # question-level plumbing ---------------------------------------------

    def windows_for(self, seq, qa: QAInstance, video: VideoTensor,
                    rng: np.random.Generator):
        cfg = self.cfg
        if not cfg["pipeline.use_tg"]:
            return []
        grounding = ground_query(seq, qa, cfg["tms.grounder"], rng, self.vocab,
                                 total_frames=video.frames, delta=cfg["tms.delta"],
                                 scorer=self.scorer, top_units=cfg["tms.top_units"])
        return build_windows(grounding.anchors, cfg["tms.w"], video.frames)

    def choose_policies(self, windows, qa: QAInstance, video: VideoTensor,
                        oracle: bool, tape: GradTape | None):
        """Policies per window plus the summed instructor loss (or None).

        Training passes ``oracle=True`` so resampling follows the oracle
        label while the instructor is supervised toward it.
        """
        cfg = self.cfg
        fixed = cfg["tms.policy_fixed"]
        qids = self.vocab.encode(qa.question)
        label = self.instructor_label(qa)
        policies, losses = [], []
        for window in windows:
            if cfg["pipeline.use_pi"]:
                predicted, _, loss = self.instructor.instruct(
                    window, qids, video,
                    label=label if tape is not None else None, tape=tape)
                if loss is not None:
                    losses.append(loss)
                chosen = self.make_policy(qa.policy) if oracle else \
                    self.make_policy(predicted.kind)
            elif fixed:
                chosen = self.make_policy(fixed)
            else:
                chosen = self.make_policy("uniform")
            policies.append(chosen)
        loss_sum = None
        if losses:
            loss_sum = losses[0]
            for term in losses[1:]:
                loss_sum = nd.add(loss_sum, term, tape)
        return policies, loss_sum

    @staticmethod
    def instructor_label(qa: QAInstance) -> int:
        from .policies import POLICY_KINDS
        return POLICY_KINDS.index(qa.policy)

    def answer_question(self, video: VideoTensor, qa: QAInstance,
                        rng: np.random.Generator) -> tuple[str, dict]:
        """Full inference path for one question."""
        cfg = self.cfg
        rep, seq = self.encode_full(video)
        windows = self.windows_for(seq, qa, video, rng)
        policies, _ = self.choose_policies(windows, qa, video, oracle=False,
                                           tape=None)
        selected = resample(video.frames, windows, policies, cfg["tms.budget"])
        answer_seq = self.encode_resampled(video, selected.frame_indices)
        text = self.answerer.answer(answer_seq, self.vocab.encode(qa.question),
                                    max_len=cfg["answerer.max_answer_len"])
        info = {"full_tokens": rep.n_units * rep.n_spatial,
                "selected_frames": selected.frame_indices,
                "windows": windows,
                "policies": [p.kind for p in policies]}
        return text, info

    def training_losses(self, video: VideoTensor, qa: QAInstance,
                        mask_rng: np.random.Generator,
                        ground_rng: np.random.Generator, tape: GradTape):
        """The three loss branches for one (video, question) sample."""
        cfg = self.cfg
        weights = cfg.loss_weights()
        zero = Tensor(np.zeros(()))

        l_ret = zero
        seq = None
        if weights.lambda_ret > 0 or cfg["pipeline.use_tg"]:
            rep, seq = self.encode_full(
                video, tape if weights.lambda_ret > 0 else None)
            if weights.lambda_ret > 0:
                l_ret = retrieval_loss(rep, self.head, self.stack.cfg,
                                       mask_rng, tape).loss

        windows = self.windows_for(seq, qa, video, ground_rng)
        policies, l_policy = self.choose_policies(windows, qa, video,
                                                  oracle=True, tape=tape)
        l_policy = l_policy if l_policy is not None else zero
        selected = resample(video.frames, windows, policies, cfg["tms.budget"])
        answer_seq = self.encode_resampled(video, selected.frame_indices, tape)
        l_qa = self.answerer.qa_loss(answer_seq, self.vocab.encode(qa.question),
                                     qa.answer, tape)
        return l_qa, l_ret, l_policy


def make_optimizer(pipe: Pipeline):
    cfg = pipe.cfg
    if cfg["answerer.optimizer"] == "sgd":
        return SGD(pipe.tape, lr=cfg["answerer.lr"])
    return AdamW(pipe.tape, lr=cfg["answerer.lr"],
                 weight_decay=cfg["answerer.weight_decay"])


def train(pipe: Pipeline, instances: list[Instance],
          on_step=None) -> list[dict]:
    """Joint training under the composite objective; returns the log rows.

    Rows carry one entry per forward sample: step, l_qa, l_ret, l_policy,
    total.  The optimizer steps every batch_size * grad_accum samples.
    """
    cfg = pipe.cfg
    weights = cfg.loss_weights()
    optimizer = make_optimizer(pipe)
    seed = cfg["run.seed"]
    order_rng = np.random.default_rng([seed, 1])
    mask_rng = np.random.default_rng([seed, 2])
    ground_rng = np.random.default_rng([seed, 3])
    samples = [(inst, qa) for inst in instances for qa in inst.qas]
    step_every = max(1, cfg["answerer.batch_size"] * cfg["answerer.grad_accum"])
    rows: list[dict] = []
    pipe.tape.zero_grad()
    step = 0
    for epoch in range(cfg["answerer.epochs"]):
        for i in order_rng.permutation(len(samples)):
            inst, qa = samples[int(i)]
            l_qa, l_ret, l_policy = pipe.training_losses(
                inst.load_video(), qa, mask_rng, ground_rng, pipe.tape)
            total = total_loss(l_qa, l_ret, l_policy, weights, pipe.tape)
            pipe.tape.backward(total)
            step += 1
            row = {"step": step, "l_qa": l_qa.item(), "l_ret": l_ret.item(),
                   "l_policy": l_policy.item(), "total": total.item()}
            rows.append(row)
            if on_step is not None:
                on_step(row)
            if step % step_every == 0:
                optimizer.step()
                pipe.tape.zero_grad()
    if step % step_every:
        optimizer.step()
        pipe.tape.zero_grad()
    fit_grounder(pipe, instances)
    return rows


def fit_grounder(pipe: Pipeline, instances: list[Instance]) -> None:
    """Train the learned grounder's unit scorer on oracle interval labels."""
    cfg = pipe.cfg
    budget = cfg["tms.grounder_examples"]
    patch_t = pipe.stack.cfg.patch_t
    examples = []
    for inst in instances:
        if len(examples) >= budget:
            break
        video = inst.load_video()
        _, seq = pipe.encode_full(video)
        unit_means = seq.visual_tokens.data.mean(axis=1)
        n_units = unit_means.shape[0]
        for qa in inst.qas:
            if len(examples) >= budget:
                break
            targets = np.full(n_units, -1.0)
            for u in range(n_units):
                ulo, uhi = u * patch_t + 1, (u + 1) * patch_t
                if any(not (uhi < lo or ulo > hi) for lo, hi in qa.intervals):
                    targets[u] = 1.0
            examples.append((unit_means, pipe.vocab.encode(qa.question), targets))
    if examples:
        pipe.scorer.fit(examples, steps=cfg["tms.grounder_steps"],
                        lr=cfg["tms.grounder_lr"])


def evaluate(pipe: Pipeline, instances: list[Instance]) -> tuple[EvalReport, list]:
    """Run the full inference path over a split and score every answer."""
    cfg = pipe.cfg
    ground_rng = np.random.default_rng([cfg["run.seed"], 101])
    report = EvalReport()
    predictions = []
    use_oracle = cfg["metrics.oracle_answers"]
    for inst in instances:
        video = inst.load_video()
        for qa_index, qa in enumerate(inst.qas):
            if use_oracle:
                text, _ = oracle_answer(inst.events, inst.lighting, qa.qtype)
            else:
                text, _ = pipe.answer_question(video, qa, ground_rng)
            scores = score_answer(text, qa.answer, qa.keywords)
            report.records.append({"instance_id": inst.instance_id,
                                   "qa_index": qa_index, "split": qa.split,
                                   "qtype": qa.qtype, **scores})
            predictions.append((f"{inst.instance_id}#qa{qa_index}", text))
    return report, predictions


def sparse_event_mean(report: EvalReport, metric: str = "k_acc") -> float:
    values = [rec[metric] for rec in report.records
              if rec["qtype"] in SPARSE_TYPES]
    if not values:
        return 0.0
    return round(sum(values) / len(values), 2)
