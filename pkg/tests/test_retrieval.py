import numpy as np
import pytest

from lvqa import nd
from lvqa.consolidation import ConvStack, FtcConfig, partition_blocks
from lvqa.nd import AdamW, GradTape
from lvqa.retrieval import RetrievalHead, retrieval_loss
from lvqa.video import VideoTensor


def setup(seed=0, mask_fraction=0.3, t=8, tape=None):
    cfg = FtcConfig(patch_t=2, patch_s=2, layers=2, channels=(4, 4), embed_dim=4,
                    mask_fraction=mask_fraction, sample_fraction=0.5)
    tape = tape or GradTape()
    rng = np.random.default_rng(seed)
    stack = ConvStack(cfg, 3, tape, rng)
    head = RetrievalHead(cfg, tape, rng)
    v = VideoTensor(np.random.default_rng(seed + 1).normal(size=(3, t, 4, 4)), 4.0)
    grid = partition_blocks(v, cfg)
    return cfg, tape, stack, head, grid


def test_zero_mask_fraction_gives_zero_loss_with_flag():
    cfg, tape, stack, head, grid = setup(mask_fraction=0.0)
    rep = stack.consolidate(grid, tape)
    result = retrieval_loss(rep, head, cfg, np.random.default_rng(0), tape)
    assert result.empty
    assert result.loss.item() == 0.0


def test_sampled_indices_lie_in_masked_units():
    for seed in range(20):
        cfg, tape, stack, head, grid = setup(seed=seed)
        rep = stack.consolidate(grid, tape)
        result = retrieval_loss(rep, head, cfg, np.random.default_rng(seed), tape)
        assert not result.empty
        units = set(result.masked_units.tolist())
        assert all(i // rep.n_spatial in units for i in result.sampled_indices)


def test_random_init_has_positive_loss_and_head_gradient():
    cfg, tape, stack, head, grid = setup(seed=3)
    rep = stack.consolidate(grid, tape)
    result = retrieval_loss(rep, head, cfg, np.random.default_rng(3), tape)
    assert result.loss.item() > 0.0
    tape.backward(result.loss)
    head_norm = sum(np.abs(tape.grad_of(n)).sum()
                    for n in tape.params if n.startswith("retriever."))
    assert head_norm > 0.0


def test_gradient_flows_into_conv_stack():
    cfg, tape, stack, head, grid = setup(seed=5)
    before = [k.data.copy() for k in stack.kernels]
    opt = AdamW(tape, lr=1e-3)
    for step in range(5):
        tape.zero_grad()
        rep = stack.consolidate(grid, tape)
        result = retrieval_loss(rep, head, cfg, np.random.default_rng(5), tape)
        tape.backward(result.loss)
        opt.step()
    assert any(not np.array_equal(b, k.data) for b, k in zip(before, stack.kernels))


def test_overfit_fixed_batch_below_threshold():
    cfg, tape, stack, head, grid = setup(seed=7, t=4)
    opt = AdamW(tape, lr=3e-3)
    loss_val = None
    for step in range(2000):
        tape.zero_grad()
        rep = stack.consolidate(grid, tape)
        result = retrieval_loss(rep, head, cfg, np.random.default_rng(7), tape)
        tape.backward(result.loss)
        opt.step()
        loss_val = result.loss.item()
        if loss_val < 1e-3:
            break
    assert loss_val < 1e-3


def test_loss_is_differentiable_wrt_both_branches():
    cfg, tape, stack, head, grid = setup(seed=11)
    rep = stack.consolidate(grid, tape)
    result = retrieval_loss(rep, head, cfg, np.random.default_rng(11), tape)
    tape.backward(result.loss)
    conv_norm = sum(np.abs(tape.grad_of(n)).sum()
                    for n in tape.params if n.startswith("conv."))
    assert conv_norm > 0.0
