import math

import numpy as np
import pytest

from fdcheck import numeric_grad, rel_error
from lvqa import nd
from lvqa.errors import DimensionError
from lvqa.nd import GradTape, Tensor


def weighted_sum(out, weights, tape):
    """Project an op output to a scalar with fixed weights (for grad checks)."""
    flat = nd.reshape(out, (out.size,), tape)
    w = nd.reshape(Tensor(weights), (weights.size,))
    return nd.matmul(nd.reshape(flat, (1, out.size), tape),
                     nd.reshape(w, (w.size, 1)), tape)


def check_op_grads(build, arrays, tol=1e-4):
    """build(tape) -> scalar Tensor; compares tape grads to central FD."""
    tape = GradTape()
    loss = build(tape)
    tape.backward(loss)
    analytic = {name: t.grad_or_zeros().copy() for name, t in tape.params.items()}

    for name, arr in arrays.items():
        def forward():
            t2 = GradTape()
            return build(t2).data.item()
        num = numeric_grad(forward, arr)
        assert rel_error(analytic[name], num) < tol, name


# conv3d -----------------------------------------------------------------

def test_conv3d_identity_kernel_single_voxel():
    x = Tensor(np.full((1, 1, 1, 1), 5.0))
    k = Tensor(np.ones((1, 1, 1, 1, 1)))
    b = Tensor(np.zeros(1))
    out = nd.conv3d(x, k, b)
    assert out.data.shape == (1, 1, 1, 1)
    assert out.data[0, 0, 0, 0] == 5.0


def test_conv3d_sum_of_eight_ones():
    x = Tensor(np.ones((1, 2, 2, 2)))
    k = Tensor(np.ones((1, 1, 2, 2, 2)))
    b = Tensor(np.zeros(1))
    out = nd.conv3d(x, k, b, stride=(2, 2, 2))
    assert out.data.shape == (1, 1, 1, 1)
    assert out.data[0, 0, 0, 0] == 8.0


def test_conv3d_identity_kernel_is_identity_map():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(1, 5, 4, 4))
    out = nd.conv3d(Tensor(x), Tensor(np.ones((1, 1, 1, 1, 1))), Tensor(np.zeros(1)))
    np.testing.assert_array_equal(out.data, x)


def test_conv3d_shape_errors_name_axis():
    x = Tensor(np.zeros((2, 4, 4, 4)))
    with pytest.raises(DimensionError, match="channel"):
        nd.conv3d(x, Tensor(np.zeros((1, 3, 2, 2, 2))), Tensor(np.zeros(1)))
    with pytest.raises(DimensionError, match="temporal"):
        nd.conv3d(x, Tensor(np.zeros((1, 2, 5, 2, 2))), Tensor(np.zeros(1)))
    with pytest.raises(DimensionError, match="width"):
        nd.conv3d(x, Tensor(np.zeros((1, 2, 2, 2, 7))), Tensor(np.zeros(1)))


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("stride,padding", [((1, 1, 1), (0, 0, 0)),
                                            ((2, 2, 1), (0, 0, 0)),
                                            ((1, 2, 2), (1, 1, 0))])
def test_conv3d_gradients_match_finite_differences(seed, stride, padding):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, 4, 6, 6))
    k = rng.normal(size=(3, 2, 2, 2, 2))
    b = rng.normal(size=3)
    w = rng.normal(size=math.prod(
        nd.conv3d(Tensor(x), Tensor(k), Tensor(b), stride, padding).shape))

    def build(tape):
        xt = tape.parameter("x", x)
        kt = tape.parameter("k", k)
        bt = tape.parameter("b", b)
        out = nd.conv3d(xt, kt, bt, stride, padding, tape)
        return weighted_sum(out, w, tape)

    check_op_grads(build, {"x": x, "k": k, "b": b})


def test_conv3d_output_extent_formula():
    x = Tensor(np.zeros((1, 10, 9, 8)))
    k = Tensor(np.zeros((2, 1, 3, 2, 2)))
    b = Tensor(np.zeros(2))
    out = nd.conv3d(x, k, b, stride=(2, 3, 1), padding=(1, 0, 1))
    assert out.data.shape == (2, (10 + 2 - 3) // 2 + 1, (9 - 2) // 3 + 1, (8 + 2 - 2) // 1 + 1)


# silu -------------------------------------------------------------------

def test_silu_values():
    assert nd.silu(Tensor(np.array(0.0))).item() == 0.0
    assert abs(nd.silu(Tensor(np.array(10.0))).item() - 10.0) < 1e-3


def test_silu_derivative_at_zero_is_half():
    tape = GradTape()
    x = tape.parameter("x", np.array(0.0))
    tape.backward(nd.silu(x, tape))
    assert x.grad == pytest.approx(0.5)


@pytest.mark.parametrize("seed", range(3))
def test_silu_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(4, 5))
    w = rng.normal(size=20)

    def build(tape):
        xt = tape.parameter("x", x)
        return weighted_sum(nd.silu(xt, tape), w, tape)

    check_op_grads(build, {"x": x})


# softmax cross-entropy ---------------------------------------------------

def test_softmax_ce_uniform_logits():
    loss = nd.softmax_cross_entropy(Tensor(np.zeros(4)), 0)
    assert loss.item() == pytest.approx(math.log(4.0))


def test_softmax_ce_saturated():
    loss = nd.softmax_cross_entropy(Tensor(np.array([100.0, 0.0, 0.0, 0.0])), 0)
    assert loss.item() == pytest.approx(0.0, abs=1e-8)


def test_softmax_ce_target_out_of_range():
    with pytest.raises(IndexError):
        nd.softmax_cross_entropy(Tensor(np.zeros(4)), 4)
    with pytest.raises(IndexError):
        nd.softmax_cross_entropy(Tensor(np.zeros(4)), -1)


@pytest.mark.parametrize("seed", range(3))
def test_softmax_ce_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=6)
    target = int(rng.integers(6))

    def build(tape):
        lt = tape.parameter("logits", logits)
        return nd.softmax_cross_entropy(lt, target, tape)

    tape = GradTape()
    tape.backward(build(tape))
    num = numeric_grad(lambda: float(nd.softmax_cross_entropy(Tensor(logits), target).data),
                       logits)
    assert rel_error(tape.grad_of("logits"), num) < 1e-5


def test_softmax_ce_batched_sums_rows():
    logits = np.zeros((3, 4))
    loss = nd.softmax_cross_entropy(Tensor(logits), np.array([0, 1, 2]))
    assert loss.item() == pytest.approx(3 * math.log(4.0))


# mse ---------------------------------------------------------------------

def test_mse_values():
    assert nd.mse(Tensor(np.array([1.0, 2.0])), Tensor(np.array([1.0, 2.0]))).item() == 0.0
    assert nd.mse(Tensor(np.array([1.0, 2.0])), Tensor(np.array([0.0, 0.0]))).item() == 5.0
    with pytest.raises(DimensionError):
        nd.mse(Tensor(np.zeros(2)), Tensor(np.zeros(3)))


@pytest.mark.parametrize("seed", range(3))
def test_mse_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    pred = rng.normal(size=(3, 4))
    target = rng.normal(size=(3, 4))

    def build(tape):
        pt = tape.parameter("pred", pred)
        return nd.mse(pt, Tensor(target), tape)

    tape = GradTape()
    tape.backward(build(tape))
    np.testing.assert_allclose(tape.grad_of("pred"), 2.0 * (pred - target), rtol=1e-12)
    num = numeric_grad(lambda: float(nd.mse(Tensor(pred), Tensor(target)).data), pred)
    assert np.abs(tape.grad_of("pred") - num).max() < 1e-6


# other ops ---------------------------------------------------------------

@pytest.mark.parametrize("seed", range(3))
def test_composite_graph_gradients(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(3, 4))
    w1 = rng.normal(size=(4, 5))
    b1 = rng.normal(size=5)
    table = rng.normal(size=(7, 3))
    idx = rng.integers(0, 7, size=4)
    wproj = rng.normal(size=5)

    def build(tape):
        xt = tape.parameter("x", x)
        w1t = tape.parameter("w1", w1)
        b1t = tape.parameter("b1", b1)
        tt = tape.parameter("table", table)
        h = nd.silu(nd.linear(xt, w1t, b1t, tape), tape)
        pooled = nd.mean_rows(h, tape)
        emb = nd.mean_rows(nd.gather_rows(tt, idx, tape), tape)
        both = nd.concat([nd.reshape(pooled, (1, 5), tape),
                          nd.reshape(nd.linear(nd.reshape(emb, (1, 3), tape),
                                               Tensor(np.eye(3, 5)), Tensor(np.zeros(5)),
                                               tape), (1, 5), tape)], tape)
        sm = nd.softmax(both, tape)
        return weighted_sum(sm, np.concatenate([wproj, wproj]), tape)

    check_op_grads(build, {"x": x, "w1": w1, "b1": b1, "table": table})


def test_ops_are_deterministic():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(2, 4, 6, 6))
    k = rng.normal(size=(3, 2, 2, 2, 2))
    b = rng.normal(size=3)
    a = nd.conv3d(Tensor(x), Tensor(k), Tensor(b)).data
    c = nd.conv3d(Tensor(x), Tensor(k), Tensor(b)).data
    assert a.tobytes() == c.tobytes()


def test_tape_accumulates_and_clears():
    tape = GradTape()
    x = tape.parameter("x", np.array([1.0, 2.0]))
    tape.backward(nd.mse(x, Tensor(np.zeros(2)), tape))
    g1 = tape.grad_of("x").copy()
    tape.backward(nd.mse(x, Tensor(np.zeros(2)), tape))
    np.testing.assert_allclose(tape.grad_of("x"), 2.0 * g1)
    tape.zero_grad()
    assert not tape.grad_of("x").any()


def test_tape_gradients_match_param_shapes():
    tape = GradTape()
    w = tape.parameter("w", np.zeros((3, 2)))
    b = tape.parameter("b", np.zeros(2))
    out = nd.linear(Tensor(np.ones((4, 3))), w, b, tape)
    tape.backward(nd.mse(out, Tensor(np.ones((4, 2))), tape))
    assert tape.grad_of("w").shape == (3, 2)
    assert tape.grad_of("b").shape == (2,)


def test_finite_outputs_on_extreme_inputs():
    big = Tensor(np.array([1e3, -1e3, 0.0]))
    assert np.isfinite(nd.softmax(big).data).all()
    assert np.isfinite(nd.softmax_cross_entropy(big, 1).data).all()
    assert np.isfinite(nd.silu(big).data).all()


# optimizers ----------------------------------------------------------------

@pytest.mark.parametrize("make", [lambda t: nd.SGD(t, lr=0.05),
                                  lambda t: nd.AdamW(t, lr=0.05, weight_decay=0.0)])
def test_optimizers_descend_quadratic(make):
    tape = GradTape()
    x = tape.parameter("x", np.array([3.0, -2.0]))
    opt = make(tape)
    for _ in range(200):
        tape.zero_grad()
        tape.backward(nd.mse(x, Tensor(np.zeros(2)), tape))
        opt.step()
    assert np.abs(x.data).max() < 1e-2
