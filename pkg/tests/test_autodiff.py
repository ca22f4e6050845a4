"""Unit tests for the tensor engine: forward semantics and the optimizer."""

import numpy as np
import pytest

from concurrence.autodiff import (
    AdamState,
    BatchNormState,
    Tensor,
    adam_step,
    batchnorm1d,
    bce_with_logits,
    conv1d,
    dropout,
    relu,
    zero_grad,
)


def conv1d_oracle(x, w, b, stride):
    """Direct triple-loop summation; the reference for conv1d."""
    cout, cin, k = w.shape
    _, length = x.shape
    lout = (length - k) // stride + 1
    out = np.zeros((cout, lout))
    for o in range(cout):
        for j in range(lout):
            acc = b[o]
            for c in range(cin):
                for i in range(k):
                    acc += x[c, j * stride + i] * w[o, c, i]
            out[o, j] = acc
    return out


class TestConv1d:
    def test_output_length_formula(self):
        x = Tensor(np.zeros((1, 10)))
        w = Tensor(np.zeros((1, 1, 3)))
        b = Tensor(np.zeros(1))
        out = conv1d(x, w, b, stride=2)
        assert out.shape == (1, 4)

    def test_shifted_identity_kernel(self):
        rng = np.random.default_rng(42)
        x = rng.normal(size=(1, 20))
        out = conv1d(Tensor(x), Tensor([[[0.0, 1.0, 0.0]]]), Tensor([0.0]), stride=1)
        np.testing.assert_allclose(out.data[0], x[0, 1:19], rtol=0, atol=0)

    def test_matches_direct_summation(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(2, 12))
        w = rng.normal(size=(3, 2, 3))
        b = rng.normal(size=3)
        got = conv1d(Tensor(x), Tensor(w), Tensor(b), stride=2).data
        want = conv1d_oracle(x, w, b, stride=2)
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_oracle_sweep_small_shapes(self):
        # all lengths/kernels up to 16, strides up to 3
        rng = np.random.default_rng(3)
        for k in range(1, 17):
            for length in range(k, 17):
                for stride in range(1, 4):
                    x = rng.normal(size=(2, length))
                    w = rng.normal(size=(2, 2, k))
                    b = rng.normal(size=2)
                    got = conv1d(Tensor(x), Tensor(w), Tensor(b), stride=stride).data
                    want = conv1d_oracle(x, w, b, stride)
                    np.testing.assert_allclose(got, want, atol=1e-12)

    def test_too_short_input_raises(self):
        with pytest.raises(ValueError, match="too short"):
            conv1d(Tensor(np.zeros((1, 2))), Tensor(np.zeros((1, 1, 3))), Tensor(np.zeros(1)))

    def test_batched_agrees_with_per_sample(self):
        rng = np.random.default_rng(11)
        xs = rng.normal(size=(4, 3, 15))
        w = rng.normal(size=(5, 3, 4))
        b = rng.normal(size=5)
        batched = conv1d(Tensor(xs), Tensor(w), Tensor(b), stride=2).data
        for n in range(4):
            single = conv1d(Tensor(xs[n]), Tensor(w), Tensor(b), stride=2).data
            np.testing.assert_array_equal(batched[n], single)


class TestBatchNorm:
    def test_train_mode_normalizes(self):
        rng = np.random.default_rng(0)
        x = rng.normal(3.0, 2.5, size=(4, 3, 10))
        out = batchnorm1d(Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros(3)),
                          BatchNormState(3), "train").data
        np.testing.assert_allclose(out.mean(axis=(0, 2)), 0.0, atol=1e-9)
        np.testing.assert_allclose(out.var(axis=(0, 2)), 1.0, atol=1e-4)

    def test_gamma_zero_gives_beta(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(2, 2, 6))
        beta = np.array([1.5, -2.0])
        out = batchnorm1d(Tensor(x), Tensor(np.zeros(2)), Tensor(beta),
                          BatchNormState(2), "train").data
        np.testing.assert_allclose(out, np.broadcast_to(beta[None, :, None], out.shape))

    def test_eval_with_unit_stats_is_affine(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(1, 2, 5))
        gamma = np.array([2.0, 0.5])
        beta = np.array([1.0, -1.0])
        state = BatchNormState(2)  # running mean 0, var 1
        out = batchnorm1d(Tensor(x), Tensor(gamma), Tensor(beta), state, "eval").data
        want = gamma[None, :, None] * x / np.sqrt(1.0 + 1e-5) + beta[None, :, None]
        np.testing.assert_allclose(out, want, atol=1e-12)

    def test_running_stats_update(self):
        rng = np.random.default_rng(3)
        x = rng.normal(2.0, 1.0, size=(8, 1, 50))
        state = BatchNormState(1)
        batchnorm1d(Tensor(x), Tensor(np.ones(1)), Tensor(np.zeros(1)), state, "train")
        n = 8 * 50
        np.testing.assert_allclose(state.mean, 0.1 * x.mean())
        np.testing.assert_allclose(state.var, 0.9 + 0.1 * x.var() * n / (n - 1))

    def test_empty_batch_raises(self):
        with pytest.raises(ValueError):
            batchnorm1d(Tensor(np.zeros((0, 2, 4))), Tensor(np.ones(2)),
                        Tensor(np.zeros(2)), BatchNormState(2), "train")


class TestReluDropout:
    def test_relu_values(self):
        out = relu(Tensor([-1.0, 0.0, 2.0]))
        np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])

    def test_dropout_rate_zero_identity(self):
        x = Tensor(np.arange(6.0))
        for mode in ("train", "eval"):
            out = dropout(x, 0.0, mode, np.random.default_rng(0))
            np.testing.assert_array_equal(out.data, x.data)

    def test_dropout_eval_identity(self):
        x = Tensor(np.arange(6.0))
        out = dropout(x, 0.5, "eval", np.random.default_rng(0))
        np.testing.assert_array_equal(out.data, x.data)

    def test_dropout_preserves_expectation(self):
        # inverted dropout on 1e6 ones: sample mean within 3 SE of 1
        n, rate = 1_000_000, 0.25
        out = dropout(Tensor(np.ones(n)), rate, "train", np.random.default_rng(123))
        scale = 1.0 / (1.0 - rate)
        se = np.sqrt(rate * (1.0 - rate)) * scale / np.sqrt(n)
        assert abs(out.data.mean() - 1.0) < 3 * se

    def test_dropout_bad_rate(self):
        with pytest.raises(ValueError):
            dropout(Tensor([1.0]), 1.0, "train", np.random.default_rng(0))


class TestBce:
    def test_logit_zero_label_one(self):
        loss = bce_with_logits(Tensor([0.0]), [1.0])
        np.testing.assert_allclose(loss.data[0], np.log(2.0), rtol=1e-12)

    def test_large_logit_no_overflow(self):
        loss = bce_with_logits(Tensor([50.0]), [1.0])
        assert 0.0 <= loss.data[0] < 1e-20

    def test_negative_logit_label_zero(self):
        loss = bce_with_logits(Tensor([-3.0]), [0.0])
        np.testing.assert_allclose(loss.data[0], np.log1p(np.exp(-3.0)), rtol=1e-12)
        np.testing.assert_allclose(loss.data[0], 0.048587, atol=1e-6)

    def test_bad_label(self):
        with pytest.raises(ValueError):
            bce_with_logits(Tensor([0.0]), [0.5])


class TestBackward:
    def test_sum_relu_gradient(self):
        x = Tensor([-1.0, 2.0], requires_grad=True)
        relu(x).sum().backward()
        np.testing.assert_array_equal(x.grad, [0.0, 1.0])

    def test_bce_gradient_at_zero(self):
        z = Tensor([0.0], requires_grad=True)
        bce_with_logits(z, [1.0]).sum().backward()
        np.testing.assert_allclose(z.grad, [-0.5], atol=1e-12)

    def test_non_scalar_backward_raises(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            (x * x).backward()

    def test_grad_accumulates_over_reuse(self):
        x = Tensor([3.0], requires_grad=True)
        y = x * x  # dy/dx = 2x = 6
        y.sum().backward()
        np.testing.assert_allclose(x.grad, [6.0])

    def test_matmul_gradient(self):
        a = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]), requires_grad=True)
        b = Tensor(np.array([[1.0], [1.0]]), requires_grad=True)
        (a @ b).sum().backward()
        np.testing.assert_array_equal(a.grad, np.ones((2, 2)))
        np.testing.assert_array_equal(b.grad, [[4.0], [6.0]])


class TestAdam:
    def test_first_step_moves_by_lr(self):
        p = Tensor(np.array([1.0, -1.0]), requires_grad=True)
        state = AdamState([p], lr=0.01)
        p.grad = np.array([0.5, -3.0])
        adam_step([p], state)
        # bias-corrected first step is -lr * sign(g) up to eps effects
        np.testing.assert_allclose(p.data, [1.0 - 0.01, -1.0 + 0.01], rtol=1e-6)

    def test_zero_gradient_no_motion(self):
        p = Tensor(np.array([2.0]), requires_grad=True)
        state = AdamState([p], lr=0.1)
        p.grad = np.zeros(1)
        adam_step([p], state)
        np.testing.assert_array_equal(p.data, [2.0])

    def test_quadratic_descent(self):
        # 200 steps on f(t) = t^2 from t=1 with lr 0.1 converges near 0
        p = Tensor(np.array([1.0]), requires_grad=True)
        state = AdamState([p], lr=0.1)
        for _ in range(200):
            zero_grad([p])
            (p * p).sum().backward()
            adam_step([p], state)
        assert abs(p.data[0]) < 0.05

    def test_shape_mismatch_raises(self):
        p = Tensor(np.zeros(3), requires_grad=True)
        state = AdamState([p])
        p.grad = np.zeros(2)
        with pytest.raises(ValueError):
            adam_step([p], state)


def test_forward_bit_reproducible():
    def run():
        rng = np.random.default_rng(99)
        x = Tensor(rng.normal(size=(3, 2, 12)), requires_grad=True)
        w = Tensor(rng.normal(size=(4, 2, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=4), requires_grad=True)
        h = relu(conv1d(x, w, b, stride=2))
        h = dropout(h, 0.25, "train", rng)
        loss = (h * h).mean()
        loss.backward()
        return loss.data.copy(), x.grad.copy()

    l1, g1 = run()
    l2, g2 = run()
    np.testing.assert_array_equal(l1, l2)
    np.testing.assert_array_equal(g1, g2)
