import numpy as np
import pytest

from foodvision.autograd import (
    Tape,
    Tensor,
    add,
    backward,
    concat_channels,
    finite_difference_check,
    matmul,
    mul,
    reshape,
    scale,
    set_check_finite,
    tsum,
)
from foodvision.errors import DimensionError, NumericError, OracleError, TapeStateError


def matmul_naive(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Triple-loop reference product; the oracle for matmul."""
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n), dtype=a.dtype)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


class TestTensor:
    def test_flat_length_matches_shape(self):
        t = Tensor(np.arange(12, dtype=np.float32).reshape(3, 4))
        assert t.data.size == 12 and t.shape == (3, 4)
        assert t.data.flags["C_CONTIGUOUS"]

    def test_default_dtype_is_float32(self):
        assert Tensor([1, 2, 3]).dtype == np.float32

    def test_float64_preserved(self):
        assert Tensor(np.zeros(3, dtype=np.float64)).dtype == np.float64

    def test_item_rejects_non_scalar(self):
        with pytest.raises(DimensionError):
            Tensor([1.0, 2.0]).item()


class TestMatmul:
    def test_identity(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        out = matmul(Tensor(np.eye(2, dtype=np.float32)), a)
        assert np.array_equal(out.data, a.data)

    def test_row_times_column(self):
        out = matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
        assert out.data.tolist() == [[11.0]]

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        got = matmul(Tensor(a, dtype=np.float64), Tensor(b, dtype=np.float64)).data
        assert np.abs(got - matmul_naive(a, b)).max() < 1e-12

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_non_finite_output_raises(self):
        big = np.full((2, 2), 1e38, dtype=np.float32)
        with np.errstate(over="ignore"), pytest.raises(NumericError):
            matmul(Tensor(big), Tensor(big))

    def test_finite_check_can_be_disabled(self):
        big = np.full((2, 2), 1e38, dtype=np.float32)
        prev = set_check_finite(False)
        try:
            with np.errstate(over="ignore"):
                out = matmul(Tensor(big), Tensor(big))
            assert np.isinf(out.data).any()
        finally:
            set_check_finite(prev)

    def test_backward_rules(self):
        rng = np.random.default_rng(5)
        a_val = rng.normal(size=(3, 4))
        b_val = rng.normal(size=(4, 2))
        with Tape() as tape:
            a = Tensor(a_val, requires_grad=True, dtype=np.float64)
            b = Tensor(b_val, requires_grad=True, dtype=np.float64)
            loss = tsum(matmul(a, b))
        backward(loss, tape)
        g = np.ones((3, 2))
        assert np.allclose(a.grad, g @ b_val.T)
        assert np.allclose(b.grad, a_val.T @ g)


class TestBackward:
    def test_sum_gradient_is_ones(self):
        with Tape() as tape:
            x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
            loss = tsum(x)
        backward(loss, tape)
        assert x.grad.tolist() == [1.0, 1.0, 1.0]

    def test_square_gradient(self):
        with Tape() as tape:
            x = Tensor([2.0, -3.0], requires_grad=True)
            loss = tsum(mul(x, x))
        backward(loss, tape)
        assert x.grad.tolist() == [4.0, -6.0]

    def test_fanout_gradients_are_summed(self):
        # y = x + x uses x on two paths
        with Tape() as tape:
            x = Tensor([1.0, 1.0], requires_grad=True)
            loss = tsum(add(x, x))
        backward(loss, tape)
        assert x.grad.tolist() == [2.0, 2.0]

    def test_tensor_not_reaching_loss_gets_zero_grad(self):
        with Tape() as tape:
            x = Tensor([1.0, 2.0], requires_grad=True)
            orphan = Tensor([5.0], requires_grad=True)
            tsum(orphan)  # recorded, but disconnected from the loss
            loss = tsum(x)
        backward(loss, tape)
        assert orphan.grad.tolist() == [0.0]

    def test_backward_twice_raises(self):
        with Tape() as tape:
            x = Tensor([1.0], requires_grad=True)
            loss = tsum(x)
        backward(loss, tape)
        with pytest.raises(TapeStateError):
            backward(loss, tape)

    def test_non_scalar_loss_raises(self):
        with Tape() as tape:
            x = Tensor([1.0, 2.0], requires_grad=True)
            y = add(x, x)
        with pytest.raises(DimensionError):
            backward(y, tape)

    def test_loss_from_other_tape_raises(self):
        with Tape() as tape:
            x = Tensor([1.0], requires_grad=True)
            loss = tsum(x)
        backward(loss, tape)
        with Tape() as other:
            Tensor([1.0], requires_grad=True)
        with pytest.raises(TapeStateError):
            backward(loss, other)

    def test_tapes_do_not_nest(self):
        with Tape():
            with pytest.raises(TapeStateError):
                with Tape():
                    pass

    def test_backward_is_linear_in_loss_scale(self):
        rng = np.random.default_rng(11)
        x_val = rng.normal(size=6)
        factor = 3.7

        def grad_of(scaled_by):
            with Tape() as tape:
                x = Tensor(x_val, requires_grad=True, dtype=np.float64)
                loss = scale(tsum(mul(x, x)), scaled_by)
            backward(loss, tape)
            return x.grad

        g1 = grad_of(1.0)
        g2 = grad_of(factor)
        assert np.abs(g2 - factor * g1).max() < 1e-12

    def test_parameter_reused_across_tapes_accumulates_per_call(self):
        x_val = np.array([1.0, 2.0])
        grads = []
        for _ in range(2):
            with Tape() as tape:
                x = Tensor(x_val, requires_grad=True, dtype=np.float64)
                loss = tsum(mul(x, x))
            backward(loss, tape)
            grads.append(x.grad)
        assert np.allclose(grads[0], grads[1])

    def test_grad_accumulates_across_backwards_on_same_tensor(self):
        x = Tensor([1.0, 2.0], requires_grad=True, dtype=np.float64)
        for _ in range(2):
            with Tape() as tape:
                loss = tsum(mul(x, x))
            backward(loss, tape)
        assert np.allclose(x.grad, 2 * 2 * x.data)


class TestOps:
    def test_add_shape_mismatch(self):
        with pytest.raises(DimensionError):
            add(Tensor([1.0]), Tensor([1.0, 2.0]))

    def test_reshape_roundtrip_gradient(self):
        with Tape() as tape:
            x = Tensor(np.arange(6, dtype=np.float64), requires_grad=True)
            loss = tsum(mul(reshape(x, (2, 3)), reshape(x, (2, 3))))
        backward(loss, tape)
        assert np.allclose(x.grad, 2 * x.data)

    def test_concat_channels_splits_gradient(self):
        a_val = np.ones((1, 2, 2, 2))
        b_val = np.ones((1, 3, 2, 2))
        with Tape() as tape:
            a = Tensor(a_val, requires_grad=True, dtype=np.float64)
            b = Tensor(b_val, requires_grad=True, dtype=np.float64)
            out = concat_channels((a, b))
            loss = tsum(scale(out, 2.0))
        assert out.shape == (1, 5, 2, 2)
        backward(loss, tape)
        assert np.all(a.grad == 2.0) and a.grad.shape == a_val.shape
        assert np.all(b.grad == 2.0) and b.grad.shape == b_val.shape

    def test_forward_deterministic_bitwise(self):
        rng = np.random.default_rng(4)
        a = Tensor(rng.normal(size=(16, 16)).astype(np.float32))
        b = Tensor(rng.normal(size=(16, 16)).astype(np.float32))
        first = matmul(a, b).data
        for _ in range(3):
            assert np.array_equal(matmul(a, b).data, first)


class TestFiniteDifferenceCheck:
    def test_linear_function_is_exact(self):
        rng = np.random.default_rng(0)
        err = finite_difference_check(tsum, Tensor(rng.normal(size=7), dtype=np.float64))
        assert err < 1e-10

    def test_quadratic(self):
        rng = np.random.default_rng(1)
        err = finite_difference_check(lambda t: tsum(mul(t, t)),
                                      Tensor(rng.normal(size=(2, 3)), dtype=np.float64))
        assert err < 1e-8

    def test_requires_float64(self):
        with pytest.raises(ValueError):
            finite_difference_check(tsum, Tensor([1.0, 2.0]))

    def test_eps_range(self):
        with pytest.raises(ValueError):
            finite_difference_check(tsum, Tensor([1.0], dtype=np.float64), eps=0.5)

    def test_rejects_nondeterministic_function(self):
        state = {"calls": 0}

        def flaky(t):
            state["calls"] += 1
            return scale(tsum(t), 1.0 + 0.1 * state["calls"])

        with pytest.raises(OracleError):
            finite_difference_check(flaky, Tensor([1.0, 2.0], dtype=np.float64))
