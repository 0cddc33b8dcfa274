"""Tour of the tensor/tape machinery and the finite-difference oracle.

Run:  python demos/01_autograd_and_gradient_checking.py
"""
import numpy as np

from foodvision.autograd import (
    Tape, Tensor, backward, finite_difference_check, matmul, mul, parameter, tsum,
)
from foodvision.layers import Conv2dParams, conv2d, relu, softmax_cross_entropy

rng = np.random.default_rng(0)

# --- a tiny graph: loss = sum((A @ x) * (A @ x)) -------------------------
A = Tensor(rng.normal(size=(3, 3)), dtype=np.float64)

with Tape() as tape:
    x = Tensor(rng.normal(size=(3, 3)), requires_grad=True, dtype=np.float64)
    y = matmul(A, x)
    loss = tsum(mul(y, y))
backward(loss, tape)
print("loss:", loss.item())
print("dL/dx (first row):", x.grad[0])

# the same gradient, from central finite differences
err = finite_difference_check(
    lambda t: tsum(mul(matmul(A, t), matmul(A, t))),
    Tensor(rng.normal(size=(3, 3)), dtype=np.float64))
print(f"matmul graph, max relative FD error: {err:.2e}")

# --- the oracle applied to a conv -> relu -> cross-entropy chain ---------
conv = Conv2dParams(parameter(rng.normal(size=(4, 3, 3, 3)), dtype=np.float64),
                    parameter(rng.normal(size=4), dtype=np.float64),
                    stride=1, padding=1)
labels = rng.integers(0, 4, size=2)


def conv_xent_loss(t):
    fmap = relu(conv2d(t, conv))
    from foodvision.layers import global_avg_pool
    logits = global_avg_pool(fmap)
    loss, _ = softmax_cross_entropy(logits, labels)
    return loss


err = finite_difference_check(conv_xent_loss,
                              Tensor(rng.normal(size=(2, 3, 6, 6)), dtype=np.float64))
print(f"conv/relu/xent chain, max relative FD error: {err:.2e}")

# --- gradients accumulate across fan-out ---------------------------------
# (this is what makes skip connections work: both consumers contribute)
with Tape() as tape:
    x = Tensor([1.0, 2.0], requires_grad=True, dtype=np.float64)
    loss = tsum(mul(x, x))  # x used twice
backward(loss, tape)
print("fan-out gradient (2x each):", x.grad)
