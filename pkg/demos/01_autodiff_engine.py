"""Tour of the tape-based autodiff engine: ops, gradients, and the PRNG.

Run: python3 demos/01_autodiff_engine.py
"""

import numpy as np

from bridgepan import Prng, Tensor, conv2d, mat_inverse, matmul

print("== elementwise ops build a tape and backward() fills gradients ==")
x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
loss = (x * x).sum()
loss.backward()
print("d/dx sum(x^2) at [1,2,3] ->", x.grad, "(expected [2,4,6])")

print("\n== matmul gradients follow dA = dC.B^T ==")
a = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
b = Tensor(np.ones((3, 2)))
matmul(a, b).sum().backward()
print("grad of sum(A.B) wrt A:\n", a.grad)

print("\n== convolution: a 3x3 averaging kernel preserves constants ==")
img = Tensor(np.full((1, 1, 6, 6), 0.7, dtype=np.float32))
kernel = Tensor(np.full((1, 1, 3, 3), 1.0 / 9.0, dtype=np.float32))
out = conv2d(img, kernel)
print("output of averaging a constant 0.7 image:", out.data[0, 0, 0, 0])

print("\n== matrix inverse with the product rule ==")
m = Tensor([[2.0, 0.0], [0.0, 4.0]], requires_grad=True)
inv = mat_inverse(m)
print("inverse of diag(2,4):\n", inv.data)
inv.sum().backward()
print("grad of sum(A^-1) wrt A:\n", m.grad)

print("\n== seedable pseudo-random numbers ==")
g1 = Prng(42).gaussian((5,))
g2 = Prng(42).gaussian((5,))
print("same seed, same stream:", np.array_equal(g1, g2))
z = Prng(7).gaussian((100_000,), dtype=np.float64)
print(f"gaussian moments over 1e5 draws: mean {z.mean():+.4f}, var {z.var():.4f}")
