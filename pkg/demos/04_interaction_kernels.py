"""Closed-form kernels as infinite Hadamard-power sums.

Run: python3 demos/04_interaction_kernels.py
"""

import numpy as np

from bridgepan import (
    exp_kernel,
    geo_kernel,
    interaction_space_dim,
    truncated_hadamard_series,
)
from bridgepan.tensor import Tensor

print("Interaction space dimensions C(d+k-1, k):")
for d in (2, 3, 4, 8):
    dims = [interaction_space_dim(d, k) for k in range(5)]
    print(f"  d={d}: k=0..4 -> {dims}")

print("\nGeometric kernel vs its truncated series at u = 0.8:")
u = Tensor(np.array([0.8]), dtype=np.float64)
closed = geo_kernel(u).data[0]
for order in (1, 5, 10, 20, 30):
    partial = truncated_hadamard_series(u, order, "geo").data[0]
    print(f"  K={order:2d}: partial {partial:.8f}, closed {closed:.8f}, "
          f"gap {abs(closed - partial):.2e}")

print("\nExponential kernel vs its series at u = 2.0:")
u = Tensor(np.array([2.0]), dtype=np.float64)
closed = exp_kernel(u).data[0]
for order in (2, 5, 10, 20):
    partial = truncated_hadamard_series(u, order, "exp").data[0]
    print(f"  K={order:2d}: partial {partial:.10f}, gap {abs(closed - partial):.2e}")
