"""The layer primitives and their hand-written backward passes.

Every layer returns (output, cache); the matching *_backward consumes an
upstream gradient plus that cache. We check one layer against central
finite differences, then let Adam minimize a tiny least-squares problem
to show the optimizer loop.
"""

import numpy as np

from rankcontrast import layers

rng = np.random.default_rng(0)

# --- forward shapes through a conv block -----------------------------------
x = rng.normal(size=(2, 3, 32))                    # [batch, channels, time]
w = rng.normal(size=(8, 3, 5)) * 0.2
b = np.zeros(8)
y, conv_cache = layers.conv1d(x, w, b)
print(f"conv1d keeps the time axis: {x.shape} -> {y.shape}")

bn = layers.BatchNormState.create(8, dtype=np.float64)
y_norm, bn, bn_cache = layers.batchnorm1d(y, bn)
y_act, relu_cache = layers.relu(y_norm)
pooled, pool_cache = layers.global_avg_pool(y_act)
print(f"after batch norm, ReLU, global average pool: {pooled.shape}")

# --- gradient check against finite differences -----------------------------
upstream = rng.normal(size=y.shape)
grad_x, grad_w, grad_b = layers.conv1d_backward(upstream, conv_cache)

def loss_at(weights):
    out, _ = layers.conv1d(x, weights, b)
    return (out * upstream).sum()

h = 1e-6
i = (4, 1, 2)
w_plus, w_minus = w.copy(), w.copy()
w_plus[i] += h
w_minus[i] -= h
fd = (loss_at(w_plus) - loss_at(w_minus)) / (2 * h)
print(f"\nconv weight gradient at {i}: analytic {grad_w[i]:+.8f}, "
      f"finite difference {fd:+.8f}")

# --- Adam on a toy least-squares problem ------------------------------------
target = rng.normal(size=(6, 4))
basis = rng.normal(size=(6, 3))
param = np.zeros((3, 4))
state = layers.AdamState.for_param(param, learning_rate=0.05, weight_decay=0.0)
print("\nAdam minimizing ||basis @ param - target||^2:")
for step in range(1, 301):
    residual = basis @ param - target
    grad = 2.0 * basis.T @ residual
    param, state = layers.adam_step(param, grad, state, name="toy")
    if step % 60 == 0:
        print(f"  step {step:3d}: loss {np.sum(residual ** 2):.6f}")
