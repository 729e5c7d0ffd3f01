"""Shared test oracles: finite differences and brute-force enumerations."""

import numpy as np


def numerical_gradient(f, x, h=1e-6):
    """Central-difference gradient of scalar f at x (same shape as x)."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = f(x)
        flat[i] = orig - h
        f_minus = f(x)
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def rel_error(a, b, zero_floor=1e-7):
    """Infinity-norm relative difference between two gradient arrays.

    When both arrays sit below ``zero_floor`` they are treated as equal:
    central differences bottom out around 1e-10 of the function scale,
    so comparing two numerically-zero gradients in relative terms would
    only measure that noise (e.g. conv biases under train-mode batch
    norm, whose true gradient is exactly zero).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0))
    if scale < zero_floor:
        return 0.0
    return float(np.abs(a - b).max(initial=0.0) / scale)


def brute_force_triplets(d, labels):
    """O(B^3) enumeration of (a, p, n) with d[a,n] < d[a,p], lexicographic."""
    b = len(labels)
    out = []
    for a in range(b):
        for p in range(b):
            if p == a or labels[p] != labels[a]:
                continue
            for n in range(b):
                if labels[n] == labels[a]:
                    continue
                if d[a, n] < d[a, p]:
                    out.append((a, p, n))
    return np.array(out, dtype=np.int64).reshape(-1, 3)


def brute_force_hard_rank(d, labels, a, p):
    """Direct count of negatives at distance <= d[a, p]."""
    count = 0
    for n in range(len(labels)):
        if labels[n] != labels[a] and d[a, n] <= d[a, p]:
            count += 1
    return count


def naive_distances(z):
    """O(B^2 D) double-loop Euclidean distances."""
    b = z.shape[0]
    d = np.zeros((b, b))
    for i in range(b):
        for j in range(b):
            d[i, j] = np.sqrt(((z[i] - z[j]) ** 2).sum())
    return d


def projected_gradient_svm(kernel, y, C, steps=4000, lr=None):
    """Independent dual solver: accelerated projected gradient ascent.

    Projection onto {0 <= a <= C, a . y = 0} is computed by bisection on
    the multiplier of the equality constraint (the projected constraint
    value is monotone in the multiplier).
    """
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    q = kernel * np.outer(y, y)
    if lr is None:
        lr = 1.0 / max(np.linalg.norm(q, 2), 1e-12)

    def project(a0):
        bracket = np.abs(a0).max(initial=0.0) + C + 1.0
        lo, hi = -bracket, bracket
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            if np.clip(a0 - mid * y, 0.0, C) @ y > 0:
                lo = mid
            else:
                hi = mid
        return np.clip(a0 - 0.5 * (lo + hi) * y, 0.0, C)

    alpha = np.zeros(n)
    momentum = alpha.copy()
    t_prev = 1.0
    for _ in range(steps):
        grad = 1.0 - q @ momentum
        alpha_next = project(momentum + lr * grad)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_prev * t_prev))
        momentum = alpha_next + ((t_prev - 1.0) / t_next) * (alpha_next - alpha)
        alpha, t_prev = alpha_next, t_next
    return project(alpha)
