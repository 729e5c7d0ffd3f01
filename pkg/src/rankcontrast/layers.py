"""Dense-array neural network primitives with explicit forward/backward passes.

Every operation is a pure function: it takes numpy arrays (plus a state
object where needed) and returns its output together with a cache for the
matching ``*_backward`` function. There is no autodiff graph; the model
module chains these calls by hand. Arrays stay in whatever float dtype
they arrive in, so training runs in float32 while gradient tests can use
float64.
"""

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import DimensionError, NumericError


def ensure_finite(arr: np.ndarray, context: str) -> None:
    """Raise NumericError if arr contains NaN or Inf."""
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {context}")


# ---------------------------------------------------------------------------
# 1-D convolution, "same" zero padding
# ---------------------------------------------------------------------------

def _same_padding(kernel_size: int) -> tuple[int, int]:
    # total padding K-1 keeps the time length; even kernels pad one extra
    # step on the right
    return (kernel_size - 1) // 2, kernel_size // 2


def conv1d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """Same-padded 1-D convolution (cross-correlation).

    Args:
        x: input of shape [B, C_in, T]
        weight: filters of shape [C_out, C_in, K]
        bias: per-filter offset of shape [C_out]

    Returns:
        (y, cache) with y of shape [B, C_out, T].
    """
    if x.ndim != 3 or weight.ndim != 3:
        raise DimensionError(f"conv1d expects 3-d input/weight, got {x.shape} / {weight.shape}")
    if weight.shape[1] != x.shape[1]:
        raise DimensionError(
            f"conv1d channel mismatch: weight C_in={weight.shape[1]}, input C_in={x.shape[1]}"
        )
    if bias.shape != (weight.shape[0],):
        raise DimensionError(f"conv1d bias shape {bias.shape} != ({weight.shape[0]},)")
    k = weight.shape[2]
    pad_l, pad_r = _same_padding(k)
    xp = np.pad(x, ((0, 0), (0, 0), (pad_l, pad_r)))
    # windows[b, c, t, k] = xp[b, c, t + k]
    windows = np.lib.stride_tricks.sliding_window_view(xp, k, axis=2)
    y = np.tensordot(windows, weight, axes=[(1, 3), (1, 2)])  # [B, T, C_out]
    y = np.ascontiguousarray(y.transpose(0, 2, 1)) + bias[None, :, None]
    return y, (xp, windows, weight, pad_l, x.shape)


def conv1d_backward(grad_y: np.ndarray, cache):
    """Gradients of conv1d w.r.t. input, weight, and bias."""
    xp, windows, weight, pad_l, x_shape = cache
    b, c_in, t = x_shape
    k = weight.shape[2]
    grad_b = grad_y.sum(axis=(0, 2))
    grad_w = np.tensordot(grad_y, windows, axes=[(0, 2), (0, 2)])  # [C_out, C_in, K]
    # scatter grad back through the sliding windows
    tmp = np.tensordot(grad_y, weight, axes=[(1,), (0,)])  # [B, T, C_in, K]
    grad_xp = np.zeros_like(xp)
    for kk in range(k):
        grad_xp[:, :, kk:kk + t] += tmp[:, :, :, kk].transpose(0, 2, 1)
    grad_x = grad_xp[:, :, pad_l:pad_l + t]
    return grad_x, grad_w, grad_b


# ---------------------------------------------------------------------------
# Batch normalization over (batch, time) per channel
# ---------------------------------------------------------------------------

@dataclass
class BatchNormState:
    """Learnable scale/shift plus running statistics for one BN layer."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    epsilon: float = 1e-5
    mode: str = "train"

    @classmethod
    def create(cls, channels: int, momentum: float = 0.1, epsilon: float = 1e-5,
               dtype=np.float32) -> "BatchNormState":
        return cls(
            gamma=np.ones(channels, dtype=dtype),
            beta=np.zeros(channels, dtype=dtype),
            running_mean=np.zeros(channels, dtype=dtype),
            running_var=np.ones(channels, dtype=dtype),
            momentum=momentum,
            epsilon=epsilon,
        )


def batchnorm1d(x: np.ndarray, state: BatchNormState):
    """Channel-wise batch normalization of a [B, C, T] tensor.

    Train mode normalizes with the current batch's population statistics
    and returns a state whose running stats were blended as
    running <- (1 - momentum) * running + momentum * batch.
    Eval mode applies the stored running statistics unchanged.

    Returns:
        (y, new_state, cache)
    """
    if x.ndim != 3:
        raise DimensionError(f"batchnorm1d expects [B, C, T], got {x.shape}")
    if x.shape[1] != state.gamma.shape[0]:
        raise DimensionError(
            f"batchnorm1d channel mismatch: input C={x.shape[1]}, state C={state.gamma.shape[0]}"
        )
    gamma = state.gamma[None, :, None]
    beta = state.beta[None, :, None]
    if state.mode == "train":
        n = x.shape[0] * x.shape[2]
        if n < 2:
            raise DimensionError("batchnorm1d: degenerate batch (B*T < 2) in train mode")
        mean = x.mean(axis=(0, 2))
        var = x.var(axis=(0, 2))
        inv_std = 1.0 / np.sqrt(var + state.epsilon)
        x_hat = (x - mean[None, :, None]) * inv_std[None, :, None]
        m = state.momentum
        new_state = replace(
            state,
            running_mean=((1.0 - m) * state.running_mean + m * mean).astype(state.running_mean.dtype),
            running_var=((1.0 - m) * state.running_var + m * var).astype(state.running_var.dtype),
        )
        cache = ("train", x, x_hat, inv_std, state.gamma, n)
    else:
        inv_std = 1.0 / np.sqrt(state.running_var + state.epsilon)
        x_hat = (x - state.running_mean[None, :, None]) * inv_std[None, :, None]
        new_state = state
        cache = ("eval", x, x_hat, inv_std, state.gamma, None)
    y = gamma * x_hat + beta
    return y, new_state, cache


def batchnorm1d_backward(grad_y: np.ndarray, cache):
    """Gradients of batchnorm1d w.r.t. input, gamma, and beta."""
    mode, x, x_hat, inv_std, gamma, n = cache
    grad_gamma = (grad_y * x_hat).sum(axis=(0, 2))
    grad_beta = grad_y.sum(axis=(0, 2))
    g = grad_y * gamma[None, :, None]
    if mode == "eval":
        grad_x = g * inv_std[None, :, None]
        return grad_x, grad_gamma, grad_beta
    # train mode: statistics depend on x
    inv = inv_std[None, :, None]
    sum_g = g.sum(axis=(0, 2), keepdims=True)
    sum_gx = (g * x_hat).sum(axis=(0, 2), keepdims=True)
    grad_x = (inv / n) * (n * g - sum_g - x_hat * sum_gx)
    return grad_x, grad_gamma, grad_beta


# ---------------------------------------------------------------------------
# Pointwise / pooling / dense
# ---------------------------------------------------------------------------

def relu(x: np.ndarray):
    """max(0, x); the gradient at exactly 0 is defined as 0."""
    y = np.maximum(x, 0)
    return y, (x > 0)


def relu_backward(grad_y: np.ndarray, cache):
    return grad_y * cache


def global_avg_pool(x: np.ndarray):
    """Mean over the time axis: [B, C, T] -> [B, C]."""
    if x.ndim != 3:
        raise DimensionError(f"global_avg_pool expects [B, C, T], got {x.shape}")
    return x.mean(axis=2), (x.shape[2],)


def global_avg_pool_backward(grad_y: np.ndarray, cache):
    (t,) = cache
    return np.repeat(grad_y[:, :, None], t, axis=2) / t


def dense(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """Affine map y = x @ weight.T + bias for x of shape [B, Din]."""
    if x.ndim != 2 or weight.ndim != 2:
        raise DimensionError(f"dense expects 2-d input/weight, got {x.shape} / {weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise DimensionError(
            f"dense shape mismatch: input Din={x.shape[1]}, weight Din={weight.shape[1]}"
        )
    if bias.shape != (weight.shape[0],):
        raise DimensionError(f"dense bias shape {bias.shape} != ({weight.shape[0]},)")
    y = x @ weight.T + bias
    return y, (x, weight)


def dense_backward(grad_y: np.ndarray, cache):
    x, weight = cache
    grad_x = grad_y @ weight
    grad_w = grad_y.T @ x
    grad_b = grad_y.sum(axis=0)
    return grad_x, grad_w, grad_b


def l2_normalize_rows(x: np.ndarray, epsilon: float = 1e-12):
    """Scale each row of x to (nearly) unit Euclidean norm.

    Rows are divided by (norm + epsilon), so near-zero rows stay finite
    and anything with norm well above epsilon lands on the unit sphere.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    norms = np.sqrt((x * x).sum(axis=1, keepdims=True))
    y = x / (norms + epsilon)
    return y, (x, norms, epsilon)


def l2_normalize_rows_backward(grad_y: np.ndarray, cache):
    x, norms, epsilon = cache
    denom = norms + epsilon
    dot = (grad_y * x).sum(axis=1, keepdims=True)
    safe_norms = np.maximum(norms, np.finfo(x.dtype).tiny)
    return grad_y / denom - x * (dot / (safe_norms * denom * denom))


# ---------------------------------------------------------------------------
# Adam with decoupled weight decay
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """Per-parameter Adam moments and hyperparameters."""

    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    learning_rate: float = 1e-4
    weight_decay: float = 5e-4

    @classmethod
    def for_param(cls, param: np.ndarray, learning_rate: float = 1e-4,
                  weight_decay: float = 5e-4, beta1: float = 0.9,
                  beta2: float = 0.999, epsilon: float = 1e-8) -> "AdamState":
        return cls(
            m=np.zeros_like(param),
            v=np.zeros_like(param),
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
            learning_rate=learning_rate,
            weight_decay=weight_decay,
        )


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState, name: str = "param"):
    """One Adam update with bias correction and decoupled weight decay.

    The decay is applied to the parameter before the moment update
    (param <- param - lr * wd * param), so with a zero gradient and zero
    decay the parameter is a fixed point.

    Returns:
        (new_param, new_state)
    """
    if grad.shape != param.shape:
        raise DimensionError(f"adam_step: grad shape {grad.shape} != param shape {param.shape} for {name}")
    if not np.all(np.isfinite(grad)):
        raise NumericError(f"non-finite gradient for parameter '{name}'")
    t = state.step_count + 1
    p = param - state.learning_rate * state.weight_decay * param
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * (grad * grad)
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    p = p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return p, replace(state, m=m, v=v, step_count=t)
