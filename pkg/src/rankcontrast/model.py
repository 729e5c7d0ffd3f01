"""Encoder and projection head built from the layer primitives.

The encoder is a 3-block fully convolutional network (conv -> batch norm
-> ReLU per block) followed by global average pooling and a dense layer
that produces the representation ``r`` used downstream. The projection
head (dense -> ReLU -> dense -> row normalization) maps ``r`` onto the
unit hypersphere during training only; inference consumes ``r``.

Checkpoints are a self-describing binary format: magic ``RSCL``, a
little-endian uint32 format version, a length-prefixed UTF-8 JSON
metadata block (architecture plus tensor order), then the raw float32
little-endian tensor blobs.
"""

import json
import struct
from dataclasses import dataclass, replace

import numpy as np

from . import layers
from .exceptions import CheckpointError, ConfigError, DimensionError, NumericError
from .layers import AdamState, BatchNormState
from .rng import seeded_rng, uniform

CHECKPOINT_MAGIC = b"RSCL"
CHECKPOINT_VERSION = 1


@dataclass
class EncoderConfig:
    """Architecture hyperparameters for the encoder and projection head."""

    in_features: int
    conv_channels: tuple[int, ...] = (128, 256, 128)
    kernel_sizes: tuple[int, ...] = (8, 5, 3)
    repr_dim: int = 320
    # with repr_dense=False the representation is the pooled conv output
    # itself and repr_dim is ignored
    repr_dense: bool = True

    def __post_init__(self):
        self.conv_channels = tuple(int(c) for c in self.conv_channels)
        self.kernel_sizes = tuple(int(k) for k in self.kernel_sizes)
        if self.in_features < 1:
            raise ConfigError("in_features must be >= 1")
        if len(self.conv_channels) != len(self.kernel_sizes):
            raise ConfigError("conv_channels and kernel_sizes must have equal length")
        if len(self.conv_channels) == 0:
            raise ConfigError("at least one conv block is required")
        if any(c < 1 for c in self.conv_channels) or any(k < 1 for k in self.kernel_sizes):
            raise ConfigError("conv channels and kernel sizes must be positive")
        if self.repr_dim < 1:
            raise ConfigError("repr_dim must be >= 1")

    @property
    def output_dim(self) -> int:
        return self.repr_dim if self.repr_dense else self.conv_channels[-1]


@dataclass
class EmbeddingBatch:
    """Projected embeddings with their labels.

    ``z`` rows are unit-norm; ``r`` holds the pre-projection
    representations when available (augmented rows exist only in
    embedding space, so expanded batches carry ``r=None``).
    """

    z: np.ndarray
    labels: np.ndarray
    is_augmented: np.ndarray
    r: np.ndarray | None = None


@dataclass
class ModelState:
    """All trainable state: parameters, BN statistics, Adam moments."""

    config: EncoderConfig
    params: dict[str, np.ndarray]
    bn: list[BatchNormState]
    adam: dict[str, AdamState]
    rng_seed: int
    dtype: np.dtype = np.dtype(np.float32)

    def parameter_names(self) -> list[str]:
        """Deterministic parameter order used by init, Adam, and checkpoints."""
        names = []
        for i in range(len(self.config.conv_channels)):
            names += [f"conv{i + 1}.weight", f"conv{i + 1}.bias",
                      f"bn{i + 1}.gamma", f"bn{i + 1}.beta"]
        if self.config.repr_dense:
            names += ["repr.weight", "repr.bias"]
        names += ["proj1.weight", "proj1.bias", "proj2.weight", "proj2.bias"]
        return names

    def get_param(self, name: str) -> np.ndarray:
        if name.startswith("bn"):
            idx, attr = _split_bn_name(name)
            return getattr(self.bn[idx], attr)
        return self.params[name]

    def set_param(self, name: str, value: np.ndarray) -> None:
        if name.startswith("bn"):
            idx, attr = _split_bn_name(name)
            self.bn[idx] = replace(self.bn[idx], **{attr: value})
        else:
            self.params[name] = value


def _split_bn_name(name: str):
    block, attr = name.split(".")
    return int(block[2:]) - 1, attr


def init_model(config: EncoderConfig, seed: int, dtype=np.float32,
               learning_rate: float = 1e-4, weight_decay: float = 5e-4) -> ModelState:
    """Create a freshly initialized model.

    Weights and biases are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in))
    in a fixed parameter order from a PCG64 stream seeded with ``seed``,
    so identical (config, seed) pairs give bitwise-identical states.
    BatchNorm starts at gamma=1, beta=0 with zeroed running mean and unit
    running variance; Adam moments start at zero.
    """
    rng = seeded_rng(seed)
    dtype = np.dtype(dtype)
    params: dict[str, np.ndarray] = {}
    bn: list[BatchNormState] = []

    def draw(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return uniform(rng, -bound, bound, shape, dtype=dtype)

    c_prev = config.in_features
    for i, (c_out, k) in enumerate(zip(config.conv_channels, config.kernel_sizes)):
        fan_in = c_prev * k
        params[f"conv{i + 1}.weight"] = draw((c_out, c_prev, k), fan_in)
        params[f"conv{i + 1}.bias"] = draw((c_out,), fan_in)
        bn.append(BatchNormState.create(c_out, dtype=dtype))
        c_prev = c_out

    d = config.output_dim
    if config.repr_dense:
        params["repr.weight"] = draw((config.repr_dim, c_prev), c_prev)
        params["repr.bias"] = draw((config.repr_dim,), c_prev)
    params["proj1.weight"] = draw((d, d), d)
    params["proj1.bias"] = draw((d,), d)
    params["proj2.weight"] = draw((d, d), d)
    params["proj2.bias"] = draw((d,), d)

    model = ModelState(config=config, params=params, bn=bn, adam={},
                       rng_seed=int(seed), dtype=dtype)
    for name in model.parameter_names():
        model.adam[name] = AdamState.for_param(
            model.get_param(name), learning_rate=learning_rate, weight_decay=weight_decay)
    return model


def parameter_count(model: ModelState) -> int:
    return sum(model.get_param(n).size for n in model.parameter_names())


def check_input_features(model: ModelState, num_features: int) -> None:
    """Reject a feature-count mismatch before any inference runs."""
    if num_features != model.config.in_features:
        raise DimensionError(
            f"model expects {model.config.in_features} input feature(s), dataset has {num_features}"
        )


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

def encode_forward(model: ModelState, x: np.ndarray, train: bool):
    """Run the encoder, returning (r, caches, updated_bn_states).

    ``x`` has shape [B, F, T]. The caller decides whether to commit the
    returned BN states (train mode) or discard them (eval mode).
    """
    if x.ndim != 3:
        raise DimensionError(f"encode expects [B, F, T], got {x.shape}")
    check_input_features(model, x.shape[1])
    if np.isnan(x).any():
        raise NumericError("encode input contains NaN; clean the dataset first")
    mode = "train" if train else "eval"
    caches = []
    new_bn = []
    h = x
    for i in range(len(model.config.conv_channels)):
        h, conv_cache = layers.conv1d(h, model.params[f"conv{i + 1}.weight"],
                                      model.params[f"conv{i + 1}.bias"])
        h, bn_state, bn_cache = layers.batchnorm1d(h, replace(model.bn[i], mode=mode))
        new_bn.append(replace(bn_state, mode="train"))
        h, relu_cache = layers.relu(h)
        caches.append((conv_cache, bn_cache, relu_cache))
    pooled, pool_cache = layers.global_avg_pool(h)
    if model.config.repr_dense:
        r, repr_cache = layers.dense(pooled, model.params["repr.weight"], model.params["repr.bias"])
    else:
        r, repr_cache = pooled, None
    caches.append((pool_cache, repr_cache))
    return r, caches, new_bn


def encode_backward(model: ModelState, grad_r: np.ndarray, caches):
    """Backprop through the encoder; returns (grad_x, param_grads)."""
    grads: dict[str, np.ndarray] = {}
    pool_cache, repr_cache = caches[-1]
    if model.config.repr_dense:
        g, grads["repr.weight"], grads["repr.bias"] = layers.dense_backward(grad_r, repr_cache)
    else:
        g = grad_r
    g = layers.global_avg_pool_backward(g, pool_cache)
    for i in reversed(range(len(model.config.conv_channels))):
        conv_cache, bn_cache, relu_cache = caches[i]
        g = layers.relu_backward(g, relu_cache)
        g, grads[f"bn{i + 1}.gamma"], grads[f"bn{i + 1}.beta"] = layers.batchnorm1d_backward(g, bn_cache)
        g, grads[f"conv{i + 1}.weight"], grads[f"conv{i + 1}.bias"] = layers.conv1d_backward(g, conv_cache)
    return g, grads


def encode(model: ModelState, x: np.ndarray, mode: str = "eval") -> np.ndarray:
    """Map raw series [B, F, T] to representations [B, D].

    Train mode commits updated BatchNorm running statistics to ``model``;
    eval mode is a pure function of the stored state.
    """
    if mode not in ("train", "eval"):
        raise ConfigError(f"unknown encode mode: {mode!r}")
    r, _, new_bn = encode_forward(model, x, train=(mode == "train"))
    if mode == "train":
        model.bn = new_bn
    return r


def project_forward(model: ModelState, r: np.ndarray):
    """Projection head: dense -> ReLU -> dense -> row normalization."""
    h, c1 = layers.dense(r, model.params["proj1.weight"], model.params["proj1.bias"])
    h, c2 = layers.relu(h)
    h, c3 = layers.dense(h, model.params["proj2.weight"], model.params["proj2.bias"])
    z, c4 = layers.l2_normalize_rows(h)
    return z, (c1, c2, c3, c4)


def project_backward(model: ModelState, grad_z: np.ndarray, caches):
    c1, c2, c3, c4 = caches
    grads: dict[str, np.ndarray] = {}
    g = layers.l2_normalize_rows_backward(grad_z, c4)
    g, grads["proj2.weight"], grads["proj2.bias"] = layers.dense_backward(g, c3)
    g = layers.relu_backward(g, c2)
    g, grads["proj1.weight"], grads["proj1.bias"] = layers.dense_backward(g, c1)
    return g, grads


def project(model: ModelState, r: np.ndarray) -> np.ndarray:
    """Unit-norm training embeddings z for representations r."""
    z, _ = project_forward(model, r)
    return z


# ---------------------------------------------------------------------------
# Checkpoint serialization
# ---------------------------------------------------------------------------

def _tensor_entries(model: ModelState):
    """All tensors in serialization order: params, BN stats, Adam moments."""
    entries = []
    for name in model.parameter_names():
        entries.append((name, model.get_param(name)))
    for i, bn in enumerate(model.bn):
        entries.append((f"bn{i + 1}.running_mean", bn.running_mean))
        entries.append((f"bn{i + 1}.running_var", bn.running_var))
    for name in model.parameter_names():
        entries.append((f"adam.{name}.m", model.adam[name].m))
        entries.append((f"adam.{name}.v", model.adam[name].v))
    return entries


def save_checkpoint(model: ModelState, path, norm_stats: dict | None = None) -> None:
    """Write the model to ``path`` in the RSCL binary format.

    Only float32 states are serializable (the blob format is 32-bit);
    the round trip is bitwise lossless. ``norm_stats`` (an optional JSON
    dict of the training split's z-score statistics) rides along in the
    metadata block so the encode stage can preprocess identically.
    """
    if model.dtype != np.dtype(np.float32):
        raise CheckpointError(f"checkpoints store float32 tensors; model dtype is {model.dtype}")
    entries = _tensor_entries(model)
    meta = {
        "config": {
            "in_features": model.config.in_features,
            "conv_channels": list(model.config.conv_channels),
            "kernel_sizes": list(model.config.kernel_sizes),
            "repr_dim": model.config.repr_dim,
            "repr_dense": model.config.repr_dense,
        },
        "rng_seed": model.rng_seed,
        "bn": [{"momentum": bn.momentum, "epsilon": bn.epsilon} for bn in model.bn],
        "adam": {
            name: {
                "step_count": st.step_count,
                "beta1": st.beta1,
                "beta2": st.beta2,
                "epsilon": st.epsilon,
                "learning_rate": st.learning_rate,
                "weight_decay": st.weight_decay,
            }
            for name, st in model.adam.items()
        },
        "tensors": [{"name": name, "shape": list(arr.shape)} for name, arr in entries],
    }
    if norm_stats is not None:
        meta["norm_stats"] = norm_stats
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        for _, arr in entries:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> ModelState:
    """Read a checkpoint, validating magic, version, and tensor shapes."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("bad magic: not a RSCL checkpoint file")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"bad version: unsupported checkpoint version {version}")
    (meta_len,) = struct.unpack("<I", blob[8:12])
    if len(blob) < 12 + meta_len:
        raise CheckpointError("bad metadata: file truncated inside metadata block")
    try:
        meta = json.loads(blob[12:12 + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"bad metadata: {exc}") from exc

    for key in ("config", "rng_seed", "bn", "adam", "tensors"):
        if key not in meta:
            raise CheckpointError(f"bad metadata: missing field '{key}'")
    cfg_meta = meta["config"]
    try:
        config = EncoderConfig(
            in_features=cfg_meta["in_features"],
            conv_channels=tuple(cfg_meta["conv_channels"]),
            kernel_sizes=tuple(cfg_meta["kernel_sizes"]),
            repr_dim=cfg_meta["repr_dim"],
            repr_dense=cfg_meta.get("repr_dense", True),
        )
    except (KeyError, ConfigError) as exc:
        raise CheckpointError(f"bad config: {exc}") from exc

    offset = 12 + meta_len
    tensors: dict[str, np.ndarray] = {}
    for entry in meta["tensors"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape)) * 4 if shape else 4
        if offset + nbytes > len(blob):
            raise CheckpointError(f"bad tensor '{entry['name']}': file truncated")
        arr = np.frombuffer(blob[offset:offset + nbytes], dtype="<f4").reshape(shape).copy()
        tensors[entry["name"]] = arr
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError("bad tensors: trailing bytes after declared tensor list")

    model = ModelState(config=config, params={}, bn=[], adam={},
                       rng_seed=int(meta["rng_seed"]), dtype=np.dtype(np.float32))
    n_blocks = len(config.conv_channels)
    for i in range(n_blocks):
        bn_meta = meta["bn"][i]
        model.bn.append(BatchNormState(
            gamma=_take(tensors, f"bn{i + 1}.gamma", (config.conv_channels[i],)),
            beta=_take(tensors, f"bn{i + 1}.beta", (config.conv_channels[i],)),
            running_mean=_take(tensors, f"bn{i + 1}.running_mean", (config.conv_channels[i],)),
            running_var=_take(tensors, f"bn{i + 1}.running_var", (config.conv_channels[i],)),
            momentum=bn_meta["momentum"],
            epsilon=bn_meta["epsilon"],
        ))
    expected = _expected_param_shapes(config)
    for name, shape in expected.items():
        if name.startswith("bn"):
            continue
        model.params[name] = _take(tensors, name, shape)
    for name in model.parameter_names():
        st_meta = meta["adam"].get(name)
        if st_meta is None:
            raise CheckpointError(f"bad adam state: missing moments for '{name}'")
        shape = model.get_param(name).shape
        model.adam[name] = AdamState(
            m=_take(tensors, f"adam.{name}.m", shape),
            v=_take(tensors, f"adam.{name}.v", shape),
            step_count=int(st_meta["step_count"]),
            beta1=st_meta["beta1"],
            beta2=st_meta["beta2"],
            epsilon=st_meta["epsilon"],
            learning_rate=st_meta["learning_rate"],
            weight_decay=st_meta["weight_decay"],
        )
    return model


def load_checkpoint_norm_stats(path) -> dict | None:
    """Read the optional normalization statistics stored in a checkpoint."""
    with open(path, "rb") as fh:
        blob = fh.read(12)
        if len(blob) < 12 or blob[:4] != CHECKPOINT_MAGIC:
            raise CheckpointError("bad magic: not a RSCL checkpoint file")
        (meta_len,) = struct.unpack("<I", blob[8:12])
        meta_bytes = fh.read(meta_len)
    if len(meta_bytes) != meta_len:
        raise CheckpointError("bad metadata: file truncated inside metadata block")
    try:
        meta = json.loads(meta_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"bad metadata: {exc}") from exc
    return meta.get("norm_stats")


def _take(tensors: dict, name: str, shape: tuple) -> np.ndarray:
    if name not in tensors:
        raise CheckpointError(f"bad tensor list: missing tensor '{name}'")
    arr = tensors[name]
    if arr.shape != tuple(shape):
        raise CheckpointError(f"bad shape for '{name}': got {arr.shape}, expected {tuple(shape)}")
    return arr


def _expected_param_shapes(config: EncoderConfig) -> dict[str, tuple]:
    shapes: dict[str, tuple] = {}
    c_prev = config.in_features
    for i, (c_out, k) in enumerate(zip(config.conv_channels, config.kernel_sizes)):
        shapes[f"conv{i + 1}.weight"] = (c_out, c_prev, k)
        shapes[f"conv{i + 1}.bias"] = (c_out,)
        shapes[f"bn{i + 1}.gamma"] = (c_out,)
        shapes[f"bn{i + 1}.beta"] = (c_out,)
        c_prev = c_out
    d = config.output_dim
    if config.repr_dense:
        shapes["repr.weight"] = (config.repr_dim, c_prev)
        shapes["repr.bias"] = (config.repr_dim,)
    shapes["proj1.weight"] = (d, d)
    shapes["proj1.bias"] = (d,)
    shapes["proj2.weight"] = (d, d)
    shapes["proj2.bias"] = (d,)
    return shapes
