"""Training loop: encode, project, augment, rank loss, backprop, Adam.

One epoch shuffles the dataset into batches; each batch runs the full
forward chain, backpropagates the exact loss gradient to every
parameter, and applies one Adam step per parameter in a fixed order.
Given the model seed, batch seed, and augmentation seed the whole run is
deterministic.
"""

import time
from dataclasses import dataclass, replace

import numpy as np

from .augment import AugmentConfig, expand_backward, expand_batch
from .data import BatchPlan, TimeSeriesDataset, batch_indices
from .exceptions import NumericError
from .layers import adam_step
from .model import ModelState, encode_backward, encode_forward, project_backward, project_forward
from .rankloss import RankLossConfig, rank_loss
from .rng import derive_seed, seeded_rng


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    wall_time: float


def train_step(model: ModelState, x_batch: np.ndarray, labels: np.ndarray,
               augment_config: AugmentConfig, loss_config: RankLossConfig,
               rng) -> float:
    """One optimization step on a [B, F, T] batch; returns the batch loss."""
    r, enc_caches, new_bn = encode_forward(model, x_batch, train=True)
    model.bn = new_bn
    z, proj_caches = project_forward(model, r)
    emb, aug_cache = expand_batch(z, labels, augment_config, rng, with_cache=True)
    result = rank_loss(emb.z, emb.labels, loss_config)
    if not np.isfinite(result.loss):
        raise NumericError("non-finite loss")
    grad_z = expand_backward(result.grad_z, aug_cache)
    grad_r, proj_grads = project_backward(model, grad_z, proj_caches)
    _, enc_grads = encode_backward(model, grad_r, enc_caches)
    grads = {**enc_grads, **proj_grads}
    for name in model.parameter_names():
        new_param, new_state = adam_step(model.get_param(name), grads[name],
                                         model.adam[name], name)
        model.set_param(name, new_param)
        model.adam[name] = new_state
    return result.loss


def train_encoder(model: ModelState, dataset: TimeSeriesDataset, epochs: int,
                  batch_plan: BatchPlan, augment_config: AugmentConfig,
                  loss_config: RankLossConfig | None = None,
                  log=None) -> list[EpochStats]:
    """Train in place for ``epochs`` epochs; returns per-epoch statistics.

    The augmentation PRNG for global batch index i is seeded with
    augment_config.rng_seed XOR i, so reruns are bitwise identical.
    """
    if loss_config is None:
        loss_config = RankLossConfig()
    # the per-pair rank tables are test/analysis output; skip them here
    loss_config = replace(loss_config, compute_ranks=False)
    x_all = np.ascontiguousarray(dataset.x.transpose(0, 2, 1))  # [N, F, T]
    history: list[EpochStats] = []
    global_batch = 0
    for epoch in range(epochs):
        start = time.perf_counter()
        losses = []
        for batch_no, idx in enumerate(batch_indices(dataset.num_instances, batch_plan, epoch)):
            rng = seeded_rng(derive_seed(augment_config.rng_seed, global_batch))
            try:
                losses.append(train_step(model, x_all[idx], dataset.labels[idx],
                                         augment_config, loss_config, rng))
            except NumericError as exc:
                raise NumericError(f"{exc} (epoch {epoch}, batch {batch_no})") from exc
            global_batch += 1
        stats = EpochStats(epoch=epoch, mean_loss=float(np.mean(losses)),
                           wall_time=time.perf_counter() - start)
        history.append(stats)
        if log is not None:
            log(stats)
    return history
