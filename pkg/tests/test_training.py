"""Training loop behavior: learning signal, determinism, failure context."""

import numpy as np
import pytest

from rankcontrast.augment import AugmentConfig
from rankcontrast.data import BatchPlan, clean_missing, znormalize
from rankcontrast.exceptions import NumericError
from rankcontrast.model import EncoderConfig, init_model
from rankcontrast.synthetic import make_sine_dataset
from rankcontrast.training import train_encoder

SMALL = EncoderConfig(in_features=1, conv_channels=(16, 16, 16),
                      kernel_sizes=(8, 5, 3), repr_dim=16)


def sine_dataset(seed=0):
    return clean_missing(znormalize(make_sine_dataset(num_per_class=10, t_len=48,
                                                      noise_std=0.1, seed=seed)))


class TestTrainEncoder:
    def test_loss_decreases_over_fifty_epochs(self):
        dataset = sine_dataset()
        model = init_model(SMALL, seed=0)
        history = train_encoder(model, dataset, epochs=50,
                                batch_plan=BatchPlan(batch_size=30, rng_seed=0),
                                augment_config=AugmentConfig(rng_seed=0))
        assert history[-1].mean_loss < history[0].mean_loss

    def test_identical_seeds_identical_history(self):
        dataset = sine_dataset()
        losses = []
        for _ in range(2):
            model = init_model(SMALL, seed=4)
            history = train_encoder(model, dataset, epochs=3,
                                    batch_plan=BatchPlan(batch_size=16, rng_seed=4),
                                    augment_config=AugmentConfig(rng_seed=4))
            losses.append([h.mean_loss for h in history])
        assert losses[0] == losses[1]

    def test_nonfinite_loss_reports_epoch_and_batch(self):
        dataset = sine_dataset()
        model = init_model(SMALL, seed=0)
        # poison a weight so the forward pass explodes
        model.params["proj2.weight"] = model.params["proj2.weight"] * np.inf
        with np.errstate(invalid="ignore"):
            with pytest.raises(NumericError, match=r"epoch 0, batch 0"):
                train_encoder(model, dataset, epochs=1,
                              batch_plan=BatchPlan(batch_size=16, rng_seed=0),
                              augment_config=AugmentConfig(rng_seed=0))

    def test_adam_steps_advance_once_per_batch(self):
        dataset = sine_dataset()
        model = init_model(SMALL, seed=1)
        plan = BatchPlan(batch_size=10, rng_seed=1)
        train_encoder(model, dataset, epochs=2, batch_plan=plan,
                      augment_config=AugmentConfig(rng_seed=1))
        batches_per_epoch = int(np.ceil(dataset.num_instances / plan.batch_size))
        assert model.adam["conv1.weight"].step_count == 2 * batches_per_epoch
