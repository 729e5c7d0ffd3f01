"""Synthetic datasets for demos, smoke tests, and benchmarks.

Two generators are provided: sine waves whose class is the oscillation
frequency, and the six classic control-chart pattern classes (normal,
cyclic, increasing/decreasing trend, upward/downward shift) generated
from their standard equations.
"""

import numpy as np

from .data import TimeSeriesDataset
from .rng import gaussian, seeded_rng, uniform


def make_sine_dataset(num_per_class: int, t_len: int = 64,
                      freqs: tuple[float, ...] = (1.0, 2.0, 4.0),
                      noise_std: float = 0.1, seed: int = 0) -> TimeSeriesDataset:
    """Sine waves over one unit of time, one class per frequency.

    Each instance gets a uniform random phase plus additive Gaussian
    noise, so classes differ only in frequency.
    """
    rng = seeded_rng(seed)
    t = np.arange(t_len) / t_len
    rows, labels = [], []
    for class_id, freq in enumerate(freqs):
        for _ in range(num_per_class):
            phase = uniform(rng, 0.0, 2.0 * np.pi, ())
            series = np.sin(2.0 * np.pi * freq * t + phase)
            series = series + noise_std * gaussian(rng, (t_len,))
            rows.append(series.astype(np.float32))
            labels.append(class_id)
    x = np.stack(rows)[:, :, None]
    return TimeSeriesDataset(
        x=x,
        labels=np.array(labels, dtype=np.int64),
        label_names={str(i): i for i in range(len(freqs))},
    )


CONTROL_CHART_CLASSES = ("normal", "cyclic", "increasing", "decreasing",
                         "upward_shift", "downward_shift")


def make_control_chart_dataset(num_per_class: int, t_len: int = 60,
                               seed: int = 0) -> TimeSeriesDataset:
    """Six control-chart pattern classes from the classic generator.

    Baseline is 30 plus noise of amplitude 2; cyclic adds a sine with
    amplitude and period in [10, 15], trends add a slope in [0.2, 0.5],
    and shifts add a step of size [7.5, 20] starting between t/3 and
    2t/3.
    """
    rng = seeded_rng(seed)
    t = np.arange(t_len, dtype=np.float64)
    rows, labels = [], []
    for class_id, kind in enumerate(CONTROL_CHART_CLASSES):
        for _ in range(num_per_class):
            series = 30.0 + 2.0 * uniform(rng, -3.0, 3.0, (t_len,))
            if kind == "cyclic":
                amplitude = uniform(rng, 10.0, 15.0, ())
                period = uniform(rng, 10.0, 15.0, ())
                series = series + amplitude * np.sin(2.0 * np.pi * t / period)
            elif kind == "increasing":
                series = series + uniform(rng, 0.2, 0.5, ()) * t
            elif kind == "decreasing":
                series = series - uniform(rng, 0.2, 0.5, ()) * t
            elif kind == "upward_shift":
                start = int(uniform(rng, t_len / 3.0, 2.0 * t_len / 3.0, ()))
                series = series + uniform(rng, 7.5, 20.0, ()) * (t >= start)
            elif kind == "downward_shift":
                start = int(uniform(rng, t_len / 3.0, 2.0 * t_len / 3.0, ()))
                series = series - uniform(rng, 7.5, 20.0, ()) * (t >= start)
            rows.append(series.astype(np.float32))
            labels.append(class_id)
    x = np.stack(rows)[:, :, None]
    return TimeSeriesDataset(
        x=x,
        labels=np.array(labels, dtype=np.int64),
        label_names={str(i): i for i in range(len(CONTROL_CHART_CLASSES))},
    )
