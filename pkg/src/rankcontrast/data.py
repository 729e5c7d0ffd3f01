"""Dataset loading, normalization, and batching.

Two file formats are supported:

* Delimited univariate files, one instance per line: a label token
  followed by T values, separated by tabs or commas. The token ``NaN``
  (any case) marks a missing value.
* JSON-lines multivariate files, one object per line:
  ``{"label": <string|number>, "series": [[v_1 ... v_T], ... F rows]}``.

Original labels are remapped to contiguous integers following the sorted
order of the distinct labels (numeric when every label parses as a
number, lexicographic otherwise). Z-score statistics are computed on a
training split and re-applied verbatim to the matching test split.
"""

import json
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import ConfigError, DataFormatError
from .rng import derive_seed, seeded_rng


@dataclass
class NormStats:
    """Per-variable z-score statistics (length F; F=1 for univariate)."""

    mean: np.ndarray
    std: np.ndarray


@dataclass
class TimeSeriesDataset:
    """N aligned instances of shape T x F with integer labels."""

    x: np.ndarray                     # [N, T, F] float32
    labels: np.ndarray                # [N] int64
    label_names: dict[str, int]       # original label -> contiguous id
    norm_stats: NormStats | None = None

    @property
    def num_instances(self) -> int:
        return self.x.shape[0]

    @property
    def num_timesteps(self) -> int:
        return self.x.shape[1]

    @property
    def num_features(self) -> int:
        return self.x.shape[2]

    @property
    def num_classes(self) -> int:
        return len(self.label_names)


def _remap_labels(tokens: list[str]) -> tuple[np.ndarray, dict[str, int]]:
    distinct = sorted(set(tokens))
    try:
        distinct.sort(key=float)
    except ValueError:
        pass  # non-numeric labels keep lexicographic order
    mapping = {name: i for i, name in enumerate(distinct)}
    return np.array([mapping[t] for t in tokens], dtype=np.int64), mapping


def load_delimited(path, delimiter: str = "auto") -> TimeSeriesDataset:
    """Load a univariate delimited file (label, then T values per line)."""
    with open(path, "r", encoding="utf-8") as fh:
        raw_lines = fh.read().splitlines()
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(raw_lines) if ln.strip()]
    if not lines:
        raise DataFormatError(f"{path}: empty dataset file")
    if delimiter == "auto":
        first = lines[0][1]
        delim = "\t" if "\t" in first else ("," if "," in first else None)
        if delim is None:
            raise DataFormatError(f"{path}: line 1: could not detect a tab or comma delimiter")
    elif delimiter in ("tab", "\t"):
        delim = "\t"
    elif delimiter in ("comma", ","):
        delim = ","
    else:
        raise ConfigError(f"unknown delimiter: {delimiter!r}")

    label_tokens: list[str] = []
    rows: list[np.ndarray] = []
    t_len = None
    for lineno, line in lines:
        tokens = [t for t in line.split(delim) if t != ""]
        if len(tokens) < 2:
            raise DataFormatError(f"{path}: line {lineno}: expected a label and at least one value")
        label = tokens[0]
        try:
            if np.isnan(float(label)):
                raise DataFormatError(f"{path}: line {lineno}: label token is NaN")
        except ValueError:
            pass  # non-numeric labels are fine
        try:
            values = np.array([float(t) for t in tokens[1:]], dtype=np.float32)
        except ValueError as exc:
            raise DataFormatError(f"{path}: line {lineno}: {exc}") from exc
        if t_len is None:
            t_len = len(values)
        elif len(values) != t_len:
            raise DataFormatError(
                f"{path}: line {lineno}: has {len(values)} values, expected {t_len}"
            )
        label_tokens.append(label)
        rows.append(values)
    labels, mapping = _remap_labels(label_tokens)
    x = np.stack(rows)[:, :, None]
    return TimeSeriesDataset(x=x, labels=labels, label_names=mapping)


def save_delimited(dataset: TimeSeriesDataset, path, delimiter: str = "\t") -> None:
    """Write a univariate dataset back out in the delimited format."""
    if dataset.num_features != 1:
        raise ConfigError("save_delimited handles univariate datasets only")
    id_to_name = {i: name for name, i in dataset.label_names.items()}
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(dataset.num_instances):
            values = dataset.x[i, :, 0]
            fields = [id_to_name[int(dataset.labels[i])]]
            fields += [repr(float(v)) for v in values]
            fh.write(delimiter.join(fields) + "\n")


def load_multivariate_jsonl(path) -> TimeSeriesDataset:
    """Load a JSON-lines multivariate file with uniform T and F."""
    label_tokens: list[str] = []
    instances: list[np.ndarray] = []
    t_len = f_len = None
    with open(path, "r", encoding="utf-8") as fh:
        raw_lines = fh.read().splitlines()
    numbered = [(i + 1, ln) for i, ln in enumerate(raw_lines) if ln.strip()]
    if not numbered:
        raise DataFormatError(f"{path}: empty dataset file")
    for lineno, line in numbered:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict) or "label" not in obj or "series" not in obj:
            raise DataFormatError(f"{path}: line {lineno}: object needs 'label' and 'series'")
        series = obj["series"]
        if not isinstance(series, list) or not series or not all(isinstance(v, list) for v in series):
            raise DataFormatError(f"{path}: line {lineno}: 'series' must be a list of variable rows")
        if f_len is None:
            f_len = len(series)
        elif len(series) != f_len:
            raise DataFormatError(
                f"{path}: line {lineno}: has {len(series)} variables, expected {f_len}"
            )
        lengths = {len(v) for v in series}
        if len(lengths) != 1:
            raise DataFormatError(f"{path}: line {lineno}: variables have differing lengths")
        t_here = lengths.pop()
        if t_len is None:
            t_len = t_here
        elif t_here != t_len:
            raise DataFormatError(
                f"{path}: line {lineno}: has {t_here} time steps, expected {t_len}"
            )
        try:
            arr = np.array(series, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise DataFormatError(f"{path}: line {lineno}: non-numeric value: {exc}") from exc
        instances.append(arr.T.astype(np.float32))  # [T, F]
        label_tokens.append(str(obj["label"]))
    labels, mapping = _remap_labels(label_tokens)
    return TimeSeriesDataset(x=np.stack(instances), labels=labels, label_names=mapping)


def save_multivariate_jsonl(dataset: TimeSeriesDataset, path) -> None:
    """Write a dataset in the JSON-lines format (values round-trip bitwise)."""
    id_to_name = {i: name for name, i in dataset.label_names.items()}
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(dataset.num_instances):
            series = [[float(v) for v in dataset.x[i, :, f]] for f in range(dataset.num_features)]
            obj = {"label": id_to_name[int(dataset.labels[i])], "series": series}
            fh.write(json.dumps(obj) + "\n")


def znormalize(dataset: TimeSeriesDataset, stats: NormStats | None = None) -> TimeSeriesDataset:
    """Z-score the dataset per variable (one global pair when F=1).

    Without ``stats`` the (population) mean/std are computed from this
    dataset, NaNs excluded; pass a training split's stored stats to
    normalize a test split identically. Zero variance is guarded by
    flooring std at 1e-8.
    """
    if stats is None:
        flat = dataset.x.reshape(-1, dataset.num_features).astype(np.float64)
        mean = np.nanmean(flat, axis=0)
        std = np.nanstd(flat, axis=0)
        stats = NormStats(mean=mean, std=std)
    denom = np.maximum(stats.std, 1e-8)
    x = ((dataset.x.astype(np.float64) - stats.mean) / denom).astype(np.float32)
    return replace(dataset, x=x, norm_stats=stats)


def clean_missing(dataset: TimeSeriesDataset) -> TimeSeriesDataset:
    """Replace non-finite values with 0 (the mean, post-normalization)."""
    x = np.nan_to_num(dataset.x, nan=0.0, posinf=0.0, neginf=0.0)
    return replace(dataset, x=x)


@dataclass
class BatchPlan:
    """Epoch-wise shuffled batching; the shuffle seed is rng_seed XOR epoch."""

    batch_size: int = 128
    rng_seed: int = 0
    drop_last: bool = False

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (the loss needs pairs)")


def batch_indices(num_instances: int, plan: BatchPlan, epoch: int) -> list[np.ndarray]:
    """Index lists for one epoch: a uniform shuffle cut into batches.

    The final short batch is kept unless drop_last; single-class batches
    are still emitted (the loss is simply 0 for them).
    """
    rng = seeded_rng(derive_seed(plan.rng_seed, epoch))
    perm = rng.permutation(num_instances)
    batches = [perm[i:i + plan.batch_size] for i in range(0, num_instances, plan.batch_size)]
    if plan.drop_last and batches and len(batches[-1]) < plan.batch_size:
        batches.pop()
    return batches
