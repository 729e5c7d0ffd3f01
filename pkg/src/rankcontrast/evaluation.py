"""Downstream evaluation: RBF-kernel SVM on frozen representations.

The binary solver is the simplified SMO scheme: sweep the training
points, pick a KKT-violating alpha, pair it with a random second index,
and solve the two-variable subproblem analytically. It terminates once
``max_passes`` consecutive sweeps change nothing (plus a hard sweep cap
as a safety net). Multiclass is one-vs-rest with the penalty C chosen by
stratified cross-validation on the training split over the grid
{1e-4 ... 1e4, inf}, where inf is realized as 1e8.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, ContractError, DimensionError
from .rng import seeded_rng

DEFAULT_C_GRID = tuple([10.0 ** i for i in range(-4, 5)] + [1e8])


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """K[i, j] = exp(-gamma * ||a_i - b_j||^2)."""
    if gamma <= 0:
        raise ConfigError("gamma must be > 0")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"rbf_kernel dim mismatch: {a.shape[1]} vs {b.shape[1]}")
    sq = ((a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :]
          - 2.0 * (a @ b.T))
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


@dataclass
class BinarySvm:
    """One trained binary machine, keeping its full training state."""

    x: np.ndarray          # training representations [N, D]
    y: np.ndarray          # labels in {-1, +1}
    alpha: np.ndarray      # dual variables [N]
    bias: float
    gamma: float
    C: float

    @property
    def support_mask(self) -> np.ndarray:
        return self.alpha > 1e-10

    @property
    def support_vectors(self) -> np.ndarray:
        return self.x[self.support_mask]

    @property
    def dual_coef(self) -> np.ndarray:
        """alpha_i * y_i restricted to the support vectors."""
        mask = self.support_mask
        return self.alpha[mask] * self.y[mask]


def decision_function(machine: BinarySvm, reps: np.ndarray) -> np.ndarray:
    """f(x) = sum_i alpha_i y_i K(x_i, x) + b."""
    if reps.shape[1] != machine.x.shape[1]:
        raise DimensionError(
            f"representation dim {reps.shape[1]} != training dim {machine.x.shape[1]}"
        )
    mask = machine.support_mask
    if not mask.any():
        return np.full(len(reps), machine.bias)
    k = rbf_kernel(reps, machine.x[mask], machine.gamma)
    return k @ (machine.alpha[mask] * machine.y[mask]) + machine.bias


def dual_objective(kernel: np.ndarray, y: np.ndarray, alpha: np.ndarray) -> float:
    """Soft-margin dual value W(alpha) = sum(alpha) - 0.5 a^T Q a."""
    q = kernel * np.outer(y, y)
    return float(alpha.sum() - 0.5 * alpha @ q @ alpha)


def _smo(kernel: np.ndarray, y: np.ndarray, C: float, tol: float,
         max_passes: int, seed: int, max_sweeps: int) -> tuple[np.ndarray, float]:
    """Simplified SMO on a precomputed kernel; returns (alpha, bias)."""
    n = len(y)
    rng = seeded_rng(seed)
    alpha = np.zeros(n)
    b = 0.0
    # decision values f(x_i), maintained incrementally
    f = np.zeros(n)
    passes = 0
    sweeps = 0
    while passes < max_passes and sweeps < max_sweeps:
        changed = 0
        for i in range(n):
            e_i = f[i] - y[i]
            r_i = y[i] * e_i
            if not ((r_i < -tol and alpha[i] < C) or (r_i > tol and alpha[i] > 0)):
                continue
            j = int(rng.integers(n - 1))
            if j >= i:
                j += 1
            e_j = f[j] - y[j]
            a_i_old, a_j_old = alpha[i], alpha[j]
            if y[i] != y[j]:
                lo, hi = max(0.0, a_j_old - a_i_old), min(C, C + a_j_old - a_i_old)
            else:
                lo, hi = max(0.0, a_i_old + a_j_old - C), min(C, a_i_old + a_j_old)
            if lo >= hi:
                continue
            eta = 2.0 * kernel[i, j] - kernel[i, i] - kernel[j, j]
            if eta >= 0:
                continue
            a_j = a_j_old - y[j] * (e_i - e_j) / eta
            a_j = min(hi, max(lo, a_j))
            if abs(a_j - a_j_old) < 1e-7 * (a_j + a_j_old + 1e-7):
                continue
            a_i = a_i_old + y[i] * y[j] * (a_j_old - a_j)
            d_i, d_j = a_i - a_i_old, a_j - a_j_old
            b1 = b - e_i - y[i] * d_i * kernel[i, i] - y[j] * d_j * kernel[i, j]
            b2 = b - e_j - y[i] * d_i * kernel[i, j] - y[j] * d_j * kernel[j, j]
            if 0 < a_i < C:
                b_new = b1
            elif 0 < a_j < C:
                b_new = b2
            else:
                b_new = 0.5 * (b1 + b2)
            alpha[i], alpha[j] = a_i, a_j
            f += y[i] * d_i * kernel[:, i] + y[j] * d_j * kernel[:, j] + (b_new - b)
            b = b_new
            changed += 1
        passes = passes + 1 if changed == 0 else 0
        sweeps += 1
    return alpha, b


def svm_fit_binary(reps: np.ndarray, y: np.ndarray, C: float, gamma: float,
                   tol: float = 1e-3, max_passes: int = 5, seed: int = 0,
                   max_sweeps: int = 500, kernel: np.ndarray | None = None) -> BinarySvm:
    """Train one binary soft-margin machine with labels in {-1, +1}."""
    reps = np.asarray(reps, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if set(np.unique(y)) != {-1.0, 1.0}:
        raise ContractError("svm_fit_binary needs both classes present as -1/+1")
    if C <= 0:
        raise ConfigError("C must be > 0")
    if kernel is None:
        kernel = rbf_kernel(reps, reps, gamma)
    alpha, b = _smo(kernel, y, float(C), tol, max_passes, seed, max_sweeps)
    return BinarySvm(x=reps, y=y, alpha=alpha, bias=b, gamma=gamma, C=float(C))


@dataclass
class SvmModel:
    """One-vs-rest multiclass model over contiguous class ids."""

    machines: list[BinarySvm]
    classes: np.ndarray
    gamma: float
    C: float
    cv_accuracy: dict = field(default_factory=dict)  # C value -> mean CV accuracy


def scale_gamma(reps: np.ndarray) -> float:
    """The 1 / (D * var(all entries)) heuristic, with a zero-variance guard."""
    reps = np.asarray(reps, dtype=np.float64)
    var = float(reps.var())
    return 1.0 / (reps.shape[1] * max(var, 1e-12))


def _stratified_folds(labels: np.ndarray, folds: int) -> np.ndarray:
    """Deterministic fold id per instance: round-robin within each class."""
    fold_of = np.zeros(len(labels), dtype=np.int64)
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        fold_of[idx] = np.arange(len(idx)) % folds
    return fold_of


def _fit_ovr(kernel: np.ndarray, reps: np.ndarray, labels: np.ndarray,
             classes: np.ndarray, C: float, gamma: float, tol: float,
             max_passes: int, seed: int, max_sweeps: int) -> list[BinarySvm]:
    machines = []
    for c in classes:
        y = np.where(labels == c, 1.0, -1.0)
        alpha, b = _smo(kernel, y, float(C), tol, max_passes, seed, max_sweeps)
        machines.append(BinarySvm(x=reps, y=y, alpha=alpha, bias=b, gamma=gamma, C=float(C)))
    return machines


def _ovr_decisions(machines: list[BinarySvm], kernel_rows: np.ndarray) -> np.ndarray:
    """Decision values from precomputed kernel rows [N_eval, N_train]."""
    cols = [kernel_rows @ (m.alpha * m.y) + m.bias for m in machines]
    return np.stack(cols, axis=1)


def svm_fit_select(train_reps: np.ndarray, train_labels: np.ndarray,
                   c_grid=DEFAULT_C_GRID, gamma: float | None = None,
                   folds: int = 5, tol: float = 1e-3, max_passes: int = 5,
                   seed: int = 0, max_sweeps: int = 500) -> SvmModel:
    """One-vs-rest SVM with C picked by stratified cross-validation.

    Ties in mean CV accuracy go to the smaller C. If the smallest class
    has fewer members than ``folds`` the fold count shrinks to that
    (minimum 2); if any class is a singleton, grid selection is skipped
    and C falls back to 1.
    """
    c_grid = sorted(float(c) for c in c_grid)
    if not c_grid:
        raise ConfigError("empty C grid")
    train_reps = np.asarray(train_reps, dtype=np.float64)
    train_labels = np.asarray(train_labels)
    classes = np.unique(train_labels)
    if gamma is None:
        gamma = scale_gamma(train_reps)

    kernel = rbf_kernel(train_reps, train_reps, gamma)
    min_class = min(np.count_nonzero(train_labels == c) for c in classes)
    cv_accuracy: dict[float, float] = {}

    if len(c_grid) == 1:
        best_c = c_grid[0]
    elif min_class < 2 or len(classes) < 2:
        best_c = 1.0
    else:
        eff_folds = max(2, min(folds, min_class))
        fold_of = _stratified_folds(train_labels, eff_folds)
        for c_val in c_grid:
            accs = []
            for f in range(eff_folds):
                tr = np.flatnonzero(fold_of != f)
                va = np.flatnonzero(fold_of == f)
                if len(np.unique(train_labels[tr])) < 2 or len(va) == 0:
                    continue
                machines = _fit_ovr(kernel[np.ix_(tr, tr)], train_reps[tr],
                                    train_labels[tr], classes, c_val, gamma,
                                    tol, max_passes, seed, max_sweeps)
                decisions = _ovr_decisions(machines, kernel[np.ix_(va, tr)])
                pred = classes[np.argmax(decisions, axis=1)]
                accs.append(float(np.mean(pred == train_labels[va])))
            cv_accuracy[c_val] = float(np.mean(accs)) if accs else 0.0
        best_c = c_grid[0]
        for c_val in c_grid[1:]:
            if cv_accuracy[c_val] > cv_accuracy[best_c]:
                best_c = c_val

    machines = _fit_ovr(kernel, train_reps, train_labels, classes, best_c,
                        gamma, tol, max_passes, seed, max_sweeps)
    return SvmModel(machines=machines, classes=classes, gamma=gamma, C=best_c,
                    cv_accuracy=cv_accuracy)


def predict(model: SvmModel, reps: np.ndarray) -> np.ndarray:
    """One-vs-rest argmax of decision values; ties pick the smaller class."""
    reps = np.asarray(reps, dtype=np.float64)
    decisions = np.stack([decision_function(m, reps) for m in model.machines], axis=1)
    return model.classes[np.argmax(decisions, axis=1)]


# ---------------------------------------------------------------------------
# Classification metrics
# ---------------------------------------------------------------------------

@dataclass
class MetricsReport:
    """Accuracy plus macro-averaged precision/recall/F1 with a per-class table."""

    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class: dict
    seeds: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "per_class": self.per_class,
            "seeds": self.seeds,
        }


def metrics(y_true, y_pred) -> MetricsReport:
    """Accuracy and macro precision/recall/F1 over classes present in y_true.

    Empty ratios (0/0) are defined as 0, so a class that is never
    predicted simply contributes zero precision.
    """
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ContractError(f"metrics: shape mismatch {y_true.shape} vs {y_pred.shape}")
    if len(y_true) == 0:
        raise ContractError("metrics: empty label vectors")
    accuracy = float(np.mean(y_true == y_pred))
    per_class = {}
    precisions, recalls, f1s = [], [], []
    for c in np.unique(y_true):
        tp = int(np.sum((y_pred == c) & (y_true == c)))
        fp = int(np.sum((y_pred == c) & (y_true != c)))
        fn = int(np.sum((y_pred != c) & (y_true == c)))
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall > 0 else 0.0)
        per_class[str(c)] = {"precision": precision, "recall": recall,
                             "f1": f1, "support": tp + fn}
        precisions.append(precision)
        recalls.append(recall)
        f1s.append(f1)
    return MetricsReport(
        accuracy=accuracy,
        macro_precision=float(np.mean(precisions)),
        macro_recall=float(np.mean(recalls)),
        macro_f1=float(np.mean(f1s)),
        per_class=per_class,
    )
