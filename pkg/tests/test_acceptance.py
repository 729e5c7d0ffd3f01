"""Acceptance suite: ten criteria, each printed as one pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as
they complete. The end-to-end criteria (5-7) train real pipelines and
take a few minutes each; the whole module finishes well inside the
stated runtime budgets on a desktop CPU.
"""

import time

import numpy as np
import pytest

from rankcontrast import layers
from rankcontrast.cli import build_config, cmd_pipeline
from rankcontrast.data import save_delimited
from rankcontrast.evaluation import (decision_function, dual_objective,
                                     metrics, rbf_kernel, scale_gamma,
                                     svm_fit_binary)
from rankcontrast.model import (EncoderConfig, encode, init_model,
                                load_checkpoint, save_checkpoint)
from rankcontrast.rankloss import (DistanceMatrix, hard_rank,
                                   pairwise_distances, rank_loss, soft_rank,
                                   valid_triplets)
from rankcontrast.synthetic import make_control_chart_dataset, make_sine_dataset

from helpers import (brute_force_hard_rank, brute_force_triplets,
                     numerical_gradient, projected_gradient_svm, rel_error)
from test_model import TINY, full_composition_grads, full_composition_loss


def report(number, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}"
    print(line)
    assert passed, line


@pytest.fixture(scope="module")
def control_chart_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("control_charts")
    save_delimited(make_control_chart_dataset(num_per_class=100, t_len=60, seed=7),
                   root / "train.tsv")
    save_delimited(make_control_chart_dataset(num_per_class=50, t_len=60, seed=8),
                   root / "test.tsv")
    return root


@pytest.fixture(scope="module")
def sine_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("sine")
    save_delimited(make_sine_dataset(num_per_class=20, t_len=64, noise_std=0.1, seed=100),
                   root / "train.tsv")
    save_delimited(make_sine_dataset(num_per_class=20, t_len=64, noise_std=0.1, seed=200),
                   root / "test.tsv")
    return root


def test_criterion_1_gradient_suite():
    start = time.time()
    rng = np.random.default_rng(0)
    worst = 0.0

    # individual layers at 64-bit, shapes <= 4x4x8, rel err < 1e-6
    x = rng.normal(size=(3, 2, 8))
    w = rng.normal(size=(4, 2, 3))
    b = rng.normal(size=4)
    up = rng.normal(size=(3, 4, 8))
    _, cache = layers.conv1d(x, w, b)
    gx, gw, gb = layers.conv1d_backward(up, cache)
    worst = max(worst,
                rel_error(gx, numerical_gradient(lambda v: (layers.conv1d(v, w, b)[0] * up).sum(), x)),
                rel_error(gw, numerical_gradient(lambda v: (layers.conv1d(x, v, b)[0] * up).sum(), w)),
                rel_error(gb, numerical_gradient(lambda v: (layers.conv1d(x, w, v)[0] * up).sum(), b)))

    bn_state = layers.BatchNormState.create(2, dtype=np.float64)
    bn_state.gamma[:] = rng.normal(size=2)
    bn_state.beta[:] = rng.normal(size=2)
    _, _, bn_cache = layers.batchnorm1d(x, bn_state)
    gx, ggamma, gbeta = layers.batchnorm1d_backward(up[:, :2], bn_cache)

    def bn_run(v):
        y, _, _ = layers.batchnorm1d(v, bn_state)
        return (y * up[:, :2]).sum()

    worst = max(worst, rel_error(gx, numerical_gradient(bn_run, x)))

    xd = rng.normal(size=(4, 4))
    wd = rng.normal(size=(3, 4))
    bd = rng.normal(size=3)
    upd = rng.normal(size=(4, 3))
    _, cache = layers.dense(xd, wd, bd)
    gx, gw, gb = layers.dense_backward(upd, cache)
    worst = max(worst,
                rel_error(gx, numerical_gradient(lambda v: (layers.dense(v, wd, bd)[0] * upd).sum(), xd)),
                rel_error(gw, numerical_gradient(lambda v: (layers.dense(xd, v, bd)[0] * upd).sum(), wd)))

    xn = rng.normal(size=(4, 4))
    upn = rng.normal(size=(4, 4))
    _, cache = layers.l2_normalize_rows(xn)
    gx = layers.l2_normalize_rows_backward(upn, cache)
    worst = max(worst, rel_error(gx, numerical_gradient(
        lambda v: (layers.l2_normalize_rows(v)[0] * upn).sum(), xn)))

    xg = rng.normal(size=(2, 3, 6))
    upg = rng.normal(size=(2, 3))
    _, cache = layers.global_avg_pool(xg)
    gx = layers.global_avg_pool_backward(upg, cache)
    worst = max(worst, rel_error(gx, numerical_gradient(
        lambda v: (layers.global_avg_pool(v)[0] * upg).sum(), xg)))
    assert worst < 1e-6

    # full composition on the tiny model: channels (4,4,4), D=6, B=6, T=16, m=2
    model = init_model(TINY, seed=5, dtype=np.float64)
    x = np.random.default_rng(8).normal(size=(6, 2, 16))
    labels = np.array([0, 0, 1, 1, 2, 2])
    grads = full_composition_grads(model, x, labels)
    worst_full = 0.0
    for name in model.parameter_names():
        original = model.get_param(name)

        def f(v, name=name, original=original):
            model.set_param(name, v)
            out = full_composition_loss(model, x, labels)
            model.set_param(name, original)
            return out

        worst_full = max(worst_full, rel_error(grads[name], numerical_gradient(f, original.copy())))
    elapsed = time.time() - start
    report(1, worst_full < 1e-4 and elapsed < 60.0,
           f"layer rel err {worst:.2e} < 1e-6, composition rel err {worst_full:.2e} < 1e-4, "
           f"{elapsed:.1f}s < 60s")


def test_criterion_2_rank_oracles():
    rng = np.random.default_rng(1)
    for _ in range(200):
        b = int(rng.integers(4, 21))
        d = int(rng.integers(2, 9))
        n_classes = int(rng.integers(2, 5))
        labels = rng.integers(0, n_classes, size=b)
        if len(np.unique(labels)) < 2:
            labels[0], labels[1] = 0, 1
        z = rng.normal(size=(b, d))
        dist = pairwise_distances(z)
        np.testing.assert_array_equal(valid_triplets(dist, labels),
                                      brute_force_triplets(dist.d, labels))
        for a in range(b):
            for p in range(b):
                if a != p and labels[a] == labels[p]:
                    assert hard_rank(dist, labels, a, p) == \
                        brute_force_hard_rank(dist.d, labels, a, p)
    report(2, True, "200 batches: triplets and hard ranks match brute force exactly")


def test_criterion_3_sigmoid_relaxation_limit():
    rng = np.random.default_rng(2)
    checked = 0
    worst = 0.0
    while checked < 100:
        b = int(rng.integers(4, 8))
        labels = rng.integers(0, 3, size=b)
        if len(np.unique(labels)) < 2:
            continue
        z = rng.normal(size=(b, int(rng.integers(2, 9))))
        dist = pairwise_distances(z)
        triu = dist.d[np.triu_indices(b, k=1)]
        gaps = np.diff(np.sort(triu))
        # construction keeps every pairwise distance distinct by >= 1e-2
        if len(gaps) == 0 or gaps.min() < 5e-2:
            continue
        for a in range(b):
            for p in range(b):
                if a != p and labels[a] == labels[p]:
                    diff = abs(soft_rank(dist, labels, a, p, temperature=1e-3)
                               - hard_rank(dist, labels, a, p))
                    worst = max(worst, diff)
        checked += 1
    report(3, worst < 1e-6, f"100 batches at tau=1e-3: |soft - hard| <= {worst:.2e} < 1e-6")


def test_criterion_4_loss_properties():
    rng = np.random.default_rng(3)

    # bounds on arctan(soft rank)
    for _ in range(25):
        b = int(rng.integers(4, 16))
        labels = rng.integers(0, 3, size=b)
        if len(np.unique(labels)) < 2:
            labels[0], labels[1] = 0, 1
        z = rng.normal(size=(b, 6))
        result = rank_loss(z, labels)
        mapped = np.arctan(result.soft_ranks)
        assert (mapped >= 0.0).all() and (mapped < np.pi / 2.0).all()

    # exact zero on far-separated classes (every sigmoid term underflows)
    z = np.array([[0.0, 0.0], [1.0, 0.0], [4000.0, 0.0], [4001.0, 0.0],
                  [-4000.0, 0.0], [-4001.0, 0.0]])
    labels = np.array([0, 0, 1, 1, 2, 2])
    separated = rank_loss(z, labels)
    assert separated.loss == 0.0

    # monotonicity under 100 random single-negative perturbations
    violations = 0
    for _ in range(100):
        b = int(rng.integers(5, 12))
        labels = rng.integers(0, 3, size=b)
        if len(np.unique(labels)) < 2:
            labels[0], labels[1] = 0, 1
        z = rng.normal(size=(b, 5))
        dist = pairwise_distances(z)
        anchors = [a for a in range(b)
                   if np.sum(labels == labels[a]) >= 2 and np.sum(labels != labels[a]) >= 1]
        if not anchors:
            continue
        a = int(rng.choice(anchors))
        p = int(rng.choice([p for p in range(b) if p != a and labels[p] == labels[a]]))
        n = int(rng.choice(np.flatnonzero(labels != labels[a])))
        base = soft_rank(dist, labels, a, p)
        moved = dist.d.copy()
        delta = rng.uniform(0.0, moved[a, n])
        moved[a, n] -= delta
        moved[n, a] -= delta
        if soft_rank(DistanceMatrix(d=moved, d_sq=moved ** 2), labels, a, p) < base - 1e-12:
            violations += 1
    report(4, violations == 0,
           f"bounds hold, separated-batch loss exactly 0, {violations}/100 monotonicity violations")


def test_criterion_5_synthetic_end_to_end(sine_files, tmp_path):
    start = time.time()
    cfg = build_config({
        "train_data": str(sine_files / "train.tsv"),
        "test_data": str(sine_files / "test.tsv"),
        "output_dir": str(tmp_path / "pipe"),
    })  # library defaults: epochs=100, m=5, scales (0.03, 0.05), seeds 0..4
    aggregate = cmd_pipeline(cfg)
    elapsed = time.time() - start
    report(5, aggregate["accuracy"] >= 0.95 and elapsed < 300.0,
           f"sine pipeline mean accuracy {aggregate['accuracy']:.4f} >= 0.95 over 5 seeds, "
           f"{elapsed:.0f}s < 300s")


def test_criterion_6_archive_spot_check(control_chart_files, tmp_path):
    start = time.time()
    cfg = build_config({
        "train_data": str(control_chart_files / "train.tsv"),
        "test_data": str(control_chart_files / "test.tsv"),
        "output_dir": str(tmp_path / "pipe"),
        "epochs": "10", "batch_size": "64",
    })
    aggregate = cmd_pipeline(cfg)
    elapsed = time.time() - start
    report(6, aggregate["accuracy"] >= 0.90 and elapsed < 1200.0,
           f"600/300 six-class control charts: mean accuracy {aggregate['accuracy']:.4f} "
           f">= 0.90 over 5 seeds, {elapsed:.0f}s < 1200s")


def test_criterion_7_augmentation_ablation(control_chart_files, tmp_path):
    accuracies = {}
    for m in ("0", "5"):
        cfg = build_config({
            "train_data": str(control_chart_files / "train.tsv"),
            "test_data": str(control_chart_files / "test.tsv"),
            "output_dir": str(tmp_path / f"ablate_m{m}"),
            "epochs": "3", "batch_size": "12", "seeds": "0,1,2",
            "num_augments": m,
        })
        accuracies[m] = cmd_pipeline(cfg)["accuracy"]
    report(7, accuracies["5"] >= accuracies["0"],
           f"reduced-epoch ablation: accuracy(m=5)={accuracies['5']:.4f} >= "
           f"accuracy(m=0)={accuracies['0']:.4f}")


def test_criterion_8_svm_solver():
    rng = np.random.default_rng(4)
    tol = 1e-4
    worst_gap = 0.0
    for _ in range(50):
        n = int(rng.integers(6, 31))
        x = rng.normal(size=(n, int(rng.integers(2, 5))))
        y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        if len(np.unique(y)) < 2:
            y[0] = -y[0]
        c = float(rng.choice([0.5, 1.0, 10.0]))
        gamma = scale_gamma(x)
        kernel = rbf_kernel(x, x, gamma)
        machine = svm_fit_binary(x, y, C=c, gamma=gamma, tol=tol, max_passes=10)
        w_smo = dual_objective(kernel, y, machine.alpha)
        w_pg = dual_objective(kernel, y, projected_gradient_svm(kernel, y, c))
        worst_gap = max(worst_gap, abs(w_smo - w_pg) / max(abs(w_pg), 1e-12))

    # XOR with RBF, plus KKT residuals at convergence
    x = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    y = np.array([1.0, 1.0, -1.0, -1.0])
    machine = svm_fit_binary(x, y, C=1e6, gamma=1.0, tol=1e-3, max_passes=10)
    f = decision_function(machine, x)
    xor_ok = np.array_equal(np.sign(f), y)
    inner = np.flatnonzero((machine.alpha > 1e-10) & (machine.alpha < machine.C - 1e-10))
    kkt_ok = np.all(np.abs(y[inner] * f[inner] - 1.0) <= 10.0 * 1e-3)
    report(8, worst_gap < 1e-3 and xor_ok and kkt_ok,
           f"50 problems: dual gap {worst_gap:.2e} < 1e-3; XOR training accuracy 1.0; "
           f"KKT residuals <= 10*tol")


def test_criterion_9_metrics_hand_case():
    rep = metrics([0, 0, 1, 1], [0, 1, 1, 1])
    ok = (rep.accuracy == 0.75
          and abs(rep.macro_precision - 0.83333) <= 1e-5
          and rep.macro_recall == 0.75
          and abs(rep.macro_f1 - 0.73333) <= 1e-5)
    report(9, ok, f"accuracy {rep.accuracy}, macro P {rep.macro_precision:.5f}, "
                  f"macro R {rep.macro_recall}, macro F1 {rep.macro_f1:.5f}")


def test_criterion_10_determinism_and_formats(sine_files, tmp_path):
    artifacts = []
    for name in ("first", "second"):
        cfg = build_config({
            "train_data": str(sine_files / "train.tsv"),
            "test_data": str(sine_files / "test.tsv"),
            "output_dir": str(tmp_path / name),
            "epochs": "2", "batch_size": "16", "seeds": "0",
            "conv_channels": "8,8,8", "kernel_sizes": "8,5,3", "repr_dim": "8",
        })
        cmd_pipeline(cfg)
        seed_dir = tmp_path / name / "seed_0"
        artifacts.append(tuple((seed_dir / f).read_bytes() for f in
                               ("encoder.ckpt", "train_reps.txt", "test_reps.txt",
                                "metrics.json")))
    identical = artifacts[0] == artifacts[1]

    model = init_model(EncoderConfig(in_features=1, conv_channels=(4, 4, 4),
                                     kernel_sizes=(8, 5, 3), repr_dim=4),
                       seed=3, dtype=np.float32)
    x = np.random.default_rng(0).normal(size=(3, 1, 20)).astype(np.float32)
    path = tmp_path / "roundtrip.ckpt"
    save_checkpoint(model, path)
    round_trip = np.array_equal(encode(load_checkpoint(path), x), encode(model, x))
    report(10, identical and round_trip,
           "pipeline rerun bitwise identical (checkpoint, representations, metrics); "
           "checkpoint round trip preserves eval outputs bitwise")
