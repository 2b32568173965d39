"""End-to-end acceptance gate.

One test per criterion; each records a one-line PASS/FAIL verdict that is echoed
in the terminal summary. The training runs are marked ``slow`` but stay in the
default run.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import brute_force_assignment, ndc_oracle, nmi_oracle
from pairlearn import autodiff as ad
from pairlearn.data import LabeledDataset, load_csv_dataset
from pairlearn.evaluation import ContingencyTable, clustering_accuracy, hungarian, ndc, nmi
from pairlearn.experiments import own_losses, run_landscape, run_parity, run_semi_supervised, run_transfer
from pairlearn.losses import EPS, PairwiseLabelSet, cross_entropy_loss, enumerate_pairs, kcl_loss, mcl_loss
from pairlearn.model import MlpSpec, build
from pairlearn.similarity import NoiseSpec, similarity_from_labels
from pairlearn.trainer import TrainConfig, make_evaluator, train_supervised_pairwise

SEEDS = range(5)


def clamped_kl(p, q):
    return float(np.sum(p * (np.log(np.maximum(p, EPS)) - np.log(np.maximum(q, EPS)))))


def near_hinge(z, labels, sigma=2.0, gap=1e-4):
    """True when a dissimilar pair's KL sits within ``gap`` of the KCL margin."""
    p = np.exp(z - z.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    for i, j in enumerate_pairs(len(z)):
        if labels[i] != labels[j] and min(abs(sigma - clamped_kl(p[i], p[j])), abs(sigma - clamped_kl(p[j], p[i]))) < gap:
            return True
    return False


def analytic_grad(fn, z):
    leaf = ad.Value(z.copy(), requires_grad=True)
    ad.backward(fn(ad.softmax(leaf)))
    return leaf.grad


def five_point_error(fn, z, grad, h=1e-3):
    """Max relative error against a fourth-order stencil, which resolves gradients far below 1e-5."""
    f = lambda zz: fn(ad.softmax(ad.Value(zz))).item()  # noqa: E731
    worst = 0.0
    for idx in np.ndindex(z.shape):
        vals = []
        for d in (2 * h, h, -h, -2 * h):
            zz = z.copy()
            zz[idx] += d
            vals.append(f(zz))
        ref = (-vals[0] + 8 * vals[1] - 8 * vals[2] + vals[3]) / (12 * h)
        worst = max(worst, abs(grad[idx] - ref) / max(abs(grad[idx]), abs(ref), 1e-12))
    return worst


def test_c1_gradient_exactness(verdict):
    # Gradients of each loss with respect to the (batch, K) logits feeding the softmax.
    # A central difference at eps=1e-6 carries ~1e-10 absolute roundoff, so draws with a
    # gradient coordinate below 1e-4 cannot be judged at 1e-5 relative error by it; those
    # are checked against a fourth-order stencil instead and counted separately.
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = {"MCL": 0.0, "KCL": 0.0, "CE": 0.0}
    stencil_worst = 0.0
    done = kinks = fine_grained = 0
    while done < 20:
        z = rng.normal(size=(6, 4))
        y = rng.integers(0, 4, size=6)
        s = similarity_from_labels(y, enumerate_pairs(6))
        losses = {
            "MCL": lambda o: mcl_loss(o, s),
            "KCL": lambda o: kcl_loss(o, s),
            "CE": lambda o: cross_entropy_loss(o, y),
        }
        grads = {name: analytic_grad(fn, z) for name, fn in losses.items()}
        if min(np.abs(g).min() for g in grads.values()) < 1e-4:
            if near_hinge(z, y, gap=1e-2):
                kinks += 1
                continue
            fine_grained += 1
            for name, fn in losses.items():
                stencil_worst = max(stencil_worst, five_point_error(fn, z, grads[name]))
            continue
        if near_hinge(z, y):
            kinks += 1
            continue
        for name, fn in losses.items():
            err = ad.finite_difference_check(lambda v, fn=fn: fn(ad.softmax(v["z"])), {"z": z}, 1e-6)
            worst[name] = max(worst[name], err)
        done += 1
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) < 1e-5 and stencil_worst < 1e-5 and elapsed < 10
    detail = ", ".join(f"{k} {v:.2e}" for k, v in worst.items())
    assert verdict(
        1,
        "gradient exactness",
        ok,
        f"max rel err {detail} on 20 draws; {fine_grained} fine-grained draws vs 4th-order stencil {stencil_worst:.2e}; "
        f"{kinks} hinge-kink draws skipped; {elapsed:.1f}s",
    )


@pytest.mark.slow
def test_c2_ce_mcl_parity(verdict):
    start = time.perf_counter()
    runs = [run_parity(seed) for seed in SEEDS]
    mcl = float(np.mean([r.acc_mcl for r in runs]))
    ce = float(np.mean([r.acc_ce for r in runs]))
    elapsed = time.perf_counter() - start
    ok = mcl >= 0.98 and abs(mcl - ce) <= 0.02 and elapsed < 300
    assert verdict(2, "CE/MCL parity", ok, f"acc MCL {mcl:.4f}, CE {ce:.4f} over {len(runs)} seeds; {elapsed:.0f}s")


@pytest.mark.slow
def test_c3_overclustering(verdict):
    start = time.perf_counter()
    runs = [run_transfer(seed, n_outputs=10) for seed in SEEDS]
    acc = float(np.mean([r.accuracy for r in runs]))
    ndcs = [r.ndc for r in runs]
    elapsed = time.perf_counter() - start
    ok = acc >= 0.95 and all(3 <= n <= 5 for n in ndcs) and elapsed < 300
    assert verdict(3, "overclustering K=10", ok, f"mean acc {acc:.4f}, NDC {ndcs}; {elapsed:.0f}s")


@pytest.mark.slow
def test_c4_noise_robustness(verdict):
    start = time.perf_counter()
    noise = NoiseSpec(0.655, 0.992)
    runs = [run_transfer(seed, n_outputs=4, noise=noise) for seed in SEEDS]
    acc = float(np.mean([r.accuracy for r in runs]))
    elapsed = time.perf_counter() - start
    ok = acc >= 0.90 and elapsed < 300
    assert verdict(4, "noisy oracle 0.655/0.992", ok, f"mean acc {acc:.4f} (min {min(r.accuracy for r in runs):.4f}); {elapsed:.0f}s")


@pytest.mark.slow
def test_c5_semi_supervised_gain(verdict):
    start = time.perf_counter()
    runs = [run_semi_supervised(seed) for seed in SEEDS]
    gain = float(np.mean([r.gain for r in runs]))
    base = float(np.mean([r.acc_baseline for r in runs]))
    elapsed = time.perf_counter() - start
    ok = gain >= 0.03 and elapsed < 600
    assert verdict(5, "semi-supervised gain", ok, f"CE-only {base:.4f} -> Pseudo-MCL {base + gain:.4f}, gain {gain:+.4f}; {elapsed:.0f}s")


def test_c6_hungarian_matches_exhaustive_search(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(6)
    mismatches = 0
    for trial in range(200):
        small, large = int(rng.integers(1, 8)), int(rng.integers(1, 9))
        shape = (small, large) if trial % 2 else (large, small)
        # alternate tie-heavy integer costs with continuous ones
        cost = rng.integers(0, 4, size=shape).astype(float) if trial % 4 < 2 else rng.normal(size=shape)
        total, _ = brute_force_assignment(cost)
        mismatches += hungarian(cost).total != total
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 10
    assert verdict(6, "Hungarian vs exhaustive", ok, f"{mismatches}/200 cost mismatches; {elapsed:.1f}s")


def test_c7_nmi_and_ndc(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    nmi_err = 0.0
    for _ in range(100):
        t = rng.integers(0, 30, size=(rng.integers(1, 12), rng.integers(1, 12)))
        t[0, 0] += 1
        nmi_err = max(nmi_err, abs(nmi(ContingencyTable(t)) - nmi_oracle(t)))
    ndc_bad = 0
    for trial in range(100):
        if trial == 0:
            # mean cluster size exactly 10: nodes of size 10 count, size 9 does not
            sizes = [10] * 30 + [9] * 10 + [0] * 59 + [610]
        else:
            sizes = rng.integers(0, 40, size=rng.integers(1, 30)).tolist()
            sizes[0] += 1
        n, k = sum(sizes), len(sizes)
        ndc_bad += ndc(sizes, n, k) != ndc_oracle(sizes, n, k)
    anchor = ndc([10] * 30 + [9] * 10 + [0] * 59 + [610], 1000, 100)
    elapsed = time.perf_counter() - start
    ok = nmi_err <= 1e-10 and ndc_bad == 0 and anchor == 31 and elapsed < 5
    assert verdict(7, "NMI/NDC", ok, f"max NMI err {nmi_err:.1e}, {ndc_bad}/100 NDC mismatches, anchor NDC {anchor}; {elapsed:.1f}s")


@pytest.mark.slow
def test_c8_landscape_integrity(verdict):
    start = time.perf_counter()
    run = run_landscape(seed=0, loss="MCL", swapped=True)
    own = own_losses(run, "MCL")
    s = run.surface
    corners = {"MCL": s.at(0.0, 0.0), "CE": s.at(1.0, 0.0), "KCL": s.at(0.0, 1.0)}
    corner_err = max(abs(corners[k] - own[k]) for k in own)
    transposed = np.array_equal(s.values, run.swapped.values.T)
    lowest = own["MCL"] <= min(own["CE"], own["KCL"]) and corners["MCL"] <= min(corners["CE"], corners["KCL"])
    elapsed = time.perf_counter() - start
    ok = corner_err <= 1e-9 and transposed and lowest and s.values.shape == (91, 91) and elapsed < 600
    losses = ", ".join(f"{k} {v:.4g}" for k, v in corners.items())
    assert verdict(
        8, "landscape integrity", ok, f"corner err {corner_err:.1e}, transpose {transposed}, MCL loss at {losses}; {elapsed:.0f}s"
    )


def test_c9_permutation_invariance(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(9)
    loss_breaks = metric_breaks = 0
    for _ in range(200):
        b, k = int(rng.integers(2, 9)), int(rng.integers(2, 8))
        z = rng.normal(scale=3.0, size=(b, k))
        p = np.exp(z - z.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        perm = rng.permutation(k)
        pairs = enumerate_pairs(b)
        s = PairwiseLabelSet.full(pairs, rng.integers(0, 2, size=len(pairs)).astype(float))
        for fn in (mcl_loss, kcl_loss):
            loss_breaks += fn(p, s).item() != fn(p[:, perm], s).item()
        t = rng.integers(0, 15, size=(k, int(rng.integers(1, 8))))
        t[0, 0] += 1
        moved = t[rng.permutation(t.shape[0])][:, rng.permutation(t.shape[1])]
        a, m = ContingencyTable(t), ContingencyTable(moved)
        metric_breaks += clustering_accuracy(a) != clustering_accuracy(m) or nmi(a) != nmi(m)
    elapsed = time.perf_counter() - start
    ok = loss_breaks == 0 and metric_breaks == 0 and elapsed < 5
    assert verdict(
        9, "permutation invariance", ok, f"{loss_breaks}/400 loss changes, {metric_breaks}/200 metric changes; {elapsed:.1f}s"
    )


MNIST_TRAIN = os.environ.get("PAIRLEARN_MNIST_TRAIN")
MNIST_TEST = os.environ.get("PAIRLEARN_MNIST_TEST")


@pytest.mark.slow
@pytest.mark.optional
@pytest.mark.skipif(
    not (MNIST_TRAIN and MNIST_TEST and Path(MNIST_TRAIN).exists() and Path(MNIST_TEST).exists()),
    reason="set PAIRLEARN_MNIST_TRAIN and PAIRLEARN_MNIST_TEST to MNIST CSV files (784 pixels then label)",
)
def test_c10_mnist_parity(verdict):
    train, test = load_csv_dataset(MNIST_TRAIN), load_csv_dataset(MNIST_TEST)
    scale = 255.0 if train.features.max() > 1.0 else 1.0
    idx = np.random.default_rng(0).permutation(len(train))[:10000]
    train = LabeledDataset(train.features[idx] / scale, train.labels[idx], 10)
    xs = test.features / scale
    model = build(MlpSpec((784, 128, 10), seed=0))
    accs = {}
    for objective in ("MCL", "CE"):
        cfg = TrainConfig(objective=objective, epochs=30, decay_epochs=(20,), seed=0)
        trained = train_supervised_pairwise(model, train, cfg).model
        accs[objective] = make_evaluator(xs, test.labels, 10, mapped=objective != "CE")(trained)[0]
    ok = min(accs.values()) >= 0.93 and abs(accs["MCL"] - accs["CE"]) <= 0.01
    assert verdict(10, "MNIST parity", ok, f"acc MCL {accs['MCL']:.4f}, CE {accs['CE']:.4f}")
