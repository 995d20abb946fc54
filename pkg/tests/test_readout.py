from math import exp, sqrt

import numpy as np
import pytest

from mcmforge.readout import (InsufficientData, InsufficientTraining,
                              TraceBatch, TraceParams, accuracy,
                              accuracy_sweep, calibrate_sigma,
                              confusion_from_eval, discriminate_boxcar,
                              discriminate_matched, gaussian_accuracy,
                              generate_traces, train_matched_filter,
                              whitened_separation)


def test_default_geometry_matches_trace_spec():
    p = TraceParams()
    assert p.n_samples == 500
    assert p.dt == 2.0
    assert p.duration_ns == 1000.0


def test_sigma_calibration_from_oracle():
    p = TraceParams()
    d = whitened_separation(p, p.n_samples)
    assert gaussian_accuracy(d) == pytest.approx(0.97, abs=1e-6)
    assert calibrate_sigma(0.97) == pytest.approx(p.sigma, rel=1e-6)


def test_noiseless_limit_traces_sit_on_means():
    p = TraceParams(sigma=1e-12, t1=1e15, seed=1)
    batch = generate_traces(p, 50)
    ones = batch.traces[batch.labels == 1]
    zeros = batch.traces[batch.labels == 0]
    assert np.allclose(ones, p.mu1, atol=1e-6)
    assert np.allclose(zeros, p.mu0, atol=1e-6)


def test_decay_fraction_matches_exponential_cdf():
    p = TraceParams(t1=20_000.0, seed=2)
    n = 40_000
    batch = generate_traces(p, n)
    ones = batch.traces[batch.labels == 1]
    # a decayed trace ends at mu0: detectable at tiny noise? use last sample
    # against the midpoint along the class axis
    last = ones[:, -1].real
    decayed = (last < 0.0).sum()
    expect = 1 - exp(-1000.0 / 20_000.0)
    # noise misclassifies some endpoints; allow the Gaussian tail on top
    tail = 1 - gaussian_accuracy(2.0 / p.sigma)
    bound = 3 * sqrt(n * expect) + 4 * n * tail
    assert abs(decayed - n * expect) < bound


def test_boxcar_matches_oracle_no_decay():
    p = TraceParams(seed=3, t1=1e15)
    batch = generate_traces(p, 10_000)
    _train, eval_ = batch.split()
    for k in (125, 250, 500):
        pred, _ = discriminate_boxcar(eval_, k)
        acc = accuracy(pred, eval_.labels)
        oracle = gaussian_accuracy(whitened_separation(p, k))
        sigma = sqrt(oracle * (1 - oracle) / len(eval_.labels))
        assert abs(acc - oracle) < 3 * sigma


def test_high_separation_accuracy():
    # whitened separation 6 at k samples -> accuracy >= 0.998
    k = 100
    sigma = abs(2.0) * sqrt(k) / 6.0
    p = TraceParams(sigma=sigma, t1=1e15, seed=4, n_samples=k)
    batch = generate_traces(p, 3000)
    pred, _ = discriminate_boxcar(batch, k)
    assert accuracy(pred, batch.labels) >= 0.998


def test_indistinguishable_classes_are_chance():
    p = TraceParams(mu0=-1e-9 + 0j, mu1=1e-9 + 0j, sigma=10.0, seed=5, t1=1e15)
    batch = generate_traces(p, 20_000)
    pred, _ = discriminate_boxcar(batch, p.n_samples)
    n = len(batch.labels)
    assert abs(accuracy(pred, batch.labels) - 0.5) < 3 * sqrt(0.25 / n)


def test_matched_never_below_boxcar_across_durations():
    p = TraceParams(seed=0)
    batch = generate_traces(p, 10_000)
    train, eval_ = batch.split()
    for k in (125, 250, 375, 500):
        pb, _ = discriminate_boxcar(eval_, k)
        pm, _ = discriminate_matched(eval_, k, train=train)
        assert accuracy(pm, eval_.labels) >= accuracy(pb, eval_.labels)


def test_matched_degenerates_to_boxcar_without_decay():
    p = TraceParams(seed=6, t1=1e15)
    batch = generate_traces(p, 6000)
    train, eval_ = batch.split()
    for k in (125, 500):
        pb, _ = discriminate_boxcar(eval_, k)
        pm, _ = discriminate_matched(eval_, k, train=train)
        assert (pb == pm).all()


def test_matched_template_trace_is_confident():
    p = TraceParams(seed=7)
    batch = generate_traces(p, 3000)
    train, _ = batch.split()
    filt = train_matched_filter(train, p.n_samples)
    template = np.full((1, p.n_samples), p.mu1, dtype=complex)
    probe = TraceBatch(template, np.array([1], dtype=np.uint8), p)
    pred, conf = discriminate_matched(probe, p.n_samples, filt=filt)
    assert pred[0] == 1
    assert conf[0] > 0.99


def test_truncation_is_prefix_pure():
    p = TraceParams(seed=8)
    batch = generate_traces(p, 2000)
    train, eval_ = batch.split()
    k = 200
    zeroed = TraceBatch(eval_.traces.copy(), eval_.labels, p)
    zeroed.traces[:, k:] = 123.0 + 456.0j
    for disc, kwargs in ((discriminate_boxcar, {}),
                         (discriminate_matched, {"train": train})):
        a, _ = disc(eval_, k, **kwargs)
        b, _ = disc(zeroed, k, **kwargs)
        assert (a == b).all()


def test_insufficient_training_raises():
    p = TraceParams(seed=9)
    small = generate_traces(p, 50)
    with pytest.raises(InsufficientTraining):
        train_matched_filter(small, 100)


def test_confusion_estimates():
    p = TraceParams(seed=10)
    batch = generate_traces(p, 4000)
    labels = batch.labels
    cm = confusion_from_eval(labels, labels)       # perfect predictions
    assert cm.for_qubit(0) == (0.0, 0.0)
    rng = np.random.default_rng(0)
    coin = rng.integers(0, 2, len(labels)).astype(np.uint8)
    cm = confusion_from_eval(coin, labels)
    p01, p10 = cm.for_qubit(0)
    bound = 3 * sqrt(0.25 / (len(labels) / 2))
    assert abs(p01 - 0.5) < bound and abs(p10 - 0.5) < bound
    with pytest.raises(InsufficientData):
        confusion_from_eval(labels[:100], labels[:100])


def test_decay_asymmetry_p10_exceeds_p01():
    p = TraceParams(seed=11)
    batch = generate_traces(p, 8000)
    train, eval_ = batch.split()
    pred, _ = discriminate_matched(eval_, p.n_samples, train=train)
    cm = confusion_from_eval(pred, eval_.labels)
    p01, p10 = cm.for_qubit(0)
    assert p10 > p01


def test_confidence_coarse_calibration():
    p = TraceParams(seed=12)
    batch = generate_traces(p, 10_000)
    train, eval_ = batch.split()
    pred, conf = discriminate_matched(eval_, 250, train=train)
    correct = (pred == eval_.labels)
    for lo in (0.6, 0.7, 0.8, 0.9):
        sel = (conf >= lo) & (conf < lo + 0.05)
        if sel.sum() < 200:
            continue
        emp = correct[sel].mean()
        assert lo - 0.05 <= emp <= lo + 0.10


def test_sweep_monotone_on_no_decay_data():
    p = TraceParams(seed=13, t1=1e15)
    rows = accuracy_sweep(p, [125, 250, 375, 500], n_per_state=4000)
    assert len(rows) == 8
    for disc in ("boxcar", "matched"):
        accs = [r["accuracy"] for r in rows if r["discriminator"] == disc]
        assert accs == sorted(accs)
        assert all(0.5 <= a <= 1.0 for a in accs)


def test_batch_binary_round_trip(tmp_path):
    p = TraceParams(seed=14, n_samples=64)
    batch = generate_traces(p, 200)
    path = tmp_path / "traces.bin"
    batch.save(path)
    again = TraceBatch.load(path, p)
    assert again.traces.shape == batch.traces.shape
    assert np.allclose(again.traces, batch.traces, atol=1e-6)
    assert (again.labels == batch.labels).all()
