"""Acceptance suite: one test per acceptance criterion, each printing a
PASS/FAIL line. Criterion 8 (closed loop) encodes a semantics defect analyzed
in the project notes: it is asserted faithfully and expected to fail.

Run with `pytest tests/test_acceptance.py -v -s`.
"""
import time
from math import sqrt

import numpy as np
import pytest

from mcmforge.bench import (BenchmarkSpec, GHZ_CONST_DEPTH, LONG_RANGE_CNOT,
                            TELEPORT_LADDER, TELEPORT_REPEATED,
                            make_benchmark, mech_sensitivity, run_arm)
from mcmforge.harden import CORRECT, DETECT, ErrorBudget, inject_repetition, \
    rep_code_error
from mcmforge.ir import Branch, Circuit, Gate, Measure, popcount
from mcmforge.latency import MCMIT, QUBIC, TimingModel, latency_table
from mcmforge.qcp import simplify
from mcmforge.readout import (TraceParams, accuracy, discriminate_boxcar,
                              discriminate_matched, gaussian_accuracy,
                              generate_traces, whitened_separation)
from mcmforge.sim import (NoiseModel, exact_distribution, hellinger_fidelity,
                          run_shots, tv_distance)
from mcmforge.stochastic import ConfusionMatrix, stochastic_compile


def report(criterion, ok, detail=""):
    print(f"\nACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} {detail}")
    return ok


def marginal(dist, clbits):
    out = {}
    for word, p in dist.items():
        sub = 0
        for j, b in enumerate(clbits):
            sub |= ((word >> b) & 1) << j
        out[sub] = out.get(sub, 0.0) + p
    return out


def fidelity_of(circuit, noise, shots, seed, passes=()):
    fid, _disc, _hist = run_arm(circuit, passes, noise, shots, seed)
    return fid


# --- 1. latency table reproduction ---------------------------------------------

def test_criterion_1_latency_table():
    t0 = time.time()
    expected_branch = {1: 16, 7: 112, 8: 128, 15: 240, 16: 256, 32: 512,
                       128: 2048}
    expected_feedback = {1: 205, 7: 301, 8: 317, 15: 429, 16: 445, 32: 701,
                         128: 2237}
    rows = {r["n_inputs"]: r for r in latency_table()}
    ok = set(rows) == set(expected_branch)
    for n in expected_branch:
        ok &= rows[n]["qubic_branch_ns"] == expected_branch[n]
        ok &= rows[n]["qubic_feedback_ns"] == expected_feedback[n]
        ok &= rows[n]["mcmit_branch_ns"] == 16
        ok &= rows[n]["mcmit_feedback_ns"] == 205
    elapsed = time.time() - t0
    ok &= elapsed < 1.0
    assert report("1 latency-table", ok, f"({elapsed:.3f}s)")


# --- 2. repetition-code formula -------------------------------------------------

def test_criterion_2_repetition_code_formula():
    n = 100_000
    ok = True
    details = []
    for (d, decode) in ((2, DETECT), (3, CORRECT)):
        for p in (0.02, 0.05):
            base = Circuit(1, 1, [Gate("x", (0,)), Measure(0, 0)])
            hardened = inject_repetition(base, 0, d, decode)
            n_cnots = sum(1 for i in hardened.instructions
                          if isinstance(i, Gate) and i.name == "cx")
            noise = NoiseModel(confusion=ConfusionMatrix.symmetric(p),
                               p_2q=p, mode="bitflip_only")
            hist = run_shots(hardened, noise, n, 101)
            rate = hist.event_shots / n
            expect = rep_code_error(ErrorBudget(p, p), d, n_cnots)
            sigma = sqrt(expect * (1 - expect) / n)
            ok &= abs(rate - expect) < 3 * sigma
            details.append(f"d={d},N={n_cnots},p={p}:"
                           f"{(rate - expect) / sigma:+.1f}s")
    # d=3 majority voting matches 3p^2(1-p)+p^3
    for p in (0.02, 0.05):
        base = Circuit(1, 1, [Gate("x", (0,)), Measure(0, 0)])
        hardened = inject_repetition(base, 0, 3, CORRECT)
        noise = NoiseModel(confusion=ConfusionMatrix.symmetric(p),
                           mode="bitflip_only")
        hist = run_shots(hardened, noise, n, 103)
        wrong = sum(cnt for word, cnt in hist.counts.items()
                    if sum((word >> b) & 1 for b in range(3)) < 2)
        expect = 3 * p * p * (1 - p) + p ** 3
        sigma = sqrt(expect * (1 - expect) / n)
        ok &= abs(wrong / n - expect) < 3 * sigma
        details.append(f"maj p={p}:{(wrong / n - expect) / sigma:+.1f}s")
    assert report("2 repetition-code", ok, " ".join(details))


# --- 3. QCP soundness -----------------------------------------------------------

def test_criterion_3_qcp_soundness():
    from test_qcp import random_dynamic_circuit, written_clbits

    t0 = time.time()
    worst = 0.0
    removed_any = 0
    for seed in range(500):
        circ = random_dynamic_circuit(seed)
        out, rep = simplify(circ)
        shared = written_clbits(out)
        d0 = marginal(exact_distribution(circ), shared)
        d1 = marginal(exact_distribution(out), shared)
        worst = max(worst, tv_distance(d0, d1))
        removed_any += rep.mcms_removed
    ok = worst <= 1e-9

    family_ok = True
    for width in range(3, 9):
        circ = make_benchmark(BenchmarkSpec(GHZ_CONST_DEPTH, width=width))
        _out, rep = simplify(circ)
        family_ok &= rep.mcms_removed == 1
    elapsed = time.time() - t0
    ok &= family_ok and elapsed < 300
    assert report("3 qcp-soundness", ok,
                  f"(worst TV {worst:.2e}, {removed_any} MCMs removed over "
                  f"500 circuits, GHZ family exactly-1 {family_ok}, "
                  f"{elapsed:.0f}s)")


# --- 4. feedback-latency fidelity ordering --------------------------------------

def _controller_curves(kind, width, shots, seed):
    curves = {}
    for controller in (MCMIT, QUBIC):
        timing = TimingModel(t_meas=250.0, controller=controller)
        noise = NoiseModel(t1=25_000.0, timing=timing, mode="relaxation_only")
        fids = []
        for instances in range(1, 11):
            circ = make_benchmark(
                BenchmarkSpec(kind, width=width, instances=instances))
            fids.append(fidelity_of(circ, noise, shots, seed))
        curves[controller] = fids
    return curves


@pytest.mark.slow
def test_criterion_4_feedback_latency_ordering():
    t0 = time.time()
    shots = 10_000
    ok = True
    details = []
    for kind, width in ((GHZ_CONST_DEPTH, 8), (LONG_RANGE_CNOT, 16)):
        curves = _controller_curves(kind, width, shots, seed=19)
        gaps = [m - q for m, q in zip(curves[MCMIT], curves[QUBIC])]
        pointwise = all(g > 0 for g in gaps)
        slope = np.polyfit(np.arange(1, 11), gaps, 1)[0]
        ok &= pointwise and slope > 0
        details.append(f"{kind}: min-gap {min(gaps):.3f} "
                       f"gap-slope {slope:+.4f}")
    elapsed = time.time() - t0
    ok &= elapsed < 600
    assert report("4 feedback-latency-ordering", ok,
                  "; ".join(details) + f" ({elapsed:.0f}s)")


# --- 5. readout-duration fidelity ordering --------------------------------------

@pytest.mark.slow
def test_criterion_5_readout_duration_ordering():
    t0 = time.time()
    shots = 10_000
    fids = {}
    for t_meas in (250.0, 750.0):
        noise = NoiseModel(t1=25_000.0,
                           timing=TimingModel(t_meas=t_meas, controller=MCMIT),
                           mode="relaxation_only")
        fids[t_meas] = [
            fidelity_of(make_benchmark(BenchmarkSpec(TELEPORT_LADDER,
                                                     steps=depth)),
                        noise, shots, seed=19)
            for depth in range(1, 9)
        ]
    gaps = [a - b for a, b in zip(fids[250.0], fids[750.0])]
    elapsed = time.time() - t0
    ok = all(g > 0 for g in gaps) and elapsed < 300
    assert report("5 readout-duration-ordering", ok,
                  f"min gap {min(gaps):.4f} ({elapsed:.0f}s)")


# --- 6. software-mitigation efficacy --------------------------------------------

@pytest.mark.slow
def test_criterion_6_software_mitigation():
    t0 = time.time()
    shots = 10_000
    specs = [
        BenchmarkSpec(GHZ_CONST_DEPTH, width=4),
        BenchmarkSpec(LONG_RANGE_CNOT, width=6),
        BenchmarkSpec(TELEPORT_LADDER, steps=2),
        BenchmarkSpec(TELEPORT_REPEATED, steps=3),
    ]
    noise = NoiseModel(confusion=ConfusionMatrix.symmetric(0.05),
                       t1=25_000.0, timing=TimingModel(controller=MCMIT),
                       mode="full")
    ok = True
    details = []
    for spec in specs:
        circ = make_benchmark(spec)
        raw, _, raw_hist = run_arm(circ, (), noise, shots, 55)
        mit, _, mit_hist = run_arm(circ, ("qcp", "harden", "stochastic"),
                                   noise, shots, 55)
        sigma = sqrt(raw * (1 - raw) / max(raw_hist.total_kept, 1)
                     + mit * (1 - mit) / max(mit_hist.total_kept, 1))
        ok &= mit - raw >= 3 * sigma
        details.append(f"{spec.kind}:{raw:.3f}->{mit:.3f}"
                       f"({(mit - raw) / max(sigma, 1e-9):.0f}s)")
    elapsed = time.time() - t0
    ok &= elapsed < 600
    assert report("6 software-mitigation", ok,
                  " ".join(details) + f" ({elapsed:.0f}s)")


# --- 7. discriminator sweep -----------------------------------------------------

def test_criterion_7_discriminator_sweep():
    t0 = time.time()
    ok = True
    details = []
    params = TraceParams(seed=0)
    batch = generate_traces(params, 10_000)
    train, eval_ = batch.split()
    last = {"boxcar": 1.1, "matched": 1.1}
    for k in (500, 375, 250, 125):          # 1000 -> 250 ns
        pb, _ = discriminate_boxcar(eval_, k)
        pm, _ = discriminate_matched(eval_, k, train=train)
        acc_b, acc_m = accuracy(pb, eval_.labels), accuracy(pm, eval_.labels)
        ok &= acc_m >= acc_b
        details.append(f"{int(k * params.dt)}ns b={acc_b:.4f} m={acc_m:.4f}")

    clean = TraceParams(seed=1, t1=1e15)
    cbatch = generate_traces(clean, 10_000)
    ctrain, ceval = cbatch.split()
    mono_prev = {"boxcar": 1.1, "matched": 1.1}
    for k in (500, 375, 250, 125):
        pb, _ = discriminate_boxcar(ceval, k)
        pm, _ = discriminate_matched(ceval, k, train=ctrain)
        oracle = gaussian_accuracy(whitened_separation(clean, k))
        sig = sqrt(oracle * (1 - oracle) / len(ceval.labels))
        for name, acc in (("boxcar", accuracy(pb, ceval.labels)),
                          ("matched", accuracy(pm, ceval.labels))):
            ok &= abs(acc - oracle) < 3 * sig
            ok &= acc <= mono_prev[name] + 3 * sig  # shrinking duration
            mono_prev[name] = acc
    elapsed = time.time() - t0
    ok &= elapsed < 120
    assert report("7 discriminator-sweep", ok,
                  " ".join(details) + f" ({elapsed:.0f}s)")


# --- 8. closed loop -------------------------------------------------------------

@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason=(
    "spec defect, see decisions ledger: condition-flip ensembles form a "
    "convex mixture strictly farther from the ideal distribution, so the "
    "lab confusion matrix cannot outperform the zeroed one"))
def test_criterion_8_closed_loop():
    from mcmforge.readout import confusion_from_eval

    t0 = time.time()
    params = TraceParams(seed=9)
    batch = generate_traces(params, 10_000)
    train, eval_ = batch.split()
    pred, _ = discriminate_matched(eval_, params.n_samples, train=train)
    lab_cm = confusion_from_eval(pred, eval_.labels)
    p01, p10 = lab_cm.for_qubit(0)
    all_qubits = ConfusionMatrix(p01={q: p01 for q in range(20)},
                                 p10={q: p10 for q in range(20)})
    noise = NoiseModel(confusion=all_qubits, mode="bitflip_only")
    circ = make_benchmark(BenchmarkSpec(TELEPORT_LADDER, steps=3))
    data = circ.metadata["data_clbits"]
    ideal = circ.metadata["ideal"]
    shots = 100_000
    fids = {}
    for label, cm in (("lab", all_qubits), ("zero", ConfusionMatrix.zero())):
        ens = stochastic_compile(circ, cm, shots)
        hist = run_shots(ens, noise, None, 77)
        fids[label] = hellinger_fidelity(hist.marginal(data), ideal)
    ok = fids["lab"] >= fids["zero"]
    elapsed = time.time() - t0
    report("8 closed-loop", ok,
           f"lab {fids['lab']:.4f} vs zero {fids['zero']:.4f} ({elapsed:.0f}s)")
    assert ok and elapsed < 300


# --- 9. MECH linearity ----------------------------------------------------------

def test_criterion_9_mech_linearity():
    grid = [0.25 * (i + 1) for i in range(10)]
    rows, summary = mech_sensitivity(grid, grid, grid)
    ok = True
    for axis in ("mcm_err", "mcm_lat", "cf_lat"):
        sel = [(r["ratio"], r["effective_depth"]) for r in rows
               if r["axis"] == axis]
        xs = np.array([s[0] for s in sel])
        ys = np.array([s[1] for s in sel])
        if np.allclose(ys, ys[0]):
            continue
        coef = np.polyfit(xs, ys, 1)
        resid = ys - np.polyval(coef, xs)
        r2 = 1 - (resid ** 2).sum() / ((ys - ys.mean()) ** 2).sum()
        ok &= r2 > 1 - 1e-12
    reduction = summary["feedback_contribution_reduction"]
    ok &= abs(reduction - 7.0) <= 0.05 * 7.0
    assert report("9 mech-linearity", ok, f"reduction {reduction:.2f}x")
