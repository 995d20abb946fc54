import pytest

from mcmforge.bench import BenchmarkSpec, TELEPORT_LADDER, make_benchmark
from mcmforge.ir import Branch, BranchCondition, Circuit, Gate, Measure
from mcmforge.sim import (NoiseModel, OutcomeHistogram, hellinger_fidelity,
                          run_shots)
from mcmforge.stochastic import (ConfigError, ConfusionMatrix, LayoutError,
                                 merge_ensemble_counts, stochastic_compile)


def _single_branch_circuit():
    return Circuit(2, 2, [
        Gate("h", (0,)), Measure(0, 0),
        Branch(BranchCondition("eq", 1, 1), (Gate("x", (1,)),)),
        Measure(1, 1),
    ])


def test_single_eq_branch_weights():
    # bitflip probability 0.1, 10000 shots: 9000 original + 1000 flipped
    ens = stochastic_compile(_single_branch_circuit(),
                             ConfusionMatrix.symmetric(0.1), 10_000)
    assert ens.total_shots == 10_000
    counts = sorted(c for _, c in ens.variants)
    assert counts == [1000, 9000]
    flipped = [circ for circ, n in ens.variants if n == 1000][0]
    branch = next(i for i in flipped.instructions if isinstance(i, Branch))
    assert branch.cond.flip is True


def test_zero_confusion_identity():
    c = _single_branch_circuit()
    ens = stochastic_compile(c, ConfusionMatrix.zero(), 5000)
    assert len(ens.variants) == 1
    circ, n = ens.variants[0]
    assert n == 5000
    assert circ.instructions == c.instructions


def test_two_branches_product_weights():
    c = Circuit(3, 3, [
        Gate("h", (0,)), Measure(0, 0),
        Branch(BranchCondition("eq", 1, 1), (Gate("x", (2,)),)),
        Gate("h", (1,)), Measure(1, 1),
        Branch(BranchCondition("eq", 2, 1), (Gate("z", (2,)),)),
        Measure(2, 2),
    ])
    ens = stochastic_compile(c, ConfusionMatrix.symmetric(0.1), 10_000)
    counts = sorted(c for _, c in ens.variants)
    assert counts == [100, 900, 900, 8100]
    assert sum(counts) == 10_000


def test_weights_always_sum_exactly():
    c = _single_branch_circuit()
    for p in (0.03, 0.123, 0.37):
        for n in (10, 999, 12345):
            ens = stochastic_compile(c, ConfusionMatrix.symmetric(p), n)
            assert sum(cnt for _, cnt in ens.variants) == n


def test_truncation_keeps_variant_count_linear():
    ins = []
    written = []
    for j in range(6):
        ins.append(Gate("h", (j,)))
        ins.append(Measure(j, j))
        written.append(j)
        ins.append(Branch(BranchCondition("eq", 1 << j, 1),
                          (Gate("x", (6,)),)))
    ins.append(Measure(6, 6))
    c = Circuit(7, 7, ins)
    ens = stochastic_compile(c, ConfusionMatrix.symmetric(0.01), 1000)
    # joint-flip variants below 1/(2N) are truncated: far fewer than 2^6
    assert len(ens.variants) <= 1 + 6


def test_missing_source_raises():
    c = Circuit(1, 1, [Measure(0, 0),
                       Branch(BranchCondition("eq", 1, 1), ())])
    bad = Circuit(1, 2, list(c.instructions))
    bad.instructions[1] = Branch(BranchCondition("eq", 2, 1), ())
    with pytest.raises(Exception):
        stochastic_compile(bad, ConfusionMatrix.symmetric(0.1), 100)


def test_merge_counts_additive():
    a = OutcomeHistogram({0: 90, 1: 10}, 100, 0, 1)
    b = OutcomeHistogram({0: 10, 1: 90}, 100, 0, 1)
    merged = merge_ensemble_counts([(a, 100), (b, 100)])
    assert merged.counts == {0: 100, 1: 100}
    single = merge_ensemble_counts([(a, 100)])
    assert single.counts == a.counts
    with pytest.raises(LayoutError):
        merge_ensemble_counts([(a, 100), (OutcomeHistogram({0: 1}, 1, 0, 2), 1)])


def test_effective_flip_metadata_overrides_raw():
    c = _single_branch_circuit()
    c.metadata["effective_flip"] = {"0": 0.0}
    ens = stochastic_compile(c, ConfusionMatrix.symmetric(0.2), 1000)
    assert len(ens.variants) == 1


def test_run_shots_accepts_ensembles():
    c = _single_branch_circuit()
    ens = stochastic_compile(c, ConfusionMatrix.symmetric(0.1), 4000)
    noise = NoiseModel(confusion=ConfusionMatrix.symmetric(0.1),
                       mode="bitflip_only")
    hist = run_shots(ens, noise, None, 7)
    assert hist.total_kept == 4000


@pytest.mark.xfail(strict=True, reason=(
    "spec defect, see decisions ledger: inverting conditions with "
    "probability p yields a convex mixture strictly farther from the ideal "
    "distribution than the unmitigated arm, so the claimed >=3 sigma "
    "fidelity gain is unattainable under the specified semantics"))
def test_stochastic_mitigation_beats_unmitigated():
    spec = BenchmarkSpec(TELEPORT_LADDER, steps=2)
    circ = make_benchmark(spec)
    data = circ.metadata["data_clbits"]
    ideal = circ.metadata["ideal"]
    p = 0.05
    noise = NoiseModel(confusion=ConfusionMatrix.symmetric(p),
                       mode="bitflip_only")
    n = 100_000
    raw = run_shots(circ, noise, n, 31)
    ens = stochastic_compile(circ, ConfusionMatrix.symmetric(p), n)
    mit = run_shots(ens, noise, None, 31)
    f_raw = hellinger_fidelity(raw.marginal(data), ideal)
    f_mit = hellinger_fidelity(mit.marginal(data), ideal)
    assert f_mit > f_raw + 3.0 / (n ** 0.5)
