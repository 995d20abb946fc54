import random

import pytest

from mcmforge.bench import BenchmarkSpec, GHZ_CONST_DEPTH, make_benchmark
from mcmforge.ir import (Branch, BranchCondition, Circuit, Gate, Measure,
                         ProbGate, popcount, validate)
from mcmforge.qcp import TOP, UNIFORM, propagate, sample_concrete, simplify
from mcmforge.sim import exact_distribution, tv_distance


def marginal(dist, clbits):
    out = {}
    for word, p in dist.items():
        sub = 0
        for j, b in enumerate(clbits):
            sub |= ((word >> b) & 1) << j
        out[sub] = out.get(sub, 0.0) + p
    return out


def written_clbits(circuit):
    return sorted({i.clbit for i in circuit.instructions
                   if isinstance(i, Measure)})


def assert_equivalent(circuit, simplified, tol=1e-9):
    shared = written_clbits(simplified)
    d0 = marginal(exact_distribution(circuit), shared)
    d1 = marginal(exact_distribution(simplified), shared)
    assert tv_distance(d0, d1) <= tol


# --- propagate ----------------------------------------------------------------

def test_plus_state_measure_is_uniform():
    c = Circuit(1, 1, [Gate("h", (0,)), Measure(0, 0)])
    state = propagate(c)
    assert state.clbit_values[0] is UNIFORM


def test_deterministic_measure():
    c = Circuit(1, 1, [Gate("x", (0,)), Measure(0, 0)])
    state = propagate(c)
    assert state.clbit_values[0] == 1


def test_entangled_group_over_bound_is_top():
    # five-qubit GHZ via four CX: group size 5 > n_max 3
    ins = [Gate("h", (0,))]
    ins += [Gate("cx", (i, i + 1)) for i in range(4)]
    ins.append(Measure(2, 0))
    c = Circuit(5, 1, ins)
    state = propagate(c, n_max=3)
    assert state.clbit_values[0] is TOP
    assert state.is_top(2)


def test_entangled_measure_is_top_even_within_bound():
    # a Bell-pair member's measurement is correlated with the survivor:
    # removal would be unsound, so the classification must be TOP
    c = Circuit(2, 1, [Gate("h", (0,)), Gate("cx", (0, 1)), Measure(0, 0)])
    state = propagate(c, n_max=6)
    assert state.clbit_values[0] is TOP


# --- simplify -----------------------------------------------------------------

def test_coin_mcm_with_branch_becomes_prob_gate():
    # measure-and-feed-forward of a fair coin: one probabilistic X survives
    c = Circuit(2, 1, [
        Gate("h", (0,)), Measure(0, 0),
        Branch(BranchCondition("eq", 1, 1), (Gate("x", (1,)),)),
        Measure(1, 0)  # invalid rewrite guard: c0 consumed first
    ])
    c = Circuit(2, 2, [
        Gate("h", (0,)), Measure(0, 0),
        Branch(BranchCondition("eq", 1, 1), (Gate("x", (1,)),)),
        Measure(1, 1),
    ])
    out, report = simplify(c)
    assert report.mcms_removed == 1
    assert report.branches_removed == 1
    probs = [i for i in out.instructions if isinstance(i, ProbGate)]
    assert len(probs) == 1
    assert probs[0].gate == Gate("x", (1,))
    assert probs[0].p == 0.5
    assert not any(isinstance(i, Branch) for i in out.instructions)
    assert_equivalent(c, out)


def test_deterministic_fold_inlines_taken_arm():
    c = Circuit(2, 2, [
        Gate("x", (0,)), Measure(0, 0),
        Branch(BranchCondition("eq", 1, 1),
               (Gate("x", (1,)),), (Gate("h", (1,)),)),
        Measure(1, 1),
    ])
    out, report = simplify(c)
    # the inlined X makes qubit 1 deterministic, so its terminal measure
    # constant-folds away as well
    assert report.mcms_removed == 2
    assert report.branches_removed == 1
    assert Gate("x", (1,)) in out.instructions
    assert_equivalent(c, out)


def test_xor_condition_value_toggles_on_deterministic_bit():
    c = Circuit(3, 3, [
        Gate("x", (0,)), Measure(0, 0),          # deterministic 1
        Gate("h", (1,)), Gate("cx", (1, 2)), Measure(1, 1),  # entangled bit
        Branch(BranchCondition("xor", 0b011, 1), (Gate("x", (2,)),)),
        Measure(2, 2),
    ])
    out, report = simplify(c)
    assert report.mcms_removed == 1
    branch = next(i for i in out.instructions if isinstance(i, Branch))
    assert branch.cond.mask == 0b010
    assert branch.cond.value == 0  # toggled by the folded constant 1
    assert_equivalent(c, out)


def test_top_only_circuit_untouched():
    c = Circuit(2, 2, [
        Gate("h", (0,)), Gate("cx", (0, 1)),
        Measure(0, 0), Measure(1, 1),
    ])
    out, report = simplify(c)
    assert report.mcms_removed == 0
    assert report.prob_gates_added == 0
    assert out.instructions == c.instructions


def test_ghz_family_counts_and_soundness():
    for width in (3, 4, 5):
        c = make_benchmark(BenchmarkSpec(GHZ_CONST_DEPTH, width=width))
        out, report = simplify(c)
        assert report.mcms_removed == 1
        assert report.prob_gates_added == 2
        # the widest XOR lost exactly the coin operand
        widest = max((i for i in out.instructions if isinstance(i, Branch)),
                     key=lambda b: popcount(b.cond.mask))
        assert popcount(widest.cond.mask) == width - 1
        coin_bit = width - 1
        assert not (widest.cond.mask >> coin_bit) & 1
        assert_equivalent(c, out)


def test_simplify_idempotent():
    for width in (3, 4):
        c = make_benchmark(BenchmarkSpec(GHZ_CONST_DEPTH, width=width))
        once, _ = simplify(c)
        twice, report = simplify(once)
        assert report.mcms_removed == 0
        assert report.prob_gates_added == 0
        assert twice.instructions == once.instructions


def test_n_max_monotonicity():
    c = make_benchmark(BenchmarkSpec(GHZ_CONST_DEPTH, width=4))
    removed = [simplify(c, n_max=k)[1].mcms_removed for k in (1, 2, 4, 6, 8)]
    assert removed == sorted(removed)


def test_known_control_rewrites():
    c = Circuit(2, 1, [
        Gate("x", (0,)), Gate("cx", (0, 1)), Measure(1, 0),
    ])
    out, report = simplify(c)
    assert Gate("x", (1,)) in out.instructions
    assert not any(g for g in out.instructions
                   if isinstance(g, Gate) and g.name == "cx")
    assert_equivalent(c, out)


# --- sample_concrete ----------------------------------------------------------

def test_sample_concrete_no_prob_gates_identity():
    c = Circuit(1, 1, [Gate("h", (0,)), Measure(0, 0)])
    assert sample_concrete(c, 3).instructions == c.instructions


def test_sample_concrete_p_one_always_kept():
    c = Circuit(1, 0, [ProbGate(Gate("x", (0,)), 1.0)])
    for seed in range(50):
        assert sample_concrete(c, seed).instructions == [Gate("x", (0,))]


def test_sample_concrete_independent_frequencies():
    c = Circuit(2, 0, [ProbGate(Gate("x", (0,)), 0.5),
                       ProbGate(Gate("x", (1,)), 0.5)])
    counts = {}
    n = 100_000
    for seed in range(n):
        kept = tuple(isinstance(i, Gate) for i in
                     sample_concrete(c, seed).instructions)
        key = sum(kept)  # cheap but classify fully below
        concrete = sample_concrete(c, seed)
        sig = tuple(g.qubits[0] for g in concrete.instructions)
        counts[sig] = counts.get(sig, 0) + 1
    assert len(counts) == 4
    for sig, cnt in counts.items():
        assert abs(cnt / n - 0.25) < 0.02


def test_sample_concrete_groups_co_sampled():
    c = Circuit(2, 0, [ProbGate(Gate("x", (0,)), 0.5, group=0),
                       ProbGate(Gate("x", (1,)), 0.5, group=0)])
    seen = set()
    for seed in range(2000):
        n_gates = len(sample_concrete(c, seed).instructions)
        assert n_gates in (0, 2)
        seen.add(n_gates)
    assert seen == {0, 2}


# --- randomized soundness -----------------------------------------------------

def random_dynamic_circuit(seed):
    r = random.Random(seed)
    n_q = r.randint(2, 8)
    n_c = r.randint(2, 6)
    n_mcm = r.randint(1, min(4, n_c))
    ins = []
    written = []
    mcm_budget = n_mcm

    def random_gates(count):
        for _ in range(count):
            if r.random() < 0.7 or n_q < 2:
                name = r.choice(["h", "x", "z", "s", "t", "rz", "h"])
                params = (r.uniform(-3, 3),) if name == "rz" else ()
                ins.append(Gate(name, (r.randrange(n_q),), params))
            else:
                a, b = r.sample(range(n_q), 2)
                ins.append(Gate(r.choice(["cx", "cz", "swap"]), (a, b)))

    random_gates(r.randint(0, 4))
    while mcm_budget:
        mcm_budget -= 1
        free = [c for c in range(n_c) if c not in written]
        if not free:
            break
        clbit = r.choice(free)
        qubit = r.randrange(n_q)
        style = r.random()
        if style < 0.35:
            ins.append(Gate("h", (qubit,)))            # coin-style MCM
        elif style < 0.55:
            if r.random() < 0.5:
                ins.append(Gate("x", (qubit,)))        # deterministic MCM
        else:
            other = r.randrange(n_q)
            if other != qubit:
                ins.append(Gate("h", (other,)))
                ins.append(Gate("cx", (other, qubit)))  # entangled MCM
        ins.append(Measure(qubit, clbit))
        written.append(clbit)
        if r.random() < 0.85:
            size = min(r.choice([1, 1, 1, 2, 3]), len(written))
            if size == 2 and r.random() < 0.5:
                size = 1
            bits = r.sample(written, size)
            mask = 0
            for b in bits:
                mask |= 1 << b
            if size == 1:
                op = r.choice(["eq", "xor"])
            elif size % 2 == 1 and r.random() < 0.4:
                op = r.choice(["maj", "xor", "and", "or"])
            else:
                op = r.choice(["xor", "and", "or"])
            body = tuple(Gate(r.choice(["x", "z", "h"]), (q,))
                         for q in r.sample(range(n_q), r.randint(1, 2)))
            else_body = ()
            if r.random() < 0.2:
                else_body = (Gate("x", (r.randrange(n_q),)),)
            ins.append(Branch(BranchCondition(op, mask, r.randint(0, 1)),
                              body, else_body))
        random_gates(r.randint(0, 3))
    for q in range(min(n_q, n_c)):
        free = [c for c in range(n_c) if c not in written]
        if not free:
            break
        ins.append(Measure(q, free[0]))
        written.append(free[0])
    return validate(Circuit(n_q, n_c, ins))


@pytest.mark.parametrize("block", range(4))
def test_randomized_soundness(block):
    removed_total = 0
    for seed in range(block * 30, (block + 1) * 30):
        c = random_dynamic_circuit(seed)
        out, report = simplify(c)
        assert_equivalent(c, out)
        removed_total += report.mcms_removed
    assert removed_total > 0  # the generator produces removable patterns
