"""Measurement hardening: repetition encoding, repeated MCMs, parity checks.

A distance-d repetition code fans the measured qubit out onto d-1 fresh
ancillas with CX gates and measures all d copies. With N encoding CNOTs the
probability that any constituent error hits the hardened measurement block is

    p_err = 1 - (1 - p_cnot)^N * (1 - p_meas)^d

which is the closed-form cost model the planner weighs against the bare
measurement error. Odd d corrects single bitflips by majority voting (the
consuming branch condition is rewritten EQ -> MAJ); even d detects them
(the shot is discarded at simulation time when the copies disagree).
Parity checks protect GHZ states: each Z_i Z_j stabilizer is measured
non-destructively through a fresh ancilla, and the detection flag
D = 1 - prod_k (1 + m_k)/2 marks shots to discard.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import comb

from .ir import (Branch, Circuit, Gate, Measure, popcount, validate)
from .latency import TimingModel

CORRECT = "correct"
DETECT = "detect"


class CapacityError(ValueError):
    pass


@dataclass(frozen=True)
class ErrorBudget:
    p_cnot: float
    p_meas: float

    def __post_init__(self):
        for name in ("p_cnot", "p_meas"):
            if not 0.0 <= getattr(self, name) <= 0.5:
                raise ValueError(f"{name} must be in [0, 0.5]")


def rep_code_error(budget: ErrorBudget, d: int, n_cnots: int) -> float:
    """Probability any error strikes a distance-d block with N CNOTs."""
    if d < 1 or n_cnots < 0:
        raise ValueError("d >= 1 and n_cnots >= 0 required")
    return 1.0 - (1.0 - budget.p_cnot) ** n_cnots * (1.0 - budget.p_meas) ** d


def majority_error(p: float, d: int) -> float:
    """P(the d-bit majority vote decodes wrongly) under iid bitflips."""
    if d % 2 == 0:
        raise ValueError("majority voting requires odd d")
    need = (d + 1) // 2
    return sum(comb(d, k) * p ** k * (1 - p) ** (d - k)
               for k in range(need, d + 1))


def decoded_error(budget: ErrorBudget, d: int, n_cnots: int) -> float:
    """Post-decoding logical error of an odd-d majority-voted block.

    The closed form above counts every error event; after voting, measurement
    flips only matter when they out-vote, so the planner compares
    1 - (1-p_cnot)^N * (1 - majority_error) against the bare p_meas.
    """
    if d == 1:
        return budget.p_meas
    return 1.0 - (1.0 - budget.p_cnot) ** n_cnots * (1.0 - majority_error(budget.p_meas, d))


@dataclass(frozen=True)
class Repetition:
    d: int
    n_cnots: int
    decode: str = CORRECT


@dataclass(frozen=True)
class Repeat:
    r: int


@dataclass(frozen=True)
class Parity:
    pairs: tuple[tuple[int, int], ...]
    ancillas: tuple[int, ...] = ()


NONE = "none"


@dataclass
class HardeningPlan:
    """Per-MCM choice keyed by the measurement's instruction index."""

    choices: dict[int, object] = field(default_factory=dict)

    def to_json_obj(self):
        out = {}
        for clbit, choice in sorted(self.choices.items(),
                                    key=lambda kv: str(kv[0])):
            if choice == NONE:
                out[str(clbit)] = {"kind": "none"}
            elif isinstance(choice, Repetition):
                out[str(clbit)] = {"kind": "repetition", "d": choice.d,
                                   "n_cnots": choice.n_cnots,
                                   "decode": choice.decode}
            elif isinstance(choice, Repeat):
                out[str(clbit)] = {"kind": "repeat", "r": choice.r}
            else:
                out[str(clbit)] = {"kind": "parity",
                                   "pairs": [list(p) for p in choice.pairs]}
        return out


def _find_measure(circuit: Circuit, clbit: int) -> int:
    for idx, ins in enumerate(circuit.instructions):
        if isinstance(ins, Measure) and ins.clbit == clbit:
            return idx
    raise ValueError(f"no measurement writes clbit {clbit}")


def _segment_end(circuit: Circuit, start: int, clbit: int) -> int:
    """Index where ``clbit`` is rewritten, or the circuit end."""
    for j in range(start, len(circuit.instructions)):
        ins = circuit.instructions[j]
        if isinstance(ins, Measure) and ins.clbit == clbit:
            return j
    return len(circuit.instructions)


def _segment_consumers(circuit: Circuit, start: int, clbit: int):
    """Indices of branches reading ``clbit`` before it is rewritten."""
    found = []
    for j in range(start, len(circuit.instructions)):
        ins = circuit.instructions[j]
        if isinstance(ins, Measure) and ins.clbit == clbit:
            break
        if isinstance(ins, Branch) and (ins.cond.mask >> clbit) & 1:
            found.append(j)
    return found


def _single_bit_consumers(circuit: Circuit, start: int, clbit: int) -> bool:
    return all(popcount(circuit.instructions[j].cond.mask) == 1
               for j in _segment_consumers(circuit, start, clbit))


def _is_mid_circuit(circuit: Circuit, midx: int) -> bool:
    """A measurement is an MCM when its result feeds control flow or its
    qubit keeps participating; trailing terminal readout is neither."""
    measure = circuit.instructions[midx]
    if _segment_consumers(circuit, midx + 1, measure.clbit):
        return True
    for ins in circuit.instructions[midx + 1:]:
        if isinstance(ins, Gate) and measure.qubit in ins.qubits:
            return True
        if isinstance(ins, Measure) and ins.qubit == measure.qubit:
            return True
        if isinstance(ins, Branch):
            for g in ins.then_ops + ins.else_ops:
                if measure.qubit in g.qubits:
                    return True
    return False


def _check_capacity(n_qubits: int, n_clbits: int):
    if n_qubits > 32:
        raise CapacityError(f"{n_qubits} qubits exceed the 32-qubit ceiling")
    if n_clbits > 32:
        raise CapacityError(f"{n_clbits} clbits exceed the 32-bit register")


def inject_repetition(circuit: Circuit, clbit: int, d: int,
                      decode: str = CORRECT,
                      measure_index: int | None = None) -> Circuit:
    """Fan the target MCM out over d-1 fresh ancillas and measure all copies.

    CORRECT (odd d) rewrites single-bit consumers to a MAJ vote over the d
    clbits; DETECT leaves conditions reading the original bit and discards
    shots whose copies disagree (recorded as an all_equal postselect rule).
    The target MCM is the first measurement writing ``clbit`` unless an
    explicit ``measure_index`` picks a later rewrite of the same clbit; only
    consumers within that write segment are rewritten.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if d == 1:
        return circuit.copy()
    if decode == CORRECT and d % 2 == 0:
        raise ValueError("error correction needs odd d")
    midx = _find_measure(circuit, clbit) if measure_index is None else measure_index
    measure = circuit.instructions[midx]
    if not isinstance(measure, Measure) or measure.clbit != clbit:
        raise ValueError("measure_index does not write the target clbit")
    n_anc = d - 1
    new_qubits = list(range(circuit.n_qubits, circuit.n_qubits + n_anc))
    new_clbits = list(range(circuit.n_clbits, circuit.n_clbits + n_anc))
    _check_capacity(circuit.n_qubits + n_anc, circuit.n_clbits + n_anc)

    block = [Gate("cx", (measure.qubit, a)) for a in new_qubits]
    block.append(measure)
    block.extend(Measure(a, c) for a, c in zip(new_qubits, new_clbits))

    all_bits = [clbit] + new_clbits
    vote_mask = 0
    for c in all_bits:
        vote_mask |= 1 << c

    seg_end = _segment_end(circuit, midx + 1, clbit)
    out = list(circuit.instructions[:midx]) + block
    for j in range(midx + 1, len(circuit.instructions)):
        ins = circuit.instructions[j]
        if (j < seg_end and isinstance(ins, Branch)
                and (ins.cond.mask >> clbit) & 1):
            if popcount(ins.cond.mask) == 1:
                # all copies agree on kept shots, so AND reduces to the value
                new_op = "maj" if decode == CORRECT else "and"
                ins = replace(ins,
                              cond=replace(ins.cond, op=new_op, mask=vote_mask))
            elif decode == CORRECT:
                raise ValueError(
                    "majority decode requires single-bit consumers; use DETECT")
        out.append(ins)

    meta = dict(circuit.metadata)
    if decode == DETECT:
        rules = list(meta.get("postselect", ()))
        rules.append({"kind": "all_equal", "mask": vote_mask})
        meta["postselect"] = rules
    hardened = Circuit(circuit.n_qubits + n_anc, circuit.n_clbits + n_anc,
                       out, meta)
    return validate(hardened)


def inject_repeated_mcm(circuit: Circuit, clbit: int, r: int,
                        measure_index: int | None = None) -> Circuit:
    """Replace one MCM with r sequential reads of the same (QND) qubit.

    The collapsed state is re-read r times into fresh clbits and single-bit
    consumers vote MAJ over all r copies.
    """
    if r != 1 and (r < 1 or r % 2 == 0):
        raise ValueError("repeated measurement count must be odd")
    if r == 1:
        return circuit.copy()
    midx = _find_measure(circuit, clbit) if measure_index is None else measure_index
    measure = circuit.instructions[midx]
    if not isinstance(measure, Measure) or measure.clbit != clbit:
        raise ValueError("measure_index does not write the target clbit")
    new_clbits = list(range(circuit.n_clbits, circuit.n_clbits + r - 1))
    _check_capacity(circuit.n_qubits, circuit.n_clbits + r - 1)

    block = [measure] + [Measure(measure.qubit, c) for c in new_clbits]
    vote_mask = 1 << clbit
    for c in new_clbits:
        vote_mask |= 1 << c

    seg_end = _segment_end(circuit, midx + 1, clbit)
    out = list(circuit.instructions[:midx]) + block
    for j in range(midx + 1, len(circuit.instructions)):
        ins = circuit.instructions[j]
        if (j < seg_end and isinstance(ins, Branch)
                and (ins.cond.mask >> clbit) & 1):
            if popcount(ins.cond.mask) != 1:
                raise ValueError("majority decode requires single-bit consumers")
            ins = replace(ins, cond=replace(ins.cond, op="maj", mask=vote_mask))
        out.append(ins)
    hardened = Circuit(circuit.n_qubits, circuit.n_clbits + r - 1, out,
                       dict(circuit.metadata))
    return validate(hardened)


def default_parity_pairs(ghz_qubits) -> list[tuple[int, int]]:
    """Adjacent-member Z_i Z_j pairs chained along the GHZ register."""
    members = list(ghz_qubits)
    return [(members[i], members[i + 1]) for i in range(len(members) - 1)]


def inject_parity_checks(circuit: Circuit, ghz_qubits, pairs=None,
                         insert_at: int | None = None) -> Circuit:
    """Non-destructive Z_i Z_j checks on GHZ members with one ancilla per pair.

    Every ancilla reads the pair parity (0 on the code space); any nonzero
    flag raises the detection bit D, and flagged shots are discarded by the
    simulator's postselection.
    """
    members = set(ghz_qubits)
    pairs = [tuple(p) for p in (pairs if pairs is not None
                                else default_parity_pairs(ghz_qubits))]
    for i, j in pairs:
        if i not in members or j not in members:
            raise ValueError(f"parity pair ({i},{j}) leaves the GHZ register")
    n_pairs = len(pairs)
    new_qubits = list(range(circuit.n_qubits, circuit.n_qubits + n_pairs))
    new_clbits = list(range(circuit.n_clbits, circuit.n_clbits + n_pairs))
    _check_capacity(circuit.n_qubits + n_pairs, circuit.n_clbits + n_pairs)

    if insert_at is None:
        insert_at = len(circuit.instructions)
        while insert_at > 0 and isinstance(
                circuit.instructions[insert_at - 1], Measure):
            insert_at -= 1

    block = []
    flag_mask = 0
    for (i, j), anc, cl in zip(pairs, new_qubits, new_clbits):
        block.append(Gate("cx", (i, anc)))
        block.append(Gate("cx", (j, anc)))
        block.append(Measure(anc, cl))
        flag_mask |= 1 << cl

    out = (list(circuit.instructions[:insert_at]) + block
           + list(circuit.instructions[insert_at:]))
    meta = dict(circuit.metadata)
    rules = list(meta.get("postselect", ()))
    rules.append({"kind": "all_zero", "mask": flag_mask})
    meta["postselect"] = rules
    hardened = Circuit(circuit.n_qubits + n_pairs, circuit.n_clbits + n_pairs,
                       out, meta)
    return validate(hardened)


def plan_hardening(circuit: Circuit, budget: ErrorBudget,
                   timing: TimingModel | None = None, d_max: int = 3,
                   swap_cost=None) -> HardeningPlan:
    """Pick the repetition distance minimizing the decoded error per MCM.

    Scans odd d in 1..d_max with N = (d-1) + 3*swap_cost(d) CNOTs (each SWAP
    decomposes into 3 CNOTs; the layout callback defaults to all-to-all, i.e.
    zero). MCMs consumed by multi-bit conditions cannot take a majority
    rewrite, so they get d=2 error detection when the undetected-error rate
    beats the bare measurement, NONE otherwise.
    """
    del timing  # latency-aware planning is out of scope; kept for interface
    swap_cost = swap_cost or (lambda d: 0)
    plan = HardeningPlan()
    for idx, ins in enumerate(circuit.instructions):
        if not isinstance(ins, Measure):
            continue
        if not _is_mid_circuit(circuit, idx):
            continue  # terminal readout is out of hardening's scope
        clbit = ins.clbit
        if _single_bit_consumers(circuit, idx + 1, clbit):
            best_d, best_err = 1, budget.p_meas
            d = 3
            while d <= d_max:
                n_cnots = (d - 1) + 3 * swap_cost(d)
                err = decoded_error(budget, d, n_cnots)
                if err < best_err:
                    best_d, best_err = d, err
                d += 2
            if best_d == 1:
                plan.choices[idx] = NONE
            else:
                plan.choices[idx] = Repetition(
                    best_d, (best_d - 1) + 3 * swap_cost(best_d), CORRECT)
        else:
            # multi-bit reduction consumes this bit: majority rewrite is not
            # expressible, but a d=2 detect block postselects flips away
            n_cnots = 1 + 3 * swap_cost(2)
            undetected = (budget.p_meas ** 2
                          + budget.p_cnot * n_cnots * budget.p_meas)
            if d_max >= 2 and undetected < budget.p_meas and budget.p_meas > 0:
                plan.choices[idx] = Repetition(2, n_cnots, DETECT)
            else:
                plan.choices[idx] = NONE
    return plan


def apply_plan(circuit: Circuit, plan: HardeningPlan,
               budget: ErrorBudget | None = None) -> Circuit:
    """Apply per-MCM hardening choices.

    Choices are applied from the highest measurement index down so earlier
    indices stay valid as instructions are inserted. Detect-mode targets get
    their post-selection-conditioned residual error recorded in circuit
    metadata (effective_flip), which the stochastic pass consumes instead of
    the raw confusion rate.
    """
    out = circuit
    effective: dict[str, float] = dict(
        circuit.metadata.get("effective_flip", {}))
    for idx in sorted((k for k in plan.choices if isinstance(k, int)),
                      reverse=True):
        choice = plan.choices[idx]
        if choice == NONE:
            continue
        clbit = circuit.instructions[idx].clbit
        if isinstance(choice, Repetition):
            out = inject_repetition(out, clbit, choice.d, choice.decode,
                                    measure_index=idx)
            if choice.decode == DETECT and budget is not None:
                p = budget.p_meas
                kept = (1.0 - p) ** choice.d + p ** choice.d
                effective[str(clbit)] = p ** choice.d / max(kept, 1e-12)
        elif isinstance(choice, Repeat):
            out = inject_repeated_mcm(out, clbit, choice.r, measure_index=idx)
        else:  # pragma: no cover
            raise TypeError(f"unknown hardening choice {choice!r}")
    if effective:
        out.metadata["effective_flip"] = effective
    return out


def harden_circuit(circuit: Circuit, budget: ErrorBudget,
                   timing: TimingModel | None = None, d_max: int = 3,
                   parity_ghz_qubits=None) -> tuple[Circuit, HardeningPlan]:
    """Auto-plan repetition hardening, plus GHZ parity checks when requested."""
    plan = plan_hardening(circuit, budget, timing, d_max)
    out = apply_plan(circuit, plan, budget)
    ghz = parity_ghz_qubits
    if ghz is None:
        ghz = circuit.metadata.get("ghz_qubits")
    if ghz:
        pairs = default_parity_pairs(ghz)
        out = inject_parity_checks(out, ghz, pairs)
        plan.choices["parity"] = Parity(tuple(pairs))
    return out, plan
