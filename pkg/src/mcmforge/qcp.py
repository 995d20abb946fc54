"""Dynamic-circuit simplification via bounded symbolic state tracking.

Walks the circuit once, tracking entanglement groups (qubits merged by 2q
gates) with exact amplitude tables bounded to n_max qubits per group; larger
groups degrade to the unknown value TOP. Measurements whose outcome is
statically known are removed:

* deterministic outcomes are constant-folded into every consuming condition
  (AND/OR/XOR/MAJ/EQ each have exact folding rules, and decided branches are
  replaced by the taken arm's gates);
* uniform coin outcomes (probability exactly 1/2 on a qubit that is in a
  product state at the measurement point and dead afterwards) become a
  per-shot coin: consuming single-bit branches turn into probability-1/2
  gates and wider XOR conditions drop the operand, the coin realized as a
  co-sampled ProbGate pair applying the branch body.

Every rewrite carries an exact distribution-preservation argument; anything
outside those cases conservatively stays (TOP is never an error). The oracle
test suite drives original and simplified circuits through exact_distribution
and requires agreement at machine precision.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .ir import (Barrier, Branch, BranchCondition, Circuit, Gate,
                 INVOLUTORY_GATES, Measure, ProbGate, popcount, validate)

TOP = "top"
UNIFORM = "uniform"
DET_TOL = 1e-12

_SQ2 = 2.0 ** -0.5
_MATS = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
    "h": np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex),
    "s": np.array([[1, 0], [0, 1j]], dtype=complex),
    "sdg": np.array([[1, 0], [0, -1j]], dtype=complex),
    "t": np.array([[1, 0], [0, np.exp(0.25j * np.pi)]], dtype=complex),
}


def _mat_1q(gate: Gate):
    if gate.name == "rz":
        t = gate.params[0]
        return np.array([[np.exp(-0.5j * t), 0], [0, np.exp(0.5j * t)]],
                        dtype=complex)
    return _MATS[gate.name]


class _Group:
    """One entanglement group: ordered member qubits + dense amplitude table."""

    __slots__ = ("qubits", "amps")

    def __init__(self, qubits, amps):
        self.qubits = list(qubits)
        self.amps = amps  # shape (2,)*len(qubits), unit norm

    def axis(self, qubit):
        return self.qubits.index(qubit)


def _basis_group(qubit, value):
    amps = np.zeros((2,), dtype=complex)
    amps[value] = 1.0
    return _Group([qubit], amps)


@dataclass
class SymbolicState:
    """QCP abstraction: per-group amplitude tables with a TOP fallback."""

    n_max: int
    groups: dict[int, object] = field(default_factory=dict)  # qubit -> _Group|TOP
    clbit_values: dict[int, object] = field(default_factory=dict)
    merges: int = 0

    def group_of(self, qubit):
        if qubit not in self.groups:
            self.groups[qubit] = _basis_group(qubit, 0)
        return self.groups[qubit]

    def mark_top(self, qubit):
        g = self.groups.get(qubit)
        if g is TOP or g is None:
            self.groups[qubit] = TOP
            return
        for q in g.qubits:
            self.groups[q] = TOP

    def is_top(self, qubit):
        return self.groups.get(qubit) is TOP

    def apply_gate(self, gate: Gate):
        qs = gate.qubits
        if any(self.is_top(q) for q in qs):
            for q in qs:
                self.mark_top(q)
            return
        if len(qs) == 1:
            g = self.group_of(qs[0])
            ax = g.axis(qs[0])
            g.amps = np.moveaxis(
                np.tensordot(_mat_1q(gate), g.amps, axes=([1], [ax])), 0, ax)
            return
        ga, gb = self.group_of(qs[0]), self.group_of(qs[1])
        if ga is not gb:
            merged = ga.qubits + gb.qubits
            if len(merged) > self.n_max:
                for q in merged:
                    self.groups[q] = TOP
                return
            g = _Group(merged, np.tensordot(ga.amps, gb.amps, axes=0))
            for q in merged:
                self.groups[q] = g
            self.merges += 1
        else:
            g = ga
        self._apply_2q(g, gate)

    def _apply_2q(self, g: _Group, gate: Gate):
        a, b = g.axis(gate.qubits[0]), g.axis(gate.qubits[1])
        n = len(g.qubits)
        amps = g.amps.copy()
        idx = [slice(None)] * n
        if gate.name == "cx":
            i10 = list(idx); i10[a], i10[b] = 1, 0
            i11 = list(idx); i11[a], i11[b] = 1, 1
            tmp = amps[tuple(i10)].copy()
            amps[tuple(i10)] = amps[tuple(i11)]
            amps[tuple(i11)] = tmp
        elif gate.name == "cz":
            i11 = list(idx); i11[a], i11[b] = 1, 1
            amps[tuple(i11)] *= -1
        elif gate.name == "swap":
            i01 = list(idx); i01[a], i01[b] = 0, 1
            i10 = list(idx); i10[a], i10[b] = 1, 0
            tmp = amps[tuple(i01)].copy()
            amps[tuple(i01)] = amps[tuple(i10)]
            amps[tuple(i10)] = tmp
        else:  # pragma: no cover - arity checked upstream
            raise ValueError(gate.name)
        g.amps = amps

    def split_out(self, qubit, outcome, residual):
        """Collapse a qubit out of its group, leaving the residual table."""
        g = self.group_of(qubit)
        rest = [q for q in g.qubits if q != qubit]
        if rest:
            rg = _Group(rest, residual)
            for q in rest:
                self.groups[q] = rg
        self.groups[qubit] = _basis_group(qubit, outcome)

    def classify_measure(self, qubit):
        """Classify an outcome: (0|1, residual), (UNIFORM, residual), or TOP.

        UNIFORM requires probability exactly 1/2 and equal post-measurement
        residual states (up to global phase): the measured qubit is then in
        an unentangled balanced superposition, so its outcome is a fair coin
        uncorrelated with every surviving qubit.
        """
        if self.is_top(qubit):
            return TOP, None
        g = self.group_of(qubit)
        blocks = np.moveaxis(g.amps, g.axis(qubit), 0)
        b0, b1 = blocks[0], blocks[1]
        p1 = float(np.sum(np.abs(b1) ** 2))
        if p1 <= DET_TOL:
            return 0, b0 / np.sqrt(max(1.0 - p1, DET_TOL))
        if p1 >= 1.0 - DET_TOL:
            return 1, b1 / np.sqrt(p1)
        if abs(p1 - 0.5) <= DET_TOL:
            r0 = b0 / np.sqrt(1.0 - p1)
            r1 = b1 / np.sqrt(p1)
            flat0, flat1 = r0.ravel(), r1.ravel()
            k = int(np.argmax(np.abs(flat0)))
            if abs(flat1[k]) > DET_TOL:
                phase = flat0[k] / flat1[k]
                phase /= abs(phase)
                if np.max(np.abs(flat0 - phase * flat1)) <= 1e-10:
                    return UNIFORM, r0
        return TOP, None


@dataclass
class SimplifyReport:
    mcms_removed: int = 0
    branches_removed: int = 0
    branch_inputs_removed: int = 0
    prob_gates_added: int = 0
    notes: list[str] = field(default_factory=list)

    def to_json_obj(self):
        return {"mcms_removed": self.mcms_removed,
                "branches_removed": self.branches_removed,
                "branch_inputs_removed": self.branch_inputs_removed,
                "prob_gates_added": self.prob_gates_added,
                "notes": list(self.notes)}


def propagate(circuit: Circuit, n_max: int = 6) -> SymbolicState:
    """Run the abstract interpretation and return the final symbolic state."""
    state = SymbolicState(n_max=n_max)
    for ins in circuit.instructions:
        _step(state, ins)
    return state


def _step(state: SymbolicState, ins):
    if isinstance(ins, Gate):
        state.apply_gate(ins)
    elif isinstance(ins, Measure):
        kind, residual = state.classify_measure(ins.qubit)
        if kind in (0, 1):
            state.clbit_values[ins.clbit] = kind
            state.split_out(ins.qubit, kind, residual)
        elif kind is UNIFORM:
            state.clbit_values[ins.clbit] = UNIFORM
            state.split_out(ins.qubit, 0, residual)
            state.mark_top(ins.qubit)  # collapsed value unknown at compile time
        else:
            state.clbit_values[ins.clbit] = TOP
            state.mark_top(ins.qubit)
    elif isinstance(ins, Branch):
        decided = _decide(state, ins.cond)
        if decided is None:
            for g in ins.then_ops + ins.else_ops:
                for q in g.qubits:
                    state.mark_top(q)
        else:
            for g in (ins.then_ops if decided else ins.else_ops):
                state.apply_gate(g)
    elif isinstance(ins, ProbGate):
        for q in ins.gate.qubits:
            state.mark_top(q)
    elif isinstance(ins, Barrier):
        pass
    else:  # pragma: no cover
        raise TypeError(type(ins).__name__)


def _decide(state: SymbolicState, cond: BranchCondition):
    """Evaluate a condition when every selected clbit has a known constant."""
    bits = []
    for c in cond.clbits():
        v = state.clbit_values.get(c, TOP)
        if v not in (0, 1):
            return None
        bits.append(v)
    return _reduce(cond, bits)


def _reduce(cond: BranchCondition, bits):
    if cond.op == "and":
        red = int(all(bits))
    elif cond.op == "or":
        red = int(any(bits))
    elif cond.op == "xor":
        red = sum(bits) & 1
    elif cond.op == "maj":
        red = int(2 * sum(bits) > len(bits))
    else:
        red = bits[0]
    taken = int(red == cond.value)
    return taken ^ 1 if cond.flip else taken


def _mask(clbits):
    m = 0
    for c in clbits:
        m |= 1 << c
    return m


def _fold_condition(cond: BranchCondition, known: dict[int, int]):
    """Drop known-constant clbits from a condition.

    Returns ("const", 0|1, n_dropped), ("cond", new_cond, n_dropped), or
    ("keep", cond, 0) when the constants cannot be folded exactly
    (an undecided MAJ vote with an uncancelled constant).
    """
    const_bits = [(c, known[c]) for c in cond.clbits() if c in known]
    if not const_bits:
        return ("cond", cond, 0)
    unknown = [c for c in cond.clbits() if c not in known]
    values = [v for _, v in const_bits]
    op = cond.op
    dropped = len(const_bits)

    def finish(red):
        taken = int(red == cond.value)
        return ("const", taken ^ 1 if cond.flip else taken, dropped)

    if op == "eq":
        return finish(values[0])
    if op == "and":
        if 0 in values:
            return finish(0)
        if not unknown:
            return finish(1)
        new_op = "and" if len(unknown) > 1 else "eq"
        return ("cond", replace(cond, op=new_op, mask=_mask(unknown)), dropped)
    if op == "or":
        if 1 in values:
            return finish(1)
        if not unknown:
            return finish(0)
        new_op = "or" if len(unknown) > 1 else "eq"
        return ("cond", replace(cond, op=new_op, mask=_mask(unknown)), dropped)
    if op == "xor":
        parity = sum(values) & 1
        if not unknown:
            return finish(parity)
        return ("cond", replace(cond, mask=_mask(unknown),
                                value=cond.value ^ parity), dropped)
    # maj: resolve when the constants decide the vote; a 0/1 pair cancels
    # exactly; anything else is inexpressible within the condition ops, so
    # the branch is kept (and the feeding measurement stays).
    k = len(cond.clbits())
    need = (k + 1) // 2
    ones = sum(values)
    zeros = len(values) - ones
    if ones >= need:
        return finish(1)
    if zeros >= need:
        return finish(0)
    if ones == zeros:
        if len(unknown) == 1:
            return ("cond", replace(cond, op="eq", mask=_mask(unknown)), dropped)
        return ("cond", replace(cond, mask=_mask(unknown)), dropped)
    return ("keep", cond, 0)


def _qubit_used_after(circuit: Circuit, start: int, qubit: int) -> bool:
    for ins in circuit.instructions[start:]:
        if isinstance(ins, Gate) and qubit in ins.qubits:
            return True
        if isinstance(ins, Measure) and ins.qubit == qubit:
            return True
        if isinstance(ins, ProbGate) and qubit in ins.gate.qubits:
            return True
        if isinstance(ins, Branch):
            for g in ins.then_ops + ins.else_ops:
                if qubit in g.qubits:
                    return True
    return False


def _involutory_body(branch: Branch) -> bool:
    """Body composes with itself to the identity: required when a coin
    operand is dropped from a wider condition (the body is applied an extra
    coin-dependent time)."""
    seen = set()
    for g in branch.then_ops:
        if g.name not in INVOLUTORY_GATES:
            return False
        if seen & set(g.qubits):
            return False
        seen.update(g.qubits)
    return True


def _coin_consumer_ok(branch: Branch, clbit: int) -> bool:
    """Whether this branch can absorb a fair-coin operand exactly."""
    if branch.else_ops:
        return False
    cond = branch.cond
    if cond.op == "xor":
        if popcount(cond.mask) > 1:
            return _involutory_body(branch)
        fire_on_one = (cond.value == 1) != cond.flip
        return fire_on_one or _involutory_body(branch)
    if cond.op == "eq":
        fire_on_one = (cond.value == 1) != cond.flip
        return fire_on_one or _involutory_body(branch)
    return False


def simplify(circuit: Circuit, n_max: int = 6) -> tuple[Circuit, SimplifyReport]:
    """Remove statically-known MCMs and simplify dependent control logic.

    Deterministic MCMs are removed only when every consuming branch can fold
    the constant exactly (undecided MAJ votes keep their measurement).
    Uniform MCMs are removed only in the provably-sound coin case. The output
    circuit's kept-shot distribution over surviving clbits equals the input's
    exactly under noiseless semantics.
    """
    report = SimplifyReport()
    state = SymbolicState(n_max=n_max)
    removed_known: dict[int, int] = {}   # clbits of removed deterministic MCMs
    kept_known: dict[int, int] = {}      # known constants whose MCM remains
    coins: dict[int, int] = {}           # removed uniform clbit -> coin group
    next_group = max(
        (i.group for i in circuit.instructions
         if isinstance(i, ProbGate) and i.group is not None),
        default=-1) + 1
    out: list = []

    def consumers(start, clbit):
        for j in range(start, len(circuit.instructions)):
            ins = circuit.instructions[j]
            if isinstance(ins, Branch) and (ins.cond.mask >> clbit) & 1:
                yield ins

    for idx, ins in enumerate(circuit.instructions):
        if isinstance(ins, Measure):
            removed_known.pop(ins.clbit, None)
            kept_known.pop(ins.clbit, None)
            coins.pop(ins.clbit, None)
            kind, _residual = state.classify_measure(ins.qubit)
            if kind in (0, 1):
                trial = dict(removed_known)
                trial[ins.clbit] = kind
                removable = all(
                    _fold_condition(br.cond, trial)[0] != "keep"
                    for br in consumers(idx + 1, ins.clbit))
                _step(state, ins)
                if removable:
                    removed_known[ins.clbit] = kind
                    report.mcms_removed += 1
                    continue
                kept_known[ins.clbit] = kind
                out.append(ins)
                continue
            if kind is UNIFORM:
                removable = not _qubit_used_after(circuit, idx + 1, ins.qubit)
                removable = removable and all(
                    _coin_consumer_ok(br, ins.clbit)
                    for br in consumers(idx + 1, ins.clbit))
                _step(state, ins)
                if removable:
                    coins[ins.clbit] = next_group
                    next_group += 1
                    report.mcms_removed += 1
                    continue
                report.notes.append(
                    f"uniform MCM on clbit {ins.clbit} kept: consumers or "
                    f"later uses prevent exact coin replacement")
                out.append(ins)
                continue
            _step(state, ins)
            out.append(ins)
            continue

        if isinstance(ins, Branch):
            status, cond, dropped = _fold_condition(ins.cond, removed_known)
            report.branch_inputs_removed += dropped
            if status == "const":
                report.branches_removed += 1
                for g in (ins.then_ops if cond else ins.else_ops):
                    g = _rewrite_known_control(g, state, report)
                    if g is not None:
                        state.apply_gate(g)
                        out.append(g)
                continue
            if status == "cond":
                # fold constants whose measurement stays (bits remain written,
                # so dropping them from the mask is always legal)
                status2, cond2, dropped2 = _fold_condition(cond, kept_known)
                if status2 == "const":
                    report.branch_inputs_removed += dropped2
                    report.branches_removed += 1
                    for g in (ins.then_ops if cond2 else ins.else_ops):
                        g = _rewrite_known_control(g, state, report)
                        if g is not None:
                            state.apply_gate(g)
                            out.append(g)
                    continue
                if status2 == "cond":
                    report.branch_inputs_removed += dropped2
                    cond = cond2
            coin_bits = [c for c in cond.clbits() if c in coins]
            if coin_bits:
                groups_used = [coins[c] for c in coin_bits]
                rest = [c for c in cond.clbits() if c not in coins]
                report.branch_inputs_removed += len(coin_bits)
                pieces = []
                prefix = []
                if rest:
                    pieces.append(Branch(replace(cond, mask=_mask(rest)),
                                         ins.then_ops, ins.else_ops))
                else:
                    report.branches_removed += 1
                    fire_on_one = (cond.value == 1) != cond.flip
                    if not fire_on_one:
                        # fires when the coin parity is 0: unconditional body
                        # plus the coin-paired bodies composes to exactly that
                        prefix = list(ins.then_ops)
                for group in groups_used:
                    for g in ins.then_ops:
                        pieces.append(ProbGate(g, 0.5, group))
                        report.prob_gates_added += 1
                for g in prefix:
                    state.apply_gate(g)
                    out.append(g)
                for piece in pieces:
                    _step(state, piece)
                    out.append(piece)
                continue
            new_branch = Branch(cond, ins.then_ops, ins.else_ops)
            _step(state, new_branch)
            out.append(new_branch)
            continue

        if isinstance(ins, Gate):
            g = _rewrite_known_control(ins, state, report)
            if g is not None:
                state.apply_gate(g)
                out.append(g)
            continue

        _step(state, ins)
        out.append(ins)

    result = Circuit(circuit.n_qubits, circuit.n_clbits, out,
                     dict(circuit.metadata))
    return validate(result), report


def _rewrite_known_control(gate: Gate, state: SymbolicState, report):
    """Replace 2q gates whose control is in a known basis state by 1q gates."""
    if gate.name not in ("cx", "cz"):
        return gate
    ctrl = gate.qubits[0]
    if state.is_top(ctrl):
        return gate
    g = state.group_of(ctrl)
    if len(g.qubits) != 1:
        return gate
    p1 = float(abs(g.amps[1]) ** 2)
    if p1 <= DET_TOL:
        report.notes.append(f"{gate.name} with control |0> removed")
        return None
    if p1 >= 1.0 - DET_TOL:
        report.notes.append(f"{gate.name} with control |1> reduced to 1q gate")
        if gate.name == "cx":
            return Gate("x", (gate.qubits[1],))
        return Gate("z", (gate.qubits[1],))
    return gate


def sample_concrete(circuit: Circuit, rng_seed: int) -> Circuit:
    """Resolve every ProbGate by sampling; grouped gates share one coin."""
    from .sim.backend import kernels

    rng = kernels.Stream(rng_seed, 0)
    coins: dict[int, bool] = {}
    out = []
    for ins in circuit.instructions:
        if not isinstance(ins, ProbGate):
            out.append(ins)
            continue
        if ins.group is None:
            keep = rng.next() < ins.p
        elif ins.group in coins:
            keep = coins[ins.group]
        else:
            keep = rng.next() < ins.p
            coins[ins.group] = keep
        if keep:
            out.append(ins.gate)
    return Circuit(circuit.n_qubits, circuit.n_clbits, out, dict(circuit.metadata))
