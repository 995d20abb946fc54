"""Shot-sampling statevector engine with lazy qubit allocation.

States are dense complex vectors over the currently *live* qubits only.
A qubit becomes live on first gate contact and is dropped again when
measured (its collapsed value is tracked classically; re-measurement reads
the recorded value, matching QND semantics). The peak live count, not the
declared width, bounds memory, which is what makes the wide dynamic-circuit
benchmarks simulable: measured ancillas leave the statevector immediately.

Noise is a quantum-trajectory unraveling: stochastic Pauli insertions after
gates, classical readout bitflips on recorded bits, and amplitude-damping
jump/no-jump updates on every idle window the schedule reports.
"""
from __future__ import annotations

from cmath import exp as cexp
from dataclasses import dataclass, field
from math import exp, sqrt

import numpy as np

from ..ir import (Barrier, Branch, Circuit, Gate, Measure, ProbGate,
                  eval_condition, popcount)
from ..latency import TimingModel, schedule
from ..stochastic import ConfusionMatrix
from .backend import kernels

MAX_SIM_QUBITS = 20

_SQ2 = 1.0 / sqrt(2.0)


class CapacityError(ValueError):
    pass


class EmptyHistogram(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    """Noise configuration for run_shots.

    mode selects which channels act:
      none            ideal execution
      bitflip_only    readout confusion plus X insertions after gates with
                      probabilities p_1q/p_2q (2q errors hit the second qubit)
      relaxation_only amplitude damping on schedule idle windows only
      full            depolarizing gates + confusion + idle damping
    """

    confusion: ConfusionMatrix = field(default_factory=ConfusionMatrix.zero)
    p_1q: float = 0.0
    p_2q: float = 0.0
    t1: float | dict[int, float] = 25_000.0
    timing: TimingModel = field(default_factory=TimingModel)
    mode: str = "full"

    def __post_init__(self):
        if self.mode not in ("none", "bitflip_only", "relaxation_only", "full"):
            raise ValueError(f"unknown noise mode {self.mode!r}")
        for p in (self.p_1q, self.p_2q):
            if not 0.0 <= p <= 1.0:
                raise ValueError("depolarizing probabilities must be in [0, 1]")

    @classmethod
    def noiseless(cls, timing: TimingModel | None = None) -> "NoiseModel":
        return cls(timing=timing or TimingModel(), mode="none")

    def t1_for(self, qubit: int) -> float:
        if isinstance(self.t1, dict):
            return self.t1.get(qubit, 25_000.0)
        return self.t1

    def to_json_obj(self) -> dict:
        conf = {str(q): {"p01": self.confusion.for_qubit(q)[0],
                         "p10": self.confusion.for_qubit(q)[1]}
                for q in sorted(set(self.confusion.p01) | set(self.confusion.p10))}
        if self.confusion.p is not None:
            conf["default"] = {"p01": self.confusion.p, "p10": self.confusion.p}
        t1 = self.t1 if not isinstance(self.t1, dict) else {str(q): v for q, v in self.t1.items()}
        return {"mode": self.mode, "confusion": conf, "p_1q": self.p_1q,
                "p_2q": self.p_2q, "t1": t1,
                "timing": {"t_1q": self.timing.t_1q, "t_2q": self.timing.t_2q,
                           "t_meas": self.timing.t_meas,
                           "controller": self.timing.controller}}

    @classmethod
    def from_json_obj(cls, doc: dict) -> "NoiseModel":
        cm = ConfusionMatrix()
        for key, val in doc.get("confusion", {}).items():
            if key == "default":
                cm.p = 0.5 * (float(val["p01"]) + float(val["p10"]))
            else:
                cm.p01[int(key)] = float(val["p01"])
                cm.p10[int(key)] = float(val["p10"])
        t1 = doc.get("t1", 25_000.0)
        if isinstance(t1, dict):
            t1 = {int(k): float(v) for k, v in t1.items()}
        timing = doc.get("timing", {})
        tm = TimingModel(t_1q=timing.get("t_1q", 32.0), t_2q=timing.get("t_2q", 84.0),
                         t_meas=timing.get("t_meas", 1000.0),
                         controller=timing.get("controller", "mcmit"))
        return cls(confusion=cm, p_1q=float(doc.get("p_1q", 0.0)),
                   p_2q=float(doc.get("p_2q", 0.0)), t1=t1, timing=tm,
                   mode=doc.get("mode", "full"))


@dataclass
class ShotResult:
    word: int
    discarded: bool
    shot_index: int
    events: int = 0
    confidences: tuple[float, ...] = ()


@dataclass
class OutcomeHistogram:
    counts: dict[int, int]
    total_kept: int
    total_discarded: int
    n_clbits: int
    #: shots (kept or not) in which at least one stochastic error event fired
    event_shots: int = 0

    def probabilities(self) -> dict[int, float]:
        if self.total_kept == 0:
            raise EmptyHistogram("histogram has no kept shots")
        return {w: c / self.total_kept for w, c in self.counts.items()}

    def marginal(self, clbits) -> "OutcomeHistogram":
        """Histogram over the given clbits (relabeled to bits 0..k-1)."""
        clbits = list(clbits)
        counts: dict[int, int] = {}
        for word, c in self.counts.items():
            sub = 0
            for j, b in enumerate(clbits):
                sub |= ((word >> b) & 1) << j
            counts[sub] = counts.get(sub, 0) + c
        return OutcomeHistogram(counts, self.total_kept, self.total_discarded,
                                len(clbits), self.event_shots)

    def to_json_obj(self) -> dict:
        return {"n_clbits": self.n_clbits,
                "counts": {format(w, f"0{max(self.n_clbits, 1)}b"): c
                           for w, c in sorted(self.counts.items())},
                "total_kept": self.total_kept,
                "total_discarded": self.total_discarded}


def hellinger_fidelity(p, q) -> float:
    """(sum_i sqrt(p_i q_i))^2 with both distributions normalized first."""
    p = _as_dist(p)
    q = _as_dist(q)
    bc = 0.0
    for key, pv in p.items():
        qv = q.get(key, 0.0)
        if qv > 0.0 and pv > 0.0:
            bc += sqrt(pv * qv)
    return bc * bc


def _as_dist(obj) -> dict:
    if isinstance(obj, OutcomeHistogram):
        return obj.probabilities()
    if not obj:
        raise EmptyHistogram("empty distribution")
    total = float(sum(obj.values()))
    if total <= 0.0:
        raise EmptyHistogram("distribution has zero mass")
    return {k: v / total for k, v in obj.items()}


def confidence_filter(results, delta: float):
    """Mark shots whose weakest MCM confidence falls below the threshold."""
    out = []
    for r in results:
        bad = any(c < delta for c in r.confidences)
        out.append(ShotResult(r.word, r.discarded or bad, r.shot_index,
                              r.events, r.confidences))
    return out


# --- circuit precompilation ---------------------------------------------------

_OP_G1 = 0       # (code, axis-qubit, m00, m01, m10, m11)
_OP_GX = 1       # (code, qubit)
_OP_GDIAG = 2    # (code, qubit, p0, p1)
_OP_G2 = 3       # (code, kind, q0, q1)   kind: 0 cx, 1 cz, 2 swap
_OP_MEAS = 4     # (code, qubit, clbit, p01, p10)
_OP_BRANCH = 5   # (code, cond, then_ops, else_ops)
_OP_PROB = 6     # (code, ops, p, group)
_OP_DAMP = 7     # (code, qubit, gamma)
_OP_DEP1 = 8     # (code, qubit, p, bitflip_only)
_OP_DEP2 = 9     # (code, q0, q1, p, bitflip_only)


def _instruction_qubits(ins):
    if isinstance(ins, Gate):
        return ins.qubits
    if isinstance(ins, Measure):
        return (ins.qubit,)
    if isinstance(ins, ProbGate):
        return ins.gate.qubits
    if isinstance(ins, Branch):
        qs = []
        for g in ins.then_ops + ins.else_ops:
            qs.extend(g.qubits)
        return tuple(qs)
    return ()


def _simulation_order(circuit: Circuit) -> list[int]:
    """Dependency-preserving order that keeps the live statevector narrow.

    Operations on disjoint qubits commute, and a measurement drops its qubit
    from the dense state, so hoisting each Measure as early as its qubit and
    clbit dependencies allow (and preferring ops on already-live qubits)
    collapses wide measurement layers into a rolling window. The sampled
    distribution is unchanged; only memory and time shrink.
    """
    n = len(circuit.instructions)
    deps: list[set[int]] = [set() for _ in range(n)]
    last_qubit_op: dict[int, int] = {}
    clbit_writer: dict[int, int] = {}
    clbit_readers: dict[int, list[int]] = {}
    for i, ins in enumerate(circuit.instructions):
        for q in _instruction_qubits(ins):
            if q in last_qubit_op:
                deps[i].add(last_qubit_op[q])
        for q in _instruction_qubits(ins):
            last_qubit_op[q] = i
        if isinstance(ins, Branch):
            for c in ins.cond.clbits():
                if c in clbit_writer:
                    deps[i].add(clbit_writer[c])
                clbit_readers.setdefault(c, []).append(i)
        elif isinstance(ins, Measure):
            c = ins.clbit
            if c in clbit_writer:
                deps[i].add(clbit_writer[c])
            for r in clbit_readers.get(c, ()):
                deps[i].add(r)
            clbit_writer[c] = i
            clbit_readers[c] = []

    pending = [set(d) for d in deps]
    emitted = [False] * n
    rdeps: list[list[int]] = [[] for _ in range(n)]
    for i, d in enumerate(deps):
        for j in d:
            rdeps[j].append(i)
    ready = sorted(i for i in range(n) if not pending[i])
    live: set[int] = set()
    order = []
    while ready:
        best = None
        best_key = None
        for i in ready:
            ins = circuit.instructions[i]
            if isinstance(ins, Measure):
                key = (0, i)
            else:
                grows = any(q not in live for q in _instruction_qubits(ins))
                key = (1 if not grows else 2, i)
            if best_key is None or key < best_key:
                best, best_key = i, key
        ready.remove(best)
        emitted[best] = True
        order.append(best)
        ins = circuit.instructions[best]
        if isinstance(ins, Measure):
            live.discard(ins.qubit)
        else:
            live.update(_instruction_qubits(ins))
        for j in rdeps[best]:
            pending[j].discard(best)
            if not pending[j] and not emitted[j]:
                ready.append(j)
    return order


def _gate_ops(gate: Gate, noise: NoiseModel):
    """Precompile one gate (plus its stochastic error insertion) to ops."""
    name = gate.name
    ops = []
    if name == "x":
        ops.append((_OP_GX, gate.qubits[0]))
    elif name == "y":
        ops.append((_OP_G1, gate.qubits[0], 0.0, -1.0j, 1.0j, 0.0))
    elif name == "z":
        ops.append((_OP_GDIAG, gate.qubits[0], 1.0, -1.0))
    elif name == "h":
        ops.append((_OP_G1, gate.qubits[0], _SQ2, _SQ2, _SQ2, -_SQ2))
    elif name == "s":
        ops.append((_OP_GDIAG, gate.qubits[0], 1.0, 1.0j))
    elif name == "sdg":
        ops.append((_OP_GDIAG, gate.qubits[0], 1.0, -1.0j))
    elif name == "t":
        ops.append((_OP_GDIAG, gate.qubits[0], 1.0, cexp(0.25j * np.pi)))
    elif name == "rz":
        theta = gate.params[0]
        ops.append((_OP_GDIAG, gate.qubits[0],
                    cexp(-0.5j * theta), cexp(0.5j * theta)))
    elif name in ("cx", "cz", "swap"):
        kind = {"cx": 0, "cz": 1, "swap": 2}[name]
        ops.append((_OP_G2, kind, gate.qubits[0], gate.qubits[1]))
    else:  # pragma: no cover - validated upstream
        raise ValueError(f"unknown gate {name!r}")

    if noise.mode in ("bitflip_only", "full"):
        bitflip = noise.mode == "bitflip_only"
        if len(gate.qubits) == 1 and noise.p_1q > 0.0:
            ops.append((_OP_DEP1, gate.qubits[0], noise.p_1q, bitflip))
        elif len(gate.qubits) == 2 and noise.p_2q > 0.0:
            ops.append((_OP_DEP2, gate.qubits[0], gate.qubits[1],
                        noise.p_2q, bitflip))
    return ops


def precompile(circuit: Circuit, noise: NoiseModel):
    """Flatten a circuit into executor ops, weaving in idle-damping windows."""
    if circuit.n_qubits > MAX_SIM_QUBITS:
        raise CapacityError(
            f"{circuit.n_qubits} qubits exceeds the {MAX_SIM_QUBITS}-qubit limit")
    damping = noise.mode in ("relaxation_only", "full")
    pre_idles = None
    if damping:
        pre_idles = schedule(circuit, noise.timing).pre_idles

    readout = noise.mode in ("bitflip_only", "full")
    ops = []
    for idx in _simulation_order(circuit):
        ins = circuit.instructions[idx]
        if damping:
            for qubit, dt in pre_idles[idx]:
                gamma = 1.0 - exp(-dt / noise.t1_for(qubit))
                if gamma > 0.0:
                    ops.append((_OP_DAMP, qubit, gamma))
        if isinstance(ins, Gate):
            ops.extend(_gate_ops(ins, noise))
        elif isinstance(ins, Measure):
            p01, p10 = noise.confusion.for_qubit(ins.qubit) if readout else (0.0, 0.0)
            ops.append((_OP_MEAS, ins.qubit, ins.clbit, p01, p10))
        elif isinstance(ins, Branch):
            then_ops = [op for g in ins.then_ops for op in _gate_ops(g, noise)]
            else_ops = [op for g in ins.else_ops for op in _gate_ops(g, noise)]
            ops.append((_OP_BRANCH, ins.cond, tuple(then_ops), tuple(else_ops)))
        elif isinstance(ins, ProbGate):
            sub = tuple(_gate_ops(ins.gate, noise))
            ops.append((_OP_PROB, sub, ins.p, ins.group))
        elif isinstance(ins, Barrier):
            continue
        else:  # pragma: no cover
            raise TypeError(f"cannot simulate {type(ins).__name__}")
    postselect = tuple(
        (rule["kind"], int(rule["mask"]))
        for rule in circuit.metadata.get("postselect", ()))
    return _CompiledCircuit(tuple(ops), circuit.n_clbits, postselect)


@dataclass(frozen=True)
class _CompiledCircuit:
    ops: tuple
    n_clbits: int
    postselect: tuple


class _ShotState:
    """Mutable per-shot execution context."""

    __slots__ = ("vec", "axes", "qval", "clreg", "events", "rng", "group_coins")

    def __init__(self, rng):
        self.vec = None          # dense state over live qubits, or None
        self.axes = {}           # qubit -> axis (bit position, stride 2^axis)
        self.qval = {}           # collapsed/classical values of dead qubits
        self.clreg = 0
        self.events = 0
        self.rng = rng
        self.group_coins = {}

    # -- live-set management --

    def ensure_live(self, qubit):
        axes = self.axes
        if qubit in axes:
            return
        value = self.qval.get(qubit, 0)
        n = len(axes)
        if n == 0:
            vec = np.zeros(2, dtype=np.complex128)
            vec[value] = 1.0
            self.vec = vec
        else:
            size = self.vec.shape[0]
            vec = np.zeros(2 * size, dtype=np.complex128)
            if value == 0:
                vec[:size] = self.vec
            else:
                vec[size:] = self.vec
            self.vec = vec
        axes[qubit] = n

    def drop_axis(self, qubit, outcome, prob):
        axis = self.axes.pop(qubit)
        self.vec = kernels.collapse_drop(self.vec, axis, outcome, prob)
        for q, a in self.axes.items():
            if a > axis:
                self.axes[q] = a - 1
        self.qval[qubit] = outcome


def _run_gate_op(op, st: _ShotState):
    code = op[0]
    if code == _OP_GX:
        q = op[1]
        if q in st.axes:
            kernels.apply_x(st.vec, st.axes[q])
        else:
            st.qval[q] = st.qval.get(q, 0) ^ 1
    elif code == _OP_GDIAG:
        q = op[1]
        if q in st.axes:
            kernels.apply_diag(st.vec, st.axes[q], op[2], op[3])
        # classical qubit: diagonal = global phase, no observable effect
    elif code == _OP_G1:
        q = op[1]
        st.ensure_live(q)
        kernels.apply_1q(st.vec, st.axes[q], op[2], op[3], op[4], op[5])
    elif code == _OP_G2:
        kind, qa, qb = op[1], op[2], op[3]
        alive_a, alive_b = qa in st.axes, qb in st.axes
        if kind == 0:  # cx
            if not alive_a:
                if st.qval.get(qa, 0) == 1:
                    _run_gate_op((_OP_GX, qb), st)
                return
            if not alive_b and st.qval.get(qb, 0) == 0:
                # control live, target |0>: must entangle
                st.ensure_live(qb)
            elif not alive_b:
                st.ensure_live(qb)
            kernels.apply_cx(st.vec, st.axes[qa], st.axes[qb])
        elif kind == 1:  # cz
            if not alive_a:
                if st.qval.get(qa, 0) == 1:
                    _run_gate_op((_OP_GDIAG, qb, 1.0, -1.0), st)
                return
            if not alive_b:
                if st.qval.get(qb, 0) == 1:
                    _run_gate_op((_OP_GDIAG, qa, 1.0, -1.0), st)
                return
            kernels.apply_cz(st.vec, st.axes[qa], st.axes[qb])
        else:  # swap
            if not alive_a and not alive_b:
                va, vb = st.qval.get(qa, 0), st.qval.get(qb, 0)
                st.qval[qa], st.qval[qb] = vb, va
                return
            st.ensure_live(qa)
            st.ensure_live(qb)
            kernels.apply_swap(st.vec, st.axes[qa], st.axes[qb])
    elif code == _OP_DEP1:
        _, q, p, bitflip = op
        u = st.rng.next()
        if u < p:
            st.events += 1
            if bitflip:
                _run_gate_op((_OP_GX, q), st)
            else:
                _apply_pauli(st, q, 1 + min(int(st.rng.next() * 3.0), 2))
    elif code == _OP_DEP2:
        _, qa, qb, p, bitflip = op
        u = st.rng.next()
        if u < p:
            st.events += 1
            if bitflip:
                _run_gate_op((_OP_GX, qb), st)
            else:
                idx = 1 + min(int(st.rng.next() * 15.0), 14)
                pa, pb = idx >> 2, idx & 3
                if pa:
                    _apply_pauli(st, qa, pa)
                if pb:
                    _apply_pauli(st, qb, pb)
    else:  # pragma: no cover
        raise RuntimeError(f"unexpected gate opcode {code}")


def _apply_pauli(st: _ShotState, qubit, which):
    if which == 1:
        _run_gate_op((_OP_GX, qubit), st)
    elif which == 2:
        if qubit in st.axes:
            kernels.apply_1q(st.vec, st.axes[qubit], 0.0, -1.0j, 1.0j, 0.0)
        else:
            st.qval[qubit] = st.qval.get(qubit, 0) ^ 1
    else:
        _run_gate_op((_OP_GDIAG, qubit, 1.0, -1.0), st)


def _run_ops(ops, st: _ShotState):
    for op in ops:
        code = op[0]
        if code == _OP_MEAS:
            _, qubit, clbit, p01, p10 = op
            if qubit in st.axes:
                p1 = kernels.prob_one(st.vec, st.axes[qubit])
                p1 = min(max(p1, 0.0), 1.0)
                if p1 <= 0.0:
                    m = 0
                elif p1 >= 1.0:
                    m = 1
                else:
                    m = 1 if st.rng.next() < p1 else 0
                st.drop_axis(qubit, m, p1 if m else 1.0 - p1)
            else:
                m = st.qval.get(qubit, 0)
            recorded = m
            perr = p10 if m else p01
            if perr > 0.0 and st.rng.next() < perr:
                recorded = m ^ 1
                st.events += 1
            if recorded:
                st.clreg |= 1 << clbit
            else:
                st.clreg &= ~(1 << clbit)
        elif code == _OP_BRANCH:
            taken = eval_condition(op[1], st.clreg)
            _run_ops(op[2] if taken else op[3], st)
        elif code == _OP_PROB:
            _, sub, p, group = op
            if group is None:
                keep = st.rng.next() < p
            elif group in st.group_coins:
                keep = st.group_coins[group]
            else:
                keep = st.rng.next() < p
                st.group_coins[group] = keep
            if keep:
                _run_ops(sub, st)
        elif code == _OP_DAMP:
            _, qubit, gamma = op
            if qubit in st.axes:
                p1 = kernels.prob_one(st.vec, st.axes[qubit])
                if p1 > 0.0:
                    if st.rng.next() < gamma * p1:
                        kernels.damp_jump(st.vec, st.axes[qubit], p1)
                        st.events += 1
                    else:
                        kernels.damp_nojump(st.vec, st.axes[qubit], gamma, p1)
            elif st.qval.get(qubit, 0) == 1:
                if st.rng.next() < gamma:
                    st.qval[qubit] = 0
                    st.events += 1
        else:
            _run_gate_op(op, st)


def _passes_postselect(postselect, word) -> bool:
    for kind, mask in postselect:
        sel = word & mask
        if kind == "all_zero":
            if sel != 0:
                return False
        elif kind == "all_equal":
            if sel != 0 and sel != mask:
                return False
        else:  # pragma: no cover
            raise ValueError(f"unknown postselect rule {kind!r}")
    return True


def run_shot(compiled: _CompiledCircuit, rng) -> tuple[int, bool, int]:
    st = _ShotState(rng)
    _run_ops(compiled.ops, st)
    ok = _passes_postselect(compiled.postselect, st.clreg)
    return st.clreg, not ok, st.events


def run_shots(circuit_or_ensemble, noise: NoiseModel, n_shots: int | None = None,
              rng_seed: int = 0, return_shots: bool = False):
    """Sample shots and histogram the kept classical register words.

    Accepts a Circuit (requires n_shots) or a ShotEnsemble (its per-variant
    allocation is used). Shot RNG streams are keyed (seed, global shot index)
    so ensembles are reproducible and order-independent.
    """
    if isinstance(circuit_or_ensemble, Circuit):
        if n_shots is None:
            raise ValueError("n_shots required when running a bare circuit")
        variants = [(circuit_or_ensemble, n_shots)]
    else:
        variants = list(circuit_or_ensemble.variants)
        if n_shots is not None and n_shots != sum(c for _, c in variants):
            raise ValueError("n_shots disagrees with ensemble allocation")

    counts: dict[int, int] = {}
    kept = discarded = event_shots = 0
    shots_out = []
    shot_index = 0
    n_clbits = variants[0][0].n_clbits if variants else 0
    for circ, count in variants:
        compiled = precompile(circ, noise)
        for _ in range(count):
            rng = kernels.Stream(rng_seed, shot_index)
            word, disc, events = run_shot(compiled, rng)
            if events:
                event_shots += 1
            if disc:
                discarded += 1
            else:
                kept += 1
                counts[word] = counts.get(word, 0) + 1
            if return_shots:
                shots_out.append(ShotResult(word, disc, shot_index, events))
            shot_index += 1
    hist = OutcomeHistogram(counts, kept, discarded, n_clbits, event_shots)
    if return_shots:
        return hist, shots_out
    return hist
