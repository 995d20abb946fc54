"""Controller timing models, ASAP scheduling, and effective-cost metrics.

Two controller models are supported. QUBIC chains one 16 ns branch unit per
condition input, so an N-input reduction costs 16*N ns on top of the fixed
189 ns feedback overhead (DAC/ADC, pulse preparation, state discrimination).
MCMIT evaluates the whole masked reduction in a single unit, so branch cost
stays 16 ns and total feedback 205 ns regardless of N. The 189 + 16*N split
is the unique affine fit through every published QUBIC latency row.

The schedule drives the simulator's idle-time relaxation: every gap between
two consecutive operations on a qubit becomes an amplitude-damping window.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from .ir import (Barrier, Branch, Circuit, Gate, Measure, ProbGate, popcount)

QUBIC = "qubic"
MCMIT = "mcmit"

T_BRANCH_UNIT = 16.0
T_FEEDBACK_BASE = 189.0
MAX_BRANCH_INPUTS = 128

#: QUBIC rows reproduced exactly by the affine model (N -> branch, feedback).
TABLE3_INPUT_SIZES = (1, 7, 8, 15, 16, 32, 128)


class RangeError(ValueError):
    pass


@dataclass(frozen=True)
class TimingModel:
    t_1q: float = 32.0
    t_2q: float = 84.0
    t_meas: float = 1000.0
    t_branch_unit: float = T_BRANCH_UNIT
    t_feedback_base: float = T_FEEDBACK_BASE
    controller: str = MCMIT

    def __post_init__(self):
        for name in ("t_1q", "t_2q", "t_meas", "t_branch_unit", "t_feedback_base"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.controller not in (QUBIC, MCMIT):
            raise ValueError(f"unknown controller {self.controller!r}")

    def with_controller(self, controller: str) -> "TimingModel":
        return replace(self, controller=controller)


def branch_latency(model: TimingModel, n_inputs: int) -> float:
    """Branch-instruction latency for an n-input masked reduction."""
    if not 1 <= n_inputs <= MAX_BRANCH_INPUTS:
        raise RangeError(f"n_inputs must be in 1..{MAX_BRANCH_INPUTS}")
    if model.controller == QUBIC:
        return model.t_branch_unit * n_inputs
    return model.t_branch_unit


def feedback_latency(model: TimingModel, n_inputs: int) -> float:
    """End-to-end classical feedback latency including the fixed base."""
    return model.t_feedback_base + branch_latency(model, n_inputs)


def latency_table(model: TimingModel | None = None,
                  sizes=TABLE3_INPUT_SIZES):
    """Branch/feedback latencies for both controllers at the published sizes."""
    model = model or TimingModel()
    rows = []
    for n in sizes:
        rows.append({
            "n_inputs": n,
            "qubic_branch_ns": branch_latency(model.with_controller(QUBIC), n),
            "qubic_feedback_ns": feedback_latency(model.with_controller(QUBIC), n),
            "mcmit_branch_ns": branch_latency(model.with_controller(MCMIT), n),
            "mcmit_feedback_ns": feedback_latency(model.with_controller(MCMIT), n),
        })
    return rows


@dataclass
class Schedule:
    starts: list[float]
    ends: list[float]
    critical_path: float
    idle_intervals: list[tuple[int, float, float]]
    #: per instruction: list of (qubit, idle_ns) gaps ending when it starts
    pre_idles: list[list[tuple[int, float]]] = field(default_factory=list)


def _gate_duration(gate: Gate, model: TimingModel) -> float:
    return model.t_2q if len(gate.qubits) == 2 else model.t_1q


def schedule(circuit: Circuit, model: TimingModel) -> Schedule:
    """ASAP schedule with a full barrier at every Branch.

    All measurements feeding a branch complete, the feedback latency for the
    branch's input count elapses, then the body gates start simultaneously on
    their target qubits. Branch bodies are charged from the then-arm (the
    else arm is empty in every benchmark); ProbGates are charged as always
    present so the schedule is shot-independent.
    """
    n = circuit.n_qubits
    ready = [0.0] * n
    last_end = [None] * n  # end of previous op per qubit, for idle tracking
    starts, ends = [], []
    idle, pre_idles = [], []

    def busy(q, start, dur, gaps):
        if last_end[q] is not None and start > last_end[q] + 1e-9:
            idle.append((q, last_end[q], start))
            gaps.append((q, start - last_end[q]))
        end = start + dur
        ready[q] = end
        last_end[q] = end
        return end

    for ins in circuit.instructions:
        gaps = []
        if isinstance(ins, (Gate, ProbGate)):
            gate = ins if isinstance(ins, Gate) else ins.gate
            start = max(ready[q] for q in gate.qubits)
            end = start
            for q in gate.qubits:
                end = max(end, busy(q, start, _gate_duration(gate, model), gaps))
        elif isinstance(ins, Measure):
            start = ready[ins.qubit]
            end = busy(ins.qubit, start, model.t_meas, gaps)
        elif isinstance(ins, Branch):
            start = max(ready) if n else 0.0
            fb_end = start + feedback_latency(model, popcount(ins.cond.mask))
            # the barrier holds every qubit until feedback resolves
            per_qubit_ready = list(ready)
            for q in range(n):
                ready[q] = max(ready[q], fb_end)
            end = fb_end
            body_ready = {}
            for g in ins.then_ops:
                gstart = max(max(body_ready.get(q, fb_end) for q in g.qubits),
                             fb_end)
                for q in g.qubits:
                    if last_end[q] is not None and gstart > last_end[q] + 1e-9:
                        idle.append((q, last_end[q], gstart))
                        gaps.append((q, gstart - last_end[q]))
                    gend = gstart + _gate_duration(g, model)
                    body_ready[q] = gend
                    ready[q] = max(ready[q], gend)
                    last_end[q] = gend
                    end = max(end, gend)
            del per_qubit_ready
        elif isinstance(ins, Barrier):
            qs = ins.qubits or tuple(range(n))
            start = max(ready[q] for q in qs) if qs else 0.0
            for q in qs:
                ready[q] = start
            end = start
        else:
            raise TypeError(f"cannot schedule {type(ins).__name__}")
        starts.append(start)
        ends.append(end)
        pre_idles.append(gaps)

    critical = max(ends) if ends else 0.0
    return Schedule(starts, ends, critical, idle, pre_idles)


# --- MECH-style effective metrics --------------------------------------------

@dataclass(frozen=True)
class CostRatios:
    """Cost of dynamic-circuit operations relative to a local 2-qubit gate.

    ``cf_lat`` is the controller-dependent branch-reduction latency ratio;
    the fixed 189 ns feedback base is controller-independent and accounted
    to the measurement window it overlaps.
    """

    mcm_err: float = 2.0
    mcm_lat: float = 12.0
    cf_lat: float = 2.44
    remote_err: float = 10.0

    def __post_init__(self):
        for name in ("mcm_err", "mcm_lat", "cf_lat", "remote_err"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def cf_latency_ratio(controller: str, n_inputs: int,
                     model: TimingModel | None = None) -> float:
    """Branch-reduction latency of an n-input condition in 2q-gate units."""
    model = (model or TimingModel()).with_controller(controller)
    return branch_latency(model, n_inputs) / model.t_2q


def effective_metrics(circuit: Circuit, ratios: CostRatios,
                      model: TimingModel | None = None) -> dict:
    """Error-weighted gate count and latency-weighted depth of a circuit.

    Local 2q gates count 1, MCMs count their error ratio, remote 2q gates
    (listed in circuit.metadata["remote_gates"] as instruction indices)
    count theirs. Effective depth re-runs the ASAP schedule with durations
    replaced by latency ratios, so it is affine in each ratio while the
    critical path structure is fixed.
    """
    model = model or TimingModel()
    remote = set(circuit.metadata.get("remote_gates", ()))
    eff_cnots = 0.0
    for idx, ins in enumerate(circuit.instructions):
        if isinstance(ins, Gate) and len(ins.qubits) == 2:
            eff_cnots += ratios.remote_err if idx in remote else 1.0
        elif isinstance(ins, Measure):
            eff_cnots += ratios.mcm_err

    ratio_model = TimingModel(
        t_1q=model.t_1q / model.t_2q,
        t_2q=1.0,
        t_meas=ratios.mcm_lat,
        t_branch_unit=max(ratios.cf_lat, 1e-12),
        t_feedback_base=1e-12,
        controller=MCMIT,
    )
    # every branch contributes exactly one cf_lat unit under MCMIT scaling
    eff_depth = schedule(circuit, ratio_model).critical_path
    return {"effective_cnots": eff_cnots, "effective_depth": eff_depth}


def mech_effective_depth(n_2q_layers: int, n_mcm_layers: int, n_cf: int,
                         ratios: CostRatios, n_1q_layers: int = 0,
                         t_1q_ratio: float = 32.0 / 84.0) -> float:
    """Layer-count model of MECH's normalized post-compilation depth."""
    return (n_1q_layers * t_1q_ratio + n_2q_layers
            + n_mcm_layers * ratios.mcm_lat + n_cf * ratios.cf_lat)


def mech_effective_cnots(n_2q: int, n_remote: int, n_mcm: int,
                         ratios: CostRatios) -> float:
    return n_2q + n_remote * ratios.remote_err + n_mcm * ratios.mcm_err
