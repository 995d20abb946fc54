"""Benchmark circuit generators and end-to-end experiment pipelines.

Four dynamic-circuit micro-benchmarks are generated structurally:

* constant-depth GHZ: a data/ancilla chain whose parity measurements are
  XOR-reduced into correction branches, plus a symmetrization coin that
  pre-flips the last data qubit and joins the widest XOR (a fair-coin MCM
  the simplification pass can remove exactly);
* long-range CNOT: measurement-based CNOT across the full register with one
  XOR feedback branch per basis (X fixups on the target from the Z-measured
  ancillas, Z fixups on the control from the X-measured sources);
* teleportation ladder: chained single teleports onto fresh Bell pairs;
* repeated teleportation: the same three qubits reused with conditional
  resets, clbit banks rotating under the write-once-then-read discipline.

``instances`` models sequential repetitions within a larger program, with
idle accumulating on the surviving state. For GHZ, round r >= 2 re-runs the
parity-measure-and-correct cycle on the living GHZ state (a consume/verify
round: noiseless parities are deterministic, so the state is preserved
exactly, while decay damage persists and compounds). For the long-range
CNOT the gate itself is applied ``instances`` times. Measured qubits are
reused without resets: a re-measured ancilla reports its parity offset by
the previous round's value, so correction masks simply widen with the
previous round's clbits under the write-once-then-read discipline.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from math import cos, pi, sin
from pathlib import Path

from .harden import ErrorBudget, harden_circuit
from .ir import Branch, BranchCondition, Circuit, Gate, Measure, validate
from .latency import MCMIT, QUBIC, TimingModel, schedule
from .qcp import simplify
from .sim import NoiseModel, exact_distribution, hellinger_fidelity, run_shots
from .stochastic import ConfusionMatrix, merge_ensemble_counts, stochastic_compile

GHZ_CONST_DEPTH = "ghz"
LONG_RANGE_CNOT = "cnot"
TELEPORT_LADDER = "teleport-ladder"
TELEPORT_REPEATED = "teleport-repeated"

KINDS = (GHZ_CONST_DEPTH, LONG_RANGE_CNOT, TELEPORT_LADDER, TELEPORT_REPEATED)


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class BenchmarkSpec:
    kind: str
    width: int | None = None
    steps: int | None = None
    instances: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown benchmark kind {self.kind!r}")
        if self.kind in (GHZ_CONST_DEPTH, LONG_RANGE_CNOT):
            if self.width is None or self.width < 3:
                raise SpecError("width must be >= 3 for GHZ/CNOT benchmarks")
            if self.kind == LONG_RANGE_CNOT and (self.width < 4 or self.width % 2):
                raise SpecError("long-range CNOT needs an even width >= 4")
        else:
            if self.steps is None or self.steps < 1:
                raise SpecError("teleportation benchmarks need steps >= 1")
            if self.instances != 1:
                raise SpecError("teleportation repetition is the steps axis")
        if self.instances < 1:
            raise SpecError("instances must be >= 1")


def _mask(bits):
    m = 0
    for b in bits:
        m |= 1 << b
    return m


#: Z-basis preparation of the teleported probe state
#: cos(pi/8) e^{-i3pi/8}|0> - i sin(pi/8) e^{i3pi/8}|1>  (up to global phase)
def _probe_prep(q):
    return [Gate("h", (q,)), Gate("rz", (q,), (pi / 4,)), Gate("h", (q,)),
            Gate("s", (q,)), Gate("rz", (q,), (pi / 4,))]


PROBE_P0 = cos(pi / 8) ** 2
PROBE_P1 = sin(pi / 8) ** 2


def _ghz(width: int, instances: int) -> Circuit:
    w = width
    data = [2 * j for j in range(w)]
    ancs = [2 * j + 1 for j in range(w - 1)]
    coin_q = 2 * w - 1
    if instances == 1:
        banks = [list(range(w - 1))]
        coin_bit = w - 1
        terms = list(range(w, 2 * w))
        n_clbits = 2 * w
    else:
        banks = [list(range(w - 1)), list(range(w - 1, 2 * (w - 1)))]
        coin_bit = 2 * (w - 1)
        terms = list(range(2 * w - 1, 3 * w - 1))
        n_clbits = 3 * w - 1
    if n_clbits > 32 or 2 * w > 32:
        raise SpecError(f"GHZ width {w} exceeds register ceilings")

    ins = []
    for r in range(instances):
        cur = banks[r % len(banks)]
        prev = banks[(r - 1) % len(banks)] if r > 0 else None
        if r == 0:
            for j in range(w):
                ins.append(Gate("h", (data[j],)))
        ins.append(Gate("h", (coin_q,)))
        for j in range(w - 1):
            ins.append(Gate("cx", (data[j], ancs[j])))
        for j in range(w - 1):
            ins.append(Gate("cx", (data[j + 1], ancs[j])))
        for j in range(w - 1):
            ins.append(Measure(ancs[j], cur[j]))
        ins.append(Measure(coin_q, coin_bit))
        ins.append(Branch(BranchCondition("eq", 1 << coin_bit, 1),
                          (Gate("x", (data[w - 1],)),)))
        for j in range(1, w):
            bits = cur[:j]
            if prev is not None:
                bits = bits + prev[:j]
            if j == w - 1:
                bits = bits + [coin_bit]
            ins.append(Branch(BranchCondition("xor", _mask(bits), 1),
                              (Gate("x", (data[j],)),)))
    for j in range(w):
        ins.append(Measure(data[j], terms[j]))

    circuit = Circuit(2 * w, n_clbits, ins, {
        "kind": GHZ_CONST_DEPTH, "width": w, "instances": instances,
        "data_clbits": terms,
        "ghz_qubits": data,
        "ideal": {0: 0.5, (1 << w) - 1: 0.5},
        "widest_branch_inputs": w + (w - 1 if instances > 1 else 0),
    })
    return validate(circuit)


def _long_range_cnot(width: int, instances: int) -> Circuit:
    n = width
    ctrl, tgt = 0, n - 1
    sources = list(range(2, n - 1, 2))
    zancs = list(range(1, n - 2, 2))
    na, nb = len(zancs), len(sources)
    a_banks = [list(range(na)), list(range(na, 2 * na))]
    b_banks = [list(range(2 * na, 2 * na + nb)),
               list(range(2 * na + nb, 2 * na + 2 * nb))]
    terms = [2 * na + 2 * nb, 2 * na + 2 * nb + 1]
    n_clbits = 2 * na + 2 * nb + 2
    if n_clbits > 32:
        raise SpecError(f"CNOT width {n} exceeds the classical register")

    ins = [Gate("h", (ctrl,))]
    for r in range(instances):
        a_cur, b_cur = a_banks[r % 2], b_banks[r % 2]
        a_prev = a_banks[(r - 1) % 2] if r > 0 else None
        b_prev = b_banks[(r - 1) % 2] if r > 0 else None
        for s in sources:
            ins.append(Gate("h", (s,)))
        for s in sources:
            ins.append(Gate("cx", (s, s - 1)))
        for s in sources:
            ins.append(Gate("cx", (s, s + 1)))
        ins.append(Gate("cx", (ctrl, 1)))
        for a, c in zip(zancs, a_cur):
            ins.append(Measure(a, c))
        for s in sources:
            ins.append(Gate("h", (s,)))
        for s, c in zip(sources, b_cur):
            ins.append(Measure(s, c))
        x_bits = list(a_cur) + (list(a_prev) if a_prev else [])
        z_bits = list(b_cur) + (list(b_prev) if b_prev else [])
        x_cond = BranchCondition("xor" if len(x_bits) > 1 else "eq",
                                 _mask(x_bits), 1)
        z_cond = BranchCondition("xor" if len(z_bits) > 1 else "eq",
                                 _mask(z_bits), 1)
        ins.append(Branch(x_cond, (Gate("x", (tgt,)),)))
        ins.append(Branch(z_cond, (Gate("z", (ctrl,)),)))
    ins.append(Measure(ctrl, terms[0]))
    ins.append(Measure(tgt, terms[1]))

    if instances % 2:
        ideal = {0: 0.5, 3: 0.5}
    else:
        ideal = {0: 0.5, 1: 0.5}
    circuit = Circuit(n, n_clbits, ins, {
        "kind": LONG_RANGE_CNOT, "width": n, "instances": instances,
        "data_clbits": terms,
        "ideal": ideal,
        "widest_branch_inputs": max(len(x_bits), len(z_bits)),
    })
    return validate(circuit)


def _teleport_ladder(steps: int) -> Circuit:
    n_qubits = 1 + 2 * steps
    if n_qubits > 20 or 2 * steps + 1 > 32:
        raise SpecError(f"teleport ladder of {steps} steps exceeds limits")
    ins = _probe_prep(0)
    carrier = 0
    for i in range(steps):
        b1, b2 = 2 * i + 1, 2 * i + 2
        cz_bit, cx_bit = 2 * i, 2 * i + 1
        ins.append(Gate("h", (b1,)))
        ins.append(Gate("cx", (b1, b2)))
        ins.append(Gate("cx", (carrier, b1)))
        ins.append(Gate("h", (carrier,)))
        ins.append(Measure(carrier, cz_bit))
        ins.append(Measure(b1, cx_bit))
        ins.append(Branch(BranchCondition("eq", 1 << cx_bit, 1),
                          (Gate("x", (b2,)),)))
        ins.append(Branch(BranchCondition("eq", 1 << cz_bit, 1),
                          (Gate("z", (b2,)),)))
        carrier = b2
    term = 2 * steps
    ins.append(Measure(carrier, term))
    circuit = Circuit(n_qubits, 2 * steps + 1, ins, {
        "kind": TELEPORT_LADDER, "steps": steps,
        "data_clbits": [term],
        "ideal": {0: PROBE_P0, 1: PROBE_P1},
        "widest_branch_inputs": 1,
    })
    return validate(circuit)


def _teleport_repeated(steps: int) -> Circuit:
    ins = _probe_prep(0)
    carrier = 0
    for i in range(steps):
        h1, h2 = [q for q in (0, 1, 2) if q != carrier]
        bank = 2 * (i % 2)
        cz_bit, cx_bit = bank, bank + 1
        ins.append(Gate("h", (h1,)))
        ins.append(Gate("cx", (h1, h2)))
        ins.append(Gate("cx", (carrier, h1)))
        ins.append(Gate("h", (carrier,)))
        ins.append(Measure(carrier, cz_bit))
        ins.append(Measure(h1, cx_bit))
        ins.append(Branch(BranchCondition("eq", 1 << cx_bit, 1),
                          (Gate("x", (h2,)),)))
        ins.append(Branch(BranchCondition("eq", 1 << cz_bit, 1),
                          (Gate("z", (h2,)),)))
        # conditional resets return the consumed qubits to |0> for reuse
        ins.append(Branch(BranchCondition("eq", 1 << cz_bit, 1),
                          (Gate("x", (carrier,)),)))
        ins.append(Branch(BranchCondition("eq", 1 << cx_bit, 1),
                          (Gate("x", (h1,)),)))
        carrier = h2
    ins.append(Measure(carrier, 4))
    circuit = Circuit(3, 5, ins, {
        "kind": TELEPORT_REPEATED, "steps": steps,
        "data_clbits": [4],
        "ideal": {0: PROBE_P0, 1: PROBE_P1},
        "widest_branch_inputs": 1,
    })
    return validate(circuit)


def make_benchmark(spec: BenchmarkSpec) -> Circuit:
    if spec.kind == GHZ_CONST_DEPTH:
        return _ghz(spec.width, spec.instances)
    if spec.kind == LONG_RANGE_CNOT:
        return _long_range_cnot(spec.width, spec.instances)
    if spec.kind == TELEPORT_LADDER:
        return _teleport_ladder(spec.steps)
    return _teleport_repeated(spec.steps)


# --- experiment pipelines -----------------------------------------------------

@dataclass
class ExperimentReport:
    config: dict
    fidelities: dict[str, float] = field(default_factory=dict)
    discard_rates: dict[str, float] = field(default_factory=dict)
    latency: list[dict] = field(default_factory=list)

    def to_json_obj(self):
        return {"config": self.config, "fidelities": self.fidelities,
                "discard_rates": self.discard_rates, "latency": self.latency}


def compile_pipeline(circuit: Circuit, passes, noise: NoiseModel,
                     n_shots: int, n_max: int = 6, d_max: int = 3):
    """Apply compiler passes in order; the result may be a ShotEnsemble."""
    current = circuit
    for name in passes:
        if name == "qcp":
            current, _report = simplify(current, n_max=n_max)
        elif name == "harden":
            budget = ErrorBudget(
                p_cnot=min(noise.p_2q, 0.5),
                p_meas=min(max(noise.confusion.flip_probability(0), 0.0), 0.5))
            current, _plan = harden_circuit(current, budget, noise.timing,
                                            d_max=d_max)
        elif name == "stochastic":
            return stochastic_compile(current, noise.confusion, n_shots)
        else:
            raise ValueError(f"unknown pass {name!r}")
    return current


def ideal_distribution(circuit: Circuit) -> dict[int, float]:
    """Noiseless reference over the data clbits (analytic when attached)."""
    meta = circuit.metadata
    if "ideal" in meta:
        return {int(k): float(v) for k, v in meta["ideal"].items()}
    dist = exact_distribution(circuit)
    data = meta.get("data_clbits")
    if data is None:
        return dist
    out: dict[int, float] = {}
    for word, p in dist.items():
        sub = 0
        for j, b in enumerate(data):
            sub |= ((word >> b) & 1) << j
        out[sub] = out.get(sub, 0.0) + p
    return out


def run_arm(circuit: Circuit, passes, noise: NoiseModel, shots: int,
            seed: int, n_max: int = 6, d_max: int = 3):
    """Compile one arm, simulate it, and score Hellinger fidelity."""
    compiled = compile_pipeline(circuit, passes, noise, shots,
                                n_max=n_max, d_max=d_max)
    hist = run_shots(compiled, noise, None if hasattr(compiled, "variants")
                     else shots, seed)
    data = circuit.metadata.get("data_clbits")
    scored = hist.marginal(data) if data else hist
    fid = hellinger_fidelity(scored, ideal_distribution(circuit))
    discard = hist.total_discarded / max(hist.total_kept + hist.total_discarded, 1)
    return fid, discard, hist


def run_experiment(spec: BenchmarkSpec, pipeline, noise: NoiseModel,
                   shots: int = 10_000, seed: int = 7,
                   controllers=(MCMIT,)) -> ExperimentReport:
    """Execute {raw, pipeline} arms per controller and collect fidelities."""
    circuit = make_benchmark(spec)
    report = ExperimentReport(config={
        "spec": {"kind": spec.kind, "width": spec.width, "steps": spec.steps,
                 "instances": spec.instances},
        "pipeline": list(pipeline), "shots": shots, "seed": seed,
        "noise": noise.to_json_obj(),
    })
    for controller in controllers:
        timing = noise.timing.with_controller(controller)
        arm_noise = NoiseModel(confusion=noise.confusion, p_1q=noise.p_1q,
                               p_2q=noise.p_2q, t1=noise.t1, timing=timing,
                               mode=noise.mode)
        sched = schedule(circuit, timing)
        report.latency.append({"controller": controller,
                               "critical_path_ns": sched.critical_path})
        for label, passes in (("raw", ()), ("mitigated", tuple(pipeline))):
            if label == "mitigated" and not pipeline:
                continue
            fid, discard, _ = run_arm(circuit, passes, arm_noise, shots, seed)
            key = f"{controller}/{label}"
            report.fidelities[key] = fid
            report.discard_rates[key] = discard
    return report


def write_report(report: ExperimentReport, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump(report.config, fh, indent=1, sort_keys=True)
    with open(out / "fidelity.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["arm", "fidelity", "discard_rate"])
        for key in sorted(report.fidelities):
            writer.writerow([key, f"{report.fidelities[key]:.6f}",
                             f"{report.discard_rates[key]:.6f}"])
    with open(out / "latency.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["controller", "critical_path_ns"])
        for row in report.latency:
            writer.writerow([row["controller"], f"{row['critical_path_ns']:.1f}"])


# --- MECH sensitivity ---------------------------------------------------------

def mech_sensitivity(mcm_err_ratios, mcm_lat_ratios, cf_lat_ratios,
                     n_mcm: int = 3749, n_remote: int = 432,
                     n_2q_layers: int = 100, operating_branch_inputs: int = 7,
                     timing: TimingModel | None = None):
    """Effective-metric grids over the three cost ratios.

    Counts default to the chiplet workload scale (MCMs outnumber remote 2q
    gates by roughly 6.4x). The feedback-depth contribution is the
    controller-scaling branch-reduction latency; substituting the chained
    controller's ratio at the N-input operating point by the constant one
    divides that contribution by exactly N.
    """
    from .latency import CostRatios, cf_latency_ratio, mech_effective_cnots, \
        mech_effective_depth

    timing = timing or TimingModel()
    base = CostRatios()
    rows = []
    for r in mcm_err_ratios:
        ratios = CostRatios(mcm_err=r, mcm_lat=base.mcm_lat, cf_lat=base.cf_lat)
        rows.append({"axis": "mcm_err", "ratio": r,
                     "effective_cnots": mech_effective_cnots(
                         n_2q_layers, n_remote, n_mcm, ratios),
                     "effective_depth": mech_effective_depth(
                         n_2q_layers, n_mcm, n_mcm, ratios)})
    for r in mcm_lat_ratios:
        ratios = CostRatios(mcm_lat=r, cf_lat=base.cf_lat)
        rows.append({"axis": "mcm_lat", "ratio": r,
                     "effective_cnots": mech_effective_cnots(
                         n_2q_layers, n_remote, n_mcm, ratios),
                     "effective_depth": mech_effective_depth(
                         n_2q_layers, n_mcm, n_mcm, ratios)})
    for r in cf_lat_ratios:
        ratios = CostRatios(cf_lat=r)
        rows.append({"axis": "cf_lat", "ratio": r,
                     "effective_cnots": mech_effective_cnots(
                         n_2q_layers, n_remote, n_mcm, ratios),
                     "effective_depth": mech_effective_depth(
                         n_2q_layers, n_mcm, n_mcm, ratios)})
    qubic_ratio = cf_latency_ratio(QUBIC, operating_branch_inputs, timing)
    mcmit_ratio = cf_latency_ratio(MCMIT, operating_branch_inputs, timing)
    summary = {
        "qubic_cf_ratio": qubic_ratio,
        "mcmit_cf_ratio": mcmit_ratio,
        "feedback_contribution_reduction": qubic_ratio / mcmit_ratio,
    }
    return rows, summary
