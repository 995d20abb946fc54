"""mcmforge command line: latency tables, compiler passes, simulation, sweeps."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import bench
from .harden import (CORRECT, ErrorBudget, HardeningPlan, default_parity_pairs,
                     harden_circuit, inject_parity_checks, inject_repeated_mcm,
                     inject_repetition, plan_hardening, apply_plan)
from .ir import load_circuit, parse_circuit, save_circuit, serialize_circuit
from .latency import (MCMIT, QUBIC, TimingModel, branch_latency,
                      feedback_latency, latency_table)
from .qcp import simplify
from .readout import TraceParams, accuracy_sweep, confusion_from_eval, \
    discriminate_matched, generate_traces
from .sim import NoiseModel, run_shots
from .stochastic import ConfusionMatrix, stochastic_compile


def _cmd_latency(args):
    model = TimingModel(t_meas=args.t_meas)
    if args.table:
        writer = csv.writer(sys.stdout)
        writer.writerow(["n_inputs", "qubic_branch_ns", "qubic_feedback_ns",
                         "mcmit_branch_ns", "mcmit_feedback_ns"])
        for row in latency_table(model):
            writer.writerow([row["n_inputs"],
                             f"{row['qubic_branch_ns']:.0f}",
                             f"{row['qubic_feedback_ns']:.0f}",
                             f"{row['mcmit_branch_ns']:.0f}",
                             f"{row['mcmit_feedback_ns']:.0f}"])
        return 0
    m = model.with_controller(args.controller)
    print(f"controller={args.controller} n_inputs={args.n_inputs}")
    print(f"branch_latency_ns={branch_latency(m, args.n_inputs):.0f}")
    print(f"feedback_latency_ns={feedback_latency(m, args.n_inputs):.0f}")
    return 0


def _load_noise(path) -> NoiseModel:
    if path is None:
        return NoiseModel.noiseless()
    with open(path, "r", encoding="utf-8") as fh:
        return NoiseModel.from_json_obj(json.load(fh))


def _cmd_compile(args):
    circuit = load_circuit(args.input)
    report_obj = None
    if args.pass_name == "qcp":
        out, report = simplify(circuit, n_max=args.n_max)
        report_obj = report.to_json_obj()
    elif args.pass_name == "harden":
        budget = ErrorBudget(p_cnot=args.p_cnot, p_meas=args.p_meas)
        mode = args.mode
        if mode == "auto":
            out, plan = harden_circuit(circuit, budget, d_max=args.d_max)
            report_obj = plan.to_json_obj()
        elif mode.startswith("rep:"):
            d = int(mode.split(":", 1)[1])
            out = circuit
            plan = plan_hardening(circuit, budget, d_max=1)
            for idx in sorted(plan.choices, reverse=True):
                clbit = circuit.instructions[idx].clbit
                out = inject_repetition(out, clbit, d,
                                        CORRECT if d % 2 else "detect",
                                        measure_index=idx)
        elif mode.startswith("repeat:"):
            r = int(mode.split(":", 1)[1])
            out = circuit
            plan = plan_hardening(circuit, budget, d_max=1)
            for idx in sorted(plan.choices, reverse=True):
                clbit = circuit.instructions[idx].clbit
                out = inject_repeated_mcm(out, clbit, r, measure_index=idx)
        elif mode == "parity":
            ghz = circuit.metadata.get("ghz_qubits")
            if not ghz:
                print("parity mode needs ghz_qubits metadata", file=sys.stderr)
                return 2
            out = inject_parity_checks(circuit, ghz, default_parity_pairs(ghz))
        else:
            print(f"unknown harden mode {mode!r}", file=sys.stderr)
            return 2
    elif args.pass_name == "stochastic":
        with open(args.confusion, "r", encoding="utf-8") as fh:
            cm = ConfusionMatrix.from_json(fh.read())
        ensemble = stochastic_compile(circuit, cm, args.shots)
        doc = {"total_shots": ensemble.total_shots,
               "variants": [{"shots": count,
                             "circuit": json.loads(serialize_circuit(circ))}
                            for circ, count in ensemble.variants]}
        with open(args.output, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
        print(f"wrote ensemble with {len(ensemble.variants)} variants to {args.output}")
        return 0
    else:
        print(f"unknown pass {args.pass_name!r}", file=sys.stderr)
        return 2
    save_circuit(out, args.output)
    if args.report and report_obj is not None:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report_obj, fh, indent=1)
    print(f"wrote {args.output}")
    return 0


def _cmd_simulate(args):
    noise = _load_noise(args.noise)
    with open(args.input, "r", encoding="utf-8") as fh:
        text = fh.read()
    doc = json.loads(text)
    if "variants" in doc:
        from .stochastic import ShotEnsemble
        variants = [(parse_circuit(json.dumps(v["circuit"])), int(v["shots"]))
                    for v in doc["variants"]]
        target = ShotEnsemble(variants, sum(c for _, c in variants))
        hist = run_shots(target, noise, None, args.seed)
    else:
        hist = run_shots(parse_circuit(text), noise, args.shots, args.seed)
    out = hist.to_json_obj()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(out, fh, indent=1)
        print(f"wrote {args.out}")
    else:
        json.dump(out, sys.stdout, indent=1)
        print()
    return 0


def _cmd_readout_sweep(args):
    params = TraceParams()
    if args.params:
        with open(args.params, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        params = TraceParams(
            n_samples=doc.get("n_samples", 500), dt=doc.get("dt", 2.0),
            mu0=complex(*doc.get("mu0", (-1.0, 0.0))),
            mu1=complex(*doc.get("mu1", (1.0, 0.0))),
            sigma=doc.get("sigma", TraceParams().sigma),
            t1=doc.get("t1", 15_000.0), seed=doc.get("seed", 0))
    durations = [int(d) for d in args.durations.split(",")]
    k_list = [max(1, int(round(d / params.dt))) for d in durations]
    rows = accuracy_sweep(params, k_list, n_per_state=args.traces)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["duration_ns", "k_samples",
                                                "discriminator", "accuracy"])
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {args.out}")
    if args.emit_confusion:
        batch = generate_traces(params, max(args.traces, 3000))
        train, ev = batch.split()
        pred, _ = discriminate_matched(ev, params.n_samples, train=train)
        cm = confusion_from_eval(pred, ev.labels)
        with open(args.emit_confusion, "w", encoding="utf-8") as fh:
            fh.write(cm.to_json())
        print(f"wrote {args.emit_confusion}")
    return 0


def _parse_instances(text):
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",")]


def _cmd_bench(args):
    noise_mode = {"none": "none", "relaxation-only": "relaxation_only",
                  "bitflip-only": "bitflip_only", "full": "full"}[args.noise]
    controllers = (QUBIC, MCMIT) if args.controller == "both" else (args.controller,)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cm = ConfusionMatrix.symmetric(args.p_bitflip) if args.p_bitflip else \
        ConfusionMatrix.zero()
    rows = []
    for instances in _parse_instances(args.instances):
        spec = bench.BenchmarkSpec(
            args.kind, width=args.width, steps=args.steps, instances=instances)
        for controller in controllers:
            timing = TimingModel(t_meas=args.t_meas, controller=controller)
            noise = NoiseModel(confusion=cm, t1=args.t1, timing=timing,
                               mode=noise_mode)
            circuit = bench.make_benchmark(spec)
            fid, discard, _ = bench.run_arm(
                circuit, tuple(args.pipeline.split("+")) if args.pipeline else (),
                noise, args.shots, args.seed)
            from .latency import schedule
            crit = schedule(circuit, timing).critical_path
            rows.append({"kind": args.kind, "instances": instances,
                         "controller": controller, "fidelity": fid,
                         "discard_rate": discard, "critical_path_ns": crit})
            print(f"instances={instances} controller={controller} "
                  f"fidelity={fid:.4f}")
    with open(out_dir / "fidelity.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    config = vars(args).copy()
    config.pop("func", None)
    with open(out_dir / "config.json", "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=1, sort_keys=True)
    with open(out_dir / "latency.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instances", "controller", "critical_path_ns"])
        for row in rows:
            writer.writerow([row["instances"], row["controller"],
                             f"{row['critical_path_ns']:.1f}"])
    print(f"wrote {out_dir}/fidelity.csv")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="mcmforge")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("latency", help="branch/feedback latency model")
    p.add_argument("--controller", choices=(QUBIC, MCMIT), default=MCMIT)
    p.add_argument("--n-inputs", type=int, default=1)
    p.add_argument("--t-meas", type=float, default=1000.0)
    p.add_argument("--table", action="store_true",
                   help="emit the published latency rows as CSV")
    p.set_defaults(func=_cmd_latency)

    p = sub.add_parser("compile", help="run a compiler pass")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--pass", dest="pass_name", required=True,
                   choices=("qcp", "harden", "stochastic"))
    p.add_argument("--n-max", type=int, default=6)
    p.add_argument("--report")
    p.add_argument("--p-cnot", type=float, default=0.0)
    p.add_argument("--p-meas", type=float, default=0.0)
    p.add_argument("--d-max", type=int, default=3)
    p.add_argument("--mode", default="auto")
    p.add_argument("--confusion")
    p.add_argument("--shots", type=int, default=10_000)
    p.set_defaults(func=_cmd_compile)

    p = sub.add_parser("simulate", help="sample a circuit or ensemble")
    p.add_argument("input")
    p.add_argument("--noise")
    p.add_argument("--shots", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("readout-sweep", help="discriminator accuracy sweep")
    p.add_argument("--params")
    p.add_argument("--durations", default="250,500,750,1000")
    p.add_argument("--traces", type=int, default=5000)
    p.add_argument("--out", required=True)
    p.add_argument("--emit-confusion")
    p.set_defaults(func=_cmd_readout_sweep)

    p = sub.add_parser("bench", help="benchmark experiment pipelines")
    p.add_argument("--kind", choices=bench.KINDS, required=True)
    p.add_argument("--width", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--instances", default="1")
    p.add_argument("--controller", choices=(QUBIC, MCMIT, "both"), default="both")
    p.add_argument("--noise", default="relaxation-only",
                   choices=("none", "relaxation-only", "bitflip-only", "full"))
    p.add_argument("--pipeline", default="",
                   help="compiler passes joined by '+', e.g. qcp+harden")
    p.add_argument("--shots", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--t-meas", type=float, default=1000.0)
    p.add_argument("--t1", type=float, default=25_000.0)
    p.add_argument("--p-bitflip", type=float, default=0.0)
    p.add_argument("--out", default="report")
    p.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
