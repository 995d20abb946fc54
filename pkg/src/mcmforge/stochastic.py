"""Stochastic branching: shot ensembles with probabilistically inverted conditions.

Per-qubit readout bitflip probabilities (a confusion matrix, usually estimated
by the readout lab) drive a compile-time ensemble: each branch condition is
left intact in roughly (1-p)*N shots and carried with its ``flip`` bit set in
p*N shots, where p is the probability the branch would have fired on the
wrong side. Variant weights follow the product of per-branch Bernoullis;
variants lighter than 1/(2N) are truncated and the rest renormalized, which
keeps variant count growing linearly with the number of flipped conditions.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from itertools import product

from .ir import Branch, Circuit, Measure, popcount


class ConfigError(ValueError):
    pass


class LayoutError(ValueError):
    pass


@dataclass
class ConfusionMatrix:
    """Per-qubit readout misclassification probabilities.

    p01 is P(read 1 | prepared 0), p10 is P(read 0 | prepared 1). Qubits
    missing from the maps fall back to the symmetric default ``p``.
    """

    p01: dict[int, float] = field(default_factory=dict)
    p10: dict[int, float] = field(default_factory=dict)
    p: float | None = None

    @classmethod
    def symmetric(cls, p: float) -> "ConfusionMatrix":
        return cls(p=p)

    @classmethod
    def zero(cls) -> "ConfusionMatrix":
        return cls(p=0.0)

    def for_qubit(self, qubit: int) -> tuple[float, float]:
        default = self.p if self.p is not None else 0.0
        return (self.p01.get(qubit, default), self.p10.get(qubit, default))

    def flip_probability(self, qubit: int) -> float:
        """Symmetrized bitflip probability used for condition inversion."""
        p01, p10 = self.for_qubit(qubit)
        return 0.5 * (p01 + p10)

    def to_json(self) -> str:
        doc = {}
        qubits = set(self.p01) | set(self.p10)
        for q in sorted(qubits):
            p01, p10 = self.for_qubit(q)
            doc[str(q)] = {"p01": p01, "p10": p10}
        if self.p is not None and not qubits:
            doc["default"] = {"p01": self.p, "p10": self.p}
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ConfusionMatrix":
        doc = json.loads(text)
        cm = cls()
        for key, val in doc.items():
            if key == "default":
                cm.p = 0.5 * (float(val["p01"]) + float(val["p10"]))
                continue
            q = int(key)
            cm.p01[q] = float(val["p01"])
            cm.p10[q] = float(val["p10"])
        return cm


@dataclass
class ShotEnsemble:
    """Circuit variants with shot allocations summing exactly to total_shots."""

    variants: list[tuple[Circuit, int]]
    total_shots: int


def _largest_remainder(weights, total):
    """Integer allocation of ``total`` proportional to ``weights``."""
    raw = [w * total for w in weights]
    counts = [int(r) for r in raw]
    short = total - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: raw[i] - counts[i], reverse=True)
    for i in range(short):
        counts[order[i % len(order)]] += 1
    return counts


def _clbit_sources(circuit: Circuit) -> dict[int, int]:
    """Map each clbit to the qubit whose measurement last wrote it."""
    sources = {}
    for ins in circuit.instructions:
        if isinstance(ins, Measure):
            sources[ins.clbit] = ins.qubit
    return sources


def branch_flip_probability(cond, input_probs) -> float:
    """Probability the condition's outcome is inverted by input bitflips.

    XOR/EQ conditions invert exactly when an odd number of inputs flip.
    AND/OR/MAJ outcomes depend on runtime values; redundant-input conditions
    (the ones hardening emits) have near-identical inputs, so the flip
    probability is evaluated under the all-inputs-equal assumption.
    """
    if not input_probs:
        return 0.0
    if cond.op in ("xor", "eq"):
        odd = 0.0
        even = 1.0
        for p in input_probs:
            odd, even = odd * (1 - p) + even * p, even * (1 - p) + odd * p
        return odd
    k = len(input_probs)
    if cond.op == "maj":
        need = (k + 1) // 2
        return _tail_probability(input_probs, need)
    if cond.op == "and":
        any_flip = 1.0
        all_flip = 1.0
        for p in input_probs:
            any_flip *= (1 - p)
            all_flip *= p
        return 0.5 * ((1.0 - any_flip) + all_flip)
    if cond.op == "or":
        none = 1.0
        every = 1.0
        for p in input_probs:
            none *= (1 - p)
            every *= p
        return 0.5 * ((1.0 - none) + every)
    raise ConfigError(f"unknown condition op {cond.op!r}")


def _tail_probability(probs, need):
    """P(at least ``need`` of the independent Bernoullis fire)."""
    dist = [1.0]
    for p in probs:
        nxt = [0.0] * (len(dist) + 1)
        for k, w in enumerate(dist):
            nxt[k] += w * (1 - p)
            nxt[k + 1] += w * p
        dist = nxt
    return sum(dist[need:])


def stochastic_compile(circuit: Circuit, cm: ConfusionMatrix, n_shots: int,
                       rng_seed: int = 0) -> ShotEnsemble:
    """Build the flip-variant shot ensemble for a compiled circuit.

    Every branch gets a flip probability derived from its input clbits'
    source-qubit bitflip rates; variants enumerate flip subsets with joint
    Bernoulli weights. ``rng_seed`` is accepted for interface stability; the
    construction itself is deterministic (largest-remainder rounding).
    """
    del rng_seed
    sources = _clbit_sources(circuit)
    effective = {int(k): float(v) for k, v in
                 circuit.metadata.get("effective_flip", {}).items()}
    branch_idxs = [i for i, ins in enumerate(circuit.instructions)
                   if isinstance(ins, Branch)]
    flip_probs = []
    for i in branch_idxs:
        cond = circuit.instructions[i].cond
        probs = []
        for clbit in cond.clbits():
            if clbit in effective:
                probs.append(effective[clbit])
                continue
            if clbit not in sources:
                raise ConfigError(f"branch input clbit {clbit} has no measured source")
            probs.append(cm.flip_probability(sources[clbit]))
        flip_probs.append(branch_flip_probability(cond, probs))

    active = [(i, p) for i, p in zip(branch_idxs, flip_probs) if p > 0.0]
    if not active:
        return ShotEnsemble([(circuit, n_shots)], n_shots)

    threshold = 1.0 / (2.0 * n_shots)
    variants = []
    for pattern in product((False, True), repeat=len(active)):
        w = 1.0
        for (i, p), flipped in zip(active, pattern):
            w *= p if flipped else (1.0 - p)
        if w < threshold and any(pattern):
            continue
        variants.append((pattern, w))
    total_w = sum(w for _, w in variants)
    weights = [w / total_w for _, w in variants]
    counts = _largest_remainder(weights, n_shots)

    out = []
    for (pattern, _), count in zip(variants, counts):
        if count == 0:
            continue
        circ = circuit.copy()
        for (i, _p), flipped in zip(active, pattern):
            if flipped:
                br = circ.instructions[i]
                circ.instructions[i] = replace(
                    br, cond=replace(br.cond, flip=not br.cond.flip))
        out.append((circ, count))
    return ShotEnsemble(out, n_shots)


def merge_ensemble_counts(results):
    """Sum outcome histograms across ensemble variants.

    ``results`` is a list of (OutcomeHistogram, shot_count); histograms must
    share the clbit layout.
    """
    from .sim import OutcomeHistogram

    if not results:
        raise LayoutError("no histograms to merge")
    n_clbits = results[0][0].n_clbits
    counts: dict[int, int] = {}
    kept = discarded = events = 0
    for hist, _count in results:
        if hist.n_clbits != n_clbits:
            raise LayoutError("histograms use different classical registers")
        for word, c in hist.counts.items():
            counts[word] = counts.get(word, 0) + c
        kept += hist.total_kept
        discarded += hist.total_discarded
        events += hist.event_shots
    return OutcomeHistogram(counts, kept, discarded, n_clbits, events)
