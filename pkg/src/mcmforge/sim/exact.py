"""Brute-force exact outcome distributions for small dynamic circuits.

Enumerates every mid-circuit measurement outcome path (and, in bitflip-only
mode, every readout-flip combination) with its exact probability. Serves as
the independent oracle behind pass-soundness and benchmark checks, so it
deliberately shares no state-update code with the sampling engine.
"""
from __future__ import annotations

from cmath import exp as cexp
from math import pi, sqrt

import numpy as np

from ..ir import (Barrier, Branch, Circuit, Gate, Measure, ProbGate,
                  eval_condition)
from .engine import CapacityError, _passes_postselect

_ORACLE_MAX_QUBITS = 10
_ORACLE_MAX_SPLITS = 18
_PRUNE = 1e-15

_SQ2 = 1.0 / sqrt(2.0)
_MATS = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
    "h": np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex),
    "s": np.array([[1, 0], [0, 1j]], dtype=complex),
    "sdg": np.array([[1, 0], [0, -1j]], dtype=complex),
    "t": np.array([[1, 0], [0, cexp(0.25j * pi)]], dtype=complex),
}


def _mat_1q(gate: Gate):
    if gate.name == "rz":
        theta = gate.params[0]
        return np.array([[cexp(-0.5j * theta), 0], [0, cexp(0.5j * theta)]],
                        dtype=complex)
    return _MATS[gate.name]


def _apply_gate(vec, gate: Gate, n: int):
    """Apply a gate to a dense 2^n vector; qubit q is tensor position q."""
    psi = vec.reshape((2,) * n)
    if len(gate.qubits) == 1:
        q = gate.qubits[0]
        psi = np.tensordot(_mat_1q(gate), psi, axes=([1], [q]))
        psi = np.moveaxis(psi, 0, q)
        return np.ascontiguousarray(psi).reshape(-1)
    qa, qb = gate.qubits
    psi = psi.copy()
    idx = [slice(None)] * n
    if gate.name == "cx":
        i10 = list(idx); i10[qa], i10[qb] = 1, 0
        i11 = list(idx); i11[qa], i11[qb] = 1, 1
        tmp = psi[tuple(i10)].copy()
        psi[tuple(i10)] = psi[tuple(i11)]
        psi[tuple(i11)] = tmp
    elif gate.name == "cz":
        i11 = list(idx); i11[qa], i11[qb] = 1, 1
        psi[tuple(i11)] *= -1
    elif gate.name == "swap":
        i01 = list(idx); i01[qa], i01[qb] = 0, 1
        i10 = list(idx); i10[qa], i10[qb] = 1, 0
        tmp = psi[tuple(i01)].copy()
        psi[tuple(i01)] = psi[tuple(i10)]
        psi[tuple(i10)] = tmp
    else:  # pragma: no cover
        raise ValueError(gate.name)
    return psi.reshape(-1)


def _measure_split(vec, qubit: int, n: int):
    """Return [(outcome, prob, collapsed_vec)] for nonzero-probability outcomes."""
    psi = vec.reshape((2,) * n)
    out = []
    for m in (0, 1):
        idx = [slice(None)] * n
        idx[qubit] = m
        block = psi[tuple(idx)]
        p = float(np.sum(np.abs(block) ** 2))
        if p <= _PRUNE:
            continue
        proj = np.zeros_like(psi)
        proj[tuple(idx)] = block / sqrt(p)
        out.append((m, p, proj.reshape(-1)))
    return out


def exact_distribution(circuit: Circuit, noise: str = "none",
                       confusion=None) -> dict[int, float]:
    """Exact terminal distribution over classical register words (kept shots).

    noise is "none" or "bitflip-only"; the latter needs a ConfusionMatrix and
    splits every recorded bit on its flip probability. Grouped ProbGates are
    decided by one split per group. Postselected (discarded) paths are dropped
    and the remainder renormalized, matching run_shots' kept-shot histogram.
    """
    if noise not in ("none", "bitflip-only"):
        raise ValueError("exact_distribution supports none/bitflip-only noise")
    if circuit.n_qubits > _ORACLE_MAX_QUBITS:
        raise CapacityError(
            f"{circuit.n_qubits} qubits exceeds oracle limit {_ORACLE_MAX_QUBITS}")
    n_meas = sum(isinstance(i, Measure) for i in circuit.instructions)
    groups = {i.group for i in circuit.instructions
              if isinstance(i, ProbGate) and i.group is not None}
    n_prob = sum(1 for i in circuit.instructions
                 if isinstance(i, ProbGate) and i.group is None) + len(groups)
    if n_meas + n_prob > _ORACLE_MAX_SPLITS:
        raise CapacityError("too many measurement/probabilistic splits to enumerate")

    n = max(circuit.n_qubits, 1)
    postselect = tuple((r["kind"], int(r["mask"]))
                       for r in circuit.metadata.get("postselect", ()))
    instructions = circuit.instructions
    dist: dict[int, float] = {}
    discarded_mass = 0.0

    init = np.zeros(2 ** n, dtype=complex)
    init[0] = 1.0

    stack = [(0, init, 0, 1.0, {})]
    while stack:
        idx, vec, clreg, weight, coins = stack.pop()
        if idx == len(instructions):
            if _passes_postselect(postselect, clreg):
                dist[clreg] = dist.get(clreg, 0.0) + weight
            else:
                discarded_mass += weight
            continue
        ins = instructions[idx]
        if isinstance(ins, Gate):
            stack.append((idx + 1, _apply_gate(vec, ins, n), clreg, weight, coins))
        elif isinstance(ins, Barrier):
            stack.append((idx + 1, vec, clreg, weight, coins))
        elif isinstance(ins, Branch):
            taken = eval_condition(ins.cond, clreg)
            body = ins.then_ops if taken else ins.else_ops
            for g in body:
                vec = _apply_gate(vec, g, n)
            stack.append((idx + 1, vec, clreg, weight, coins))
        elif isinstance(ins, ProbGate):
            if ins.group is not None and ins.group in coins:
                branches = [(coins[ins.group], 1.0)]
            else:
                branches = [(True, ins.p), (False, 1.0 - ins.p)]
            for keep, p in branches:
                w = weight * p
                if w <= _PRUNE:
                    continue
                nc = coins
                if ins.group is not None and ins.group not in coins:
                    nc = dict(coins)
                    nc[ins.group] = keep
                nv = _apply_gate(vec, ins.gate, n) if keep else vec
                stack.append((idx + 1, nv, clreg, w, nc))
        elif isinstance(ins, Measure):
            p01, p10 = (0.0, 0.0)
            if noise == "bitflip-only" and confusion is not None:
                p01, p10 = confusion.for_qubit(ins.qubit)
            for m, p, nv in _measure_split(vec, ins.qubit, n):
                base = weight * p
                perr = p10 if m else p01
                for recorded, pw in ((m, 1.0 - perr), (m ^ 1, perr)):
                    w = base * pw
                    if w <= _PRUNE:
                        continue
                    reg = clreg | (1 << ins.clbit) if recorded \
                        else clreg & ~(1 << ins.clbit)
                    stack.append((idx + 1, nv, reg, w, coins))
        else:  # pragma: no cover
            raise TypeError(type(ins).__name__)
        if len(stack) > 300_000:
            raise CapacityError("path explosion in exact enumeration")

    kept = sum(dist.values())
    if kept <= 0.0:
        return {}
    return {k: v / kept for k, v in dist.items()}


def tv_distance(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
