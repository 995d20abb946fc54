"""Dynamic-circuit intermediate representation and its JSON serialization.

A circuit is an ordered list of instructions over at most 32 qubits and a
32-bit classical measurement register. Conditional gates are expressed as
Branch instructions whose condition reduces a masked subset of the register
with one of AND/OR/XOR/MAJ/EQ and compares against a target bit. ProbGate
wraps a gate that is present only with some probability; it is produced by
the simplification pass, never written by hand.

Circuit values are immutable after construction and safe to share across
threads. Parsing and serialization are pure functions.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

GATE_ARITY = {
    "x": 1, "y": 1, "z": 1, "h": 1, "s": 1, "sdg": 1, "t": 1, "rz": 1,
    "cx": 2, "cz": 2, "swap": 2,
}
PARAM_GATES = {"rz": 1}
# Gates G with G @ G == identity (up to global phase irrelevant here).
INVOLUTORY_GATES = {"x", "y", "z", "h", "cx", "cz", "swap"}
CONDITION_OPS = ("and", "or", "xor", "maj", "eq")

MAX_QUBITS = 32
MAX_CLBITS = 32


class SchemaError(ValueError):
    """Raised on malformed circuit documents or invariant violations."""

    def __init__(self, message, instruction_index=None):
        if instruction_index is not None:
            message = f"instruction {instruction_index}: {message}"
        super().__init__(message)
        self.instruction_index = instruction_index


@dataclass(frozen=True)
class Gate:
    name: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(self.qubits))
        object.__setattr__(self, "params", tuple(self.params))


@dataclass(frozen=True)
class Measure:
    qubit: int
    clbit: int


@dataclass(frozen=True)
class BranchCondition:
    """Reduce the clbits selected by ``mask`` with ``op``, compare to ``value``.

    ``flip`` inverts the comparison outcome; it is set by the stochastic
    branching pass and kept out of user-facing condition logic otherwise.
    """

    op: str
    mask: int
    value: int
    flip: bool = False

    def clbits(self):
        return [i for i in range(MAX_CLBITS) if (self.mask >> i) & 1]


@dataclass(frozen=True)
class Branch:
    cond: BranchCondition
    then_ops: tuple[Gate, ...]
    else_ops: tuple[Gate, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "then_ops", tuple(self.then_ops))
        object.__setattr__(self, "else_ops", tuple(self.else_ops))


@dataclass(frozen=True)
class ProbGate:
    """A gate kept with probability ``p`` at shot-compilation time.

    ProbGates sharing a ``group`` id are decided by one coin per shot
    (all kept or all dropped); ungrouped ones are sampled independently.
    """

    gate: Gate
    p: float
    group: int | None = None


@dataclass(frozen=True)
class Barrier:
    qubits: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(self.qubits))


Instruction = Gate | Measure | Branch | ProbGate | Barrier


@dataclass
class Circuit:
    n_qubits: int
    n_clbits: int
    instructions: list[Instruction] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def copy(self):
        return Circuit(self.n_qubits, self.n_clbits, list(self.instructions),
                       dict(self.metadata))


def popcount(x: int) -> int:
    return bin(x & 0xFFFFFFFF).count("1")


def eval_condition(cond: BranchCondition, clreg: int) -> int:
    """Evaluate a branch condition against a 32-bit measurement word.

    Returns 1 when the then-branch is taken. Pure function.
    """
    bits = [(clreg >> i) & 1 for i in range(MAX_CLBITS) if (cond.mask >> i) & 1]
    op = cond.op
    if op == "and":
        reduced = int(all(bits))
    elif op == "or":
        reduced = int(any(bits))
    elif op == "xor":
        reduced = sum(bits) & 1
    elif op == "maj":
        reduced = int(2 * sum(bits) > len(bits))
    elif op == "eq":
        reduced = bits[0]
    else:  # pragma: no cover - rejected at validation
        raise SchemaError(f"unknown condition op {op!r}")
    taken = int(reduced == cond.value)
    if cond.flip:
        taken ^= 1
    return taken


def _check_gate(gate: Gate, n_qubits: int, idx):
    if gate.name not in GATE_ARITY:
        raise SchemaError(f"unknown gate name {gate.name!r}", idx)
    if len(gate.qubits) != GATE_ARITY[gate.name]:
        raise SchemaError(
            f"gate {gate.name!r} takes {GATE_ARITY[gate.name]} qubits, "
            f"got {len(gate.qubits)}", idx)
    if len(set(gate.qubits)) != len(gate.qubits):
        raise SchemaError(f"gate {gate.name!r} has repeated qubits", idx)
    for q in gate.qubits:
        if not 0 <= q < n_qubits:
            raise SchemaError(f"qubit {q} out of range", idx)
    want = PARAM_GATES.get(gate.name, 0)
    if len(gate.params) != want:
        raise SchemaError(f"gate {gate.name!r} takes {want} params", idx)


def _check_condition(cond: BranchCondition, n_clbits: int, idx):
    if cond.op not in CONDITION_OPS:
        raise SchemaError(f"unknown condition op {cond.op!r}", idx)
    if not 0 < cond.mask < (1 << MAX_CLBITS):
        raise SchemaError("condition mask must select at least one clbit", idx)
    if cond.mask >> n_clbits:
        raise SchemaError("condition mask references clbit out of range", idx)
    pc = popcount(cond.mask)
    if cond.op == "eq" and pc != 1:
        raise SchemaError("eq condition requires exactly one clbit", idx)
    if cond.op == "maj" and pc % 2 == 0:
        raise SchemaError("maj condition requires odd number of clbits", idx)
    if cond.value not in (0, 1):
        raise SchemaError("condition value must be 0 or 1", idx)


def validate(circuit: Circuit) -> Circuit:
    """Check all circuit invariants, raising SchemaError with the offending index.

    Enforces gate arity, index ranges, the 32 qubit/clbit ceilings, odd MAJ
    masks, and write-once-then-read clbit discipline (a clbit may only be
    rewritten after a branch consumed it).
    """
    if not 0 <= circuit.n_qubits <= MAX_QUBITS:
        raise SchemaError(f"n_qubits must be in 0..{MAX_QUBITS}")
    if not 0 <= circuit.n_clbits <= MAX_CLBITS:
        raise SchemaError(f"n_clbits must be in 0..{MAX_CLBITS}")
    written = 0      # clbits holding a live value
    consumed = 0     # live clbits that some branch has read
    for idx, ins in enumerate(circuit.instructions):
        if isinstance(ins, Gate):
            _check_gate(ins, circuit.n_qubits, idx)
        elif isinstance(ins, Measure):
            if not 0 <= ins.qubit < circuit.n_qubits:
                raise SchemaError(f"qubit {ins.qubit} out of range", idx)
            if not 0 <= ins.clbit < circuit.n_clbits:
                raise SchemaError(f"clbit {ins.clbit} out of range", idx)
            bit = 1 << ins.clbit
            if written & bit and not consumed & bit:
                raise SchemaError(
                    f"clbit {ins.clbit} rewritten before any branch consumed it",
                    idx)
            written |= bit
            consumed &= ~bit
        elif isinstance(ins, Branch):
            _check_condition(ins.cond, circuit.n_clbits, idx)
            if ins.cond.mask & ~written:
                raise SchemaError("condition reads clbit never measured", idx)
            consumed |= ins.cond.mask
            for g in ins.then_ops + ins.else_ops:
                if not isinstance(g, Gate):
                    raise SchemaError("branch bodies may contain gates only", idx)
                _check_gate(g, circuit.n_qubits, idx)
        elif isinstance(ins, ProbGate):
            _check_gate(ins.gate, circuit.n_qubits, idx)
            if not 0.0 <= ins.p <= 1.0:
                raise SchemaError("prob_gate probability outside [0, 1]", idx)
        elif isinstance(ins, Barrier):
            for q in ins.qubits:
                if not 0 <= q < circuit.n_qubits:
                    raise SchemaError(f"qubit {q} out of range", idx)
        else:
            raise SchemaError(f"unknown instruction type {type(ins).__name__}", idx)
    return circuit


# --- JSON serialization ------------------------------------------------------

def _gate_to_obj(gate: Gate):
    obj = {"gate": gate.name, "qubits": list(gate.qubits)}
    if gate.params:
        obj["params"] = list(gate.params)
    return obj


def _gate_from_obj(obj, idx):
    if not isinstance(obj, dict) or "gate" not in obj:
        raise SchemaError("expected a gate object", idx)
    return Gate(str(obj["gate"]).lower(), tuple(obj.get("qubits", ())),
                tuple(float(p) for p in obj.get("params", ())))


def _instruction_to_obj(ins: Instruction):
    if isinstance(ins, Gate):
        return _gate_to_obj(ins)
    if isinstance(ins, Measure):
        return {"measure": {"qubit": ins.qubit, "clbit": ins.clbit}}
    if isinstance(ins, Branch):
        branch = {
            "op": ins.cond.op,
            "mask": ins.cond.mask,
            "value": ins.cond.value,
            "flip": ins.cond.flip,
            "then": [_gate_to_obj(g) for g in ins.then_ops],
            "else": [_gate_to_obj(g) for g in ins.else_ops],
        }
        return {"branch": branch}
    if isinstance(ins, ProbGate):
        body = _gate_to_obj(ins.gate)
        obj = {"gate": body["gate"], "qubits": body["qubits"]}
        if "params" in body:
            obj["params"] = body["params"]
        obj["p"] = ins.p
        if ins.group is not None:
            obj["group"] = ins.group
        return {"prob_gate": obj}
    if isinstance(ins, Barrier):
        return {"barrier": {"qubits": list(ins.qubits)}}
    raise SchemaError(f"cannot serialize {type(ins).__name__}")


def _instruction_from_obj(obj, idx):
    if not isinstance(obj, dict):
        raise SchemaError("instruction must be an object", idx)
    if "measure" in obj:
        m = obj["measure"]
        return Measure(int(m["qubit"]), int(m["clbit"]))
    if "branch" in obj:
        b = obj["branch"]
        cond = BranchCondition(str(b["op"]).lower(), int(b["mask"]),
                               int(b["value"]), bool(b.get("flip", False)))
        then_ops = tuple(_gate_from_obj(g, idx) for g in b.get("then", ()))
        else_ops = tuple(_gate_from_obj(g, idx) for g in b.get("else", ()))
        return Branch(cond, then_ops, else_ops)
    if "prob_gate" in obj:
        p = obj["prob_gate"]
        gate = _gate_from_obj(p, idx)
        group = p.get("group")
        return ProbGate(gate, float(p["p"]), None if group is None else int(group))
    if "barrier" in obj:
        return Barrier(tuple(obj["barrier"].get("qubits", ())))
    if "gate" in obj:
        return _gate_from_obj(obj, idx)
    raise SchemaError("unrecognized instruction object", idx)


def serialize_circuit(circuit: Circuit) -> str:
    """Serialize to the .dqc.json document format with deterministic key order."""
    doc = {
        "n_qubits": circuit.n_qubits,
        "n_clbits": circuit.n_clbits,
        "instructions": [_instruction_to_obj(i) for i in circuit.instructions],
    }
    if circuit.metadata:
        doc["metadata"] = circuit.metadata
    return json.dumps(doc, indent=1, sort_keys=False)


def parse_circuit(text: str) -> Circuit:
    """Parse and validate a .dqc.json document.

    Round-trips with serialize_circuit up to whitespace.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object")
    for key in ("n_qubits", "n_clbits", "instructions"):
        if key not in doc:
            raise SchemaError(f"missing top-level key {key!r}")
    instructions = [
        _instruction_from_obj(obj, idx)
        for idx, obj in enumerate(doc["instructions"])
    ]
    circuit = Circuit(int(doc["n_qubits"]), int(doc["n_clbits"]),
                      instructions, dict(doc.get("metadata", {})))
    return validate(circuit)


def load_circuit(path) -> Circuit:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_circuit(fh.read())


def save_circuit(circuit: Circuit, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_circuit(circuit))
        fh.write("\n")
