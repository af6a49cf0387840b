"""Lower trained models to add/mul arithmetic circuits and measure their depth.

A circuit is a DAG over four node kinds: ``input``, ``const``, ``add`` and
``mul``. Nodes are stored in creation order, which is also a topological
order, so evaluation and depth analysis are single forward sweeps.

Two multiplicative depths are reported. ``total_mul_depth`` counts every
multiplication on the longest path; ``ct_ct_mul_depth`` counts only
multiplications whose operands both depend on the input, i.e. the ones that
multiply two ciphertexts under an HE scheme.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import CompatibilityError, DataError, DimensionError, StructureError
from .layers import BatchNorm, Dropout, Linear, Model, PolyActivation

INPUT, CONST, ADD, MUL = "input", "const", "add", "mul"
KINDS = (INPUT, CONST, ADD, MUL)


class ArithmeticCircuit:
    def __init__(self):
        self.kinds = []
        self.args = []
        self.outputs = []
        self.n_inputs = 0

    def __len__(self):
        return len(self.kinds)

    def _add_node(self, kind, arg):
        self.kinds.append(kind)
        self.args.append(arg)
        return len(self.kinds) - 1

    def input(self, index: int) -> int:
        self.n_inputs = max(self.n_inputs, index + 1)
        return self._add_node(INPUT, int(index))

    def const(self, value: float) -> int:
        return self._add_node(CONST, float(value))

    def add(self, a: int, b: int) -> int:
        return self._add_node(ADD, (a, b))

    def mul(self, a: int, b: int) -> int:
        return self._add_node(MUL, (a, b))

    def sum(self, terms) -> int:
        """Balanced reduction tree of Add nodes."""
        terms = list(terms)
        while len(terms) > 1:
            nxt = [self.add(terms[i], terms[i + 1]) for i in range(0, len(terms) - 1, 2)]
            if len(terms) % 2:
                nxt.append(terms[-1])
            terms = nxt
        return terms[0]

    def node(self, i: int):
        return self.kinds[i], self.args[i]

    def pruned(self) -> "ArithmeticCircuit":
        """Copy without nodes unreachable from the outputs."""
        live = [False] * len(self)
        stack = list(self.outputs)
        while stack:
            i = stack.pop()
            if live[i]:
                continue
            live[i] = True
            if self.kinds[i] in (ADD, MUL):
                stack.extend(self.args[i])
        remap = {}
        out = ArithmeticCircuit()
        out.n_inputs = self.n_inputs
        for i, (kind, arg) in enumerate(zip(self.kinds, self.args)):
            if not live[i]:
                continue
            if kind in (ADD, MUL):
                arg = (remap[arg[0]], remap[arg[1]])
            remap[i] = out._add_node(kind, arg)
        out.outputs = [remap[o] for o in self.outputs]
        return out

    def to_dict(self) -> dict:
        nodes = []
        for kind, arg in zip(self.kinds, self.args):
            if kind == INPUT:
                nodes.append({"op": kind, "index": arg})
            elif kind == CONST:
                nodes.append({"op": kind, "value": arg.hex()})
            else:
                nodes.append({"op": kind, "args": list(arg)})
        return {
            "format": "polytrain-circuit",
            "n_inputs": self.n_inputs,
            "nodes": nodes,
            "outputs": list(self.outputs),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArithmeticCircuit":
        c = cls()
        for i, node in enumerate(d["nodes"]):
            op = node["op"]
            if op == INPUT:
                c._add_node(INPUT, int(node["index"]))
            elif op == CONST:
                c._add_node(CONST, float.fromhex(node["value"]))
            elif op in (ADD, MUL):
                a, b = node["args"]
                if not (0 <= a < i and 0 <= b < i):
                    raise DataError(f"node {i} references a later or missing node")
                c._add_node(op, (int(a), int(b)))
            else:
                raise DataError(f"node {i} has unsupported op {op!r}")
        c.n_inputs = int(d["n_inputs"])
        c.outputs = [int(o) for o in d["outputs"]]
        return c


@dataclass
class DepthReport:
    total_mul_depth: int
    ct_ct_mul_depth: int
    node_count: int
    mul_count: int

    def to_dict(self):
        return asdict(self)


def fuse_batchnorm(model: Model) -> Model:
    """Fold every eval-mode BatchNorm into an adjacent linear layer.

    A BatchNorm right after a Linear is folded into it (rows scaled); one
    right before a Linear, e.g. after an activation, is folded into that
    layer's input side (columns scaled). Dropout layers between are skipped
    because they are the identity at inference.
    """
    layers = [copy.deepcopy(l) for l in model.layers if not isinstance(l, Dropout)]
    out = []
    i = 0
    while i < len(layers):
        layer = layers[i]
        if not isinstance(layer, BatchNorm):
            out.append(layer)
            i += 1
            continue
        s = layer.gamma.value / np.sqrt(layer.running_var + layer.eps)
        t = layer.beta.value - layer.running_mean * s
        if out and isinstance(out[-1], Linear):
            prev = out[-1]
            prev.W.value = prev.W.value * s[:, None]
            prev.b.value = prev.b.value * s + t
        elif i + 1 < len(layers) and isinstance(layers[i + 1], Linear):
            nxt = layers[i + 1]
            nxt.b.value = nxt.W.value @ t + nxt.b.value
            nxt.W.value = nxt.W.value * s[None, :]
        else:
            raise StructureError(f"batchnorm at position {i} has no adjacent linear layer")
        i += 1
    return Model(out)


def lower(model: Model) -> ArithmeticCircuit:
    """Translate a fused model into a circuit with one output per logit."""
    c = ArithmeticCircuit()
    wires = [c.input(i) for i in range(model.in_features)]
    for idx, layer in enumerate(model.layers):
        if isinstance(layer, Linear):
            if len(wires) != layer.in_features:
                raise DimensionError(f"layer {idx} expects {layer.in_features} wires, got {len(wires)}")
            W, b = layer.W.value, layer.b.value
            wires = [
                c.add(c.sum(c.mul(c.const(W[j, i]), wires[i]) for i in range(len(wires))), c.const(b[j]))
                for j in range(layer.out_features)
            ]
        elif isinstance(layer, PolyActivation):
            wires = [_horner(c, layer.coefficients, w) for w in wires]
        elif isinstance(layer, Dropout):
            continue
        elif isinstance(layer, BatchNorm):
            raise StructureError(f"layer {idx} is an unfused batchnorm; call fuse_batchnorm first")
        else:
            raise CompatibilityError(
                f"layer {idx} ({layer.kind}) cannot be expressed with additions and multiplications"
            )
    c.outputs = wires
    return c.pruned()


def _horner(c: ArithmeticCircuit, coeffs, x: int) -> int:
    acc = c.const(coeffs[-1])
    for a in coeffs[-2::-1]:
        acc = c.add(c.mul(acc, x), c.const(a))
    return acc


def eval_circuit(circuit: ArithmeticCircuit, x) -> np.ndarray:
    """Evaluate on one input vector, or on a batch (rows are samples)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.shape[1] != circuit.n_inputs:
        raise DimensionError(f"circuit takes {circuit.n_inputs} inputs, got {batch.shape[1]}")
    vals = [None] * len(circuit)
    n = batch.shape[0]
    for i, (kind, arg) in enumerate(zip(circuit.kinds, circuit.args)):
        if kind == INPUT:
            vals[i] = batch[:, arg]
        elif kind == CONST:
            vals[i] = np.full(n, arg)
        elif kind == ADD:
            vals[i] = vals[arg[0]] + vals[arg[1]]
        else:
            vals[i] = vals[arg[0]] * vals[arg[1]]
    out = np.stack([vals[o] for o in circuit.outputs], axis=1)
    return out[0] if single else out


def depth(circuit: ArithmeticCircuit) -> DepthReport:
    n = len(circuit)
    total = [0] * n
    ctct = [0] * n
    dep = [False] * n
    muls = 0
    for i, (kind, arg) in enumerate(zip(circuit.kinds, circuit.args)):
        if kind == INPUT:
            dep[i] = True
        elif kind in (ADD, MUL):
            a, b = arg
            dep[i] = dep[a] or dep[b]
            total[i] = max(total[a], total[b])
            ctct[i] = max(ctct[a], ctct[b])
            if kind == MUL:
                muls += 1
                total[i] += 1
                if dep[a] and dep[b]:
                    ctct[i] += 1
    outs = circuit.outputs
    return DepthReport(
        total_mul_depth=max((total[o] for o in outs), default=0),
        ct_ct_mul_depth=max((ctct[o] for o in outs), default=0),
        node_count=n,
        mul_count=muls,
    )


def save_circuit(circuit: ArithmeticCircuit, path, report: DepthReport | None = None) -> None:
    d = circuit.to_dict()
    d["depth"] = (report or depth(circuit)).to_dict()
    with open(path, "w") as fh:
        json.dump(d, fh)


def load_circuit(path) -> ArithmeticCircuit:
    with open(path) as fh:
        return ArithmeticCircuit.from_dict(json.load(fh))
