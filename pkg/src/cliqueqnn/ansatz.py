"""Graph-encoded circuits: the equivariant Rook ansatz and the MilleFeuille control.

Parameters are tied across orbits, so the flat parameter vector has the same
layout for every graph size:

    [initial Euler angles (3)] + L x [node alpha (3), edge beta, anti-edge gamma]

with ``beta``/``gamma`` of length 2 for Rook and ``5 * M`` for MilleFeuille.

Each layer applies, in order, the node sub-layer (``RX(a0) RZ(a1) RX(a2)`` on
every vertex), the edge sub-layer over the sorted edge list, then the
anti-edge sub-layer over the sorted complement edges.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import statevector as sv
from .graphs import Graph, complement_edges

ROOK = "rook"
MILLEFEUILLE = "millefeuille"
FAMILIES = (ROOK, MILLEFEUILLE)

# Amplitudes per batched chunk (a (B, 2**n) complex array stays ~16 MB).
MAX_CHUNK_AMPLITUDES = 1 << 20


@dataclass(frozen=True)
class AnsatzSpec:
    family: str
    layers: int
    inner_layers: int | None = None
    include_initial_state: bool = True

    def __post_init__(self) -> None:
        fam = self.family.lower().replace("-", "").replace("_", "")
        if fam == "mf":
            fam = MILLEFEUILLE
        if fam not in FAMILIES:
            raise ValueError(f"unknown ansatz family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "family", fam)
        if self.layers < 1:
            raise ValueError(f"layers must be >= 1, got {self.layers}")
        if fam == MILLEFEUILLE:
            if self.inner_layers is None or self.inner_layers < 1:
                raise ValueError("MilleFeuille needs inner_layers >= 1")
        elif self.inner_layers is not None:
            raise ValueError("inner_layers only applies to MilleFeuille")

    @property
    def edge_width(self) -> int:
        """Parameters per edge (or anti-edge) gadget in one layer."""
        return 2 if self.family == ROOK else 5 * self.inner_layers

    @property
    def layer_width(self) -> int:
        return 3 + 2 * self.edge_width

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "L": self.layers,
            "M": self.inner_layers,
            "include_initial_state": self.include_initial_state,
        }

    @classmethod
    def from_json(cls, d: dict) -> "AnsatzSpec":
        return cls(d["family"], int(d["L"]),
                   None if d.get("M") is None else int(d["M"]),
                   bool(d.get("include_initial_state", True)))


def param_count(spec: AnsatzSpec) -> int:
    return 3 + spec.layers * spec.layer_width


@dataclass(frozen=True)
class ParameterLayout:
    """Slot offsets inside the flat parameter vector."""

    spec: AnsatzSpec

    @property
    def initial(self) -> slice:
        return slice(0, 3)

    def _base(self, layer: int) -> int:
        if not 0 <= layer < self.spec.layers:
            raise IndexError(f"layer {layer} outside 0..{self.spec.layers - 1}")
        return 3 + layer * self.spec.layer_width

    def alpha(self, layer: int) -> slice:
        b = self._base(layer)
        return slice(b, b + 3)

    def beta(self, layer: int) -> slice:
        b = self._base(layer) + 3
        return slice(b, b + self.spec.edge_width)

    def gamma(self, layer: int) -> slice:
        b = self._base(layer) + 3 + self.spec.edge_width
        return slice(b, b + self.spec.edge_width)

    def slot_names(self) -> list[str]:
        names = [f"init.a{k}" for k in range(3)]
        for ell in range(self.spec.layers):
            names += [f"L{ell}.alpha{k}" for k in range(3)]
            names += [f"L{ell}.beta{k}" for k in range(self.spec.edge_width)]
            names += [f"L{ell}.gamma{k}" for k in range(self.spec.edge_width)]
        return names


def check_theta(spec: AnsatzSpec, theta: Sequence[float]) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (param_count(spec),):
        raise ValueError(
            f"parameter vector has shape {theta.shape}, expected ({param_count(spec)},)"
        )
    if not np.all(np.isfinite(theta)):
        raise ValueError("parameter vector contains non-finite values")
    return theta


# --------------------------------------------------------------------------
# gate-level plan


@dataclass(frozen=True)
class PlanGate:
    kind: str
    qubits: tuple[int, ...]
    slot: int


@dataclass(frozen=True)
class CircuitPlan:
    n: int
    gates: tuple[PlanGate, ...]
    n_params: int

    def referenced_slots(self) -> set[int]:
        return {g.slot for g in self.gates}

    def bind(self, theta: Sequence[float]) -> list[sv.GateOp]:
        return [sv.GateOp(g.kind, g.qubits, float(theta[g.slot])) for g in self.gates]


def _node_gates(n: int, base: int) -> list[PlanGate]:
    gates = [PlanGate("RX", (v,), base) for v in range(n)]
    gates += [PlanGate("RZ", (v,), base + 1) for v in range(n)]
    gates += [PlanGate("RX", (v,), base + 2) for v in range(n)]
    return gates


def _rook_gadget(i: int, j: int, base: int) -> list[PlanGate]:
    return [
        PlanGate("ZZ", (i, j), base),
        PlanGate("RZ", (i,), base + 1),
        PlanGate("RZ", (j,), base + 1),
    ]


def _sim4_block(i: int, j: int, base: int, inner: int) -> list[PlanGate]:
    # (i, j) with i < j; the higher vertex controls the CRX
    gates = []
    for m in range(inner):
        s = base + 5 * m
        gates += [
            PlanGate("RY", (i,), s),
            PlanGate("RY", (j,), s + 1),
            PlanGate("RZ", (i,), s + 2),
            PlanGate("RZ", (j,), s + 3),
            PlanGate("CRX", (j, i), s + 4),
        ]
    return gates


def build_plan(spec: AnsatzSpec, g: Graph) -> CircuitPlan:
    layout = ParameterLayout(spec)
    gates: list[PlanGate] = []
    if spec.include_initial_state:
        gates += _node_gates(g.n, 0)
    edges = g.sorted_edges()
    anti = sorted(complement_edges(g))
    for ell in range(spec.layers):
        gates += _node_gates(g.n, layout.alpha(ell).start)
        for pairs, sl in ((edges, layout.beta(ell)), (anti, layout.gamma(ell))):
            for i, j in pairs:
                if spec.family == ROOK:
                    gates += _rook_gadget(i, j, sl.start)
                else:
                    gates += _sim4_block(i, j, sl.start, spec.inner_layers)
    return CircuitPlan(g.n, tuple(gates), param_count(spec))


def run_plan(plan: CircuitPlan, theta: Sequence[float]) -> np.ndarray:
    """Reference simulation: apply every plan gate one at a time."""
    state = sv.zero_state(plan.n)
    for gate in plan.bind(theta):
        sv.apply_gate(state, gate)
    return state


# --------------------------------------------------------------------------
# fused, batchable form


class RotOp:
    """Same Pauli rotation, same slot, on a set of distinct qubits."""

    __slots__ = ("pauli", "qubits", "slot")

    def __init__(self, pauli: str, qubits: tuple[int, ...], slot: int):
        self.pauli, self.qubits, self.slot = pauli, qubits, slot

    def key(self) -> tuple:
        return ("rot", self.pauli, self.qubits, self.slot)

    def apply(self, x: np.ndarray, theta: np.ndarray, sign: float = 1.0) -> np.ndarray:
        m = sv.rotation_matrix(self.pauli, sign * theta[self.slot])
        for q in self.qubits:
            x = sv.apply_1q(x, m, q)
        return x

    def overlaps(self, lam: np.ndarray, psi: np.ndarray) -> list[tuple[int, np.ndarray]]:
        p = sv.PAULI[self.pauli]
        total = 0.0
        for q in self.qubits:
            total = total + np.einsum("...d,...d->...", lam.conj(), sv.apply_1q(psi, p, q)).imag
        return [(self.slot, total)]


class DiagOp:
    """Product of commuting diagonal rotations ``exp(-i/2 sum_s theta_s D_s)``."""

    __slots__ = ("slots", "diags")

    def __init__(self, slots: tuple[int, ...], diags: tuple[np.ndarray, ...]):
        self.slots, self.diags = slots, diags

    def key(self) -> tuple:
        return ("diag", self.slots)

    def phase(self, theta: np.ndarray, sign: float) -> np.ndarray:
        acc = 0.0
        for s, d in zip(self.slots, self.diags):
            acc = acc + theta[s] * d
        return np.exp((-0.5j * sign) * acc)

    def apply(self, x: np.ndarray, theta: np.ndarray, sign: float = 1.0) -> np.ndarray:
        return x * self.phase(theta, sign)

    def overlaps(self, lam: np.ndarray, psi: np.ndarray) -> list[tuple[int, np.ndarray]]:
        w = (lam.conj() * psi).imag
        return [(s, np.einsum("...d,...d->...", w, d)) for s, d in zip(self.slots, self.diags)]


class CRXOp:
    __slots__ = ("control", "target", "slot")

    def __init__(self, control: int, target: int, slot: int):
        self.control, self.target, self.slot = control, target, slot

    def key(self) -> tuple:
        return ("crx", self.control, self.target, self.slot)

    def apply(self, x: np.ndarray, theta: np.ndarray, sign: float = 1.0) -> np.ndarray:
        return sv.apply_crx(x.copy(), self.control, self.target, sign * theta[self.slot])

    def overlaps(self, lam: np.ndarray, psi: np.ndarray) -> list[tuple[int, np.ndarray]]:
        i0, i1 = sv.controlled_pairs(sv.n_qubits_of(psi), self.control, self.target)
        lc = lam.conj()
        z = (np.einsum("...d,...d->...", lc[..., i0], psi[..., i1])
             + np.einsum("...d,...d->...", lc[..., i1], psi[..., i0]))
        return [(self.slot, z.imag)]


Op = RotOp | DiagOp | CRXOp


@lru_cache(maxsize=4096)
def _fused_diag(n: int, terms: frozenset) -> np.ndarray:
    # terms: (kind, qubits, multiplicity); int16 keeps large-n caches small
    d = np.zeros(1 << n, dtype=np.int64)
    for kind, qubits, mult in terms:
        d += mult * sv.gate_diagonal(kind, qubits, n).astype(np.int64)
    out = d.astype(np.int16)
    out.setflags(write=False)
    return out


def _flush_diag(run: list[PlanGate], n: int) -> DiagOp:
    per_slot: dict[int, dict[tuple, int]] = {}
    for g in run:
        bucket = per_slot.setdefault(g.slot, {})
        bucket[(g.kind, g.qubits)] = bucket.get((g.kind, g.qubits), 0) + 1
    slots = tuple(per_slot)
    diags = tuple(
        _fused_diag(n, frozenset((k, q, m) for (k, q), m in per_slot[s].items()))
        for s in slots
    )
    return DiagOp(slots, diags)


def compile_plan(plan: CircuitPlan) -> list[Op]:
    """Fuse the gate list into commuting blocks.

    Maximal runs of diagonal gates become one :class:`DiagOp`; runs of the
    same rotation reading the same slot on distinct qubits become one
    :class:`RotOp`. Both regroupings only reorder commuting gates.
    """
    ops: list[Op] = []
    diag_run: list[PlanGate] = []
    rot_run: list[PlanGate] = []

    def flush_rot() -> None:
        if rot_run:
            ops.append(RotOp(rot_run[0].kind[1], tuple(g.qubits[0] for g in rot_run),
                             rot_run[0].slot))
            rot_run.clear()

    for g in plan.gates:
        if g.kind in sv.DIAGONAL_KINDS:
            flush_rot()
            diag_run.append(g)
            continue
        if diag_run:
            ops.append(_flush_diag(diag_run, plan.n))
            diag_run = []
        if g.kind == "CRX":
            flush_rot()
            ops.append(CRXOp(g.qubits[0], g.qubits[1], g.slot))
        elif (rot_run and rot_run[0].kind == g.kind and rot_run[0].slot == g.slot
              and all(r.qubits[0] != g.qubits[0] for r in rot_run)):
            rot_run.append(g)
        else:
            flush_rot()
            rot_run.append(g)
    flush_rot()
    if diag_run:
        ops.append(_flush_diag(diag_run, plan.n))
    return ops


@lru_cache(maxsize=1024)
def compiled(spec: AnsatzSpec, g: Graph) -> tuple[Op, ...]:
    return tuple(compile_plan(build_plan(spec, g)))


def _stack_ops(per_graph: list[tuple[Op, ...]]) -> list[Op]:
    """Merge structurally identical op lists into one batched op list."""
    first = per_graph[0]
    if len(per_graph) == 1:
        return list(first)
    stacked: dict[tuple[int, ...], np.ndarray] = {}
    out: list[Op] = []
    for k, op in enumerate(first):
        if not isinstance(op, DiagOp):
            out.append(op)
            continue
        diags = []
        for j in range(len(op.slots)):
            arrs = [ops[k].diags[j] for ops in per_graph]
            ids = tuple(id(a) for a in arrs)
            if all(i == ids[0] for i in ids):
                diags.append(arrs[0])
                continue
            if ids not in stacked:
                stacked[ids] = np.stack(arrs)
            diags.append(stacked[ids])
        out.append(DiagOp(op.slots, tuple(diags)))
    return out


@dataclass
class Chunk:
    """Graphs that share one op structure, simulated as a single batch."""

    indices: list[int]
    n: int
    ops: list[Op] = field(repr=False)


def chunks(spec: AnsatzSpec, graphs: Sequence[Graph]) -> Iterator[Chunk]:
    groups: dict[tuple, list[int]] = {}
    for i, g in enumerate(graphs):
        key = (g.n, tuple(op.key() for op in compiled(spec, g)))
        groups.setdefault(key, []).append(i)
    for (n, _), idx in groups.items():
        size = max(1, MAX_CHUNK_AMPLITUDES >> n)
        for start in range(0, len(idx), size):
            part = idx[start:start + size]
            yield Chunk(part, n, _stack_ops([compiled(spec, graphs[i]) for i in part]))


def forward(ops: Sequence[Op], n: int, batch: int, theta: np.ndarray) -> np.ndarray:
    x = sv.zero_state(n, (batch,))
    for op in ops:
        x = op.apply(x, theta)
    return x


def simulate(spec: AnsatzSpec, graphs: Sequence[Graph], theta: Sequence[float]) -> list[np.ndarray]:
    """Final states for many graphs under one parameter vector."""
    theta = check_theta(spec, theta)
    out: list[np.ndarray | None] = [None] * len(graphs)
    for ch in chunks(spec, graphs):
        x = forward(ch.ops, ch.n, len(ch.indices), theta)
        for row, i in enumerate(ch.indices):
            out[i] = x[row]
    return out  # type: ignore[return-value]


def apply_ansatz(spec: AnsatzSpec, g: Graph, theta: Sequence[float]) -> np.ndarray:
    return simulate(spec, [g], theta)[0]


# --------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    spec: AnsatzSpec
    theta: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.theta = check_theta(self.spec, self.theta)

    def to_json(self) -> dict:
        return {
            "spec": self.spec.to_json(),
            "theta": [float(x) for x in self.theta],
            "metadata": self.metadata,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Checkpoint":
        return cls(AnsatzSpec.from_json(d["spec"]), np.asarray(d["theta"], dtype=float),
                   dict(d.get("metadata", {})))


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    Path(path).write_text(json.dumps(ckpt.to_json(), sort_keys=True, indent=1) + "\n",
                          encoding="utf-8")


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return Checkpoint.from_json(d)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"corrupt checkpoint {path}: {exc}") from exc
