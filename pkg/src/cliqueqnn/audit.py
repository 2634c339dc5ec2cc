"""Symmetry audits: equivariance, loss invariance and local gate-symmetry metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations
from typing import Callable, Sequence

import numpy as np

from . import statevector as sv
from .ansatz import (
    AnsatzSpec,
    ParameterLayout,
    PlanGate,
    ROOK,
    _rook_gadget,
    _sim4_block,
    apply_ansatz,
    check_theta,
)
from .dataset import DatasetEntry
from .gradients import evaluate_batch
from .graphs import Graph, basis_permutation, permute, permute_bits
from .observables import Objective

SAMPLED_PERMUTATIONS = 50
EXHAUSTIVE_MAX_N = 5

SWAP = np.eye(4)[[0, 2, 1, 3]]


def permute_state(state: np.ndarray, sigma: Sequence[int]) -> np.ndarray:
    """Move the content of qubit ``i`` to qubit ``sigma[i]``."""
    out = np.empty_like(state)
    out[..., basis_permutation(sigma)] = state
    return out


def permute_entry(entry: DatasetEntry, sigma: Sequence[int]) -> DatasetEntry:
    return DatasetEntry(
        permute(entry.graph, sigma), entry.omega,
        frozenset(permute_bits(b, sigma) for b in entry.target_bitstrings),
        entry.edge_probability, entry.source_seed,
    )


def test_permutations(n: int, seed: int = 0, sample: int = SAMPLED_PERMUTATIONS
                      ) -> list[tuple[int, ...]]:
    """All of S_n for small n, otherwise a seeded sample."""
    if n <= EXHAUSTIVE_MAX_N:
        return list(permutations(range(n)))
    rng = np.random.default_rng(seed)
    return [tuple(int(x) for x in rng.permutation(n)) for _ in range(sample)]


# --------------------------------------------------------------------------
# global symmetry checks


def check_equivariance(spec: AnsatzSpec, g: Graph, theta, sigma: Sequence[int]) -> float:
    """Max amplitude gap between ``U(sigma g)|0>`` and ``sigma U(g)|0>``."""
    a = apply_ansatz(spec, permute(g, sigma), theta)
    b = permute_state(apply_ansatz(spec, g, theta), sigma)
    return float(np.abs(a - b).max())


def check_loss_invariance(spec: AnsatzSpec, entry: DatasetEntry, theta,
                          sigmas: Sequence[Sequence[int]], objective: Objective) -> float:
    """Max |L(sigma g) - L(g)| with targets relabelled alongside the graph."""
    batch = [entry] + [permute_entry(entry, s) for s in sigmas]
    losses = evaluate_batch(spec, batch, theta, objective, with_grad=False).losses
    return float(np.abs(losses[1:] - losses[0]).max()) if len(batch) > 1 else 0.0


def permuted_accuracy_drop(spec: AnsatzSpec, theta, entries: Sequence[DatasetEntry],
                           objective: Objective, permutations_per_entry: int = 2,
                           seed: int = 0, metric: str = "argmax_acc") -> list[dict]:
    """Accuracy on each entry versus the mean over random relabellings of it."""
    rng = np.random.default_rng(seed)
    out = []
    for i, e in enumerate(entries):
        sigmas = [tuple(int(x) for x in rng.permutation(e.n))
                  for _ in range(permutations_per_entry)]
        batch = [e] + [permute_entry(e, s) for s in sigmas]
        res = evaluate_batch(spec, batch, theta, objective, with_grad=False)
        acc = [objective.metrics(p, b)[metric] for p, b in zip(res.probs, batch)]
        perm_mean = float(np.mean(acc[1:]))
        out.append({"index": i, "n": e.n, "original": float(acc[0]),
                    "permuted_mean": perm_mean, "drop": float(acc[0]) - perm_mean})
    return out


# --------------------------------------------------------------------------
# local gate metrics


def _unitary(gates: Sequence[PlanGate], theta: np.ndarray, n: int) -> np.ndarray:
    dim = 1 << n
    cols = np.eye(dim, dtype=complex)
    for pg in gates:
        op = sv.GateOp(pg.kind, pg.qubits, float(theta[pg.slot]))
        for c in range(dim):
            sv.apply_gate(cols[:, c], op)
    return cols


def _gadget(spec: AnsatzSpec, i: int, j: int, base: int) -> list[PlanGate]:
    if spec.family == ROOK:
        return _rook_gadget(i, j, base)
    return _sim4_block(i, j, base, spec.inner_layers)


def edge_unitary(spec: AnsatzSpec, theta, layer: int, kind: str = "edge", n: int = 2,
                 pair: tuple[int, int] = (0, 1)) -> np.ndarray:
    """Explicit unitary of one edge (or anti-edge) gadget of ``layer``."""
    theta = check_theta(spec, theta)
    lay = ParameterLayout(spec)
    base = (lay.beta(layer) if kind == "edge" else lay.gamma(layer)).start
    return _unitary(_gadget(spec, min(pair), max(pair), base), theta, n)


def spectral_norm(m: np.ndarray) -> float:
    return float(np.linalg.norm(m, 2))


def swap_asymmetry(u: np.ndarray) -> float:
    return spectral_norm(u - SWAP @ u @ SWAP)


def identity_distance(u: np.ndarray) -> float:
    """``min_phi ||e^{-i phi} U - I||`` approximated by aligning to ``arg tr U``."""
    tr = np.trace(u)
    phase = tr / abs(tr) if abs(tr) > 1e-15 else 1.0
    return spectral_norm(u * np.conj(phase) - np.eye(u.shape[0]))


def commutator_norm(spec: AnsatzSpec, theta, layer: int, kind: str = "edge") -> float:
    """Max ``||[U_uv, U_uw]||`` over gadget placements sharing a vertex (3 qubits)."""
    pairs = [(0, 1), (0, 2), (1, 2)]
    us = {p: edge_unitary(spec, theta, layer, kind, n=3, pair=p) for p in pairs}
    best = 0.0
    for a in range(3):
        for b in range(a + 1, 3):
            ua, ub = us[pairs[a]], us[pairs[b]]
            best = max(best, spectral_norm(ua @ ub - ub @ ua))
    return best


@dataclass
class SymmetryReport:
    rows: list[dict] = field(default_factory=list)
    loss_invariance_delta: float | None = None

    def max(self, key: str) -> float:
        return max((r[key] for r in self.rows), default=0.0)

    def to_json(self) -> dict:
        return {"rows": self.rows, "loss_invariance_delta": self.loss_invariance_delta}


def gate_symmetry_metrics(spec: AnsatzSpec, theta) -> SymmetryReport:
    theta = check_theta(spec, theta)
    rep = SymmetryReport()
    for layer in range(spec.layers):
        for kind in ("edge", "anti_edge"):
            u = edge_unitary(spec, theta, layer, kind)
            rep.rows.append({
                "layer": layer,
                "kind": kind,
                "swap_asymmetry": swap_asymmetry(u),
                "commutator_norm": commutator_norm(spec, theta, layer, kind),
                "identity_distance": identity_distance(u),
            })
    return rep


# --------------------------------------------------------------------------
# semi-symmetric models built from interchangeable parts


@dataclass
class SemiSymmetricModel:
    """Expectation loss ``<psi0(g)| U(g)^dag O(g) U(g) |psi0(g)>`` from three callables."""

    state: Callable[[Graph], np.ndarray]
    circuit: Callable[[Graph, np.ndarray], np.ndarray]
    observable: Callable[[Graph], np.ndarray]

    def loss(self, g: Graph) -> float:
        psi = self.circuit(g, self.state(g))
        return float(sv.probabilities(psi) @ self.observable(g))


def plus_state(g: Graph) -> np.ndarray:
    return np.full(1 << g.n, 2 ** (-g.n / 2), dtype=complex)


def rook_circuit(spec: AnsatzSpec, theta, on_complete: bool = False):
    """Rook gates on ``g`` (equivariant) or on ``K_n`` (invariant), skipping the initial slots."""
    from .ansatz import build_plan

    spec = AnsatzSpec(spec.family, spec.layers, spec.inner_layers, include_initial_state=False)
    theta = check_theta(spec, theta)

    def run(g: Graph, psi: np.ndarray) -> np.ndarray:
        target = Graph.complete(g.n) if on_complete else g
        psi = psi.copy()
        for gate in build_plan(spec, target).bind(theta):
            sv.apply_gate(psi, gate)
        return psi

    return run


def edge_zz_observable(g: Graph) -> np.ndarray:
    """``sum_{(i,j) in E} Z_i Z_j``: relabels together with the graph."""
    out = np.zeros(1 << g.n)
    for i, j in g.sorted_edges():
        out += sv.zz_diag(g.n, i, j)
    return out


def weight_observable(g: Graph) -> np.ndarray:
    from .observables import eigenvalues

    return np.array(eigenvalues("mountain", g.n))


def proof_case_models(spec: AnsatzSpec, theta) -> dict[str, SemiSymmetricModel]:
    """One model per combination of equivariant/invariant parts."""
    equi_circ = rook_circuit(spec, theta)
    inv_circ = rook_circuit(spec, theta, on_complete=True)
    equi_state = lambda g: equi_circ(g, plus_state(g))  # noqa: E731
    return {
        "equivariant_circuit": SemiSymmetricModel(plus_state, equi_circ, weight_observable),
        "equivariant_observable": SemiSymmetricModel(plus_state, inv_circ, edge_zz_observable),
        "equivariant_circuit_and_observable": SemiSymmetricModel(
            plus_state, equi_circ, edge_zz_observable),
        "equivariant_state_and_observable": SemiSymmetricModel(
            equi_state, inv_circ, edge_zz_observable),
    }


def model_invariance_delta(model: SemiSymmetricModel, g: Graph,
                           sigmas: Sequence[Sequence[int]]) -> float:
    base = model.loss(g)
    return max((abs(model.loss(permute(g, s)) - base) for s in sigmas), default=0.0)


# --------------------------------------------------------------------------
# regression witness for the non-equivariant control


WITNESS_GRAPH = Graph.path(3)


def find_witness(spec: AnsatzSpec, seed: int = 0, tries: int = 20,
                 g: Graph = WITNESS_GRAPH) -> tuple[np.ndarray, tuple[int, ...], float]:
    """Seeded search for parameters breaking relabelling symmetry in probability."""
    from .ansatz import param_count

    rng = np.random.default_rng(seed)
    best = (None, None, -1.0)
    for _ in range(tries):
        theta = rng.uniform(0, 2 * math.pi, param_count(spec))
        p = sv.probabilities(apply_ansatz(spec, g, theta))
        for s in permutations(range(g.n)):
            q = sv.probabilities(apply_ansatz(spec, permute(g, s), theta))
            gap = float(np.abs(q - permute_state(p, s)).max())
            if gap > best[2]:
                best = (theta, tuple(s), gap)
    return best
