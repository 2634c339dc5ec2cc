"""Exact loss gradients for the graph ansatze.

The production path is a reverse (adjoint) sweep over the fused op list: one
forward simulation, then one backward pass that carries the state and the
co-state ``lambda = dL/dp * psi`` together. For a gate ``exp(-i t/2 G)``

    dL/dt = Im <lambda | G | psi>

evaluated just after the gate. Tied slots simply accumulate over every op
that reads them. A parameter-shift path and central finite differences are
kept for cross-checking.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import statevector as sv
from .ansatz import AnsatzSpec, build_plan, check_theta, chunks, forward, param_count
from .observables import DIFFERENTIABLE, Objective


@dataclass
class BatchResult:
    """Per-entry losses, metrics inputs and gradients for one batch."""

    losses: np.ndarray          # (B,)
    components: list[dict]
    grads: np.ndarray           # (B, P)
    probs: list[np.ndarray]

    @property
    def loss(self) -> float:
        return float(self.losses.mean())

    @property
    def grad(self) -> np.ndarray:
        return self.grads.mean(axis=0)


def _backward(ops, psi: np.ndarray, lam: np.ndarray, theta: np.ndarray, n_params: int):
    grads = np.zeros((psi.shape[0], n_params))
    pair = np.stack([psi, lam])
    for op in reversed(ops):
        for slot, val in op.overlaps(pair[1], pair[0]):
            grads[:, slot] += val
        pair = op.apply(pair, theta, -1.0)
    return grads


def evaluate_batch(spec: AnsatzSpec, entries: Sequence, theta, objective: Objective,
                   with_grad: bool = True) -> BatchResult:
    """Loss (and adjoint gradient) of every entry under one parameter vector."""
    theta = check_theta(spec, theta)
    if with_grad and objective.loss not in DIFFERENTIABLE:
        raise ValueError(f"{objective.loss} loss is evaluation-only and has no gradient")
    B, P = len(entries), param_count(spec)
    losses = np.zeros(B)
    comps: list[dict] = [{}] * B
    grads = np.zeros((B, P))
    probs: list[np.ndarray] = [None] * B  # type: ignore[list-item]
    for ch in chunks(spec, [e.graph for e in entries]):
        psi = forward(ch.ops, ch.n, len(ch.indices), theta)
        p = sv.probabilities(psi)
        dl = np.empty_like(p) if with_grad else None
        for row, i in enumerate(ch.indices):
            lv = objective.loss_value(p[row], entries[i])
            losses[i], comps[i], probs[i] = lv.scalar, lv.components, p[row]
            if with_grad:
                dl[row] = objective.loss_grad_probs(p[row], entries[i])
        if with_grad:
            grads[ch.indices] = _backward(ch.ops, psi, dl * psi, theta, P)
    return BatchResult(losses, comps, grads, probs)


def gradient(spec: AnsatzSpec, entry, theta, objective: Objective) -> np.ndarray:
    """Adjoint gradient of one entry's loss."""
    return evaluate_batch(spec, [entry], theta, objective).grads[0]


def entry_loss(spec: AnsatzSpec, entry, theta, objective: Objective) -> float:
    return float(evaluate_batch(spec, [entry], theta, objective, with_grad=False).losses[0])


# --------------------------------------------------------------------------
# reference gradients


def finite_difference(fn: Callable[[np.ndarray], float], theta, h: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function."""
    theta = np.asarray(theta, dtype=float)
    out = np.zeros_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        out[k] = (fn(theta + e) - fn(theta - e)) / (2 * h)
    return out


_C_PLUS = (np.sqrt(2) + 1) / (4 * np.sqrt(2))
_C_MINUS = (np.sqrt(2) - 1) / (4 * np.sqrt(2))


def parameter_shift(spec: AnsatzSpec, entry, theta, objective: Objective) -> np.ndarray:
    """Gradient via gate-wise shift rules on the probability vector.

    Two-term rule for the Pauli rotations, four-term rule for CRX. Slow
    (two or four simulations per gate); meant for debugging only.
    """
    theta = check_theta(spec, theta)
    plan = build_plan(spec, entry.graph)
    gates = plan.bind(theta)

    def probs_with(k: int, delta: float) -> np.ndarray:
        state = sv.zero_state(plan.n)
        for j, g in enumerate(gates):
            if j == k:
                g = sv.GateOp(g.kind, g.qubits, g.angle + delta)
            sv.apply_gate(state, g)
        return sv.probabilities(state)

    p0 = probs_with(-1, 0.0)
    dl = objective.loss_grad_probs(p0, entry)
    out = np.zeros(plan.n_params)
    for k, pg in enumerate(plan.gates):
        if pg.kind == "CRX":
            dp = (_C_PLUS * (probs_with(k, np.pi / 2) - probs_with(k, -np.pi / 2))
                  - _C_MINUS * (probs_with(k, 3 * np.pi / 2) - probs_with(k, -3 * np.pi / 2)))
        else:
            dp = 0.5 * (probs_with(k, np.pi / 2) - probs_with(k, -np.pi / 2))
        out[pg.slot] += dl @ dp
    return out


# --------------------------------------------------------------------------
# statistics


def grad_stats(grads) -> dict:
    """Per-coordinate mean |g| and population variance over a batch of gradients.

    ``aggregate`` is the mean over coordinates of the mean magnitude.
    """
    g = np.asarray(grads, dtype=float)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape[0] == 0:
        raise ValueError("grad_stats needs at least one gradient")
    mean_abs = np.abs(g).mean(axis=0)
    return {
        "mean": g.mean(axis=0),
        "mean_abs": mean_abs,
        "variance": g.var(axis=0),
        "aggregate": float(mean_abs.mean()),
    }
